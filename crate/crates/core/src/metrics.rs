//! Weighted YUV distortion and PSNR, bits per pixel, and static/dynamic
//! clip classification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::video_io::{Frame, VideoClip};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("frames differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("clips differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bits-per-pixel denominator is zero")]
    ZeroDenominator,
    #[error("need at least {needed} frames, got {got}")]
    ClipTooShort { needed: usize, got: usize },
    #[error("invalid distortion weights ({0}, {1}, {2})")]
    BadWeights(f64, f64, f64),
}

pub const PEAK: f64 = 255.0;
pub const DEFAULT_STATIC_THRESHOLD: f64 = 0.01;

/// Per-plane weights for combining Y, U and V measurements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionWeights {
    pub w_y: f64,
    pub w_u: f64,
    pub w_v: f64,
}

impl Default for DistortionWeights {
    fn default() -> Self {
        DistortionWeights {
            w_y: 6.0,
            w_u: 1.0,
            w_v: 1.0,
        }
    }
}

impl DistortionWeights {
    pub fn new(w_y: f64, w_u: f64, w_v: f64) -> Result<Self, MetricsError> {
        let ok = [w_y, w_u, w_v].iter().all(|w| w.is_finite() && *w >= 0.0);
        if !ok || w_y + w_u + w_v <= 0.0 {
            return Err(MetricsError::BadWeights(w_y, w_u, w_v));
        }
        Ok(DistortionWeights { w_y, w_u, w_v })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.w_y, self.w_u, self.w_v]
    }

    pub fn sum(&self) -> f64 {
        self.w_y + self.w_u + self.w_v
    }

    /// Normalized weighted combination of per-plane values.
    pub fn combine(&self, values: [f64; 3]) -> f64 {
        (self.w_y * values[0] + self.w_u * values[1] + self.w_v * values[2]) / self.sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    #[serde(with = "inf_as_string")]
    pub psnr_y: f64,
    #[serde(with = "inf_as_string")]
    pub psnr_u: f64,
    #[serde(with = "inf_as_string")]
    pub psnr_v: f64,
    #[serde(with = "inf_as_string")]
    pub psnr_weighted: f64,
    pub mse_weighted: f64,
    pub bpp: f64,
}

/// JSON has no infinity; lossless planes are written as the string "inf".
mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad psnr `{t}`"))),
        }
    }
}

fn check_dims(a: &Frame, b: &Frame) -> Result<(), MetricsError> {
    if !a.same_geometry(b) {
        return Err(MetricsError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    Ok(())
}

pub fn plane_mse(a: &[u8], b: &[u8]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let sse: u64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    sse as f64 / a.len() as f64
}

/// Per-plane MSE in Y, U, V order, 8-bit scale.
pub fn plane_mses(a: &Frame, b: &Frame) -> Result<[f64; 3], MetricsError> {
    check_dims(a, b)?;
    let [ay, au, av] = a.planes();
    let [by, bu, bv] = b.planes();
    Ok([plane_mse(ay, by), plane_mse(au, bu), plane_mse(av, bv)])
}

pub fn weighted_mse(a: &Frame, b: &Frame, w: &DistortionWeights) -> Result<f64, MetricsError> {
    Ok(w.combine(plane_mses(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// Per-plane PSNR plus the 6:1:1 weighted average of the per-plane values.
/// `bpp` is left at zero for the caller to fill.
pub fn weighted_yuv_psnr(a: &Frame, b: &Frame) -> Result<QualityReport, MetricsError> {
    let w = DistortionWeights::default();
    let mses = plane_mses(a, b)?;
    Ok(report_from_mses(mses, &w))
}

fn report_from_mses(mses: [f64; 3], w: &DistortionWeights) -> QualityReport {
    let psnr = mses.map(psnr_from_mse);
    QualityReport {
        psnr_y: psnr[0],
        psnr_u: psnr[1],
        psnr_v: psnr[2],
        psnr_weighted: w.combine(psnr),
        mse_weighted: w.combine(mses),
        bpp: 0.0,
    }
}

/// Frame-averaged quality of `decoded` against `reference`.
///
/// Every field is the arithmetic mean of the per-frame values, so the
/// weighted PSNR is the mean of per-frame weighted PSNRs.
pub fn clip_quality(
    reference: &VideoClip,
    decoded: &VideoClip,
) -> Result<QualityReport, MetricsError> {
    clip_quality_with(reference, decoded, &DistortionWeights::default())
}

/// As [`clip_quality`] with custom plane weights.
pub fn clip_quality_with(
    reference: &VideoClip,
    decoded: &VideoClip,
    w: &DistortionWeights,
) -> Result<QualityReport, MetricsError> {
    if reference.len() != decoded.len() {
        return Err(MetricsError::LengthMismatch(reference.len(), decoded.len()));
    }
    let n = reference.len() as f64;
    let mut acc = [0.0f64; 5];
    for (a, b) in reference.iter().zip(decoded.iter()) {
        let r = report_from_mses(plane_mses(a, b)?, w);
        for (slot, v) in acc.iter_mut().zip([
            r.psnr_y,
            r.psnr_u,
            r.psnr_v,
            r.psnr_weighted,
            r.mse_weighted,
        ]) {
            *slot += v;
        }
    }
    Ok(QualityReport {
        psnr_y: acc[0] / n,
        psnr_u: acc[1] / n,
        psnr_v: acc[2] / n,
        psnr_weighted: acc[3] / n,
        mse_weighted: acc[4] / n,
        bpp: 0.0,
    })
}

/// Bits per luma sample.
pub fn bpp(
    total_bits: u64,
    width: usize,
    height: usize,
    n_frames: usize,
) -> Result<f64, MetricsError> {
    let denom = width as u128 * height as u128 * n_frames as u128;
    if denom == 0 {
        return Err(MetricsError::ZeroDenominator);
    }
    Ok(total_bits as f64 / denom as f64)
}

/// Mean absolute luma difference between consecutive frames, over 255.
pub fn change_intensity(clip: &VideoClip) -> Result<f64, MetricsError> {
    change_intensity_frames(&clip.iter().collect::<Vec<_>>())
}

pub(crate) fn change_intensity_frames(frames: &[&Frame]) -> Result<f64, MetricsError> {
    if frames.len() < 2 {
        return Err(MetricsError::ClipTooShort {
            needed: 2,
            got: frames.len(),
        });
    }
    let mut total = 0.0;
    for pair in frames.windows(2) {
        check_dims(pair[0], pair[1])?;
        let sad: u64 = pair[0]
            .y()
            .iter()
            .zip(pair[1].y())
            .map(|(&a, &b)| a.abs_diff(b) as u64)
            .sum();
        total += sad as f64 / pair[0].y().len() as f64;
    }
    Ok(total / (frames.len() - 1) as f64 / PEAK)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SceneClass {
    Static,
    Dynamic,
}

/// `Static` iff the change intensity is strictly below `threshold`.
pub fn classify_static(clip: &VideoClip, threshold: f64) -> Result<SceneClass, MetricsError> {
    Ok(classify_intensity(change_intensity(clip)?, threshold))
}

pub fn classify_intensity(intensity: f64, threshold: f64) -> SceneClass {
    if intensity < threshold {
        SceneClass::Static
    } else {
        SceneClass::Dynamic
    }
}
