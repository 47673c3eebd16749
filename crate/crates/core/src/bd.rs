//! Bjøntegaard-delta statistics between rate-distortion curves.
//!
//! Each curve is fitted as log10(bpp) against PSNR (or the reverse for
//! BD-PSNR) with a piecewise cubic, and the two fits are integrated over
//! the shared quality range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BdError {
    #[error("curve needs at least {MIN_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("curve is not strictly increasing in both bpp and psnr at point {0}")]
    NonMonotoneCurve(usize),
    #[error("point {0} has infinite psnr; drop lossless points before building a curve")]
    InfinitePsnr(usize),
    #[error("point {0} has non-positive or non-finite bpp")]
    InvalidRate(usize),
    #[error("quality ranges do not overlap")]
    NoOverlap,
    #[error("{value} is outside the curve span [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
}

pub const MIN_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RDPoint {
    pub bpp: f64,
    pub psnr: f64,
}

impl RDPoint {
    pub fn new(bpp: f64, psnr: f64) -> Self {
        RDPoint { bpp, psnr }
    }
}

/// A validated RD curve, sorted by ascending PSNR.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct RDCurve {
    points: Vec<RDPoint>,
}

impl RDCurve {
    pub fn new(mut points: Vec<RDPoint>) -> Result<Self, BdError> {
        for (i, p) in points.iter().enumerate() {
            if p.psnr.is_infinite() && p.psnr > 0.0 {
                return Err(BdError::InfinitePsnr(i));
            }
            if !p.psnr.is_finite() || !p.bpp.is_finite() || p.bpp <= 0.0 {
                return Err(BdError::InvalidRate(i));
            }
        }
        if points.len() < MIN_POINTS {
            return Err(BdError::TooFewPoints(points.len()));
        }
        points.sort_by(|a, b| a.psnr.total_cmp(&b.psnr));
        for (i, w) in points.windows(2).enumerate() {
            if w[1].psnr <= w[0].psnr || w[1].bpp <= w[0].bpp {
                return Err(BdError::NonMonotoneCurve(i + 1));
            }
        }
        Ok(RDCurve { points })
    }

    pub fn points(&self) -> &[RDPoint] {
        &self.points
    }

    pub fn psnr_span(&self) -> (f64, f64) {
        (self.points[0].psnr, self.points[self.points.len() - 1].psnr)
    }

    pub fn log_rate_span(&self) -> (f64, f64) {
        (
            self.points[0].bpp.log10(),
            self.points[self.points.len() - 1].bpp.log10(),
        )
    }

    /// Same curve with every rate multiplied by `factor`.
    pub fn scale_rates(&self, factor: f64) -> Result<RDCurve, BdError> {
        RDCurve::new(
            self.points
                .iter()
                .map(|p| RDPoint::new(p.bpp * factor, p.psnr))
                .collect(),
        )
    }

    fn rate_fit(&self, interp: Interp) -> PiecewiseCubic {
        let xs: Vec<f64> = self.points.iter().map(|p| p.psnr).collect();
        let ys: Vec<f64> = self.points.iter().map(|p| p.bpp.log10()).collect();
        PiecewiseCubic::fit(interp, xs, ys)
    }

    fn quality_fit(&self, interp: Interp) -> PiecewiseCubic {
        let xs: Vec<f64> = self.points.iter().map(|p| p.bpp.log10()).collect();
        let ys: Vec<f64> = self.points.iter().map(|p| p.psnr).collect();
        PiecewiseCubic::fit(interp, xs, ys)
    }
}

impl<'de> Deserialize<'de> for RDCurve {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let points = Vec::<RDPoint>::deserialize(d)?;
        RDCurve::new(points).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    /// Natural cubic spline (zero second derivative at both ends).
    CubicSpline,
    /// Shape-preserving piecewise cubic Hermite (Fritsch–Carlson slopes).
    #[default]
    Pchip,
}

impl std::str::FromStr for Interp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cubic" | "spline" | "cubicspline" | "cubic-spline" => Ok(Interp::CubicSpline),
            "pchip" | "monotone" | "monotonepchip" => Ok(Interp::Pchip),
            other => Err(format!(
                "unknown interpolation `{other}` (use pchip or cubic)"
            )),
        }
    }
}

/// Cubic Hermite form: knot positions, values and first derivatives.
#[derive(Clone, Debug)]
pub(crate) struct PiecewiseCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl PiecewiseCubic {
    pub(crate) fn fit(interp: Interp, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let ds = match interp {
            Interp::CubicSpline => natural_spline_slopes(&xs, &ys),
            Interp::Pchip => pchip_slopes(&xs, &ys),
        };
        PiecewiseCubic { xs, ys, ds }
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    pub(crate) fn eval(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[k] + h10 * h * self.ds[k] + h01 * self.ys[k + 1] + h11 * h * self.ds[k + 1]
    }

    /// Integral over [lo, hi], split at interior knots so each adaptive
    /// Simpson run sees a single cubic piece.
    pub(crate) fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let mut cuts = vec![lo];
        cuts.extend(self.xs.iter().copied().filter(|&k| k > lo && k < hi));
        cuts.push(hi);
        cuts.windows(2)
            .map(|w| adaptive_simpson(&|x| self.eval(x), w[0], w[1], SIMPSON_REL_TOL))
            .sum()
    }
}

const SIMPSON_REL_TOL: f64 = 1e-8;

fn natural_spline_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    // second derivatives m[0] = m[n-1] = 0; Thomas algorithm on the interior
    let mut m = vec![0.0; n];
    if n > 2 {
        let size = n - 2;
        let mut diag = vec![0.0; size];
        let mut upper = vec![0.0; size];
        let mut rhs = vec![0.0; size];
        for j in 0..size {
            let i = j + 1;
            diag[j] = 2.0 * (h[i - 1] + h[i]);
            upper[j] = h[i];
            rhs[j] = 6.0 * (delta[i] - delta[i - 1]);
        }
        for j in 1..size {
            let w = h[j] / diag[j - 1];
            diag[j] -= w * upper[j - 1];
            rhs[j] -= w * rhs[j - 1];
        }
        m[size] = rhs[size - 1] / diag[size - 1];
        for j in (0..size - 1).rev() {
            m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
        }
    }
    let mut ds: Vec<f64> = (0..n - 1)
        .map(|i| delta[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0)
        .collect();
    ds.push(delta[n - 2] + h[n - 2] * (m[n - 2] + 2.0 * m[n - 1]) / 6.0);
    ds
}

fn pchip_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut ds = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            ds[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    ds[0] = pchip_end_slope(h[0], h[1], delta[0], delta[1]);
    ds[n - 1] = pchip_end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    ds
}

fn pchip_end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = rel_tol * whole.abs().max(f64::MIN_POSITIVE);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol {
        return left + right + err / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> Result<(f64, f64), BdError> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if hi > lo {
        Ok((lo, hi))
    } else {
        Err(BdError::NoOverlap)
    }
}

/// Average rate difference of `test` relative to `anchor` in percent, over
/// the PSNR range both curves cover. Negative means `test` needs fewer bits.
pub fn bd_rate(anchor: &RDCurve, test: &RDCurve, interp: Interp) -> Result<f64, BdError> {
    bd_rate_window(anchor, test, interp, None)
}

/// As [`bd_rate`], optionally restricted to an explicit `[lo, hi]` PSNR
/// window that must lie inside the shared range.
pub fn bd_rate_window(
    anchor: &RDCurve,
    test: &RDCurve,
    interp: Interp,
    window: Option<(f64, f64)>,
) -> Result<f64, BdError> {
    let common = overlap(anchor.psnr_span(), test.psnr_span())?;
    let (lo, hi) = match window {
        None => common,
        Some((lo, hi)) => {
            if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
                return Err(BdError::NoOverlap);
            }
            for v in [lo, hi] {
                if v < common.0 || v > common.1 {
                    return Err(BdError::OutOfRange {
                        value: v,
                        lo: common.0,
                        hi: common.1,
                    });
                }
            }
            (lo, hi)
        }
    };
    let ia = anchor.rate_fit(interp).integrate(lo, hi);
    let it = test.rate_fit(interp).integrate(lo, hi);
    Ok((10f64.powf((it - ia) / (hi - lo)) - 1.0) * 100.0)
}

/// Average PSNR gap (test minus anchor, dB) over the shared log-rate range,
/// fitted with PCHIP.
pub fn bd_psnr(anchor: &RDCurve, test: &RDCurve) -> Result<f64, BdError> {
    bd_psnr_with(anchor, test, Interp::Pchip)
}

pub fn bd_psnr_with(anchor: &RDCurve, test: &RDCurve, interp: Interp) -> Result<f64, BdError> {
    let (lo, hi) = overlap(anchor.log_rate_span(), test.log_rate_span())?;
    let ia = anchor.quality_fit(interp).integrate(lo, hi);
    let it = test.quality_fit(interp).integrate(lo, hi);
    Ok((it - ia) / (hi - lo))
}

/// Rate the fitted curve needs to reach `psnr`.
pub fn interpolate_rate_at(curve: &RDCurve, psnr: f64, interp: Interp) -> Result<f64, BdError> {
    let (lo, hi) = curve.psnr_span();
    if !(psnr >= lo && psnr <= hi) {
        return Err(BdError::OutOfRange {
            value: psnr,
            lo,
            hi,
        });
    }
    if let Some(p) = curve.points.iter().find(|p| p.psnr == psnr) {
        return Ok(p.bpp);
    }
    Ok(10f64.powf(curve.rate_fit(interp).eval(psnr)))
}
