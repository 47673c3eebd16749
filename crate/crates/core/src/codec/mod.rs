//! The scene-adaptive codec.
//!
//! Each frame is predicted from the model's stored background, blended per
//! block with the previous reconstruction, and only the quantized residual
//! is range coded. A background the model already knows therefore costs
//! almost nothing to transmit; moving content carries the bits.

mod container;
mod params;
mod planes;
mod quality;

use std::collections::HashMap;
use std::rc::Rc;

use serde::Serialize;
use thiserror::Error;

pub use container::{Bitstream, StreamHeader, HEADER_BYTES, STREAM_MAGIC, STREAM_VERSION};
pub use params::{ModelParams, PARAMS_MAGIC, PARAMS_VERSION};
pub use planes::{BlockGrid, Planes, BLOCK, CHROMA_BLOCK};
pub use quality::{k_max_for_step, QualityConfig, MAX_QP};

use crate::entropy::{laplace_model, CoderError, RangeDecoder, RangeEncoder, SymbolModel};
use crate::video_io::{Frame, VideoClip, VideoError};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("geometry mismatch: model is {model_w}x{model_h}, input is {input_w}x{input_h}")]
    GeometryMismatch {
        model_w: usize,
        model_h: usize,
        input_w: usize,
        input_h: usize,
    },
    #[error("qp {0} outside 0..=63")]
    QpOutOfRange(i64),
    #[error("model digest {found:016x} does not match stream digest {expected:016x}")]
    DigestMismatch { expected: u64, found: u64 },
    #[error("frame {0} payload is truncated")]
    TruncatedPayload(usize),
    #[error("frame {frame} payload is corrupt: {source}")]
    CorruptPayload { frame: usize, source: CoderError },
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("unexpected end of data")]
    Truncated,
    #[error("trailing bytes after last frame")]
    TrailingData,
    #[error("stream header declares {declared} frames but carries {actual}")]
    FrameCountMismatch { declared: usize, actual: usize },
    #[error("invalid model parameters: {0}")]
    BadParams(String),
    #[error("invalid quality configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Coder(#[from] CoderError),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Temporal state shared (in mirror) by encoder and decoder.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CodecState {
    pub prev_recon: Option<Planes>,
    pub frame_index: u64,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-sample block lookup tables for one frame geometry.
#[derive(Debug)]
pub(crate) struct SampleBlocks {
    pub(crate) planes: [Vec<u32>; 3],
}

impl SampleBlocks {
    pub(crate) fn new(grid: BlockGrid, width: usize, height: usize) -> Self {
        SampleBlocks {
            planes: [0, 1, 2].map(|p| grid.sample_blocks(p, width, height)),
        }
    }
}

fn check_geometry(params: &ModelParams, width: usize, height: usize) -> Result<(), CodecError> {
    if params.width() != width || params.height() != height {
        return Err(CodecError::GeometryMismatch {
            model_w: params.width(),
            model_h: params.height(),
            input_w: width,
            input_h: height,
        });
    }
    Ok(())
}

/// Prediction for the frame at `state.frame_index`: the background on
/// reset frames (or with no reference), otherwise a per-block logistic blend
/// of the previous reconstruction and the background.
pub fn predict(
    params: &ModelParams,
    cfg: &QualityConfig,
    state: &CodecState,
) -> Result<Planes, CodecError> {
    let blocks = SampleBlocks::new(params.grid(), params.width(), params.height());
    predict_with(params, cfg, state, &blocks)
}

pub(crate) fn predict_with(
    params: &ModelParams,
    cfg: &QualityConfig,
    state: &CodecState,
    blocks: &SampleBlocks,
) -> Result<Planes, CodecError> {
    let prev = match &state.prev_recon {
        Some(prev) if !cfg.is_reset_frame(state.frame_index) => prev,
        _ => return Ok(params.background_planes()),
    };
    check_geometry(params, prev.width, prev.height)?;
    let weights: Vec<f64> = params
        .mix_logits()
        .iter()
        .map(|&m| sigmoid(m as f64))
        .collect();
    let mut out = Planes::zeros(params.width(), params.height());
    for p in 0..3 {
        let bg = &params.background()[p];
        let pr = &prev.data[p];
        for (i, dst) in out.data[p].iter_mut().enumerate() {
            let s = weights[blocks.planes[p][i] as usize];
            *dst = s * pr[i] + (1.0 - s) * bg[i] as f64;
        }
    }
    Ok(out)
}

/// Residual models for one quantizer step: per block, luma and chroma.
#[derive(Debug)]
pub(crate) struct ModelBank {
    pub(crate) step: f64,
    pub(crate) k_max: usize,
    pub(crate) models: [Vec<SymbolModel>; 2],
}

impl ModelBank {
    pub(crate) fn new(params: &ModelParams, step: f64) -> Result<Self, CodecError> {
        let k_max = k_max_for_step(step);
        let build = |scales: &Vec<f32>| {
            scales
                .iter()
                .map(|&ls| laplace_model((ls as f64).exp(), step, k_max))
                .collect::<Result<Vec<_>, _>>()
        };
        let [luma, chroma] = params.log_scales();
        Ok(ModelBank {
            step,
            k_max,
            models: [build(luma)?, build(chroma)?],
        })
    }
}

/// Quantizer index for residual `r`: round half away from zero, clamped.
pub fn quantize(r: f64, step: f64, k_max: usize) -> i64 {
    let k = k_max as f64;
    (r / step).round().clamp(-k, k) as i64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameStats {
    pub frame: u64,
    pub qp: i64,
    pub step: f64,
    /// Sum of −log2 p over coded symbols under the quantized models.
    pub estimated_bits: f64,
    pub actual_bits: u64,
    pub zero_fraction: f64,
}

struct Session<'a> {
    params: &'a ModelParams,
    cfg: QualityConfig,
    state: CodecState,
    blocks: SampleBlocks,
    banks: HashMap<i64, Rc<ModelBank>>,
}

impl<'a> Session<'a> {
    fn new(params: &'a ModelParams, cfg: &QualityConfig) -> Result<Self, CodecError> {
        cfg.validate()?;
        Ok(Session {
            params,
            cfg: cfg.clone(),
            state: CodecState::default(),
            blocks: SampleBlocks::new(params.grid(), params.width(), params.height()),
            banks: HashMap::new(),
        })
    }

    fn bank(&mut self, qp: i64) -> Result<Rc<ModelBank>, CodecError> {
        if let Some(b) = self.banks.get(&qp) {
            return Ok(b.clone());
        }
        let bank = Rc::new(ModelBank::new(self.params, self.cfg.step_of_qp(qp)?)?);
        self.banks.insert(qp, bank.clone());
        Ok(bank)
    }

    fn begin_frame(&mut self) -> Result<(i64, Rc<ModelBank>, Planes), CodecError> {
        if self.cfg.is_reset_frame(self.state.frame_index) {
            self.state.prev_recon = None;
        }
        let qp = self
            .cfg
            .qp_of_frame(self.cfg.base_qp as i64, self.state.frame_index);
        let bank = self.bank(qp)?;
        let pred = predict_with(self.params, &self.cfg, &self.state, &self.blocks)?;
        Ok((qp, bank, pred))
    }

    fn end_frame(&mut self, recon: &Planes) {
        self.state.prev_recon = Some(recon.clone());
        self.state.frame_index += 1;
    }
}

/// Sequential encoder over the frames of one stream.
pub struct Encoder<'a> {
    session: Session<'a>,
}

#[derive(Clone, Debug)]
pub struct EncodedFrame {
    pub payload: Vec<u8>,
    /// Real-valued reconstruction, identical to what the decoder produces.
    pub recon: Planes,
    pub stats: FrameStats,
}

impl<'a> Encoder<'a> {
    pub fn new(params: &'a ModelParams, cfg: &QualityConfig) -> Result<Self, CodecError> {
        Ok(Encoder {
            session: Session::new(params, cfg)?,
        })
    }

    pub fn state(&self) -> &CodecState {
        &self.session.state
    }

    pub fn state_mut(&mut self) -> &mut CodecState {
        &mut self.session.state
    }

    pub fn encode_frame(&mut self, frame: &Frame) -> Result<EncodedFrame, CodecError> {
        check_geometry(self.session.params, frame.width(), frame.height())?;
        let (qp, bank, pred) = self.session.begin_frame()?;
        let mut enc = RangeEncoder::new();
        let mut recon = Planes::zeros(frame.width(), frame.height());
        let mut estimated_bits = 0.0;
        let mut zeros = 0usize;
        let k_max = bank.k_max as i64;
        for (p, src) in frame.planes().into_iter().enumerate() {
            let models = &bank.models[(p > 0) as usize];
            let blocks = &self.session.blocks.planes[p];
            let pr = &pred.data[p];
            let out = &mut recon.data[p];
            for i in 0..src.len() {
                let q = quantize(src[i] as f64 - pr[i], bank.step, bank.k_max);
                let model = &models[blocks[i] as usize];
                let symbol = (q + k_max) as usize;
                enc.encode(model, symbol)?;
                estimated_bits += model.cost_bits(symbol);
                zeros += (q == 0) as usize;
                out[i] = pr[i] + bank.step * q as f64;
            }
        }
        let payload = enc.finish();
        let stats = FrameStats {
            frame: self.session.state.frame_index,
            qp,
            step: bank.step,
            estimated_bits,
            actual_bits: 8 * payload.len() as u64,
            zero_fraction: zeros as f64 / frame.byte_len() as f64,
        };
        self.session.end_frame(&recon);
        Ok(EncodedFrame {
            payload,
            recon,
            stats,
        })
    }
}

/// Sequential decoder mirroring [`Encoder`].
pub struct Decoder<'a> {
    session: Session<'a>,
}

impl<'a> Decoder<'a> {
    pub fn new(params: &'a ModelParams, cfg: &QualityConfig) -> Result<Self, CodecError> {
        Ok(Decoder {
            session: Session::new(params, cfg)?,
        })
    }

    pub fn state(&self) -> &CodecState {
        &self.session.state
    }

    pub fn state_mut(&mut self) -> &mut CodecState {
        &mut self.session.state
    }

    pub fn decode_frame(&mut self, payload: &[u8]) -> Result<Planes, CodecError> {
        let frame_no = self.session.state.frame_index as usize;
        let (_, bank, pred) = self.session.begin_frame()?;
        let map_err = |e: CoderError| match e {
            CoderError::TruncatedStream => CodecError::TruncatedPayload(frame_no),
            other => CodecError::CorruptPayload {
                frame: frame_no,
                source: other,
            },
        };
        let mut dec = RangeDecoder::new(payload).map_err(map_err)?;
        let (w, h) = (self.session.params.width(), self.session.params.height());
        let mut recon = Planes::zeros(w, h);
        let k_max = bank.k_max as i64;
        for p in 0..3 {
            let models = &bank.models[(p > 0) as usize];
            let blocks = &self.session.blocks.planes[p];
            let pr = &pred.data[p];
            for (i, out) in recon.data[p].iter_mut().enumerate() {
                let symbol = dec.decode(&models[blocks[i] as usize]).map_err(map_err)?;
                let q = symbol as i64 - k_max;
                *out = pr[i] + bank.step * q as f64;
            }
        }
        dec.finish().map_err(map_err)?;
        self.session.end_frame(&recon);
        Ok(recon)
    }
}

/// One-shot encode of a single frame from an explicit state.
pub fn encode_frame(
    frame: &Frame,
    params: &ModelParams,
    cfg: &QualityConfig,
    state: &mut CodecState,
) -> Result<EncodedFrame, CodecError> {
    let mut enc = Encoder::new(params, cfg)?;
    *enc.state_mut() = std::mem::take(state);
    let out = enc.encode_frame(frame);
    *state = std::mem::take(enc.state_mut());
    out
}

/// One-shot decode of a single frame from an explicit state.
pub fn decode_frame(
    payload: &[u8],
    params: &ModelParams,
    cfg: &QualityConfig,
    state: &mut CodecState,
) -> Result<Planes, CodecError> {
    let mut dec = Decoder::new(params, cfg)?;
    *dec.state_mut() = std::mem::take(state);
    let out = dec.decode_frame(payload);
    *state = std::mem::take(dec.state_mut());
    out
}

#[derive(Clone, Debug)]
pub struct EncodedVideo {
    pub bitstream: Bitstream,
    pub stats: Vec<FrameStats>,
}

pub fn encode_video(
    clip: &VideoClip,
    params: &ModelParams,
    cfg: &QualityConfig,
) -> Result<EncodedVideo, CodecError> {
    check_geometry(params, clip.width(), clip.height())?;
    let mut enc = Encoder::new(params, cfg)?;
    let mut payloads = Vec::with_capacity(clip.len());
    let mut stats = Vec::with_capacity(clip.len());
    for frame in clip.iter() {
        let out = enc.encode_frame(frame)?;
        payloads.push(out.payload);
        stats.push(out.stats);
    }
    let bitstream = Bitstream {
        header: StreamHeader {
            width: clip.width() as u32,
            height: clip.height() as u32,
            frame_count: clip.len() as u32,
            base_qp: cfg.base_qp,
            model_digest: params.digest(),
        },
        payloads,
    };
    Ok(EncodedVideo { bitstream, stats })
}

/// Frame rate written on decoded output; the container does not carry one.
pub const DECODED_FPS: (u32, u32) = (25, 1);

/// Decodes with `cfg`'s schedule; the base qp is taken from the stream.
pub fn decode_video(
    bitstream: &Bitstream,
    params: &ModelParams,
    cfg: &QualityConfig,
) -> Result<VideoClip, CodecError> {
    let recon = decode_video_planes(bitstream, params, cfg)?;
    let frames = recon.iter().map(Planes::to_frame).collect();
    Ok(VideoClip::new(frames, DECODED_FPS.0, DECODED_FPS.1)?)
}

pub fn decode_video_planes(
    bitstream: &Bitstream,
    params: &ModelParams,
    cfg: &QualityConfig,
) -> Result<Vec<Planes>, CodecError> {
    let h = &bitstream.header;
    if h.model_digest != params.digest() {
        return Err(CodecError::DigestMismatch {
            expected: h.model_digest,
            found: params.digest(),
        });
    }
    check_geometry(params, h.width as usize, h.height as usize)?;
    if h.frame_count as usize != bitstream.payloads.len() {
        return Err(CodecError::FrameCountMismatch {
            declared: h.frame_count as usize,
            actual: bitstream.payloads.len(),
        });
    }
    let mut cfg = cfg.clone();
    cfg.base_qp = h.base_qp;
    let mut dec = Decoder::new(params, &cfg)?;
    bitstream
        .payloads
        .iter()
        .map(|p| dec.decode_frame(p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize, t: usize) -> Frame {
        let y = (0..w * h)
            .map(|i| {
                let (x, yy) = (i % w, i / w);
                (((x * 7 + yy * 3 + t * 5) % 200) + 20) as u8
            })
            .collect();
        let c = w * h / 4;
        Frame::new(
            w,
            h,
            y,
            (0..c).map(|i| (100 + i % 40) as u8).collect(),
            vec![128; c],
        )
        .unwrap()
    }

    fn params_for(frame: &Frame, log_scale: f32) -> ModelParams {
        ModelParams::with_background(&Planes::from_frame(frame), log_scale, "t").unwrap()
    }

    #[test]
    fn reset_frame_predicts_background() {
        let f = textured(32, 32, 0);
        let p = params_for(&f, 1.0);
        let cfg = QualityConfig::default();
        let state = CodecState {
            prev_recon: Some(Planes::zeros(32, 32)),
            frame_index: 64,
        };
        assert_eq!(predict(&p, &cfg, &state).unwrap(), p.background_planes());
        assert_eq!(
            predict(&p, &cfg, &CodecState::default()).unwrap(),
            p.background_planes()
        );
    }

    #[test]
    fn neutral_logit_averages_references() {
        let f = textured(32, 32, 0);
        let p = params_for(&f, 1.0);
        let cfg = QualityConfig::default();
        let prev = Planes::from_frame(&textured(32, 32, 3));
        let state = CodecState {
            prev_recon: Some(prev.clone()),
            frame_index: 5,
        };
        let pred = predict(&p, &cfg, &state).unwrap();
        let bg = p.background_planes();
        for c in 0..3 {
            for i in 0..pred.data[c].len() {
                assert!((pred.data[c][i] - 0.5 * (prev.data[c][i] + bg.data[c][i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saturated_logit_follows_reference() {
        let f = textured(16, 16, 0);
        let (bg, _, ls) = params_for(&f, 1.0).into_parts();
        let p = ModelParams::new(16, 16, bg, vec![40.0], ls, "t", 0).unwrap();
        let prev = Planes::from_frame(&textured(16, 16, 9));
        let state = CodecState {
            prev_recon: Some(prev.clone()),
            frame_index: 1,
        };
        let pred = predict(&p, &QualityConfig::default(), &state).unwrap();
        for c in 0..3 {
            for i in 0..pred.data[c].len() {
                assert!((pred.data[c][i] - prev.data[c][i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quantizer_symmetry_and_error_bound() {
        for step in [1.26, 3.7, 12.0] {
            let k = k_max_for_step(step);
            for i in -3000..3000 {
                let r = i as f64 * 0.173;
                let q = quantize(r, step, k);
                assert_eq!(quantize(-r, step, k), -q);
                if q.unsigned_abs() < k as u64 {
                    assert!((r - step * q as f64).abs() <= step / 2.0 + 1e-12);
                }
            }
        }
        assert_eq!(quantize(1.5, 1.0, 10), 2);
        assert_eq!(quantize(-1.5, 1.0, 10), -2);
        assert_eq!(quantize(1e6, 1.0, 10), 10);
    }

    #[test]
    fn known_background_costs_almost_nothing() {
        let f = textured(256, 256, 0);
        // tight residual scale: zero symbols are near certain
        let p = params_for(&f, (0.05f32).ln());
        let cfg = QualityConfig::with_base_qp(8).unwrap();
        let out = encode_frame(&f, &p, &cfg, &mut CodecState::default()).unwrap();
        assert_eq!(out.stats.zero_fraction, 1.0);
        assert!(out.payload.len() < 300, "{} bytes", out.payload.len());
    }

    #[test]
    fn coded_bits_track_estimate() {
        let p = params_for(&textured(64, 64, 0), 4f32.ln());
        let clip =
            VideoClip::new((0..6).map(|t| textured(64, 64, t * 2)).collect(), 25, 1).unwrap();
        let cfg = QualityConfig::with_base_qp(20).unwrap();
        let enc = encode_video(&clip, &p, &cfg).unwrap();
        for s in &enc.stats {
            let gap = (s.actual_bits as f64 - s.estimated_bits).abs();
            assert!(gap <= 0.001 * s.estimated_bits + 64.0 + 8.0, "{s:?}");
        }
    }

    #[test]
    fn closed_loop_and_container_round_trip() {
        let p = params_for(&textured(48, 32, 0), 3f32.ln());
        let clip = VideoClip::new((0..40).map(|t| textured(48, 32, t)).collect(), 25, 1).unwrap();
        let cfg = QualityConfig::with_base_qp(30).unwrap();
        let mut enc = Encoder::new(&p, &cfg).unwrap();
        let mut dec = Decoder::new(&p, &cfg).unwrap();
        for f in clip.iter() {
            let e = enc.encode_frame(f).unwrap();
            let d = dec.decode_frame(&e.payload).unwrap();
            assert_eq!(e.recon, d);
        }
        let video = encode_video(&clip, &p, &cfg).unwrap();
        let bytes = video.bitstream.to_bytes();
        let parsed = Bitstream::from_bytes(&bytes).unwrap();
        let out = decode_video(&parsed, &p, &QualityConfig::default()).unwrap();
        assert_eq!(out.len(), clip.len());
        assert_eq!((out.width(), out.height()), (48, 32));
        let expected_bpp = 8.0 * parsed.payload_bytes() as f64 / (48.0 * 32.0 * 40.0);
        assert_eq!(parsed.bpp(), expected_bpp);
    }

    #[test]
    fn digest_and_geometry_checks() {
        let f = textured(32, 32, 0);
        let p = params_for(&f, 1.0);
        let clip = VideoClip::new(vec![f.clone()], 25, 1).unwrap();
        let cfg = QualityConfig::default();
        let video = encode_video(&clip, &p, &cfg).unwrap();
        let other = p.zeroed_background();
        assert!(matches!(
            decode_video(&video.bitstream, &other, &cfg),
            Err(CodecError::DigestMismatch { .. })
        ));
        let small = VideoClip::new(vec![textured(16, 16, 0)], 25, 1).unwrap();
        assert!(matches!(
            encode_video(&small, &p, &cfg),
            Err(CodecError::GeometryMismatch { .. })
        ));
    }

    #[test]
    fn tampering_never_passes_silently() {
        let p = params_for(&textured(32, 32, 0), 2f32.ln());
        let clip =
            VideoClip::new((0..4).map(|t| textured(32, 32, t * 3)).collect(), 25, 1).unwrap();
        let cfg = QualityConfig::with_base_qp(16).unwrap();
        let video = encode_video(&clip, &p, &cfg).unwrap();
        let reference = decode_video(&video.bitstream, &p, &cfg).unwrap();
        for frame in 0..4 {
            let len = video.bitstream.payloads[frame].len();
            for pos in 0..len {
                let mut bs = video.bitstream.clone();
                bs.payloads[frame][pos] ^= 0x40;
                if let Ok(out) = decode_video(&bs, &p, &cfg) {
                    assert_ne!(out, reference, "frame {frame} byte {pos}");
                }
            }
        }
    }

    #[test]
    fn rate_falls_as_qp_rises() {
        let p = params_for(&textured(64, 64, 0), 3f32.ln());
        let clip = VideoClip::new((0..8).map(|t| textured(64, 64, t)).collect(), 25, 1).unwrap();
        let bits: Vec<usize> = [8, 24, 40, 56]
            .iter()
            .map(|&qp| {
                encode_video(&clip, &p, &QualityConfig::with_base_qp(qp).unwrap())
                    .unwrap()
                    .bitstream
                    .payload_bytes()
            })
            .collect();
        assert!(bits.windows(2).all(|w| w[0] >= w[1]), "{bits:?}");
    }
}
