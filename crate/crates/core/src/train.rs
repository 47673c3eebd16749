//! Scene finetuning of [`ModelParams`].
//!
//! Training minimizes `rate + λ·distortion` over clips sampled from a
//! scene's footage. Quantization is replaced by additive uniform noise, the
//! residual rate is the exact Laplacian interval likelihood, and gradients
//! are closed-form. The previous training reconstruction is a constant of
//! each frame's pass (truncated recurrence).

use std::collections::BTreeMap;
use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{
    k_max_for_step, quantize, sigmoid, CodecError, ModelParams, Planes, QualityConfig, SampleBlocks,
};
use crate::metrics::DistortionWeights;
use crate::video_io::{Frame, VideoClip, VideoError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("warmup needs at least one frame")]
    EmptyWarmup,
    #[error("dataset has no sources")]
    EmptyDataset,
    #[error("source {index} is {width}x{height}, model is {model_w}x{model_h}")]
    GeometryMismatch {
        index: usize,
        width: usize,
        height: usize,
        model_w: usize,
        model_h: usize,
    },
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Video(#[from] VideoError),
}

/// One operating point to train.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityPoint {
    /// Base qp; frames follow the codec's per-position offsets.
    Qp(i64),
    /// Fixed multiplier with step `step_ref·√(λ/λmax)` on every frame.
    Lambda(f64),
}

impl fmt::Display for QualityPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QualityPoint::Qp(q) => write!(f, "qp {q}"),
            QualityPoint::Lambda(l) => write!(f, "lambda {l}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityPoints {
    QpList(Vec<i64>),
    LambdaList(Vec<f64>),
}

impl QualityPoints {
    pub fn points(&self) -> Vec<QualityPoint> {
        match self {
            QualityPoints::QpList(v) => v.iter().map(|&q| QualityPoint::Qp(q)).collect(),
            QualityPoints::LambdaList(v) => v.iter().map(|&l| QualityPoint::Lambda(l)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            QualityPoints::QpList(v) => v.len(),
            QualityPoints::LambdaList(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Desk-scale defaults.
    Desk,
    /// 32-frame clips at four qps, learning rate 1e-6.
    Dcvc,
    /// 20-frame clips over five λ values, learning rate 2e-5 with a constant
    /// 1e-3 rate for the log-scale group.
    Ssf,
}

impl FromStr for Preset {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "dcvc" => Ok(Preset::Dcvc),
            "ssf" => Ok(Preset::Ssf),
            other => Err(TrainError::BadConfig(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub clip_len: usize,
    pub learning_rate: f64,
    /// Constant learning rate for the log-scale group; when unset the group
    /// follows `learning_rate` and the plateau schedule.
    pub scale_group_lr: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub quality_points: QualityPoints,
    pub epochs: usize,
    pub seed: u64,
    pub val_fraction: f64,
    /// Per-frame qp offsets, reset period and λ/step mapping.
    pub codec: QualityConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::preset(Preset::Desk)
    }
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let desk = TrainConfig {
            clip_len: 32,
            learning_rate: 1e-2,
            scale_group_lr: None,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            plateau_factor: 0.5,
            plateau_patience: 10,
            quality_points: QualityPoints::QpList(vec![8, 24, 40, 56]),
            epochs: 100,
            seed: 0,
            val_fraction: 0.1,
            codec: QualityConfig::default(),
        };
        match preset {
            Preset::Desk => desk,
            Preset::Dcvc => TrainConfig {
                learning_rate: 1e-6,
                quality_points: QualityPoints::QpList(vec![0, 21, 42, 63]),
                ..desk
            },
            Preset::Ssf => TrainConfig {
                clip_len: 20,
                learning_rate: 2e-5,
                scale_group_lr: Some(1e-3),
                quality_points: QualityPoints::LambdaList(vec![
                    0.0018, 0.013, 0.0483, 0.0932, 0.18,
                ]),
                ..desk
            },
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::BadConfig(m));
        if self.clip_len < 2 {
            return bad(format!("clip_len {} must be at least 2", self.clip_len));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.learning_rate) {
            return bad(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if let Some(lr) = self.scale_group_lr {
            if !positive(lr) {
                return bad(format!("scale_group_lr {lr} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !positive(self.epsilon)
        {
            return bad("need beta1, beta2 in [0, 1) and epsilon > 0".into());
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad(format!(
                "plateau_factor {} must lie in (0, 1)",
                self.plateau_factor
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!(
                "val_fraction {} must lie in (0, 1)",
                self.val_fraction
            ));
        }
        if self.quality_points.is_empty() {
            return bad("no quality points".into());
        }
        for p in self.quality_points.points() {
            match p {
                QualityPoint::Qp(q) => {
                    self.codec.lambda_of_qp(q)?;
                }
                QualityPoint::Lambda(l) if !positive(l) => {
                    return bad(format!("lambda {l} must be positive"))
                }
                QualityPoint::Lambda(_) => {}
            }
        }
        self.codec.validate()?;
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Keys are the field
    /// names; `codec.*` keys set the quality schedule. `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), TrainError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| TrainError::Parse {
                line: n + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got '{line}'")))?;
            self.set_key(key.trim(), value.trim()).map_err(parse_err)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self, TrainError> {
        let mut cfg = TrainConfig::default();
        cfg.apply_kv(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field by its config key.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad value '{v}' for {key}"))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, String> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        match key {
            "clip_len" => self.clip_len = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "scale_group_lr" => {
                self.scale_group_lr = match value {
                    "" | "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "plateau_factor" => self.plateau_factor = num(key, value)?,
            "plateau_patience" => self.plateau_patience = num(key, value)?,
            "qp_list" => self.quality_points = QualityPoints::QpList(list(key, value)?),
            "lambda_list" => self.quality_points = QualityPoints::LambdaList(list(key, value)?),
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "val_fraction" => self.val_fraction = num(key, value)?,
            "codec.base_qp" => self.codec.base_qp = num(key, value)?,
            "codec.lambda_min" => self.codec.lambda_min = num(key, value)?,
            "codec.lambda_max" => self.codec.lambda_max = num(key, value)?,
            "codec.reset_period" => self.codec.reset_period = num(key, value)?,
            "codec.step_ref" => self.codec.step_ref = num(key, value)?,
            "codec.qp_offsets" => {
                let v: Vec<i32> = list(key, value)?;
                self.codec.qp_offsets = v.try_into().map_err(|v: Vec<i32>| {
                    format!("codec.qp_offsets needs 8 values, got {}", v.len())
                })?;
            }
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// The config as `key = value` lines accepted by [`TrainConfig::apply_kv`].
    pub fn to_kv(&self) -> String {
        let mut out = BTreeMap::new();
        let join = |v: Vec<String>| v.join(",");
        out.insert("clip_len", self.clip_len.to_string());
        out.insert("learning_rate", self.learning_rate.to_string());
        out.insert(
            "scale_group_lr",
            self.scale_group_lr
                .map_or("none".to_string(), |v| v.to_string()),
        );
        out.insert("beta1", self.beta1.to_string());
        out.insert("beta2", self.beta2.to_string());
        out.insert("epsilon", self.epsilon.to_string());
        out.insert("plateau_factor", self.plateau_factor.to_string());
        out.insert("plateau_patience", self.plateau_patience.to_string());
        match &self.quality_points {
            QualityPoints::QpList(v) => {
                out.insert("qp_list", join(v.iter().map(|x| x.to_string()).collect()))
            }
            QualityPoints::LambdaList(v) => out.insert(
                "lambda_list",
                join(v.iter().map(|x| x.to_string()).collect()),
            ),
        };
        out.insert("epochs", self.epochs.to_string());
        out.insert("seed", self.seed.to_string());
        out.insert("val_fraction", self.val_fraction.to_string());
        out.insert("codec.base_qp", self.codec.base_qp.to_string());
        out.insert("codec.lambda_min", self.codec.lambda_min.to_string());
        out.insert("codec.lambda_max", self.codec.lambda_max.to_string());
        out.insert("codec.reset_period", self.codec.reset_period.to_string());
        out.insert("codec.step_ref", self.codec.step_ref.to_string());
        out.insert(
            "codec.qp_offsets",
            join(
                self.codec
                    .qp_offsets
                    .iter()
                    .map(|x| x.to_string())
                    .collect(),
            ),
        );
        out.into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// L = R + λ·D.
pub fn rd_loss(distortion: f64, rate_bpp_est: f64, lambda: f64) -> f64 {
    rate_bpp_est + lambda * distortion
}

/// Double-precision working copy of the trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    pub width: usize,
    pub height: usize,
    pub background: [Vec<f64>; 3],
    pub mix_logits: Vec<f64>,
    pub log_scales: [Vec<f64>; 2],
}

impl ParamSet {
    pub fn from_model(params: &ModelParams) -> Self {
        let widen = |v: &Vec<f32>| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
        ParamSet {
            width: params.width(),
            height: params.height(),
            background: params.background().each_ref().map(widen),
            mix_logits: widen(&params.mix_logits().to_vec()),
            log_scales: params.log_scales().each_ref().map(widen),
        }
    }

    pub fn to_model(&self, scene_id: &str, train_step: u64) -> Result<ModelParams, CodecError> {
        let narrow = |v: &Vec<f64>| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        ModelParams::new(
            self.width,
            self.height,
            self.background.each_ref().map(narrow),
            narrow(&self.mix_logits),
            self.log_scales.each_ref().map(narrow),
            scene_id,
            train_step,
        )
    }

    /// Background Y, U, V, mix logits, luma log-scales, chroma log-scales.
    pub fn groups(&self) -> [&Vec<f64>; 6] {
        let [y, u, v] = &self.background;
        let [ls, lc] = &self.log_scales;
        [y, u, v, &self.mix_logits, ls, lc]
    }

    pub fn groups_mut(&mut self) -> [&mut Vec<f64>; 6] {
        let [y, u, v] = &mut self.background;
        let [ls, lc] = &mut self.log_scales;
        [y, u, v, &mut self.mix_logits, ls, lc]
    }

    fn zeros_like(&self) -> Gradients {
        Gradients {
            background: self.background.each_ref().map(|v| vec![0.0; v.len()]),
            mix_logits: vec![0.0; self.mix_logits.len()],
            log_scales: self.log_scales.each_ref().map(|v| vec![0.0; v.len()]),
        }
    }
}

/// Loss gradients, laid out like [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub background: [Vec<f64>; 3],
    pub mix_logits: Vec<f64>,
    pub log_scales: [Vec<f64>; 2],
}

impl Gradients {
    pub fn groups(&self) -> [&Vec<f64>; 6] {
        let [y, u, v] = &self.background;
        let [ls, lc] = &self.log_scales;
        [y, u, v, &self.mix_logits, ls, lc]
    }

    fn groups_mut(&mut self) -> [&mut Vec<f64>; 6] {
        let [y, u, v] = &mut self.background;
        let [ls, lc] = &mut self.log_scales;
        [y, u, v, &mut self.mix_logits, ls, lc]
    }

    fn add_scaled(&mut self, other: &Gradients, k: f64) {
        for (a, b) in self.groups_mut().into_iter().zip(other.groups()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += k * y);
        }
    }
}

/// How the quantizer is modelled in a surrogate pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Noise {
    /// Additive Uniform(−Δ/2, Δ/2) noise from a seeded generator.
    Uniform { seed: u64 },
    /// The coding-time quantizer (no gradients).
    Hard,
    /// Residuals passed through unchanged.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurrogateOutput {
    /// Estimated bits per luma sample over the clip.
    pub rate_bpp: f64,
    /// Mean weighted MSE of the training reconstructions.
    pub distortion: f64,
    /// Mean of `rd_loss` over frames.
    pub loss: f64,
    pub frame_bits: Vec<f64>,
    pub frame_distortion: Vec<f64>,
    pub frame_lambda: Vec<f64>,
}

/// −ln of the mass of `[c−h, c+h]` under a zero-mean Laplacian of scale
/// `b`, and its derivatives in `c` and `b`.
pub(crate) fn interval_nll(c: f64, h: f64, b: f64) -> (f64, f64, f64) {
    if c.abs() >= h {
        let lo = c.abs() - h;
        let e = (-2.0 * h / b).exp();
        let nll = LN_2 + lo / b - (-e).ln_1p();
        let d_c = c.signum() / b;
        let d_b = -lo / (b * b) + (2.0 * h / (b * b)) * e / (1.0 - e);
        (nll, d_c, d_b)
    } else {
        let e1 = (-(h - c) / b).exp();
        let e2 = (-(h + c) / b).exp();
        let p = -0.5 * ((-(h - c) / b).exp_m1() + (-(h + c) / b).exp_m1());
        let d_c = 0.5 * (e1 - e2) / (b * p);
        let d_b = 0.5 * (e1 * (h - c) + e2 * (h + c)) / (b * b * p);
        (-p.ln(), d_c, d_b)
    }
}

struct FramePlan {
    step: f64,
    lambda: f64,
    reset: bool,
}

fn frame_plans(
    n: usize,
    point: QualityPoint,
    cfg: &QualityConfig,
) -> Result<Vec<FramePlan>, TrainError> {
    (0..n as u64)
        .map(|t| {
            let (step, lambda) = match point {
                QualityPoint::Qp(base) => {
                    let qp = cfg.qp_of_frame(base, t);
                    (cfg.step_of_qp(qp)?, cfg.lambda_of_qp(qp)?)
                }
                QualityPoint::Lambda(l) => (cfg.step_for_lambda(l), l),
            };
            Ok(FramePlan {
                step,
                lambda,
                reset: cfg.is_reset_frame(t),
            })
        })
        .collect()
}

fn check_frames(params: &ParamSet, frames: &[&Frame]) -> Result<(), TrainError> {
    if frames.is_empty() {
        return Err(TrainError::Video(VideoError::EmptyClip));
    }
    for (index, f) in frames.iter().enumerate() {
        if f.width() != params.width || f.height() != params.height {
            return Err(TrainError::GeometryMismatch {
                index,
                width: f.width(),
                height: f.height(),
                model_w: params.width,
                model_h: params.height,
            });
        }
    }
    Ok(())
}

/// Forward pass over a clip, optionally accumulating loss gradients.
fn clip_pass(
    params: &ParamSet,
    frames: &[&Frame],
    point: QualityPoint,
    cfg: &QualityConfig,
    noise: Noise,
    mut grad: Option<&mut Gradients>,
) -> Result<SurrogateOutput, TrainError> {
    check_frames(params, frames)?;
    let plans = frame_plans(frames.len(), point, cfg)?;
    let (w, h) = (params.width, params.height);
    let grid = crate::codec::BlockGrid::for_frame(w, h);
    let blocks = SampleBlocks::new(grid, w, h);
    let weights = DistortionWeights::default().as_array();
    let weight_sum: f64 = weights.iter().sum();
    let mix: Vec<f64> = params.mix_logits.iter().map(|&m| sigmoid(m)).collect();
    let scales: [Vec<f64>; 2] = params
        .log_scales
        .each_ref()
        .map(|v| v.iter().map(|l| l.exp()).collect());
    // d(rate_bpp)/d(nll) for every sample
    let rate_norm = 1.0 / (LN_2 * (w * h * frames.len()) as f64);

    let mut prev: Option<Planes> = None;
    let mut out = SurrogateOutput {
        rate_bpp: 0.0,
        distortion: 0.0,
        loss: 0.0,
        frame_bits: Vec::with_capacity(frames.len()),
        frame_distortion: Vec::with_capacity(frames.len()),
        frame_lambda: Vec::with_capacity(frames.len()),
    };
    for (t, (frame, plan)) in frames.iter().zip(&plans).enumerate() {
        if plan.reset {
            prev = None;
        }
        let mut rng = match noise {
            Noise::Uniform { seed } => {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(t as u64);
                Some(r)
            }
            _ => None,
        };
        let half = 0.5 * plan.step;
        let k_max = k_max_for_step(plan.step);
        let mut recon = Planes::zeros(w, h);
        let mut nats = 0.0;
        let mut sq = [0.0f64; 3];
        for (p, src) in frame.planes().into_iter().enumerate() {
            let bg = &params.background[p];
            let sample_blocks = &blocks.planes[p];
            let group = (p > 0) as usize;
            let scale = &scales[group];
            let prev_p = prev.as_ref().map(|pl| &pl.data[p]);
            let rec = &mut recon.data[p];
            for i in 0..src.len() {
                let g = sample_blocks[i] as usize;
                let (pred, s) = match prev_p {
                    Some(pr) => (mix[g] * pr[i] + (1.0 - mix[g]) * bg[i], mix[g]),
                    None => (bg[i], 0.0),
                };
                let x = src[i] as f64;
                let r = x - pred;
                let c = match noise {
                    Noise::Uniform { .. } => {
                        let u: f64 = rng
                            .as_mut()
                            .expect("uniform noise has a generator")
                            .random();
                        r + (u - 0.5) * plan.step
                    }
                    Noise::Hard => plan.step * quantize(r, plan.step, k_max) as f64,
                    Noise::Zero => r,
                };
                let b = scale[g];
                let (nll, d_c, d_b) = interval_nll(c, half, b);
                nats += nll;
                let y = pred + c;
                rec[i] = y;
                sq[p] += (x - y) * (x - y);
                if let Some(gr) = grad.as_deref_mut() {
                    // dc/dP = −1 for noise and identity; ∂P/∂bg = 1 − s
                    let d_pred = -d_c * rate_norm;
                    if let Some(pr) = prev_p {
                        gr.background[p][i] += d_pred * (1.0 - s);
                        gr.mix_logits[g] += d_pred * s * (1.0 - s) * (pr[i] - bg[i]);
                    } else {
                        gr.background[p][i] += d_pred;
                    }
                    gr.log_scales[group][g] += d_b * b * rate_norm;
                }
            }
        }
        let mses = [
            sq[0] / (w * h) as f64,
            sq[1] / (w * h / 4) as f64,
            sq[2] / (w * h / 4) as f64,
        ];
        let dist =
            (weights[0] * mses[0] + weights[1] * mses[1] + weights[2] * mses[2]) / weight_sum;
        let bits = nats / LN_2;
        out.frame_bits.push(bits);
        out.frame_distortion.push(dist);
        out.frame_lambda.push(plan.lambda);
        prev = Some(recon);
    }
    let n = frames.len() as f64;
    out.rate_bpp = out.frame_bits.iter().sum::<f64>() / (w * h) as f64 / n;
    out.distortion = out.frame_distortion.iter().sum::<f64>() / n;
    let mean_penalty = out
        .frame_distortion
        .iter()
        .zip(&out.frame_lambda)
        .map(|(d, l)| l * d)
        .sum::<f64>()
        / n;
    out.loss = rd_loss(1.0, out.rate_bpp, mean_penalty);
    Ok(out)
}

fn clip_refs(clip: &VideoClip) -> Vec<&Frame> {
    clip.iter().collect()
}

/// Training-time forward pass: surrogate rate (bits per luma sample) and
/// mean weighted distortion of `clip` under `params` at `point`.
pub fn surrogate_rate_and_distortion(
    clip: &VideoClip,
    params: &ModelParams,
    point: QualityPoint,
    cfg: &QualityConfig,
    noise: Noise,
) -> Result<SurrogateOutput, TrainError> {
    surrogate_with(
        &ParamSet::from_model(params),
        &clip_refs(clip),
        point,
        cfg,
        noise,
    )
}

pub fn surrogate_with(
    params: &ParamSet,
    frames: &[&Frame],
    point: QualityPoint,
    cfg: &QualityConfig,
    noise: Noise,
) -> Result<SurrogateOutput, TrainError> {
    clip_pass(params, frames, point, cfg, noise, None)
}

/// Exact gradients of the clip's mean `rd_loss` at the noise realization
/// drawn from `noise_seed`.
pub fn gradients(
    clip: &VideoClip,
    params: &ModelParams,
    point: QualityPoint,
    cfg: &QualityConfig,
    noise_seed: u64,
) -> Result<(SurrogateOutput, Gradients), TrainError> {
    gradients_with(
        &ParamSet::from_model(params),
        &clip_refs(clip),
        point,
        cfg,
        Noise::Uniform { seed: noise_seed },
    )
}

pub fn gradients_with(
    params: &ParamSet,
    frames: &[&Frame],
    point: QualityPoint,
    cfg: &QualityConfig,
    noise: Noise,
) -> Result<(SurrogateOutput, Gradients), TrainError> {
    if noise == Noise::Hard {
        return Err(TrainError::BadConfig(
            "hard quantization has no gradient".into(),
        ));
    }
    let mut grad = params.zeros_like();
    let out = clip_pass(params, frames, point, cfg, noise, Some(&mut grad))?;
    Ok((out, grad))
}

pub const INIT_LOG_SCALE: f64 = 1.386_294_361_119_890_6; // ln 4

/// Cold start: per-sample mean background, neutral mixing, scale 4.
pub fn init_params<'a, I>(warmup: I, scene_id: &str) -> Result<ModelParams, TrainError>
where
    I: IntoIterator<Item = &'a Frame>,
{
    let mut iter = warmup.into_iter();
    let first = iter.next().ok_or(TrainError::EmptyWarmup)?;
    let mut sum = Planes::from_frame(first);
    let mut n = 1usize;
    for (k, f) in iter.enumerate() {
        if !f.same_geometry(first) {
            return Err(TrainError::GeometryMismatch {
                index: k + 1,
                width: f.width(),
                height: f.height(),
                model_w: first.width(),
                model_h: first.height(),
            });
        }
        for (acc, src) in sum.data.iter_mut().zip(f.planes()) {
            acc.iter_mut().zip(src).for_each(|(a, &v)| *a += v as f64);
        }
        n += 1;
    }
    for plane in &mut sum.data {
        plane.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(ModelParams::with_background(
        &sum,
        INIT_LOG_SCALE as f32,
        scene_id,
    )?)
}

/// Adam with bias correction over the six parameter groups.
#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamSet, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.groups().iter().map(|g| vec![0.0; g.len()]).collect();
        Adam {
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update; `lrs` gives the learning rate of each group.
    pub fn step(&mut self, params: &mut ParamSet, grad: &Gradients, lrs: [f64; 6]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, (p, g)) in params
            .groups_mut()
            .into_iter()
            .zip(grad.groups())
            .enumerate()
        {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lrs[k] * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Reduce-on-plateau for a minimized metric, with relative improvement
/// threshold 1e-4 and no cooldown.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    lr: f64,
    factor: f64,
    patience: usize,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub const THRESHOLD: f64 = 1e-4;

    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        PlateauScheduler {
            lr,
            factor,
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one epoch's metric and returns the rate for the next epoch.
    pub fn step(&mut self, metric: f64) -> f64 {
        if metric < self.best * (1.0 - Self::THRESHOLD) {
            self.best = metric;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs > self.patience {
            self.lr *= self.factor;
            self.bad_epochs = 0;
        }
        self.lr
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Rate used for this epoch's update.
    pub learning_rate: f64,
    pub bpp_est: f64,
    pub distortion: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Validation loss of the initial parameters.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("train log serializes")
    }

    pub fn final_val_loss(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_val_loss, |e| e.val_loss)
    }
}

struct Split {
    train: VideoClip,
    val: VideoClip,
}

fn split_source(source: &VideoClip, cfg: &TrainConfig) -> Result<Split, TrainError> {
    let n = source.len();
    let val_len = ((n as f64 * cfg.val_fraction).ceil() as usize).max(2);
    if n < val_len + cfg.clip_len {
        return Err(TrainError::Video(VideoError::ClipTooShort {
            available: n,
            needed: val_len + cfg.clip_len,
        }));
    }
    let train_len = n - val_len;
    Ok(Split {
        train: source.window(0, train_len)?,
        val: source.window(train_len, val_len.min(cfg.clip_len))?,
    })
}

const VAL_SEED_SALT: u64 = 0x005e_ed0f_7a1d_a7e5;

fn validation_loss(
    params: &ParamSet,
    splits: &[Split],
    points: &[QualityPoint],
    cfg: &TrainConfig,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for (s, split) in splits.iter().enumerate() {
        let frames = clip_refs(&split.val);
        for (k, &point) in points.iter().enumerate() {
            let seed = cfg.seed ^ VAL_SEED_SALT ^ ((s as u64) << 32 | k as u64);
            total +=
                surrogate_with(params, &frames, point, &cfg.codec, Noise::Uniform { seed })?.loss;
        }
    }
    Ok(total / (splits.len() * points.len()) as f64)
}

/// Fits `initial` to the footage in `dataset`. Runs are deterministic for a
/// fixed config.
pub fn finetune(
    dataset: &[VideoClip],
    initial: &ModelParams,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainLog), TrainError> {
    finetune_with_progress(dataset, initial, cfg, |_| {})
}

pub fn finetune_with_progress(
    dataset: &[VideoClip],
    initial: &ModelParams,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochLog),
) -> Result<(ModelParams, TrainLog), TrainError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (index, src) in dataset.iter().enumerate() {
        if src.width() != initial.width() || src.height() != initial.height() {
            return Err(TrainError::GeometryMismatch {
                index,
                width: src.width(),
                height: src.height(),
                model_w: initial.width(),
                model_h: initial.height(),
            });
        }
    }
    let splits = dataset
        .iter()
        .map(|s| split_source(s, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let points = cfg.quality_points.points();
    let mut params = ParamSet::from_model(initial);
    let mut log = TrainLog {
        initial_val_loss: validation_loss(&params, &splits, &points, cfg)?,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    if cfg.epochs == 0 {
        return Ok((initial.clone(), log));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&params, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut sched =
        PlateauScheduler::new(cfg.learning_rate, cfg.plateau_factor, cfg.plateau_patience);
    let share = 1.0 / splits.len() as f64;
    for epoch in 0..cfg.epochs {
        let mut total = params.zeros_like();
        let (mut loss, mut bpp, mut dist) = (0.0, 0.0, 0.0);
        for split in &splits {
            let start = split.train.sample_start(cfg.clip_len, &mut rng)?;
            let point = points[rng.random_range(0..points.len())];
            let seed: u64 = rng.random();
            let clip = split.train.window(start, cfg.clip_len)?;
            let (out, g) = gradients_with(
                &params,
                &clip_refs(&clip),
                point,
                &cfg.codec,
                Noise::Uniform { seed },
            )?;
            total.add_scaled(&g, share);
            loss += out.loss * share;
            bpp += out.rate_bpp * share;
            dist += out.distortion * share;
        }
        let lr = sched.lr();
        let scale_lr = cfg.scale_group_lr.unwrap_or(lr);
        adam.step(&mut params, &total, [lr, lr, lr, lr, scale_lr, scale_lr]);
        let val_loss = validation_loss(&params, &splits, &points, cfg)?;
        sched.step(val_loss);
        let entry = EpochLog {
            epoch,
            train_loss: loss,
            val_loss,
            learning_rate: lr,
            bpp_est: bpp,
            distortion: dist,
        };
        progress(&entry);
        log.epochs.push(entry);
    }
    let model = params.to_model(initial.scene_id(), initial.train_step() + cfg.epochs as u64)?;
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode_video;
    use crate::entropy::laplace_interval_mass;

    fn textured_frame(w: usize, h: usize, t: usize, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let mut plane = |pw: usize, ph: usize, base: f64| -> Vec<u8> {
            (0..pw * ph)
                .map(|i| {
                    let (x, y) = ((i % pw) as f64, (i / pw) as f64);
                    let v = base
                        + 30.0 * (x * 0.37).sin() * (y * 0.21).cos()
                        + rng.random_range(-3.0..3.0);
                    v.round().clamp(0.0, 255.0) as u8
                })
                .collect()
        };
        let y = plane(w, h, 120.0);
        let u = plane(w / 2, h / 2, 110.0);
        let v = plane(w / 2, h / 2, 140.0);
        Frame::new(w, h, y, u, v).unwrap()
    }

    fn clip(w: usize, h: usize, n: usize, seed: u64) -> VideoClip {
        VideoClip::new(
            (0..n).map(|t| textured_frame(w, h, t, seed)).collect(),
            25,
            1,
        )
        .unwrap()
    }

    fn perturbed(params: &ModelParams, seed: u64) -> ParamSet {
        let mut p = ParamSet::from_model(params);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in p.background.iter_mut().flatten() {
            *v += rng.random_range(-6.0..6.0);
        }
        for v in &mut p.mix_logits {
            *v = rng.random_range(-1.5..1.5);
        }
        for v in p.log_scales.iter_mut().flatten() {
            *v = rng.random_range(0.3..2.0);
        }
        p
    }

    #[test]
    fn rd_loss_examples() {
        assert!((rd_loss(48.0, 0.1, 0.0018) - 0.1864).abs() < 1e-15);
        assert_eq!(rd_loss(48.0, 0.1, 0.0), 0.1);
        let a = rd_loss(10.0, 0.5, 0.25) - 0.5;
        let b = rd_loss(10.0, 0.5, 0.5) - 0.5;
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn interval_nll_matches_mass() {
        for &(c, h, b) in &[
            (0.0, 0.5, 1.0),
            (3.2, 0.6, 0.7),
            (-2.5, 1.0, 4.0),
            (0.3, 2.0, 0.2),
            (-0.6, 0.6, 1.3),
            (40.0, 6.0, 1.5),
        ] {
            let (nll, _, _) = interval_nll(c, h, b);
            let want = -laplace_interval_mass(c - h, c + h, b).ln();
            assert!(
                (nll - want).abs() < 1e-9 * want.abs().max(1.0),
                "{c} {h} {b}: {nll} vs {want}"
            );
        }
    }

    #[test]
    fn interval_nll_derivatives_match_differences() {
        let eps = 1e-6;
        for &(c, h, b) in &[
            (0.1, 0.5, 1.0),
            (3.2, 0.6, 0.7),
            (-2.5, 1.0, 4.0),
            (0.3, 2.0, 0.2),
        ] {
            let (_, d_c, d_b) = interval_nll(c, h, b);
            let fc = (interval_nll(c + eps, h, b).0 - interval_nll(c - eps, h, b).0) / (2.0 * eps);
            let fb = (interval_nll(c, h, b + eps).0 - interval_nll(c, h, b - eps).0) / (2.0 * eps);
            assert!((d_c - fc).abs() < 1e-6, "{d_c} {fc}");
            assert!((d_b - fb).abs() < 1e-6, "{d_b} {fb}");
        }
    }

    #[test]
    fn forward_matches_direct_likelihood() {
        // independent recomputation of the reset-frame rate from the
        // Laplacian mass function
        let c = clip(32, 32, 1, 3);
        let params = init_params(c.iter().take(1), "s").unwrap();
        let mut p = ParamSet::from_model(&params);
        p.background[0].iter_mut().for_each(|v| *v += 1.3);
        let cfg = QualityConfig::default();
        let out =
            surrogate_with(&p, &[c.frame(0)], QualityPoint::Qp(40), &cfg, Noise::Zero).unwrap();
        let step = cfg.step_of_qp(40).unwrap();
        let b = (params.log_scales()[0][0] as f64).exp();
        let mut bits = 0.0;
        for (pl, src) in c.frame(0).planes().into_iter().enumerate() {
            for (i, &x) in src.iter().enumerate() {
                let r = x as f64 - p.background[pl][i];
                bits -= laplace_interval_mass(r - step / 2.0, r + step / 2.0, b).log2();
            }
        }
        assert!((out.frame_bits[0] - bits).abs() < 1e-9 * bits);
        assert_eq!(out.distortion, 0.0);
    }

    #[test]
    fn degenerate_noise_at_background() {
        let f = textured_frame(32, 32, 0, 9);
        let params = init_params([&f], "s").unwrap();
        let cfg = QualityConfig::default();
        let out = surrogate_rate_and_distortion(
            &VideoClip::new(vec![f.clone()], 25, 1).unwrap(),
            &params,
            QualityPoint::Qp(20),
            &cfg,
            Noise::Zero,
        )
        .unwrap();
        assert_eq!(out.distortion, 0.0);
        let step = cfg.step_of_qp(20).unwrap();
        let b = (params.log_scales()[0][0] as f64).exp();
        let per_sample = -laplace_interval_mass(-step / 2.0, step / 2.0, b).log2();
        let want = per_sample * f.byte_len() as f64 / (32.0 * 32.0);
        assert!((out.rate_bpp - want).abs() < 1e-9);
    }

    #[test]
    fn symmetric_zero_residual_has_no_background_gradient() {
        let f = textured_frame(32, 32, 0, 1);
        let params = init_params([&f], "s").unwrap();
        let (_, g) = gradients_with(
            &ParamSet::from_model(&params),
            &[&f],
            QualityPoint::Qp(30),
            &QualityConfig::default(),
            Noise::Zero,
        )
        .unwrap();
        assert!(g.background.iter().flatten().all(|&v| v.abs() < 1e-15));
    }

    fn fd_check(params: &ParamSet, frames: &[&Frame], point: QualityPoint) {
        let cfg = QualityConfig::default();
        let noise = Noise::Uniform { seed: 77 };
        let (_, g) = gradients_with(params, frames, point, &cfg, noise).unwrap();
        let h = 1e-3;
        let names = [
            "background Y",
            "background U",
            "background V",
            "mix logits",
            "luma log-scales",
            "chroma log-scales",
        ];
        for (k, name) in names.iter().enumerate() {
            let n = params.groups()[k].len();
            let mut num = vec![0.0; n];
            for (i, slot) in num.iter_mut().enumerate() {
                let mut plus = params.clone();
                plus.groups_mut()[k][i] += h;
                let mut minus = params.clone();
                minus.groups_mut()[k][i] -= h;
                let lp = surrogate_with(&plus, frames, point, &cfg, noise)
                    .unwrap()
                    .loss;
                let lm = surrogate_with(&minus, frames, point, &cfg, noise)
                    .unwrap()
                    .loss;
                *slot = (lp - lm) / (2.0 * h);
            }
            let ana = g.groups()[k];
            let diff: f64 = ana
                .iter()
                .zip(&num)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = num.iter().map(|b| b * b).sum::<f64>().sqrt();
            assert!(norm > 0.0, "{name}: zero numeric gradient");
            assert!(
                diff <= 1e-4 * norm,
                "{name}: relative error {}",
                diff / norm
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let c = clip(32, 32, 3, 5);
        let params = init_params(c.iter().take(1), "s").unwrap();
        let p = perturbed(&params, 11);
        let frames = clip_refs(&c);
        fd_check(&p, &frames, QualityPoint::Qp(24));
        fd_check(&p, &frames, QualityPoint::Lambda(4e-4));
    }

    #[test]
    fn log_scale_gradient_is_negative_when_scale_too_small() {
        let f = textured_frame(32, 32, 0, 2);
        let params = init_params([&f], "s").unwrap();
        let mut p = ParamSet::from_model(&params);
        // large residuals everywhere, tiny scales
        p.background.iter_mut().flatten().for_each(|v| *v += 40.0);
        p.log_scales.iter_mut().flatten().for_each(|v| *v = 0.0);
        let (_, g) = gradients_with(
            &p,
            &[&f],
            QualityPoint::Qp(30),
            &QualityConfig::default(),
            Noise::Uniform { seed: 1 },
        )
        .unwrap();
        assert!(g.log_scales.iter().flatten().all(|&v| v < 0.0));
    }

    #[test]
    fn hard_surrogate_tracks_codec_estimate() {
        let c = clip(64, 64, 6, 21);
        let params = init_params(c.iter().take(2), "s").unwrap();
        for qp in [8, 32, 56] {
            let cfg = QualityConfig::with_base_qp(qp).unwrap();
            let coded = encode_video(&c, &params, &cfg).unwrap();
            let est: f64 = coded.stats.iter().map(|s| s.estimated_bits).sum();
            let out =
                surrogate_rate_and_distortion(&c, &params, QualityPoint::Qp(qp), &cfg, Noise::Hard)
                    .unwrap();
            let bits = out.rate_bpp * (64.0 * 64.0 * 6.0);
            assert!((bits - est).abs() <= 0.03 * est, "qp {qp}: {bits} vs {est}");
        }
    }

    #[test]
    fn init_params_average() {
        let a = Frame::filled(16, 16, 10, 20, 30).unwrap();
        let b = Frame::filled(16, 16, 13, 20, 31).unwrap();
        let one = init_params([&a], "x").unwrap();
        assert!(one.background()[0].iter().all(|&v| v == 10.0));
        let two = init_params([&a, &b], "x").unwrap();
        assert!(two.background()[0].iter().all(|&v| v == 11.5));
        assert!(two.background()[2].iter().all(|&v| v == 30.5));
        assert!(two.mix_logits().iter().all(|&v| v == 0.0));
        assert!(two.log_scales()[1].iter().all(|&v| v == 4f32.ln()));
        assert!(matches!(
            init_params(std::iter::empty(), "x"),
            Err(TrainError::EmptyWarmup)
        ));
    }

    #[test]
    fn constant_scene_codes_to_near_nothing() {
        let f = Frame::filled(64, 64, 90, 100, 110).unwrap();
        let src = VideoClip::new(vec![f.clone(); 40], 25, 1).unwrap();
        let init = init_params([&f], "x").unwrap();
        let cfg = QualityConfig::with_base_qp(0).unwrap();
        assert!(cfg.step_of_qp(0).unwrap() >= 1.0);
        let clip = src.window(0, 4).unwrap();
        let coded = encode_video(&clip, &init, &cfg).unwrap();
        let decoded = crate::codec::decode_video(&coded.bitstream, &init, &cfg).unwrap();
        assert!(decoded.iter().all(|d| d == &f));
        // the initial scale still spends bits on zeros; a few epochs of
        // scale adaptation remove them
        let train = TrainConfig {
            clip_len: 3,
            learning_rate: 0.3,
            epochs: 30,
            quality_points: QualityPoints::QpList(vec![0]),
            ..TrainConfig::default()
        };
        let (tuned, _) = finetune(&[src], &init, &train).unwrap();
        let bpp = encode_video(&clip, &tuned, &cfg).unwrap().bitstream.bpp();
        assert!(bpp < 0.05, "{bpp}");
        assert!(coded.bitstream.bpp() > 10.0 * bpp);
    }

    #[test]
    fn plateau_halves_once_per_patience_window() {
        let mut s = PlateauScheduler::new(1.0, 0.5, 3);
        assert_eq!(s.step(2.0), 1.0);
        for _ in 0..3 {
            assert_eq!(s.step(2.0), 1.0);
        }
        assert_eq!(s.step(2.0), 0.5);
        for _ in 0..3 {
            assert_eq!(s.step(2.0), 0.5);
        }
        assert_eq!(s.step(1.0), 0.5);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let f = Frame::filled(16, 16, 0, 0, 0).unwrap();
        let params = init_params([&f], "x").unwrap();
        let mut p = ParamSet::from_model(&params);
        let mut g = p.zeros_like();
        g.background[0][0] = 3.0;
        g.background[0][1] = -0.01;
        let mut adam = Adam::new(&p, 0.9, 0.999, 1e-8);
        adam.step(&mut p, &g, [0.1; 6]);
        assert!((p.background[0][0] + 0.1).abs() < 1e-7);
        assert!((p.background[0][1] - 0.1).abs() < 1e-5);
        assert_eq!(p.background[0][2], 0.0);
    }

    fn small_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            clip_len: 3,
            learning_rate: 0.3,
            epochs,
            plateau_patience: 2,
            quality_points: QualityPoints::QpList(vec![16, 40]),
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_is_identity() {
        let src = clip(32, 32, 20, 8);
        let init = init_params(src.iter().take(1), "scene").unwrap();
        let (out, log) = finetune(std::slice::from_ref(&src), &init, &small_cfg(0)).unwrap();
        assert_eq!(out, init);
        assert_eq!(out.digest(), init.digest());
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn finetune_is_deterministic_and_improves() {
        let src = clip(32, 32, 24, 8);
        let init = init_params(src.iter().take(1), "scene").unwrap();
        let cfg = small_cfg(25);
        let (a, la) = finetune(std::slice::from_ref(&src), &init, &cfg).unwrap();
        let (b, lb) = finetune(std::slice::from_ref(&src), &init, &cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(la.to_json(), lb.to_json());
        assert_eq!(a.train_step(), 25);
        assert_eq!(a.scene_id(), "scene");
        assert!(la.final_val_loss() < la.initial_val_loss);
        for w in la.epochs.windows(2) {
            assert!(w[1].learning_rate <= w[0].learning_rate);
        }
    }

    #[test]
    fn finetune_rejects_bad_inputs() {
        let src = clip(32, 32, 20, 8);
        let other = clip(48, 32, 20, 8);
        let init = init_params(src.iter().take(1), "scene").unwrap();
        assert!(matches!(
            finetune(&[], &init, &small_cfg(1)),
            Err(TrainError::EmptyDataset)
        ));
        assert!(matches!(
            finetune(&[other], &init, &small_cfg(1)),
            Err(TrainError::GeometryMismatch { .. })
        ));
        let mut bad = small_cfg(1);
        bad.plateau_factor = 1.0;
        assert!(matches!(
            finetune(std::slice::from_ref(&src), &init, &bad),
            Err(TrainError::BadConfig(_))
        ));
    }

    #[test]
    fn presets_and_kv_round_trip() {
        let ssf = TrainConfig::preset(Preset::Ssf);
        assert_eq!(ssf.clip_len, 20);
        assert_eq!(ssf.scale_group_lr, Some(1e-3));
        assert_eq!(TrainConfig::preset(Preset::Dcvc).learning_rate, 1e-6);
        assert_eq!(TrainConfig::default().learning_rate, 1e-2);
        for p in [Preset::Desk, Preset::Dcvc, Preset::Ssf] {
            let cfg = TrainConfig::preset(p);
            assert_eq!(TrainConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        }
        let cfg =
            TrainConfig::from_kv("epochs = 7 # short\nqp_list = 1, 2\n\ncodec.reset_period=16")
                .unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.quality_points, QualityPoints::QpList(vec![1, 2]));
        assert_eq!(cfg.codec.reset_period, 16);
        assert!(matches!(
            TrainConfig::from_kv("bogus = 1"),
            Err(TrainError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            TrainConfig::from_kv("clip_len = 1"),
            Err(TrainError::BadConfig(_))
        ));
    }
}
