//! Experiment configuration: flat `key = value` lines with dotted sections.
//!
//! ```text
//! paths.dataset = footage/          # a .y4m file or a directory of them
//! paths.model = init.picm
//! paths.output = runs/a
//! train.epochs = 200                # any TrainConfig field
//! quality.reset_period = 32         # any QualityConfig field
//! metrics.w_y = 6
//! metrics.static_threshold = 0.01
//! baseline.x265.encode = x265 --input {input} -o {output} --crf {quality}
//! baseline.x265.decode = ffmpeg -y -i {input} {output}
//! baseline.x265.quality_values = 22,27,32,37
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::QualityConfig;
use crate::extern_codecs::{CodecCommand, ExternError};
use crate::metrics::{DistortionWeights, MetricsError, DEFAULT_STATIC_THRESHOLD};
use crate::train::{TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{key} = {path}: no such file or directory")]
    MissingPath { key: &'static str, path: PathBuf },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0} is required")]
    Required(&'static str),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Baseline(#[from] ExternError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub paths: Paths,
    /// Training settings; `train.codec` is the quality schedule shared with
    /// coding and evaluation.
    pub train: TrainConfig,
    pub weights: DistortionWeights,
    pub static_threshold: f64,
    pub baselines: Vec<CodecCommand>,
}

#[derive(Default)]
struct BaselineParts {
    encode: Option<String>,
    decode: Option<String>,
    quality_values: Option<Vec<String>>,
}

impl ExperimentConfig {
    pub fn new(train: TrainConfig) -> Self {
        ExperimentConfig {
            paths: Paths::default(),
            train,
            weights: DistortionWeights::default(),
            static_threshold: DEFAULT_STATIC_THRESHOLD,
            baselines: Vec::new(),
        }
    }

    pub fn quality(&self) -> &QualityConfig {
        &self.train.codec
    }

    /// Parses `text` over `base` training defaults. Relative paths are
    /// joined onto `root`.
    pub fn parse(text: &str, base: TrainConfig, root: &Path) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::new(base);
        let mut weights = cfg.weights.as_array();
        let mut baselines: BTreeMap<String, BaselineParts> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line, message };
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected key = value, got '{body}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let (section, rest) = key
                .split_once('.')
                .ok_or_else(|| syntax(format!("key '{key}' has no section")))?;
            let number = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| syntax(format!("bad number '{v}' for {key}")))
            };
            match section {
                "paths" => {
                    let slot = match rest {
                        "dataset" => &mut cfg.paths.dataset,
                        "model" => &mut cfg.paths.model,
                        "output" => &mut cfg.paths.output,
                        _ => return Err(syntax(format!("unknown key '{key}'"))),
                    };
                    *slot = Some(root.join(value));
                }
                "train" => cfg.train.set_key(rest, value).map_err(syntax)?,
                "quality" => cfg
                    .train
                    .set_key(&format!("codec.{rest}"), value)
                    .map_err(syntax)?,
                "metrics" => match rest {
                    "w_y" => weights[0] = number(value)?,
                    "w_u" => weights[1] = number(value)?,
                    "w_v" => weights[2] = number(value)?,
                    "static_threshold" => cfg.static_threshold = number(value)?,
                    _ => return Err(syntax(format!("unknown key '{key}'"))),
                },
                "baseline" => {
                    let (name, field) = rest
                        .rsplit_once('.')
                        .filter(|(name, _)| !name.is_empty())
                        .ok_or_else(|| {
                            syntax(format!("expected baseline.<name>.<field>, got '{key}'"))
                        })?;
                    let parts = baselines.entry(name.to_string()).or_default();
                    match field {
                        "encode" => parts.encode = Some(value.to_string()),
                        "decode" => parts.decode = Some(value.to_string()),
                        "quality_values" => {
                            parts.quality_values =
                                Some(value.split(',').map(|s| s.trim().to_string()).collect())
                        }
                        _ => return Err(syntax(format!("unknown key '{key}'"))),
                    }
                }
                _ => return Err(syntax(format!("unknown section '{section}'"))),
            }
        }
        cfg.weights = DistortionWeights::new(weights[0], weights[1], weights[2])?;
        for (name, parts) in baselines {
            let (Some(enc), Some(dec), Some(q)) =
                (parts.encode, parts.decode, parts.quality_values)
            else {
                return Err(ConfigError::Syntax {
                    line: 0,
                    message: format!("baseline '{name}' needs encode, decode and quality_values"),
                });
            };
            cfg.baselines.push(CodecCommand::new(name, enc, dec, q)?);
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: TrainConfig) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let root = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, root)
    }

    /// Checks that the dataset and model paths exist.
    pub fn check_paths(&self) -> Result<(), ConfigError> {
        for (key, p) in [
            ("paths.dataset", &self.paths.dataset),
            ("paths.model", &self.paths.model),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError::MissingPath {
                        key,
                        path: p.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn baseline(&self, name: &str) -> Option<&CodecCommand> {
        self.baselines.iter().find(|b| b.name == name)
    }
}
