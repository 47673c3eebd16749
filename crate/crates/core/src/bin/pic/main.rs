//! `pic`: encode, decode, finetune and evaluate scene-adaptive video models.
//!
//! Machine-readable results go to stdout as JSON (one object per line);
//! progress and notes go to stderr. Exit codes are listed in [`exit`].

mod exit;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use pic_core::bd::{bd_rate_window, Interp, RDCurve, RDPoint, MIN_POINTS};
use pic_core::codec::{decode_video, encode_video, Bitstream, ModelParams, QualityConfig};
use pic_core::config::{ConfigError, ExperimentConfig};
use pic_core::extern_codecs::{run_baseline_with, BaselineOptions, DEFAULT_TIMEOUT};
use pic_core::metrics::{
    change_intensity, classify_intensity, clip_quality_with, DistortionWeights, SceneClass,
};
use pic_core::report::{render_csv, render_svg, NamedCurve};
use pic_core::synth::{noise_clip, SceneSpec, SyntheticScene};
use pic_core::train::{finetune_with_progress, init_params, Preset, TrainConfig};
use pic_core::video_io::{read_y4m, write_y4m, VideoClip};

use exit::Usage;

#[derive(Parser)]
#[command(name = "pic", version, about = "Scene-adaptive learned video coding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config; its `quality.*` and `metrics.*` keys apply.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a Y4M clip into a .pic stream.
    Encode {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        qp: i64,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Decode a .pic stream into a Y4M clip.
    Decode {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Build an initial model from the leading frames of a clip.
    Init {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Number of frames averaged into the background.
        #[arg(long, default_value_t = 16)]
        warmup: usize,
        /// Take every `stride`-th frame.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, default_value = "scene")]
        scene_id: String,
    },
    /// Finetune `paths.model` on `paths.dataset`, writing into `paths.output`.
    Finetune {
        config: PathBuf,
        /// Defaults that the config file's `train.*` keys override.
        #[arg(long, default_value = "desk")]
        preset: String,
    },
    /// Encode and decode at each qp and print the RD curve.
    Eval {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            allow_negative_numbers = true,
            required = true
        )]
        qp_list: Vec<i64>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// BD-rate of `test` against `anchor`, both RD curve JSON files.
    Bdrate {
        anchor: PathBuf,
        test: PathBuf,
        #[arg(long, default_value = "pchip")]
        interp: String,
        /// Explicit PSNR window as `lo:hi`.
        #[arg(long)]
        window: Option<String>,
    },
    /// Label fixed-length windows of a clip static or dynamic.
    Classify {
        input: PathBuf,
        #[arg(long, default_value_t = pic_core::metrics::DEFAULT_STATIC_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = 32)]
        window: usize,
    },
    /// Plot RD curve files as SVG and tabulate them as CSV.
    Report {
        curves: Vec<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run an external codec from the config over a clip.
    Baseline {
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long)]
        work_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Per-command timeout in seconds.
        #[arg(long, default_value_t = DEFAULT_TIMEOUT.as_secs())]
        timeout: u64,
    },
    /// Write a synthetic static-camera clip.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 64)]
        frames: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value_t = 2)]
        sprites: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Independent uniform noise per frame instead of a scene.
        #[arg(long)]
        noise: bool,
    },
}

fn emit(value: &impl Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn read_clip(path: &Path) -> Result<VideoClip> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_y4m(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn write_clip(clip: &VideoClip, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write_y4m(clip, &mut out)?;
    out.flush()?;
    Ok(())
}

fn read_model(path: &Path) -> Result<ModelParams> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    ModelParams::read_from(BufReader::new(file))
        .with_context(|| format!("reading model {}", path.display()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_config(arg: &ConfigArg) -> Result<ExperimentConfig> {
    match &arg.config {
        Some(p) => Ok(ExperimentConfig::load(p, TrainConfig::default())?),
        None => Ok(ExperimentConfig::new(TrainConfig::default())),
    }
}

fn quality_at(base: &QualityConfig, qp: i64) -> Result<QualityConfig> {
    let q = QualityConfig {
        base_qp: QualityConfig::with_base_qp(qp)?.base_qp,
        ..base.clone()
    };
    q.validate()?;
    Ok(q)
}

#[derive(Serialize)]
struct EvalPoint {
    qp: i64,
    bpp: f64,
    psnr: f64,
}

fn eval_point(
    clip: &VideoClip,
    model: &ModelParams,
    q: &QualityConfig,
    w: &DistortionWeights,
) -> Result<RDPoint> {
    let encoded = encode_video(clip, model, q)?;
    let decoded = decode_video(&encoded.bitstream, model, q)?;
    let quality = clip_quality_with(clip, &decoded, w)?;
    Ok(RDPoint::new(encoded.bitstream.bpp(), quality.psnr_weighted))
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let bad = || Usage(format!("--window expects lo:hi, got '{s}'"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo = lo.trim().parse::<f64>().map_err(|_| bad())?;
    let hi = hi.trim().parse::<f64>().map_err(|_| bad())?;
    Ok((lo, hi))
}

fn read_curve(path: &Path) -> Result<RDCurve> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing RD curve {}", path.display()))
}

fn dataset_clips(path: &Path) -> Result<Vec<VideoClip>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("y4m")))
            .collect();
        files.sort();
        files.iter().map(|p| read_clip(p)).collect()
    } else {
        Ok(vec![read_clip(path)?])
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode {
            input,
            model,
            qp,
            output,
            config,
        } => {
            let cfg = load_config(&config)?;
            let q = quality_at(cfg.quality(), qp)?;
            let model = read_model(&model)?;
            let clip = read_clip(&input)?;
            let encoded = encode_video(&clip, &model, &q)?;
            for s in &encoded.stats {
                emit(s)?;
            }
            write_bytes(&output, &encoded.bitstream.to_bytes())?;
            let bs = &encoded.bitstream;
            emit(&json!({
                "bpp": bs.bpp(),
                "frames": bs.header.frame_count,
                "payload_bytes": bs.payload_bytes(),
                "container_bytes": bs.container_bytes(),
                "output": output,
            }))?;
        }
        Command::Decode {
            input,
            model,
            output,
            config,
        } => {
            let cfg = load_config(&config)?;
            let model = read_model(&model)?;
            let data = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let bitstream = Bitstream::from_bytes(&data)?;
            let decoded = decode_video(&bitstream, &model, cfg.quality())?;
            write_clip(&decoded, &output)?;
            emit(&json!({ "frames": decoded.len(), "output": output }))?;
        }
        Command::Init {
            input,
            output,
            warmup,
            stride,
            scene_id,
        } => {
            if stride == 0 {
                return Err(Usage("--stride must be at least 1".into()).into());
            }
            let clip = read_clip(&input)?;
            let model = init_params(clip.iter().step_by(stride).take(warmup), &scene_id)?;
            write_bytes(&output, &model.to_bytes())?;
            emit(&json!({
                "width": model.width(),
                "height": model.height(),
                "digest": format!("{:016x}", model.digest()),
                "output": output,
            }))?;
        }
        Command::Finetune { config, preset } => {
            let preset: Preset = preset.parse()?;
            let cfg = ExperimentConfig::load(&config, TrainConfig::preset(preset))?;
            cfg.check_paths()?;
            let dataset_path = cfg
                .paths
                .dataset
                .as_deref()
                .ok_or(ConfigError::Required("paths.dataset"))?;
            let model_path = cfg
                .paths
                .model
                .as_deref()
                .ok_or(ConfigError::Required("paths.model"))?;
            let out_dir = cfg
                .paths
                .output
                .as_deref()
                .ok_or(ConfigError::Required("paths.output"))?;
            let initial = read_model(model_path)?;
            let dataset = dataset_clips(dataset_path)?;
            let mut progress_err = None;
            let (tuned, log) = finetune_with_progress(&dataset, &initial, &cfg.train, |e| {
                if progress_err.is_none() {
                    progress_err = emit(e).err();
                }
            })?;
            if let Some(e) = progress_err {
                return Err(e);
            }
            fs::create_dir_all(out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            let model_out = out_dir.join("model.picm");
            let log_out = out_dir.join("trainlog.json");
            write_bytes(&model_out, &tuned.to_bytes())?;
            write_bytes(&log_out, log.to_json().as_bytes())?;
            emit(&json!({
                "epochs": log.epochs.len(),
                "initial_val_loss": log.initial_val_loss,
                "final_val_loss": log.final_val_loss(),
                "model": model_out,
                "log": log_out,
            }))?;
        }
        Command::Eval {
            input,
            model,
            qp_list,
            config,
        } => {
            let cfg = load_config(&config)?;
            let model = read_model(&model)?;
            let clip = read_clip(&input)?;
            let mut points = Vec::with_capacity(qp_list.len());
            for &qp in &qp_list {
                let q = quality_at(cfg.quality(), qp)?;
                let p = eval_point(&clip, &model, &q, &cfg.weights)?;
                eprintln!("qp {qp}: {:.5} bpp, {:.3} dB", p.bpp, p.psnr);
                points.push(EvalPoint {
                    qp,
                    bpp: p.bpp,
                    psnr: p.psnr,
                });
            }
            if points.len() < MIN_POINTS {
                eprintln!(
                    "note: {} point(s) is fewer than the {MIN_POINTS} an RD curve needs; printing the point list",
                    points.len()
                );
                emit(&points)?;
                return Ok(());
            }
            let curve = RDCurve::new(points.iter().map(|p| RDPoint::new(p.bpp, p.psnr)).collect());
            match curve {
                Ok(c) => emit(&c)?,
                Err(e) => {
                    emit(&points)?;
                    return Err(e).context("points do not form an RD curve");
                }
            }
        }
        Command::Bdrate {
            anchor,
            test,
            interp,
            window,
        } => {
            let interp: Interp = interp.parse().map_err(Usage)?;
            let window = window.as_deref().map(parse_window).transpose()?;
            let a = read_curve(&anchor)?;
            let t = read_curve(&test)?;
            let rate = bd_rate_window(&a, &t, interp, window)?;
            emit(&json!({ "bd_rate": rate }))?;
        }
        Command::Classify {
            input,
            threshold,
            window,
        } => {
            if window < 2 {
                return Err(Usage("--window must be at least 2 frames".into()).into());
            }
            let clip = read_clip(&input)?;
            for (start, len) in windows(clip.len(), window) {
                let part = clip.window(start, len)?;
                let intensity = change_intensity(&part)?;
                let class: SceneClass = classify_intensity(intensity, threshold);
                emit(&json!({
                    "start": start,
                    "frames": len,
                    "intensity": intensity,
                    "class": class,
                }))?;
            }
        }
        Command::Report { curves, svg, csv } => {
            let named = curves
                .iter()
                .map(|p| {
                    let name = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    Ok(NamedCurve::new(name, read_curve(p)?.points().to_vec()))
                })
                .collect::<Result<Vec<_>>>()?;
            let svg_text = render_svg(&named)?;
            let csv_text = render_csv(&named)?;
            if let Some(p) = &svg {
                write_bytes(p, svg_text.as_bytes())?;
            }
            if let Some(p) = &csv {
                write_bytes(p, csv_text.as_bytes())?;
            }
            emit(&json!({
                "curves": named.len(),
                "points": named.iter().map(|c| c.points.len()).sum::<usize>(),
                "svg": svg,
                "csv": csv,
            }))?;
        }
        Command::Baseline {
            input,
            config,
            name,
            work_dir,
            parallel,
            timeout,
        } => {
            let cfg = ExperimentConfig::load(&config, TrainConfig::default())?;
            let cmd = cfg
                .baseline(&name)
                .ok_or_else(|| Usage(format!("config has no baseline named '{name}'")))?;
            let opts = BaselineOptions {
                timeout: Duration::from_secs(timeout),
                parallel,
                weights: cfg.weights,
            };
            let curve = run_baseline_with(&input, cmd, &work_dir, &opts)?;
            emit(&curve)?;
        }
        Command::Synth {
            output,
            frames,
            width,
            height,
            sprites,
            seed,
            noise,
        } => {
            let clip = if noise {
                noise_clip(width, height, frames, seed)?
            } else {
                let spec = SceneSpec {
                    width,
                    height,
                    sprites,
                    seed,
                    ..SceneSpec::default()
                };
                SyntheticScene::new(spec)?.clip(0, frames)?
            };
            write_clip(&clip, &output)?;
            emit(&json!({ "frames": clip.len(), "output": output }))?;
        }
    }
    Ok(())
}

/// `(start, len)` windows of `window` frames; a tail shorter than two
/// frames joins the previous window.
fn windows(n: usize, window: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    while start < n {
        let len = window.min(n - start);
        match out.last_mut() {
            Some(last) if len < 2 => last.1 += len,
            _ => out.push((start, len)),
        }
        start += len;
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(pic_core::status::ErrorClass::Config.code())
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}
