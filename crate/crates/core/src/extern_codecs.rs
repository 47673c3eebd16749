//! Baseline RD curves from external encoders run as subprocesses.
//!
//! Templates are split with POSIX shell quoting rules first and the
//! placeholders are substituted per argument, so paths containing spaces
//! survive intact. Nothing is passed through a shell.

use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::bd::{BdError, RDCurve, RDPoint};
use crate::metrics::{clip_quality_with, DistortionWeights, MetricsError};
use crate::video_io::{read_y4m, VideoClip, VideoError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Error)]
pub enum ExternError {
    #[error("{template} template: placeholder {placeholder} appears {count} times, expected once")]
    BadTemplate {
        template: &'static str,
        placeholder: &'static str,
        count: usize,
    },
    #[error("{which} template for '{name}' does not parse as a command line")]
    UnparsableTemplate { name: String, which: &'static str },
    #[error("'{name}' needs at least 4 quality values, got {count}")]
    TooFewQualityValues { name: String, count: usize },
    #[error("binary not found: {command}")]
    BinaryNotFound { command: String },
    #[error("'{command}' exited with {status}: {stderr}")]
    NonZeroExit {
        command: String,
        status: String,
        stderr: String,
    },
    #[error("'{command}' timed out after {seconds} s")]
    TimedOut { command: String, seconds: u64 },
    #[error("decoded video is {got_w}x{got_h} with {got_frames} frames, source is {w}x{h} with {frames}")]
    GeometryMismatch {
        w: usize,
        h: usize,
        frames: usize,
        got_w: usize,
        got_h: usize,
        got_frames: usize,
    },
    #[error("quality '{quality}' decoded losslessly; infinite PSNR has no place on an RD curve")]
    InfinitePsnrPoint { quality: String },
    #[error("RD points are not monotone: {points:?}")]
    CurveNotMonotone { points: Vec<RDPoint> },
    #[error(transparent)]
    Curve(BdError),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExternError + '_ {
    move |source| ExternError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// An external encoder/decoder pair driven through command templates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecCommand {
    pub name: String,
    /// Uses `{input}`, `{output}` and `{quality}` exactly once each.
    pub encode_template: String,
    /// Uses `{input}` and `{output}` exactly once each.
    pub decode_template: String,
    pub quality_values: Vec<String>,
}

fn check_placeholders(
    template: &str,
    which: &'static str,
    names: &[&'static str],
) -> Result<(), ExternError> {
    for &placeholder in names {
        let count = template.matches(placeholder).count();
        if count != 1 {
            return Err(ExternError::BadTemplate {
                template: which,
                placeholder,
                count,
            });
        }
    }
    Ok(())
}

impl CodecCommand {
    pub fn new(
        name: impl Into<String>,
        encode_template: impl Into<String>,
        decode_template: impl Into<String>,
        quality_values: Vec<String>,
    ) -> Result<Self, ExternError> {
        let cmd = CodecCommand {
            name: name.into(),
            encode_template: encode_template.into(),
            decode_template: decode_template.into(),
            quality_values,
        };
        cmd.validate()?;
        Ok(cmd)
    }

    pub fn validate(&self) -> Result<(), ExternError> {
        check_placeholders(
            &self.encode_template,
            "encode",
            &["{input}", "{output}", "{quality}"],
        )?;
        check_placeholders(&self.decode_template, "decode", &["{input}", "{output}"])?;
        for (which, t) in [
            ("encode", &self.encode_template),
            ("decode", &self.decode_template),
        ] {
            if shlex::split(t).is_none_or(|v| v.is_empty()) {
                return Err(ExternError::UnparsableTemplate {
                    name: self.name.clone(),
                    which,
                });
            }
        }
        if self.quality_values.len() < 4 {
            return Err(ExternError::TooFewQualityValues {
                name: self.name.clone(),
                count: self.quality_values.len(),
            });
        }
        Ok(())
    }
}

fn expand(template: &str, subs: &[(&str, &str)]) -> Vec<String> {
    shlex::split(template)
        .expect("templates are validated")
        .into_iter()
        .map(|arg| subs.iter().fold(arg, |a, (k, v)| a.replace(k, v)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct BaselineOptions {
    pub timeout: Duration,
    /// Maximum quality points run concurrently.
    pub parallel: usize,
    pub weights: DistortionWeights,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions {
            timeout: DEFAULT_TIMEOUT,
            parallel: 1,
            weights: DistortionWeights::default(),
        }
    }
}

fn run_command(argv: &[String], timeout: Duration) -> Result<(), ExternError> {
    let command = argv.join(" ");
    let mut child = match Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
    {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ExternError::BinaryNotFound {
                command: argv[0].clone(),
            })
        }
        Err(source) => {
            return Err(ExternError::Io {
                path: PathBuf::from(&argv[0]),
                source,
            })
        }
    };
    // drain stderr concurrently so a chatty child cannot block on a full pipe
    let mut stderr = child.stderr.take().expect("stderr is piped");
    let reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });
    let status = match child
        .wait_timeout(timeout)
        .map_err(io_err(Path::new(&argv[0])))?
    {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ExternError::TimedOut {
                command,
                seconds: timeout.as_secs(),
            });
        }
    };
    let err_text = String::from_utf8_lossy(&reader.join().unwrap_or_default())
        .trim()
        .to_string();
    if !status.success() {
        return Err(ExternError::NonZeroExit {
            command,
            status: status.to_string(),
            stderr: err_text,
        });
    }
    Ok(())
}

fn file_stem_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn run_point(
    source_path: &Path,
    source: &VideoClip,
    cmd: &CodecCommand,
    index: usize,
    work_dir: &Path,
    opts: &BaselineOptions,
) -> Result<RDPoint, ExternError> {
    let quality = &cmd.quality_values[index];
    let stem = format!("{}_q{index}", file_stem_safe(&cmd.name));
    let coded = work_dir.join(format!("{stem}.bin"));
    let decoded = work_dir.join(format!("{stem}.y4m"));
    let (src, coded_s, decoded_s) = (
        source_path.to_string_lossy(),
        coded.to_string_lossy(),
        decoded.to_string_lossy(),
    );
    run_command(
        &expand(
            &cmd.encode_template,
            &[
                ("{input}", &src),
                ("{output}", &coded_s),
                ("{quality}", quality),
            ],
        ),
        opts.timeout,
    )?;
    let bytes = fs::metadata(&coded).map_err(io_err(&coded))?.len();
    run_command(
        &expand(
            &cmd.decode_template,
            &[("{input}", &coded_s), ("{output}", &decoded_s)],
        ),
        opts.timeout,
    )?;
    let out = read_y4m(BufReader::new(
        File::open(&decoded).map_err(io_err(&decoded))?,
    ))?;
    if out.width() != source.width() || out.height() != source.height() || out.len() != source.len()
    {
        return Err(ExternError::GeometryMismatch {
            w: source.width(),
            h: source.height(),
            frames: source.len(),
            got_w: out.width(),
            got_h: out.height(),
            got_frames: out.len(),
        });
    }
    let q = clip_quality_with(source, &out, &opts.weights)?;
    if q.psnr_weighted.is_infinite() {
        return Err(ExternError::InfinitePsnrPoint {
            quality: quality.clone(),
        });
    }
    let samples = (source.width() * source.height() * source.len()) as f64;
    Ok(RDPoint::new(8.0 * bytes as f64 / samples, q.psnr_weighted))
}

/// Encodes and decodes `video_path` at every quality value of `cmd`,
/// keeping all files under `work_dir`, and assembles the RD curve.
pub fn run_baseline(
    video_path: &Path,
    cmd: &CodecCommand,
    work_dir: &Path,
) -> Result<RDCurve, ExternError> {
    run_baseline_with(video_path, cmd, work_dir, &BaselineOptions::default())
}

pub fn run_baseline_with(
    video_path: &Path,
    cmd: &CodecCommand,
    work_dir: &Path,
    opts: &BaselineOptions,
) -> Result<RDCurve, ExternError> {
    cmd.validate()?;
    let source = read_y4m(BufReader::new(
        File::open(video_path).map_err(io_err(video_path))?,
    ))?;
    fs::create_dir_all(work_dir).map_err(io_err(work_dir))?;
    let n = cmd.quality_values.len();
    let mut results: Vec<Option<Result<RDPoint, ExternError>>> = (0..n).map(|_| None).collect();
    let batch = opts.parallel.max(1);
    for start in (0..n).step_by(batch) {
        let end = (start + batch).min(n);
        let done: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = (start..end)
                .map(|i| {
                    let source = &source;
                    s.spawn(move || run_point(video_path, source, cmd, i, work_dir, opts))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("baseline worker panicked"))
                .collect()
        });
        for (slot, r) in results[start..end].iter_mut().zip(done) {
            *slot = Some(r);
        }
    }
    let points = results
        .into_iter()
        .map(|r| r.expect("every point ran"))
        .collect::<Result<Vec<_>, _>>()?;
    RDCurve::new(points.clone()).map_err(|e| match e {
        BdError::NonMonotoneCurve(_) => {
            let mut points = points;
            points.sort_by(|a, b| a.psnr.total_cmp(&b.psnr));
            ExternError::CurveNotMonotone { points }
        }
        BdError::InfinitePsnr(i) => ExternError::InfinitePsnrPoint {
            quality: cmd.quality_values[i].clone(),
        },
        other => ExternError::Curve(other),
    })
}
