//! Coarse error classes shared by the command line and the C interface.

use crate::bd::BdError;
use crate::codec::CodecError;
use crate::config::ConfigError;
use crate::extern_codecs::ExternError;
use crate::metrics::MetricsError;
use crate::report::ReportError;
use crate::synth::SynthError;
use crate::train::TrainError;
use crate::video_io::VideoError;

/// Discriminants are the CLI exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ErrorClass {
    Other = 1,
    /// Unreadable or missing file, missing external binary.
    Io = 2,
    /// Malformed input, mismatched geometry, invalid curve.
    Format = 3,
    /// Model digest does not match the stream.
    Digest = 4,
    /// Bad flags, out-of-range qp, bad config file.
    Config = 5,
}

impl ErrorClass {
    pub fn code(self) -> u8 {
        self as u8
    }
}

impl VideoError {
    pub fn class(&self) -> ErrorClass {
        match self {
            VideoError::Io(_) => ErrorClass::Io,
            _ => ErrorClass::Format,
        }
    }
}

impl CodecError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CodecError::Io(_) => ErrorClass::Io,
            CodecError::DigestMismatch { .. } => ErrorClass::Digest,
            CodecError::QpOutOfRange(_) | CodecError::BadConfig(_) => ErrorClass::Config,
            CodecError::Video(v) => v.class(),
            _ => ErrorClass::Format,
        }
    }
}

impl TrainError {
    pub fn class(&self) -> ErrorClass {
        match self {
            TrainError::GeometryMismatch { .. } => ErrorClass::Format,
            TrainError::Codec(c) => c.class(),
            TrainError::Video(v) => v.class(),
            TrainError::EmptyWarmup
            | TrainError::EmptyDataset
            | TrainError::BadConfig(_)
            | TrainError::Parse { .. } => ErrorClass::Config,
        }
    }
}

impl ExternError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ExternError::BinaryNotFound { .. } | ExternError::Io { .. } => ErrorClass::Io,
            ExternError::BadTemplate { .. }
            | ExternError::UnparsableTemplate { .. }
            | ExternError::TooFewQualityValues { .. } => ErrorClass::Config,
            ExternError::Video(v) => v.class(),
            ExternError::NonZeroExit { .. } | ExternError::TimedOut { .. } => ErrorClass::Other,
            ExternError::GeometryMismatch { .. }
            | ExternError::InfinitePsnrPoint { .. }
            | ExternError::CurveNotMonotone { .. }
            | ExternError::Curve(_)
            | ExternError::Metrics(_) => ErrorClass::Format,
        }
    }
}

impl ConfigError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ConfigError::Io { .. } | ConfigError::MissingPath { .. } => ErrorClass::Io,
            ConfigError::Syntax { .. } | ConfigError::Required(_) | ConfigError::Metrics(_) => {
                ErrorClass::Config
            }
            ConfigError::Train(t) => t.class(),
            ConfigError::Baseline(b) => b.class(),
        }
    }
}

impl ReportError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ReportError::Empty => ErrorClass::Config,
            _ => ErrorClass::Format,
        }
    }
}

impl SynthError {
    pub fn class(&self) -> ErrorClass {
        match self {
            SynthError::Video(v) => v.class(),
            _ => ErrorClass::Config,
        }
    }
}

/// Class of `err` if it is one of this crate's error types (or a bare I/O
/// or JSON error).
pub fn classify(err: &(dyn std::error::Error + 'static)) -> Option<ErrorClass> {
    if let Some(e) = err.downcast_ref::<CodecError>() {
        return Some(e.class());
    }
    if let Some(e) = err.downcast_ref::<VideoError>() {
        return Some(e.class());
    }
    if let Some(e) = err.downcast_ref::<TrainError>() {
        return Some(e.class());
    }
    if let Some(e) = err.downcast_ref::<ConfigError>() {
        return Some(e.class());
    }
    if let Some(e) = err.downcast_ref::<ExternError>() {
        return Some(e.class());
    }
    if let Some(e) = err.downcast_ref::<ReportError>() {
        return Some(e.class());
    }
    if let Some(e) = err.downcast_ref::<SynthError>() {
        return Some(e.class());
    }
    if err.is::<BdError>() || err.is::<MetricsError>() || err.is::<serde_json::Error>() {
        return Some(ErrorClass::Format);
    }
    if err.is::<std::io::Error>() {
        return Some(ErrorClass::Io);
    }
    None
}
