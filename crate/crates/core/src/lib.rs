//! Scene-adaptive learned video coding for static cameras.
//!
//! A compact codec keeps each scene's persistent background inside its
//! model parameters, so coded frames only carry what changed. The crate
//! also ships the evaluation tooling around it: weighted YUV PSNR, bits per
//! pixel, Bjøntegaard-delta rate, static/dynamic clip grouping and a driver
//! for external reference encoders.

pub mod bd;
pub mod codec;
pub mod config;
pub mod entropy;
pub mod extern_codecs;
pub mod metrics;
pub mod report;
pub mod status;
pub mod synth;
pub mod train;
pub mod video_io;

pub use bd::{bd_psnr, bd_rate, interpolate_rate_at, Interp, RDCurve, RDPoint};
pub use codec::{
    decode_video, encode_video, Bitstream, CodecError, CodecState, ModelParams, Planes,
    QualityConfig,
};
pub use metrics::{DistortionWeights, QualityReport, SceneClass};
pub use train::{finetune, init_params, TrainConfig, TrainLog};
pub use video_io::{read_y4m, write_y4m, Frame, VideoClip, VideoError};
