//! Latent video diffusion conditioned on a first frame and an action triplet.
//!
//! The crate covers the whole pipeline: a synthetic annotated-video
//! generator and clip preprocessing ([`data`]), a small convolutional latent
//! codec ([`codec`]), the diffusion process ([`diffusion`]), triplet and frame
//! conditioning ([`conditioning`]), the video denoiser ([`denoiser`]),
//! sampling ([`pipeline`]), evaluation metrics ([`metrics`]) and the training
//! and ablation harness ([`train`]).

pub mod codec;
pub mod conditioning;
pub mod data;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod train;

pub use codec::{Codec, CodecConfig, LatentVideo};
pub use conditioning::{ActionTriplet, ConditioningKind, FusedConditioning, FusionKind};
pub use data::{Clip, FrameAnnotation, RawVideo};
pub use denoiser::{DenoiserConfig, VideoDenoiser};
pub use diffusion::{Denoiser, NoiseSchedule, ScheduleConfig};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use pipeline::ModelBundle;
pub use train::TrainConfig;
