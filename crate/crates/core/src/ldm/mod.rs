//! Small text-conditioned denoiser with inspectable cross-attention, its
//! noise process, training and sampling.

mod codec;
mod layers;
pub mod linalg;
mod params;
mod sample;
mod schedule;
mod tensor;
mod train;
mod unet;

pub use codec::LatentCodec;
pub use params::{ParamSpec, ParamStore};
pub use schedule::{forward_diffuse, make_schedule, NoiseSchedule, ScheduleKind, DEFAULT_STEPS};
pub use tensor::Tensor;
pub use unet::{sinusoid, AttentionRecord, BackboneConfig, BackwardResult, DenoiserBackbone, ForwardTrace};
pub use train::{pretrain_backbone, report, LineageEntry, PretrainConfig, PretrainReport, PretrainSession, PretrainedModel};
pub use sample::{sample_image, sampling_timesteps, Sample};
