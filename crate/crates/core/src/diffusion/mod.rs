//! Noise schedules, the forward/reverse diffusion processes, the training
//! objective and the ancestral sampler.

mod objective;
mod process;
mod sampler;
mod schedule;

pub use objective::{training_loss, Denoiser};
pub use process::{
    forward_marginal, forward_marginal_batch, forward_step, predict_clean, reverse_step,
};
pub use sampler::sample_latents;
pub use schedule::{LossWeighting, NoiseSchedule, ScheduleConfig};
