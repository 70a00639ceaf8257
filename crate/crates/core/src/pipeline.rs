//! A trained model bundle and frame-plus-triplet video sampling.

use std::fs;
use std::path::Path;

use candle_core::DType;
use ndarray::{Array4, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::codec::Codec;
use crate::conditioning::{ActionTriplet, Conditioner, TextEncoder};
use crate::denoiser::VideoDenoiser;
use crate::diffusion::{sample_latents, NoiseSchedule, ScheduleConfig};
use crate::error::{shape_err, Error, Result};
use crate::rng::seeded;
use crate::tensor::{stack_frames, unbatch5};

pub const DEFAULT_SAMPLING_STEPS: usize = 50;

const CODEC_FILE: &str = "codec.safetensors";
const DENOISER_FILE: &str = "denoiser.safetensors";
const CONDITIONER_FILE: &str = "conditioner.safetensors";
const TEXT_FILE: &str = "text_encoder.safetensors";
const BUNDLE_FILE: &str = "bundle.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleHeader {
    schedule: ScheduleConfig,
    frames: usize,
    has_text_encoder: bool,
    metadata: serde_json::Value,
}

/// Everything needed to sample: codec, denoiser, conditioner (with its text
/// encoder, if any) and the noise schedule.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub codec: Codec,
    pub denoiser: VideoDenoiser,
    pub conditioner: Conditioner,
    pub schedule: ScheduleConfig,
    /// Frames per generated video.
    pub frames: usize,
    /// Free-form training record (config, clip ids, ...).
    pub metadata: serde_json::Value,
}

impl ModelBundle {
    /// Writes the bundle as a directory of checkpoint files plus
    /// `bundle.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.codec.save(dir.join(CODEC_FILE))?;
        self.denoiser.save(dir.join(DENOISER_FILE))?;
        self.conditioner.save(dir.join(CONDITIONER_FILE))?;
        let text = self.conditioner.text_encoder();
        if let Some(text) = text {
            text.save(dir.join(TEXT_FILE))?;
        }
        let header = BundleHeader {
            schedule: self.schedule,
            frames: self.frames,
            has_text_encoder: text.is_some(),
            metadata: self.metadata.clone(),
        };
        let mut json = serde_json::to_string_pretty(&header)?;
        json.push('\n');
        fs::write(dir.join(BUNDLE_FILE), json)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let header: BundleHeader = serde_json::from_str(&fs::read_to_string(dir.join(BUNDLE_FILE))?)?;
        let text = if header.has_text_encoder {
            Some(TextEncoder::load(dir.join(TEXT_FILE))?)
        } else {
            None
        };
        Ok(Self {
            codec: Codec::load(dir.join(CODEC_FILE))?,
            denoiser: VideoDenoiser::load(dir.join(DENOISER_FILE))?,
            conditioner: Conditioner::load(dir.join(CONDITIONER_FILE), text)?,
            schedule: header.schedule,
            frames: header.frames,
            metadata: header.metadata,
        })
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        self.schedule.build()
    }

    /// Generates one `(K, 3, H, W)` video per conditioning frame. Item `i`
    /// draws all of its noise from `seeds[i]`.
    pub fn sample_videos(
        &self,
        frames: &[ArrayView3<'_, f32>],
        triplets: &[ActionTriplet],
        steps: usize,
        seeds: &[u64],
    ) -> Result<Vec<Array4<f32>>> {
        if frames.is_empty() {
            return Err(Error::Empty("no conditioning frames".into()));
        }
        if frames.len() != triplets.len() || frames.len() != seeds.len() {
            return shape_err(format!(
                "{} frames, {} triplets, {} seeds",
                frames.len(),
                triplets.len(),
                seeds.len()
            ));
        }
        let sched = self.noise_schedule()?;
        let x0 = stack_frames(frames, DType::F32)?;
        let latent = self.codec.encode(&x0)?;
        let cond = self.conditioner.condition(&x0, &latent, triplets)?;
        let (b, c, h, w) = latent.dims4()?;
        let init = latent
            .unsqueeze(1)?
            .broadcast_as((b, self.frames, c, h, w))?
            .contiguous()?;
        let mut rngs: Vec<_> = seeds.iter().map(|&s| seeded(s)).collect();
        let z = sample_latents(&self.denoiser, &cond, &init, &sched, steps, &mut rngs)?;
        let video = self.codec.decode(&z.reshape((b * self.frames, c, h, w))?)?;
        let (_, ch, hh, ww) = video.dims4()?;
        unbatch5(&video.reshape((b, self.frames, ch, hh, ww))?)
    }

    /// Single-video convenience over [`ModelBundle::sample_videos`].
    pub fn sample_video(
        &self,
        frame: ArrayView3<'_, f32>,
        triplet: ActionTriplet,
        steps: usize,
        seed: u64,
    ) -> Result<Array4<f32>> {
        Ok(self
            .sample_videos(&[frame], &[triplet], steps, &[seed])?
            .pop()
            .expect("one item"))
    }
}
