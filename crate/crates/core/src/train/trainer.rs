use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, IndexOp, Tensor};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::TrainConfig;
use crate::codec::Codec;
use crate::conditioning::{ActionTriplet, Conditioner, TextEncoder};
use crate::data::Clip;
use crate::denoiser::VideoDenoiser;
use crate::diffusion::{training_loss, NoiseSchedule};
use crate::error::{shape_err, Error, Result};
use crate::optim::Adam;
use crate::pipeline::ModelBundle;
use crate::rng::derive;
use crate::tensor::{from_array4, scalar, stack_frames};

const CONDITIONER_SEED_MIX: u64 = 0xc0_4d17;

/// Clip latents encoded once by the frozen codec.
struct EncodedClips {
    /// `(n, K, C, h, w)`
    latents: Tensor,
    /// `(n, 3, H, W)` conditioning frames (frame 0 of each clip).
    frames: Tensor,
    triplets: Vec<ActionTriplet>,
    ids: Vec<String>,
}

impl EncodedClips {
    fn new(clips: &[Clip], codec: &Codec) -> Result<Self> {
        let first = clips.first().ok_or_else(|| Error::Empty("no training clips".into()))?;
        let shape = first.frames.dim();
        let mut latents = Vec::with_capacity(clips.len());
        for clip in clips {
            if clip.frames.dim() != shape {
                return shape_err(format!(
                    "clip {} has shape {:?}, expected {:?}",
                    clip.id,
                    clip.frames.dim(),
                    shape
                ));
            }
            // detached: the codec is frozen and must stay out of the backward graph
            latents.push(codec.encode(&from_array4(clip.frames.view(), DType::F32)?)?.detach());
        }
        let frames: Vec<_> = clips.iter().map(|c| c.frame(0)).collect();
        Ok(Self {
            latents: Tensor::stack(&latents, 0)?,
            frames: stack_frames(&frames, DType::F32)?,
            triplets: clips.iter().map(|c| c.common_triplet).collect(),
            ids: clips.iter().map(|c| c.id.clone()).collect(),
        })
    }

    fn len(&self) -> usize {
        self.triplets.len()
    }
}

/// A training run in progress. Each [`Trainer::step`] draws a batch, builds
/// its conditioning and applies one optimiser update.
pub struct Trainer {
    config: TrainConfig,
    codec: Codec,
    denoiser: VideoDenoiser,
    conditioner: Conditioner,
    schedule: NoiseSchedule,
    optimizer: Adam,
    data: EncodedClips,
    order: Vec<usize>,
    cursor: usize,
    batch_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    iteration: usize,
    losses: Vec<f64>,
}

impl Trainer {
    /// `text` is needed for the text conditioning kinds. It is used as is
    /// when frozen and copied when fine-tuned.
    pub fn new(config: &TrainConfig, clips: &[Clip], codec: Codec, text: Option<TextEncoder>) -> Result<Self> {
        config.validate()?;
        let data = EncodedClips::new(clips, &codec)?;
        let frames = clips[0].len();
        let denoiser = VideoDenoiser::new(
            config.denoiser(codec.config().latent_channels, frames),
            config.seed,
        )?;
        let conditioner = Conditioner::new(config.conditioner(), text, config.seed ^ CONDITIONER_SEED_MIX)?;
        let mut vars = denoiser.store().vars();
        vars.extend(conditioner.trainable_vars());
        let optimizer = Adam::new(vars, config.adam())?;
        let schedule = config.schedule.build()?;
        Ok(Self {
            config: config.clone(),
            codec,
            denoiser,
            conditioner,
            schedule,
            optimizer,
            order: (0..data.len()).collect(),
            cursor: data.len(),
            data,
            batch_rng: derive(config.seed, 1),
            noise_rng: derive(config.seed, 2),
            iteration: 0,
            losses: Vec::new(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn conditioner(&self) -> &Conditioner {
        &self.conditioner
    }

    pub fn denoiser(&self) -> &VideoDenoiser {
        &self.denoiser
    }

    fn next_batch(&mut self) -> Vec<u32> {
        let mut picked = Vec::with_capacity(self.config.batch_size);
        while picked.len() < self.config.batch_size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.batch_rng);
                self.cursor = 0;
            }
            picked.push(self.order[self.cursor] as u32);
            self.cursor += 1;
        }
        picked
    }

    /// One optimiser update. Returns the batch loss.
    pub fn step(&mut self) -> Result<f64> {
        let picked = self.next_batch();
        let idx = Tensor::new(picked.as_slice(), self.data.latents.device())?;
        let x = self.data.latents.index_select(&idx, 0)?;
        let frames = self.data.frames.index_select(&idx, 0)?;
        let frame_latent = x.i((.., 0))?.contiguous()?;
        let triplets: Vec<_> = picked.iter().map(|&i| self.data.triplets[i as usize]).collect();
        let cond = self.conditioner.condition(&frames, &frame_latent, &triplets)?;
        let loss = training_loss(&x, &cond, &self.denoiser, &self.schedule, &mut self.noise_rng)
            .map_err(|e| match e {
                Error::NonFiniteLoss(value) => Error::Divergence {
                    iteration: self.iteration,
                    value,
                },
                other => other,
            })?;
        let value = scalar(&loss)?;
        self.optimizer.backward_step(&loss)?;
        self.iteration += 1;
        self.losses.push(value);
        Ok(value)
    }

    /// Snapshot of the current weights as a sampling bundle.
    pub fn bundle(&self) -> ModelBundle {
        ModelBundle {
            codec: self.codec.clone(),
            denoiser: self.denoiser.clone(),
            conditioner: self.conditioner.clone(),
            schedule: self.config.schedule,
            frames: self.denoiser.config().frames,
            metadata: serde_json::json!({
                "train_config": self.config,
                "iterations_done": self.iteration,
                "train_clips": self.data.ids,
            }),
        }
    }
}

/// Final weights and loss trace of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub losses: Vec<f64>,
}

/// Writes `iter,loss` rows.
pub fn write_loss_trace(path: impl AsRef<Path>, losses: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `config.iterations` steps. With `out`, writes `loss.csv`, the final
/// bundle under `checkpoint/` and interval bundles under
/// `checkpoint_<iter>/`.
pub fn train(
    config: &TrainConfig,
    clips: &[Clip],
    codec: Codec,
    text: Option<TextEncoder>,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config, clips, codec, text)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let report_every = (config.iterations / 20).max(1);
    for _ in 0..config.iterations {
        let loss = trainer.step()?;
        let it = trainer.iteration();
        if it % report_every == 0 || it == config.iterations {
            log::info!("iter {it}/{} loss {loss:.5}", config.iterations);
        }
        if let (Some(dir), Some(every)) = (out, config.checkpoint_every) {
            if it % every == 0 && it < config.iterations {
                trainer.bundle().save(checkpoint_dir(dir, Some(it)))?;
            }
        }
    }
    let bundle = trainer.bundle();
    if let Some(dir) = out {
        write_loss_trace(dir.join("loss.csv"), trainer.losses())?;
        bundle.save(checkpoint_dir(dir, None))?;
    }
    Ok(TrainOutcome {
        bundle,
        losses: trainer.losses,
    })
}

fn checkpoint_dir(out: &Path, iteration: Option<usize>) -> PathBuf {
    match iteration {
        Some(i) => out.join(format!("checkpoint_{i:06}")),
        None => out.join("checkpoint"),
    }
}
