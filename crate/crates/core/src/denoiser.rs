//! The video noise predictor.
//!
//! Frames are processed as a `(B·K, ·, h, w)` batch by residual 3×3
//! convolution blocks. After each block a temporal attention layer mixes the
//! K frames at every spatial site; it is the only place where frames
//! interact. The timestep and the fused conditioning vector are embedded
//! once and added inside every block. The conditioning frame's latent is
//! concatenated to every noisy frame latent at the input.

use std::path::Path;

use candle_core::{DType, Module, Tensor};
use candle_nn::{Conv2d, Linear};
use serde::{Deserialize, Serialize};

use crate::conditioning::FusedConditioning;
use crate::diffusion::Denoiser;
use crate::error::{shape_err, Error, Result};
use crate::nn::{apply_last, conv2d, linear, sinusoidal_embedding, softmax_last};
use crate::params::{Init, ParamStore};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub latent_channels: usize,
    pub base_channels: usize,
    /// Number of residual blocks.
    pub depth: usize,
    pub cond_dim: usize,
    pub temporal: bool,
    pub time_embed_dim: usize,
    /// Largest supported frame count.
    pub frames: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            latent_channels: 4,
            base_channels: 32,
            depth: 3,
            cond_dim: 64,
            temporal: true,
            time_embed_dim: 32,
            frames: 7,
        }
    }
}

impl DenoiserConfig {
    fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("denoiser depth must be at least 1".into()));
        }
        if self.cond_dim == 0 || self.latent_channels == 0 || self.base_channels == 0 {
            return Err(Error::Config("denoiser widths must be positive".into()));
        }
        if self.time_embed_dim < 2 || self.frames == 0 {
            return Err(Error::Config("time_embed_dim >= 2 and frames >= 1 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ResBlock {
    conv1: Conv2d,
    conv2: Conv2d,
    emb: Linear,
}

impl ResBlock {
    /// `x` is `(B·K, ch, h, w)`, `emb` is `(B, E)`.
    fn forward(&self, x: &Tensor, emb: &Tensor, frames: usize) -> Result<Tensor> {
        let (bk, ch, _, _) = x.dims4()?;
        let b = bk / frames;
        let e = self.emb.forward(emb)?;
        let e = e
            .reshape((b, 1, ch))?
            .broadcast_as((b, frames, ch))?
            .reshape((bk, ch, 1, 1))?;
        let h = self.conv1.forward(&x.silu()?)?.broadcast_add(&e)?;
        let h = self.conv2.forward(&h.silu()?)?;
        Ok((x + h)?)
    }
}

/// Self-attention across the frame axis at each spatial site.
#[derive(Debug, Clone)]
struct TemporalAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    /// `(frames, ch)` learned frame-position embedding.
    position: Tensor,
}

impl TemporalAttention {
    fn forward(&self, x: &Tensor, frames: usize) -> Result<Tensor> {
        let (bk, ch, h, w) = x.dims4()?;
        let b = bk / frames;
        let tokens = x
            .reshape((b, frames, ch, h, w))?
            .permute((0, 3, 4, 1, 2))?
            .contiguous()?
            .reshape((b * h * w, frames, ch))?;
        let pos = self.position.narrow(0, 0, frames)?.unsqueeze(0)?;
        let input = tokens.broadcast_add(&pos)?;
        let q = apply_last(&self.q, &input)?;
        let k = apply_last(&self.k, &input)?;
        let v = apply_last(&self.v, &input)?;
        let scores = (q.matmul(&k.transpose(1, 2)?.contiguous()?)? / (ch as f64).sqrt())?;
        let attended = softmax_last(&scores)?.matmul(&v)?;
        let delta = apply_last(&self.out, &attended)?;
        let delta = delta
            .reshape((b, h, w, frames, ch))?
            .permute((0, 3, 4, 1, 2))?
            .contiguous()?
            .reshape((bk, ch, h, w))?;
        Ok((x + delta)?)
    }
}

#[derive(Debug, Clone)]
pub struct VideoDenoiser {
    config: DenoiserConfig,
    store: ParamStore,
    conv_in: Conv2d,
    time1: Linear,
    time2: Linear,
    cond: Linear,
    blocks: Vec<ResBlock>,
    temporal: Vec<TemporalAttention>,
    conv_out: Conv2d,
}

impl VideoDenoiser {
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        Self::build(config, ParamStore::new(DType::F32), seed)
    }

    pub fn with_dtype(config: DenoiserConfig, seed: u64, dtype: DType) -> Result<Self> {
        Self::build(config, ParamStore::new(dtype), seed)
    }

    fn build(config: DenoiserConfig, mut store: ParamStore, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut b = store.builder(&mut rng);
        let ch = config.base_channels;
        let c = config.latent_channels;
        let conv_in = conv2d(&mut b.sub("conv_in"), 2 * c, ch, 3, 1, true)?;
        let time1 = linear(&mut b.sub("time.0"), config.time_embed_dim, ch, true)?;
        let time2 = linear(&mut b.sub("time.1"), ch, ch, true)?;
        let cond = linear(&mut b.sub("cond"), config.cond_dim, ch, true)?;
        let mut blocks = Vec::with_capacity(config.depth);
        let mut temporal = Vec::new();
        for i in 0..config.depth {
            let mut bb = b.sub(&format!("block.{i}"));
            blocks.push(ResBlock {
                conv1: conv2d(&mut bb.sub("conv1"), ch, ch, 3, 1, true)?,
                conv2: conv2d(&mut bb.sub("conv2"), ch, ch, 3, 1, true)?,
                emb: linear(&mut bb.sub("emb"), ch, ch, true)?,
            });
            if config.temporal {
                let mut tb = b.sub(&format!("temporal.{i}"));
                temporal.push(TemporalAttention {
                    q: linear(&mut tb.sub("q"), ch, ch, false)?,
                    k: linear(&mut tb.sub("k"), ch, ch, false)?,
                    v: linear(&mut tb.sub("v"), ch, ch, false)?,
                    out: linear(&mut tb.sub("out"), ch, ch, true)?,
                    position: tb.get("position", &[config.frames, ch], Init::Normal(0.1))?,
                });
            }
        }
        let conv_out = conv2d(&mut b.sub("conv_out"), ch, c, 3, 1, true)?;
        Ok(Self {
            config,
            store,
            conv_in,
            time1,
            time2,
            cond,
            blocks,
            temporal,
            conv_out,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    fn embed(&self, ts: &[usize], cond: &Tensor) -> Result<Tensor> {
        let dtype = self.store.dtype();
        let t = sinusoidal_embedding(ts, self.config.time_embed_dim, dtype, cond.device())?;
        let t = self.time2.forward(&self.time1.forward(&t)?.silu()?)?;
        let c = self.cond.forward(cond)?;
        Ok((t + c)?.silu()?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::json!({ "kind": "denoiser", "config": self.config });
        self.store.save(path, &meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (store, meta) = ParamStore::load(path, DType::F32)?;
        let config = meta
            .get("config")
            .filter(|_| meta.get("kind").and_then(|k| k.as_str()) == Some("denoiser"))
            .ok_or_else(|| Error::Checkpoint {
                path: path.to_path_buf(),
                reason: "not a denoiser checkpoint".into(),
            })?;
        let config: DenoiserConfig = serde_json::from_value(config.clone())?;
        Self::build(config, store, 0)
    }
}

impl Denoiser for VideoDenoiser {
    fn predict_noise(&self, z_t: &Tensor, ts: &[usize], cond: &FusedConditioning) -> Result<Tensor> {
        let (b, k, c, h, w) = z_t.dims5()?;
        if c != self.config.latent_channels {
            return shape_err(format!(
                "latent has {c} channels, denoiser expects {}",
                self.config.latent_channels
            ));
        }
        if k == 0 || k > self.config.frames {
            return shape_err(format!("{k} frames, denoiser supports 1..={}", self.config.frames));
        }
        if ts.len() != b {
            return shape_err(format!("{} timesteps for batch of {b}", ts.len()));
        }
        let (cb, cw) = cond.vector.dims2()?;
        if cb != b || cw != self.config.cond_dim {
            return shape_err(format!(
                "conditioning is {cb}x{cw}, expected {b}x{}",
                self.config.cond_dim
            ));
        }
        if cond.frame_latent.dims() != [b, c, h, w] {
            return shape_err(format!(
                "frame latent {:?} does not match {:?}",
                cond.frame_latent.dims(),
                [b, c, h, w]
            ));
        }
        let frame = cond
            .frame_latent
            .unsqueeze(1)?
            .broadcast_as((b, k, c, h, w))?;
        let x = Tensor::cat(&[z_t, &frame.contiguous()?], 2)?.reshape((b * k, 2 * c, h, w))?;
        let emb = self.embed(ts, &cond.vector)?;
        let mut x = self.conv_in.forward(&x)?;
        for (i, block) in self.blocks.iter().enumerate() {
            x = block.forward(&x, &emb, k)?;
            if let Some(t) = self.temporal.get(i) {
                x = t.forward(&x, k)?;
            }
        }
        let out = self.conv_out.forward(&x.silu()?)?;
        Ok(out.reshape((b, k, c, h, w))?)
    }
}
