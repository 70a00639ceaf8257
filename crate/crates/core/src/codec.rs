//! Per-frame convolutional autoencoder defining the diffusion latent space.
//!
//! The encoder is three 3×3 convolutions whose strides multiply to the
//! downsample factor; the decoder mirrors it with nearest-neighbour
//! upsampling. Latents are multiplied by `latent_scale` (set to the inverse
//! latent standard deviation after pretraining) so they enter the diffusion
//! process at roughly unit variance.
//!
//! `identity` mode has no parameters: with factor 1 the latent is the RGB
//! frame padded with zero channels, and decoding drops the padding.

use std::path::Path;

use candle_core::{DType, Module, Tensor};
use candle_nn::Conv2d;
use ndarray::{Array4, ArrayView4, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Clip;
use crate::error::{shape_err, Error, Result};
use crate::nn::conv2d;
use crate::optim::{Adam, AdamConfig};
use crate::params::ParamStore;
use crate::rng::seeded;
use crate::tensor::{from_array4, scalar, stack_frames, to_array4};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Spatial downsample factor: 1, 2 or 4.
    pub factor: usize,
    pub latent_channels: usize,
    pub hidden: usize,
    pub identity: bool,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            factor: 4,
            latent_channels: 4,
            hidden: 32,
            identity: false,
        }
    }
}

impl CodecConfig {
    pub fn identity(latent_channels: usize) -> Self {
        Self {
            factor: 1,
            latent_channels,
            hidden: 0,
            identity: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![1, 2, 4].contains(&self.factor) {
            return Err(Error::Config(format!("factor {} not in {{1, 2, 4}}", self.factor)));
        }
        if self.latent_channels == 0 {
            return Err(Error::Config("latent_channels must be positive".into()));
        }
        if self.identity && (self.factor != 1 || self.latent_channels < 3) {
            return Err(Error::Config(
                "identity codec needs factor 1 and at least 3 latent channels".into(),
            ));
        }
        if !self.identity && self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        Ok(())
    }

    fn strides(&self) -> [usize; 2] {
        match self.factor {
            4 => [2, 2],
            2 => [2, 1],
            _ => [1, 1],
        }
    }
}

/// `(K, C, h, w)` latents of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo {
    pub data: Array4<f32>,
}

impl LatentVideo {
    pub fn frames(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn channels(&self) -> usize {
        self.data.len_of(Axis(1))
    }
}

#[derive(Debug, Clone)]
struct Layers {
    enc: [Conv2d; 3],
    dec: [Conv2d; 3],
}

#[derive(Debug, Clone)]
pub struct Codec {
    config: CodecConfig,
    store: ParamStore,
    layers: Option<Layers>,
    latent_scale: f64,
}

impl Codec {
    pub fn new(config: CodecConfig, seed: u64) -> Result<Self> {
        Self::build(config, ParamStore::new(DType::F32), seed, 1.0)
    }

    fn build(config: CodecConfig, mut store: ParamStore, seed: u64, latent_scale: f64) -> Result<Self> {
        config.validate()?;
        let layers = if config.identity {
            None
        } else {
            let mut rng = seeded(seed);
            let mut b = store.builder(&mut rng);
            let (h, c) = (config.hidden, config.latent_channels);
            let [s1, s2] = config.strides();
            Some(Layers {
                enc: [
                    conv2d(&mut b.sub("enc.0"), 3, h, 3, s1, true)?,
                    conv2d(&mut b.sub("enc.1"), h, h, 3, s2, true)?,
                    conv2d(&mut b.sub("enc.2"), h, c, 3, 1, true)?,
                ],
                dec: [
                    conv2d(&mut b.sub("dec.0"), c, h, 3, 1, true)?,
                    conv2d(&mut b.sub("dec.1"), h, h, 3, 1, true)?,
                    conv2d(&mut b.sub("dec.2"), h, 3, 3, 1, true)?,
                ],
            })
        };
        Ok(Self {
            config,
            store,
            layers,
            latent_scale,
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn latent_scale(&self) -> f64 {
        self.latent_scale
    }

    /// Latent spatial size for `(H, W)` frames.
    pub fn latent_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let f = self.config.factor;
        if height % f != 0 || width % f != 0 || height == 0 || width == 0 {
            return shape_err(format!("{height}x{width} frames not divisible by factor {f}"));
        }
        Ok((height / f, width / f))
    }

    fn encode_unscaled(&self, frames: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = frames.dims4()?;
        if c != 3 {
            return shape_err(format!("expected RGB frames, got {c} channels"));
        }
        self.latent_size(h, w)?;
        match &self.layers {
            None => {
                let pad = self.config.latent_channels - 3;
                if pad == 0 {
                    Ok(frames.clone())
                } else {
                    Ok(frames.pad_with_zeros(1, 0, pad)?)
                }
            }
            Some(l) => {
                let x = l.enc[0].forward(frames)?.silu()?;
                let x = l.enc[1].forward(&x)?.silu()?;
                Ok(l.enc[2].forward(&x)?)
            }
        }
    }

    fn decode_unclamped(&self, z: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = z.dims4()?;
        if c != self.config.latent_channels {
            return shape_err(format!(
                "latent has {c} channels, codec expects {}",
                self.config.latent_channels
            ));
        }
        match &self.layers {
            None => Ok(z.narrow(1, 0, 3)?),
            Some(l) => {
                let [s1, s2] = self.config.strides();
                let x = l.dec[0].forward(z)?.silu()?;
                let x = x.upsample_nearest2d(h * s2, w * s2)?;
                let x = l.dec[1].forward(&x)?.silu()?;
                let x = x.upsample_nearest2d(h * s1 * s2, w * s1 * s2)?;
                Ok(l.dec[2].forward(&x)?)
            }
        }
    }

    /// `(N, 3, H, W)` frames to `(N, C, H/f, W/f)` scaled latents.
    pub fn encode(&self, frames: &Tensor) -> Result<Tensor> {
        let z = self.encode_unscaled(frames)?;
        if self.latent_scale == 1.0 {
            Ok(z)
        } else {
            Ok((z * self.latent_scale)?)
        }
    }

    /// Scaled latents to frames clamped to `[0, 1]`.
    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        let z = if self.latent_scale == 1.0 {
            z.clone()
        } else {
            (z / self.latent_scale)?
        };
        Ok(self.decode_unclamped(&z)?.clamp(0f32, 1f32)?)
    }

    pub fn encode_video(&self, frames: ArrayView4<'_, f32>) -> Result<LatentVideo> {
        let x = from_array4(frames, DType::F32)?;
        Ok(LatentVideo {
            data: to_array4(&self.encode(&x)?)?,
        })
    }

    pub fn decode_video(&self, latents: &LatentVideo) -> Result<Array4<f32>> {
        let z = from_array4(latents.data.view(), DType::F32)?;
        to_array4(&self.decode(&z)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "codec",
            "config": self.config,
            "latent_scale": self.latent_scale,
        });
        self.store.save(path, &meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (store, meta) = ParamStore::load(path, DType::F32)?;
        let bad = |reason: &str| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: reason.into(),
        };
        if meta.get("kind").and_then(|k| k.as_str()) != Some("codec") {
            return Err(bad("not a codec checkpoint"));
        }
        let config: CodecConfig =
            serde_json::from_value(meta.get("config").cloned().ok_or_else(|| bad("missing config"))?)?;
        let scale = meta
            .get("latent_scale")
            .and_then(|s| s.as_f64())
            .ok_or_else(|| bad("missing latent_scale"))?;
        Self::build(config, store, 0, scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecTrainConfig {
    pub iterations: usize,
    /// Frames per batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for CodecTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1500,
            batch_size: 16,
            learning_rate: 2e-3,
            seed: 0,
        }
    }
}

/// Trains a codec on every frame of `clips` with a pixel L2 loss and then
/// calibrates `latent_scale`. Returns the codec and the per-iteration loss.
pub fn pretrain_codec(
    clips: &[Clip],
    config: CodecConfig,
    train: &CodecTrainConfig,
) -> Result<(Codec, Vec<f64>)> {
    let mut codec = Codec::new(config, train.seed)?;
    if config.identity || train.iterations == 0 {
        return Ok((codec, Vec::new()));
    }
    let frames: Vec<_> = clips
        .iter()
        .flat_map(|c| c.frames.axis_iter(Axis(0)))
        .collect();
    if frames.is_empty() {
        return Err(Error::Empty("codec pretraining needs frames".into()));
    }
    let mut rng = seeded(train.seed ^ 0xc0dec);
    let mut opt = Adam::new(codec.store.vars(), AdamConfig::new(train.learning_rate))?;
    let mut losses = Vec::with_capacity(train.iterations);
    for it in 0..train.iterations {
        let batch: Vec<_> = (0..train.batch_size.max(1))
            .map(|_| frames[rng.random_range(0..frames.len())])
            .collect();
        let x = stack_frames(&batch, DType::F32)?;
        let recon = codec.decode_unclamped(&codec.encode_unscaled(&x)?)?;
        let loss = (recon - &x)?.sqr()?.mean_all()?;
        let value = scalar(&loss)?;
        if !value.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                value,
            });
        }
        opt.backward_step(&loss)?;
        losses.push(value);
    }
    codec.latent_scale = calibrate_scale(&codec, &frames)?;
    Ok((codec, losses))
}

fn calibrate_scale(codec: &Codec, frames: &[ndarray::ArrayView3<'_, f32>]) -> Result<f64> {
    let (mut sum, mut sq, mut n) = (0.0f64, 0.0f64, 0usize);
    for chunk in frames.chunks(64) {
        let z = codec.encode_unscaled(&stack_frames(chunk, DType::F32)?)?;
        let z = z.to_dtype(DType::F64)?.flatten_all()?;
        sum += scalar(&z.sum_all()?)?;
        sq += scalar(&z.sqr()?.sum_all()?)?;
        n += z.elem_count();
    }
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean).max(0.0);
    Ok(if var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{preprocess, synth_video, PreprocessConfig, SynthSpec};
    use ndarray::Array4;

    fn random_frames(k: usize, h: usize, w: usize, seed: u64) -> Array4<f32> {
        let mut rng = seeded(seed);
        Array4::from_shape_fn((k, 3, h, w), |_| rng.random::<f32>())
    }

    #[test]
    fn shapes_for_each_factor() {
        let x = random_frames(7, 32, 32, 0);
        for (f, side) in [(1, 32), (2, 16), (4, 8)] {
            let codec = Codec::new(
                CodecConfig {
                    factor: f,
                    hidden: 8,
                    ..CodecConfig::default()
                },
                0,
            )
            .unwrap();
            let z = codec.encode_video(x.view()).unwrap();
            assert_eq!(z.data.dim(), (7, 4, side, side));
            let y = codec.decode_video(&z).unwrap();
            assert_eq!(y.dim(), (7, 3, 32, 32));
            assert!(y.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn identity_round_trip_is_exact() {
        let codec = Codec::new(CodecConfig::identity(4), 0).unwrap();
        let x = random_frames(3, 8, 8, 1);
        let z = codec.encode_video(x.view()).unwrap();
        assert_eq!(z.data.dim(), (3, 4, 8, 8));
        assert!(z.data.index_axis(Axis(1), 3).iter().all(|&v| v == 0.0));
        assert_eq!(codec.decode_video(&z).unwrap(), x);
    }

    #[test]
    fn invalid_configs() {
        assert!(Codec::new(CodecConfig { factor: 3, ..CodecConfig::default() }, 0).is_err());
        assert!(Codec::new(CodecConfig { factor: 2, ..CodecConfig::identity(4) }, 0).is_err());
        assert!(Codec::new(CodecConfig::identity(2), 0).is_err());
        let codec = Codec::new(CodecConfig::default(), 0).unwrap();
        assert!(codec.encode_video(random_frames(1, 30, 32, 0).view()).is_err());
        let wrong = LatentVideo {
            data: Array4::zeros((1, 3, 8, 8)),
        };
        assert!(codec.decode_video(&wrong).is_err());
    }

    #[test]
    fn frame_permutation_commutes() {
        let codec = Codec::new(CodecConfig { hidden: 8, ..CodecConfig::default() }, 2).unwrap();
        let x = random_frames(3, 16, 16, 3);
        let z = codec.encode_video(x.view()).unwrap();
        let mut perm = x.clone();
        for (dst, src) in [(0, 2), (1, 0), (2, 1)] {
            perm.index_axis_mut(Axis(0), dst).assign(&x.index_axis(Axis(0), src));
        }
        let zp = codec.encode_video(perm.view()).unwrap();
        for (dst, src) in [(0, 2), (1, 0), (2, 1)] {
            assert_eq!(zp.data.index_axis(Axis(0), dst), z.data.index_axis(Axis(0), src));
        }
    }

    #[test]
    fn zero_iterations_and_identity_skip_training() {
        let v = synth_video(&SynthSpec::default(), 0).unwrap();
        let clips = preprocess(&v, &PreprocessConfig::default());
        let cfg = CodecTrainConfig { iterations: 0, ..CodecTrainConfig::default() };
        let (trained, curve) = pretrain_codec(&clips, CodecConfig::default(), &cfg).unwrap();
        let fresh = Codec::new(CodecConfig::default(), cfg.seed).unwrap();
        assert!(curve.is_empty());
        let meta = serde_json::Value::Null;
        assert_eq!(trained.store.to_bytes(&meta).unwrap(), fresh.store.to_bytes(&meta).unwrap());
        let cfg = CodecTrainConfig { iterations: 5, ..cfg };
        let (_, curve) = pretrain_codec(&clips, CodecConfig::identity(4), &cfg).unwrap();
        assert!(curve.is_empty());
    }

    #[test]
    fn training_reduces_loss_and_checkpoint_round_trips() {
        let v = synth_video(&SynthSpec::default(), 0).unwrap();
        let clips = preprocess(&v, &PreprocessConfig::default());
        let cfg = CodecTrainConfig {
            iterations: 60,
            batch_size: 4,
            ..CodecTrainConfig::default()
        };
        let config = CodecConfig { hidden: 8, ..CodecConfig::default() };
        let (codec, curve) = pretrain_codec(&clips, config, &cfg).unwrap();
        let head: f64 = curve[..5].iter().sum();
        let tail: f64 = curve[curve.len() - 5..].iter().sum();
        assert!(tail < head, "{head} -> {tail}");
        assert!(codec.latent_scale() > 0.0);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("codec.safetensors");
        codec.save(&p).unwrap();
        let back = Codec::load(&p).unwrap();
        assert_eq!(back.latent_scale(), codec.latent_scale());
        let x = clips[0].frames.view();
        assert_eq!(
            back.encode_video(x).unwrap(),
            codec.encode_video(x).unwrap()
        );
    }
}
