//! Caption encoder for triplets: word embeddings plus one self-attention
//! layer, pre-trained contrastively against clip motion features.

use std::path::Path;

use candle_core::{DType, Module, Tensor};
use candle_nn::{Conv2d, Embedding, Linear};
use ndarray::Axis;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::lexicon::Lexicon;
use super::triplet::ActionTriplet;
use crate::data::Clip;
use crate::error::{Error, Result};
use crate::nn::{apply_last, conv2d, embedding, linear, softmax_last};
use crate::optim::{Adam, AdamConfig};
use crate::params::{Init, ParamStore};
use crate::rng::seeded;
use crate::tensor::{scalar, stack_frames};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEncoderConfig {
    pub dim: usize,
    pub lexicon: Lexicon,
}

#[derive(Debug, Clone)]
pub struct TextEncoder {
    config: TextEncoderConfig,
    vocab: Vec<String>,
    store: ParamStore,
    words: Embedding,
    positions: Tensor,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

impl TextEncoder {
    pub fn new(config: TextEncoderConfig, seed: u64) -> Result<Self> {
        Self::build(config, ParamStore::new(DType::F32), seed)
    }

    fn build(config: TextEncoderConfig, mut store: ParamStore, seed: u64) -> Result<Self> {
        config.lexicon.check_complete()?;
        let vocab = config.lexicon.vocabulary();
        let d = config.dim;
        let mut rng = seeded(seed);
        let mut b = store.builder(&mut rng);
        let words = embedding(&mut b.sub("words"), vocab.len(), d)?;
        let positions = b.get("positions", &[3, d], Init::Normal(0.1))?;
        let q = linear(&mut b.sub("q"), d, d, true)?;
        let k = linear(&mut b.sub("k"), d, d, true)?;
        let v = linear(&mut b.sub("v"), d, d, true)?;
        let o = linear(&mut b.sub("o"), d, d, true)?;
        Ok(Self {
            config,
            vocab,
            store,
            words,
            positions,
            q,
            k,
            v,
            o,
        })
    }

    pub fn config(&self) -> &TextEncoderConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// An independent copy whose parameters can be trained without
    /// affecting `self`.
    pub fn deep_clone(&self) -> Result<Self> {
        Self::build(self.config.clone(), self.store.deep_clone()?, 0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::json!({ "kind": "text-encoder", "config": self.config });
        self.store.save(path, &meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let (store, meta) = ParamStore::load(path, DType::F32)?;
        let config: TextEncoderConfig =
            serde_json::from_value(meta.get("config").cloned().ok_or_else(|| {
                Error::Checkpoint {
                    path: path.to_path_buf(),
                    reason: "missing text encoder config".into(),
                }
            })?)?;
        Self::build(config, store, 0)
    }

    fn token_ids(&self, triplets: &[ActionTriplet]) -> Result<Tensor> {
        let mut ids = Vec::with_capacity(triplets.len() * 3);
        for t in triplets {
            for word in self.config.lexicon.caption(t)? {
                let id = self
                    .vocab
                    .binary_search_by(|w| w.as_str().cmp(word))
                    .map_err(|_| Error::Lexicon(format!("word {word:?}")))?;
                ids.push(id as u32);
            }
        }
        Ok(Tensor::from_vec(ids, (triplets.len(), 3), self.store.device())?)
    }

    /// `(B, 3, d)` word embeddings of the rendered caption, before position
    /// encoding and attention.
    pub fn word_embeddings(&self, triplets: &[ActionTriplet]) -> Result<Tensor> {
        Ok(self.words.forward(&self.token_ids(triplets)?)?)
    }

    /// `(B, 3, d)` contextualised tokens for `"<instrument> <verb> <target>"`.
    pub fn encode(&self, triplets: &[ActionTriplet]) -> Result<Tensor> {
        let x = self.word_embeddings(triplets)?.broadcast_add(&self.positions)?;
        let q = apply_last(&self.q, &x)?;
        let k = apply_last(&self.k, &x)?;
        let v = apply_last(&self.v, &x)?;
        let scale = 1.0 / (self.config.dim as f64).sqrt();
        let w = softmax_last(&(q.matmul(&k.t()?.contiguous()?)? * scale)?)?;
        let attended = apply_last(&self.o, &w.matmul(&v)?)?;
        Ok((x + attended)?)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TextPretrainConfig {
    pub dim: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for TextPretrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            iterations: 300,
            batch_size: 16,
            learning_rate: 1e-3,
            temperature: 0.1,
            seed: 0,
        }
    }
}

/// Motion summary of a clip for the contrastive objective: the first frame
/// stacked with the last-minus-first difference, two strided convolutions,
/// spatial mean and a projection.
struct ClipMotionEncoder {
    c1: Conv2d,
    c2: Conv2d,
    proj: Linear,
}

impl ClipMotionEncoder {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.c1.forward(x)?.silu()?;
        let h = self.c2.forward(&h)?.silu()?;
        Ok(self.proj.forward(&h.mean((2, 3))?)?)
    }
}

fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let norm = (x.sqr()?.sum_keepdim(1)? + 1e-12)?.sqrt()?;
    Ok(x.broadcast_div(&norm)?)
}

fn motion_input(clips: &[&Clip]) -> Result<Tensor> {
    let first: Vec<_> = clips.iter().map(|c| c.frames.index_axis(Axis(0), 0)).collect();
    let last: Vec<_> = clips
        .iter()
        .map(|c| c.frames.index_axis(Axis(0), c.frames.len_of(Axis(0)) - 1))
        .collect();
    let first = stack_frames(&first, DType::F32)?;
    let last = stack_frames(&last, DType::F32)?;
    Ok(Tensor::cat(&[&first, &(last - &first)?], 1)?)
}

/// Trains a fresh [`TextEncoder`] so that caption embeddings of a clip's
/// common triplet align with that clip's motion features (symmetric InfoNCE).
/// Returns the encoder and the per-iteration loss.
pub fn pretrain_text_encoder(
    clips: &[Clip],
    lexicon: Lexicon,
    cfg: &TextPretrainConfig,
) -> Result<(TextEncoder, Vec<f64>)> {
    if clips.is_empty() {
        return Err(Error::Empty("text pretraining needs clips".into()));
    }
    let encoder = TextEncoder::new(
        TextEncoderConfig {
            dim: cfg.dim,
            lexicon,
        },
        cfg.seed,
    )?;
    let mut aux_store = ParamStore::new(DType::F32);
    let mut rng = seeded(cfg.seed ^ 0x7e57);
    let (motion, text_head) = {
        let mut b = aux_store.builder(&mut rng);
        let motion = ClipMotionEncoder {
            c1: conv2d(&mut b.sub("motion.c1"), 6, 16, 3, 2, true)?,
            c2: conv2d(&mut b.sub("motion.c2"), 16, 32, 3, 2, true)?,
            proj: linear(&mut b.sub("motion.proj"), 32, cfg.dim, true)?,
        };
        let head = linear(&mut b.sub("text_head"), cfg.dim, cfg.dim, true)?;
        (motion, head)
    };
    let mut vars = encoder.store.vars();
    vars.extend(aux_store.vars());
    let mut opt = Adam::new(vars, AdamConfig::new(cfg.learning_rate))?;

    let batch = cfg.batch_size.clamp(2, clips.len().max(2));
    let mut order: Vec<usize> = (0..clips.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let mut picked = Vec::with_capacity(batch);
        while picked.len() < batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            picked.push(&clips[order[cursor]]);
            cursor += 1;
        }
        let triplets: Vec<ActionTriplet> = picked.iter().map(|c| c.common_triplet).collect();
        let video = l2_normalize(&motion.forward(&motion_input(&picked)?)?)?;
        let text = encoder.encode(&triplets)?.mean(1)?;
        let text = l2_normalize(&apply_last(&text_head, &text)?)?;
        let logits = (text.matmul(&video.t()?)? / cfg.temperature)?;
        let labels = Tensor::arange(0u32, picked.len() as u32, logits.device())?;
        let loss = ((candle_nn::loss::cross_entropy(&logits, &labels)?
            + candle_nn::loss::cross_entropy(&logits.t()?.contiguous()?, &labels)?)?
            * 0.5)?;
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
    Ok((encoder, losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::IndexOp;

    fn encoder() -> TextEncoder {
        TextEncoder::new(
            TextEncoderConfig {
                dim: 8,
                lexicon: Lexicon::default(),
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn shared_instrument_shares_first_word_embedding() {
        let enc = encoder();
        let a = ActionTriplet::new(2, 1, 4);
        let b = ActionTriplet::new(2, 6, 9);
        let w = enc.word_embeddings(&[a, b]).unwrap();
        let d = (w.i((0, 0)).unwrap() - w.i((1, 0)).unwrap()).unwrap().abs().unwrap().sum_all().unwrap();
        assert_eq!(scalar(&d).unwrap(), 0.0);
        let d = (w.i((0, 1)).unwrap() - w.i((1, 1)).unwrap()).unwrap().abs().unwrap().sum_all().unwrap();
        assert!(scalar(&d).unwrap() > 0.0);
    }

    #[test]
    fn encoding_is_deterministic_and_shaped() {
        let enc = encoder();
        let t = [ActionTriplet::new(0, 0, 0), ActionTriplet::new(5, 9, 14)];
        let a = enc.encode(&t).unwrap();
        let b = enc.encode(&t).unwrap();
        assert_eq!(a.dims(), &[2, 3, 8]);
        assert_eq!(
            a.flatten_all().unwrap().to_vec1::<f32>().unwrap(),
            b.flatten_all().unwrap().to_vec1::<f32>().unwrap()
        );
    }

    #[test]
    fn unknown_ids_fail() {
        let enc = encoder();
        assert!(enc.encode(&[ActionTriplet::new(0, 11, 0)]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let enc = encoder();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("text.safetensors");
        enc.save(&p).unwrap();
        let back = TextEncoder::load(&p).unwrap();
        let t = [ActionTriplet::new(1, 2, 3)];
        let a = enc.encode(&t).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        let b = back.encode(&t).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(a, b);
    }
}
