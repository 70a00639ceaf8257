//! Triplet encoders, the conditioning-frame encoder, and the fusion layers
//! that turn (frame, triplet) into the vector the denoiser consumes.

mod fusion;
mod image;
mod learnable;
mod lexicon;
mod text;
mod triplet;

use std::path::Path;

use candle_core::{DType, Tensor, Var};
use serde::{Deserialize, Serialize};

pub use fusion::{CrossAttentionFusion, Fusion, FusionKind, LinearFusion};
pub use image::{ImageEncoder, IMAGE_TOKEN_STRIDE};
pub use learnable::LearnableTripletEncoder;
pub use lexicon::Lexicon;
pub use text::{pretrain_text_encoder, TextEncoder, TextEncoderConfig, TextPretrainConfig};
pub use triplet::{
    ActionTriplet, NULL_VERB, NUM_INSTRUMENTS, NUM_PHASES, NUM_TARGETS, NUM_VERBS, UNDEFINED,
};

use crate::error::{shape_err, Error, Result};
use crate::params::{Init, ParamStore};
use crate::rng::seeded;

/// Which triplet encoder feeds the fusion layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditioningKind {
    /// No triplet: a learned null token stands in.
    #[serde(rename = "none")]
    None,
    #[serde(rename = "learnable")]
    Learnable,
    /// Pre-trained caption encoder, frozen.
    #[serde(rename = "text")]
    Text,
    /// Pre-trained caption encoder, updated with the denoising loss.
    #[serde(rename = "text-ft")]
    TextFinetuned,
}

impl ConditioningKind {
    pub const ALL: [ConditioningKind; 4] = [
        ConditioningKind::None,
        ConditioningKind::Learnable,
        ConditioningKind::Text,
        ConditioningKind::TextFinetuned,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConditioningKind::None => "none",
            ConditioningKind::Learnable => "learnable",
            ConditioningKind::Text => "text",
            ConditioningKind::TextFinetuned => "text-ft",
        }
    }

    pub fn uses_text(&self) -> bool {
        matches!(self, ConditioningKind::Text | ConditioningKind::TextFinetuned)
    }
}

impl std::str::FromStr for ConditioningKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown conditioning {s:?}")))
    }
}

/// Per-element triplet tokens, `(B, n, d)`.
#[derive(Debug, Clone)]
pub struct TripletTokens {
    pub tokens: Tensor,
    pub source: ConditioningKind,
}

/// What the denoiser is conditioned on.
#[derive(Debug, Clone)]
pub struct FusedConditioning {
    /// `(B, cond_dim)` fused image/triplet features.
    pub vector: Tensor,
    /// `(B, C, h, w)` latent of the conditioning frame.
    pub frame_latent: Tensor,
    pub fusion: FusionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionerConfig {
    pub kind: ConditioningKind,
    pub fusion: FusionKind,
    /// Token width `d` shared by image and triplet tokens.
    pub token_dim: usize,
    pub cond_dim: usize,
}

impl Default for ConditionerConfig {
    fn default() -> Self {
        Self {
            kind: ConditioningKind::Learnable,
            fusion: FusionKind::Linear,
            token_dim: 32,
            cond_dim: 64,
        }
    }
}

/// Image encoder, triplet encoder and fusion layer for one configuration.
#[derive(Debug, Clone)]
pub struct Conditioner {
    config: ConditionerConfig,
    store: ParamStore,
    image: ImageEncoder,
    learnable: Option<LearnableTripletEncoder>,
    null_token: Option<Tensor>,
    text: Option<TextEncoder>,
    fusion: Fusion,
}

impl Conditioner {
    /// `text` is required for the text kinds and ignored otherwise.
    pub fn new(config: ConditionerConfig, text: Option<TextEncoder>, seed: u64) -> Result<Self> {
        Self::build(config, ParamStore::new(DType::F32), text, seed)
    }

    pub fn with_dtype(
        config: ConditionerConfig,
        text: Option<TextEncoder>,
        seed: u64,
        dtype: DType,
    ) -> Result<Self> {
        Self::build(config, ParamStore::new(dtype), text, seed)
    }

    fn build(
        config: ConditionerConfig,
        mut store: ParamStore,
        text: Option<TextEncoder>,
        seed: u64,
    ) -> Result<Self> {
        if config.token_dim == 0 || config.cond_dim == 0 {
            return Err(Error::Config("token_dim and cond_dim must be positive".into()));
        }
        let text = if config.kind.uses_text() {
            let text = text.ok_or_else(|| {
                Error::Config(format!("{} conditioning needs a text encoder", config.kind.as_str()))
            })?;
            if text.dim() != config.token_dim {
                return shape_err(format!(
                    "text encoder width {} != token_dim {}",
                    text.dim(),
                    config.token_dim
                ));
            }
            if config.kind == ConditioningKind::TextFinetuned {
                Some(text.deep_clone()?)
            } else {
                Some(text)
            }
        } else {
            None
        };
        let mut rng = seeded(seed);
        let mut b = store.builder(&mut rng);
        let image = ImageEncoder::new(&mut b.sub("image"), config.token_dim)?;
        let learnable = match config.kind {
            ConditioningKind::Learnable => Some(LearnableTripletEncoder::new(
                &mut b.sub("triplet"),
                config.token_dim,
            )?),
            _ => None,
        };
        let null_token = match config.kind {
            ConditioningKind::None => {
                Some(b.get("null_token", &[1, 1, config.token_dim], Init::Normal(1.0))?)
            }
            _ => None,
        };
        let fusion = Fusion::new(
            &mut b.sub("fusion"),
            config.fusion,
            config.token_dim,
            config.cond_dim,
        )?;
        Ok(Self {
            config,
            store,
            image,
            learnable,
            null_token,
            text,
            fusion,
        })
    }

    pub fn config(&self) -> &ConditionerConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn text_encoder(&self) -> Option<&TextEncoder> {
        self.text.as_ref()
    }

    pub fn fusion(&self) -> &Fusion {
        &self.fusion
    }

    /// Variables updated by training: everything of this conditioner, plus
    /// the text encoder when fine-tuning.
    pub fn trainable_vars(&self) -> Vec<Var> {
        let mut vars = self.store.vars();
        if self.config.kind == ConditioningKind::TextFinetuned {
            if let Some(text) = &self.text {
                vars.extend(text.store().vars());
            }
        }
        vars
    }

    pub fn encode_triplets(&self, triplets: &[ActionTriplet]) -> Result<TripletTokens> {
        let tokens = match self.config.kind {
            ConditioningKind::None => {
                for t in triplets {
                    t.validate()?;
                }
                let null = self.null_token.as_ref().expect("built for none");
                null.broadcast_as((triplets.len(), 1, self.config.token_dim))?
                    .contiguous()?
            }
            ConditioningKind::Learnable => {
                self.learnable.as_ref().expect("built for learnable").encode(triplets)?
            }
            ConditioningKind::Text | ConditioningKind::TextFinetuned => {
                for t in triplets {
                    t.validate()?;
                }
                let text = self.text.as_ref().expect("checked at construction");
                text.encode(triplets)?.to_dtype(self.store.dtype())?
            }
        };
        Ok(TripletTokens {
            tokens,
            source: self.config.kind,
        })
    }

    /// `(B, m, d)` tokens of the `(B, 3, H, W)` conditioning frames.
    pub fn encode_frames(&self, frames: &Tensor) -> Result<Tensor> {
        self.image.encode(frames)
    }

    /// Builds the denoiser's conditioning from the conditioning frames (pixels
    /// and latents) and one triplet per batch item.
    pub fn condition(
        &self,
        frames: &Tensor,
        frame_latent: &Tensor,
        triplets: &[ActionTriplet],
    ) -> Result<FusedConditioning> {
        let batch = frames.dim(0)?;
        if triplets.len() != batch || frame_latent.dim(0)? != batch {
            return shape_err(format!(
                "{} frames, {} frame latents, {} triplets",
                batch,
                frame_latent.dim(0)?,
                triplets.len()
            ));
        }
        let img = self.encode_frames(frames)?;
        let trip = self.encode_triplets(triplets)?;
        let vector = self.fusion.forward(&img, &trip.tokens)?;
        Ok(FusedConditioning {
            vector,
            frame_latent: frame_latent.clone(),
            fusion: self.config.fusion,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::json!({ "kind": "conditioner", "config": self.config });
        self.store.save(path, &meta)
    }

    pub fn load(path: impl AsRef<Path>, text: Option<TextEncoder>) -> Result<Self> {
        let path = path.as_ref();
        let (store, meta) = ParamStore::load(path, DType::F32)?;
        let config: ConditionerConfig =
            serde_json::from_value(meta.get("config").cloned().ok_or_else(|| {
                Error::Checkpoint {
                    path: path.to_path_buf(),
                    reason: "missing conditioner config".into(),
                }
            })?)?;
        Self::build(config, store, text, 0)
    }
}
