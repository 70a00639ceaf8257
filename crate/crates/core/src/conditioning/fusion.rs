use candle_core::{Module, Tensor, D};
use candle_nn::Linear;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::{apply_last, linear, softmax_last};
use crate::params::ParamBuilder;

/// How image tokens and triplet tokens are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionKind {
    #[serde(rename = "linear")]
    Linear,
    /// Cross-attention with image tokens as queries.
    #[serde(rename = "att-i")]
    AttnImageQuery,
    /// Cross-attention with triplet tokens as queries.
    #[serde(rename = "att-t")]
    AttnTripletQuery,
}

impl FusionKind {
    pub const ALL: [FusionKind; 3] = [
        FusionKind::Linear,
        FusionKind::AttnImageQuery,
        FusionKind::AttnTripletQuery,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FusionKind::Linear => "linear",
            FusionKind::AttnImageQuery => "att-i",
            FusionKind::AttnTripletQuery => "att-t",
        }
    }
}

impl std::str::FromStr for FusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown fusion {s:?}")))
    }
}

fn check_tokens(img: &Tensor, trip: &Tensor) -> Result<()> {
    let (bi, mi, di) = img.dims3()?;
    let (bt, mt, dt) = trip.dims3()?;
    if bi != bt || di != dt {
        return shape_err(format!(
            "image tokens {:?} and triplet tokens {:?} disagree on batch or width",
            img.dims(),
            trip.dims()
        ));
    }
    if mi == 0 || mt == 0 {
        return Err(Error::Empty("fusion needs at least one token on each side".into()));
    }
    Ok(())
}

/// Mean-pools both token sets, concatenates them and applies one affine map.
#[derive(Debug, Clone)]
pub struct LinearFusion {
    proj: Linear,
}

impl LinearFusion {
    pub fn new(b: &mut ParamBuilder<'_>, dim: usize, cond_dim: usize) -> Result<Self> {
        Ok(Self {
            proj: linear(&mut b.sub("proj"), 2 * dim, cond_dim, true)?,
        })
    }

    pub fn forward(&self, img: &Tensor, trip: &Tensor) -> Result<Tensor> {
        check_tokens(img, trip)?;
        let pooled = Tensor::cat(&[img.mean(1)?, trip.mean(1)?], 1)?;
        Ok(self.proj.forward(&pooled)?)
    }
}

/// Single-head scaled dot-product cross-attention followed by mean pooling
/// over queries and an affine map to the conditioning width.
#[derive(Debug, Clone)]
pub struct CrossAttentionFusion {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    image_queries: bool,
    scale: f64,
}

impl CrossAttentionFusion {
    pub fn new(
        b: &mut ParamBuilder<'_>,
        dim: usize,
        cond_dim: usize,
        image_queries: bool,
    ) -> Result<Self> {
        Ok(Self {
            q: linear(&mut b.sub("q"), dim, dim, true)?,
            k: linear(&mut b.sub("k"), dim, dim, true)?,
            v: linear(&mut b.sub("v"), dim, dim, true)?,
            out: linear(&mut b.sub("out"), dim, cond_dim, true)?,
            image_queries,
            scale: 1.0 / (dim as f64).sqrt(),
        })
    }

    fn roles<'a>(&self, img: &'a Tensor, trip: &'a Tensor) -> (&'a Tensor, &'a Tensor) {
        if self.image_queries {
            (img, trip)
        } else {
            (trip, img)
        }
    }

    fn weights_and_values(&self, img: &Tensor, trip: &Tensor) -> Result<(Tensor, Tensor)> {
        check_tokens(img, trip)?;
        let (queries, keys) = self.roles(img, trip);
        let q = apply_last(&self.q, queries)?;
        let k = apply_last(&self.k, keys)?;
        let v = apply_last(&self.v, keys)?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? * self.scale)?;
        Ok((softmax_last(&scores)?, v))
    }

    /// `(B, queries, keys)` attention weights; rows sum to one.
    pub fn attention_weights(&self, img: &Tensor, trip: &Tensor) -> Result<Tensor> {
        Ok(self.weights_and_values(img, trip)?.0)
    }

    pub fn forward(&self, img: &Tensor, trip: &Tensor) -> Result<Tensor> {
        let (w, v) = self.weights_and_values(img, trip)?;
        let attended = w.matmul(&v)?;
        Ok(self.out.forward(&attended.mean(D::Minus2)?)?)
    }
}

#[derive(Debug, Clone)]
pub enum Fusion {
    Linear(LinearFusion),
    CrossAttention(CrossAttentionFusion),
}

impl Fusion {
    pub fn new(b: &mut ParamBuilder<'_>, kind: FusionKind, dim: usize, cond_dim: usize) -> Result<Self> {
        Ok(match kind {
            FusionKind::Linear => Fusion::Linear(LinearFusion::new(b, dim, cond_dim)?),
            FusionKind::AttnImageQuery => {
                Fusion::CrossAttention(CrossAttentionFusion::new(b, dim, cond_dim, true)?)
            }
            FusionKind::AttnTripletQuery => {
                Fusion::CrossAttention(CrossAttentionFusion::new(b, dim, cond_dim, false)?)
            }
        })
    }

    pub fn forward(&self, img: &Tensor, trip: &Tensor) -> Result<Tensor> {
        match self {
            Fusion::Linear(f) => f.forward(img, trip),
            Fusion::CrossAttention(f) => f.forward(img, trip),
        }
    }
}
