use candle_core::{Module, Tensor};
use candle_nn::Conv2d;

use crate::error::{shape_err, Result};
use crate::nn::conv2d;
use crate::params::ParamBuilder;

/// Conditioning-frame feature tower: three stride-2 convolutions, then every
/// spatial site of the `H/8 x W/8` grid becomes one token.
#[derive(Debug, Clone)]
pub struct ImageEncoder {
    c1: Conv2d,
    c2: Conv2d,
    c3: Conv2d,
}

pub const IMAGE_TOKEN_STRIDE: usize = 8;

impl ImageEncoder {
    pub fn new(b: &mut ParamBuilder<'_>, dim: usize) -> Result<Self> {
        Ok(Self {
            // no bias: a black frame maps to exactly zero here
            c1: conv2d(&mut b.sub("c1"), 3, 16, 3, 2, false)?,
            c2: conv2d(&mut b.sub("c2"), 16, 32, 3, 2, true)?,
            c3: conv2d(&mut b.sub("c3"), 32, dim, 3, 2, true)?,
        })
    }

    pub fn num_tokens(height: usize, width: usize) -> usize {
        (height / IMAGE_TOKEN_STRIDE) * (width / IMAGE_TOKEN_STRIDE)
    }

    /// `(B, 3, H, W)` frames in `[0, 1]` to `(B, m, d)` tokens.
    pub fn encode(&self, frames: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = frames.dims4()?;
        if c != 3 || h % IMAGE_TOKEN_STRIDE != 0 || w % IMAGE_TOKEN_STRIDE != 0 {
            return shape_err(format!(
                "conditioning frame must be (B, 3, H, W) with H, W divisible by {IMAGE_TOKEN_STRIDE}, got {:?}",
                frames.dims()
            ));
        }
        let x = self.c1.forward(frames)?.silu()?;
        let x = self.c2.forward(&x)?.silu()?;
        let x = self.c3.forward(&x)?;
        Ok(x.flatten_from(2)?.transpose(1, 2)?.contiguous()?)
    }
}
