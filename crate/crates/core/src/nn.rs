//! Small layer constructors over candle tensors with seeded initialisation.

use candle_core::{DType, Device, Module, Tensor, D};
use candle_nn::{Conv2d, Conv2dConfig, Embedding, Linear};

use crate::error::Result;
use crate::params::{Init, ParamBuilder};

pub fn linear(b: &mut ParamBuilder<'_>, in_dim: usize, out_dim: usize, bias: bool) -> Result<Linear> {
    let bound = 1.0 / (in_dim as f64).sqrt();
    let w = b.get("weight", &[out_dim, in_dim], Init::Uniform(bound))?;
    let bias = if bias {
        Some(b.get("bias", &[out_dim], Init::Uniform(bound))?)
    } else {
        None
    };
    Ok(Linear::new(w, bias))
}

pub fn conv2d(
    b: &mut ParamBuilder<'_>,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    bias: bool,
) -> Result<Conv2d> {
    let fan_in = in_ch * kernel * kernel;
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = b.get("weight", &[out_ch, in_ch, kernel, kernel], Init::Uniform(bound))?;
    let bias = if bias {
        Some(b.get("bias", &[out_ch], Init::Uniform(bound))?)
    } else {
        None
    };
    let cfg = Conv2dConfig {
        padding: kernel / 2,
        stride,
        ..Default::default()
    };
    Ok(Conv2d::new(w, bias, cfg))
}

pub fn embedding(b: &mut ParamBuilder<'_>, n: usize, dim: usize) -> Result<Embedding> {
    let table = b.get("table", &[n, dim], Init::Normal(1.0))?;
    Ok(Embedding::new(table, dim))
}

/// Applies a module to the last dimension of a tensor of any rank.
pub fn apply_last<M: Module>(m: &M, xs: &Tensor) -> Result<Tensor> {
    let dims = xs.dims().to_vec();
    let last = *dims.last().unwrap_or(&1);
    let flat = xs.reshape(((), last))?;
    let out = m.forward(&flat)?;
    let mut out_dims = dims;
    *out_dims.last_mut().unwrap() = out.dim(D::Minus1)?;
    Ok(out.reshape(out_dims)?)
}

/// Sinusoidal timestep features, shape `(ts.len(), dim)`.
pub fn sinusoidal_embedding(ts: &[usize], dim: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        for i in 0..dim {
            let k = i % half.max(1);
            let freq = (-(10_000f64.ln()) * k as f64 / half.max(1) as f64).exp();
            let arg = t as f64 * freq;
            out.push(if i < half { arg.sin() } else { arg.cos() });
        }
    }
    Ok(Tensor::from_vec(out, (ts.len(), dim), device)?.to_dtype(dtype)?)
}

/// Row-wise softmax over the last dimension.
pub fn softmax_last(xs: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::softmax(xs, D::Minus1)?)
}
