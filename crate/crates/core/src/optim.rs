//! Adam with optional global-norm gradient clipping.

use candle_core::{backprop::GradStore, DType, Tensor, Var};
use candle_nn::{AdamW, Optimizer as _, ParamsAdamW};

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

pub struct Adam {
    inner: AdamW,
    vars: Vec<Var>,
    clip_norm: Option<f64>,
}

impl Adam {
    pub fn new(vars: Vec<Var>, cfg: AdamConfig) -> Result<Self> {
        let params = ParamsAdamW {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            // decoupled decay off: plain Adam
            weight_decay: 0.0,
        };
        Ok(Self {
            inner: AdamW::new(vars.clone(), params)?,
            vars,
            clip_norm: cfg.clip_norm,
        })
    }

    /// Back-propagates `loss`, clips, and applies one update. Returns the
    /// gradient norm before clipping.
    pub fn backward_step(&mut self, loss: &Tensor) -> Result<f64> {
        let mut grads = loss.backward()?;
        let norm = self.clip(&mut grads)?;
        self.inner.step(&grads)?;
        Ok(norm)
    }

    fn clip(&self, grads: &mut GradStore) -> Result<f64> {
        let mut sq = 0.0;
        for v in &self.vars {
            if let Some(g) = grads.get(v) {
                sq += g.sqr()?.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            }
        }
        let norm = sq.sqrt();
        if let Some(max) = self.clip_norm {
            if norm > max {
                let scale = max / norm;
                for v in &self.vars {
                    if let Some(g) = grads.remove(v) {
                        grads.insert(v, (g * scale)?);
                    }
                }
            }
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    fn quadratic(v: &Var, target: &[f64]) -> Tensor {
        let t = Tensor::from_slice(target, target.len(), &Device::Cpu).unwrap();
        (v.as_tensor() - t).unwrap().sqr().unwrap().sum_all().unwrap()
    }

    #[test]
    fn reports_pre_clip_norm_and_moves_by_lr() {
        // gradient of sum (v - c)^2 at v = 0 is -2c; Adam's first step is lr * sign
        let v = Var::from_slice(&[0.0f64, 0.0], 2, &Device::Cpu).unwrap();
        let mut cfg = AdamConfig::new(0.1);
        cfg.clip_norm = Some(1.0);
        let mut opt = Adam::new(vec![v.clone()], cfg).unwrap();
        let norm = opt.backward_step(&quadratic(&v, &[3.0, -4.0])).unwrap();
        assert!((norm - 10.0).abs() < 1e-12);
        let after = v.as_tensor().to_vec1::<f64>().unwrap();
        assert!((after[0] - 0.1).abs() < 1e-6 && (after[1] + 0.1).abs() < 1e-6, "{after:?}");
    }

    #[test]
    fn converges_on_a_quadratic() {
        let v = Var::from_slice(&[5.0f64, -2.0, 0.5], 3, &Device::Cpu).unwrap();
        let mut opt = Adam::new(vec![v.clone()], AdamConfig::new(0.05)).unwrap();
        for _ in 0..2000 {
            opt.backward_step(&quadratic(&v, &[1.0, 2.0, 3.0])).unwrap();
        }
        let got = v.as_tensor().to_vec1::<f64>().unwrap();
        for (g, w) in got.iter().zip([1.0, 2.0, 3.0]) {
            assert!((g - w).abs() < 1e-3, "{got:?}");
        }
    }
}
