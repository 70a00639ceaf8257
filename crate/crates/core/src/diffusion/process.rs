//! Forward noising and ancestral reverse steps on latent tensors.

use candle_core::Tensor;

use super::NoiseSchedule;
use crate::error::{shape_err, Error, Result};

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return shape_err(format!("{what}: {:?} vs {:?}", a.dims(), b.dims()));
    }
    Ok(())
}

/// One step of the forward chain: `sqrt(1 - beta_t) z_{t-1} + sqrt(beta_t) eps`.
pub fn forward_step(z_prev: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_t(t)?;
    same_shape(z_prev, eps, "forward_step")?;
    let beta = sched.beta(t);
    Ok(((z_prev * (1.0 - beta).sqrt())? + (eps * beta.sqrt())?)?)
}

/// Closed-form jump from the clean latent: `sqrt(alpha_bar_t) z0 + sigma_t eps`.
pub fn forward_marginal(z0: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_t(t)?;
    same_shape(z0, eps, "forward_marginal")?;
    Ok(((z0 * sched.alpha_bar(t).sqrt())? + (eps * sched.sigma(t))?)?)
}

/// Ancestral reverse step from `z_t` to `z_{t-1}` given a noise prediction.
///
/// `noise` scales by the posterior standard deviation; it is ignored at
/// `t = 1`, and `None` means zero.
pub fn reverse_step(
    z_t: &Tensor,
    t: usize,
    eps_hat: &Tensor,
    sched: &NoiseSchedule,
    noise: Option<&Tensor>,
) -> Result<Tensor> {
    sched.check_t(t)?;
    same_shape(z_t, eps_hat, "reverse_step")?;
    let coef = sched.beta(t) / sched.sigma(t);
    let mean = ((z_t - (eps_hat * coef)?)? * (1.0 / sched.alpha(t).sqrt()))?;
    match noise {
        Some(n) if t > 1 => {
            same_shape(z_t, n, "reverse_step noise")?;
            Ok((mean + (n * sched.posterior_sigma(t))?)?)
        }
        _ => Ok(mean),
    }
}

/// `(B, 1, 1, ...)` tensor holding one scalar per batch item, matching `like`.
pub(crate) fn per_item(values: &[f64], like: &Tensor) -> Result<Tensor> {
    let b = like.dim(0)?;
    if values.len() != b {
        return Err(Error::Shape(format!(
            "{} per-item coefficients for batch of {b}",
            values.len()
        )));
    }
    let mut shape = vec![1usize; like.rank()];
    shape[0] = b;
    Ok(Tensor::from_vec(values.to_vec(), shape, like.device())?.to_dtype(like.dtype())?)
}

/// [`forward_marginal`] with a separate timestep per batch item.
pub fn forward_marginal_batch(
    z0: &Tensor,
    ts: &[usize],
    eps: &Tensor,
    sched: &NoiseSchedule,
) -> Result<Tensor> {
    same_shape(z0, eps, "forward_marginal_batch")?;
    for &t in ts {
        sched.check_t(t)?;
    }
    let a: Vec<f64> = ts.iter().map(|&t| sched.alpha_bar(t).sqrt()).collect();
    let s: Vec<f64> = ts.iter().map(|&t| sched.sigma(t)).collect();
    let a = per_item(&a, z0)?;
    let s = per_item(&s, z0)?;
    Ok((z0.broadcast_mul(&a)? + eps.broadcast_mul(&s)?)?)
}

/// Clean-latent estimate implied by a noise prediction, per batch item.
pub fn predict_clean(z_t: &Tensor, ts: &[usize], eps_hat: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    same_shape(z_t, eps_hat, "predict_clean")?;
    let s: Vec<f64> = ts.iter().map(|&t| sched.sigma(t)).collect();
    let inv: Vec<f64> = ts.iter().map(|&t| 1.0 / sched.alpha_bar(t).sqrt()).collect();
    let s = per_item(&s, z_t)?;
    let inv = per_item(&inv, z_t)?;
    Ok((z_t - eps_hat.broadcast_mul(&s)?)?.broadcast_mul(&inv)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn sched() -> NoiseSchedule {
        NoiseSchedule::linear(100, 1e-3, 0.05).unwrap()
    }

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_slice(v, v.len(), &Device::Cpu).unwrap()
    }

    fn vals(x: &Tensor) -> Vec<f64> {
        x.to_vec1::<f64>().unwrap()
    }

    #[test]
    fn forward_step_zero_signal_and_zero_noise() {
        let s = sched();
        let zeros = Tensor::zeros(3, DType::F64, &Device::Cpu).unwrap();
        let eps = t(&[1.0, -2.0, 0.5]);
        let out = vals(&forward_step(&zeros, 7, &eps, &s).unwrap());
        for (o, e) in out.iter().zip([1.0, -2.0, 0.5]) {
            assert!((o - s.beta(7).sqrt() * e).abs() < 1e-15);
        }
        let out = vals(&forward_step(&eps, 7, &zeros, &s).unwrap());
        for (o, e) in out.iter().zip([1.0, -2.0, 0.5]) {
            assert!((o - (1.0 - s.beta(7)).sqrt() * e).abs() < 1e-15);
        }
    }

    #[test]
    fn marginal_without_noise_scales_signal() {
        let s = sched();
        let z0 = t(&[0.3, -1.2]);
        let zeros = Tensor::zeros(2, DType::F64, &Device::Cpu).unwrap();
        let out = vals(&forward_marginal(&z0, 40, &zeros, &s).unwrap());
        assert!((out[0] - 0.3 * s.alpha_bar(40).sqrt()).abs() < 1e-15);
        assert!((out[1] + 1.2 * s.alpha_bar(40).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn marginal_at_final_step_is_mostly_noise() {
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let z0 = t(&[1.0, -1.0]);
        let eps = t(&[0.5, 0.25]);
        let out = vals(&forward_marginal(&z0, 1000, &eps, &s).unwrap());
        assert!((out[0] - 0.5).abs() < 0.01);
        assert!((out[1] - 0.25).abs() < 0.01);
    }

    #[test]
    fn reverse_step_reductions() {
        let s = sched();
        let z = t(&[0.8, -0.4]);
        let zeros = Tensor::zeros(2, DType::F64, &Device::Cpu).unwrap();
        let out = vals(&reverse_step(&z, 10, &zeros, &s, None).unwrap());
        assert!((out[0] - 0.8 / s.alpha(10).sqrt()).abs() < 1e-15);
        // noise is ignored at t = 1
        let noise = t(&[100.0, 100.0]);
        let a = vals(&reverse_step(&z, 1, &zeros, &s, Some(&noise)).unwrap());
        let b = vals(&reverse_step(&z, 1, &zeros, &s, None).unwrap());
        assert_eq!(a, b);
        let c = vals(&reverse_step(&z, 2, &zeros, &s, Some(&noise)).unwrap());
        assert_ne!(c, vals(&reverse_step(&z, 2, &zeros, &s, None).unwrap()));
    }

    #[test]
    fn errors() {
        let s = sched();
        let a = t(&[1.0, 2.0]);
        let b = t(&[1.0]);
        assert!(forward_step(&a, 1, &b, &s).is_err());
        assert!(forward_marginal(&a, 1, &b, &s).is_err());
        assert!(reverse_step(&a, 0, &a, &s, None).is_err());
        assert!(reverse_step(&a, 101, &a, &s, None).is_err());
        assert!(reverse_step(&a, 3, &b, &s, None).is_err());
    }

    #[test]
    fn predict_clean_inverts_marginal() {
        let s = sched();
        let z0 = Tensor::from_vec(vec![0.1, 0.2, -0.3, 0.4], (2, 2), &Device::Cpu).unwrap();
        let eps = Tensor::from_vec(vec![1.0, -1.0, 0.5, 2.0], (2, 2), &Device::Cpu).unwrap();
        let ts = [5, 90];
        let zt = forward_marginal_batch(&z0, &ts, &eps, &s).unwrap();
        let back = predict_clean(&zt, &ts, &eps, &s).unwrap();
        let d = (back - &z0).unwrap().abs().unwrap().max_all().unwrap();
        assert!(d.to_scalar::<f64>().unwrap() < 1e-12);
    }
}
