use candle_core::{DType, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::process::{forward_marginal_batch, predict_clean};
use super::NoiseSchedule;
use crate::conditioning::FusedConditioning;
use crate::error::{Error, Result};
use crate::rng::standard_normal;

/// A network predicting the noise that was mixed into `z_t`.
///
/// `z_t` is `(B, K, C, h, w)`; `ts` holds one timestep per batch item.
pub trait Denoiser {
    fn predict_noise(&self, z_t: &Tensor, ts: &[usize], cond: &FusedConditioning) -> Result<Tensor>;
}

/// One Monte-Carlo sample of the denoising objective for a batch of clean
/// latents `x`.
///
/// A timestep per item is drawn uniformly from `1..=T` and standard normal
/// noise is drawn for every element. The network's noise prediction is
/// mapped back to a clean-latent estimate and the loss is the `w_t`-weighted
/// mean squared error against `x`, averaged over the batch.
pub fn training_loss<D: Denoiser + ?Sized>(
    x: &Tensor,
    cond: &FusedConditioning,
    model: &D,
    sched: &NoiseSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let batch = x.dim(0)?;
    let ts: Vec<usize> = (0..batch).map(|_| rng.random_range(1..=sched.len())).collect();
    let eps = standard_normal(x.shape(), rng, x.dtype(), x.device())?;
    let z_t = forward_marginal_batch(x, &ts, &eps, sched)?;
    let eps_hat = model.predict_noise(&z_t, &ts, cond)?;
    if eps_hat.dims() != x.dims() {
        return Err(Error::Shape(format!(
            "denoiser returned {:?} for input {:?}",
            eps_hat.dims(),
            x.dims()
        )));
    }
    let x_hat = predict_clean(&z_t, &ts, &eps_hat, sched)?;
    let per_item = (x_hat - x)?.sqr()?.flatten_from(1)?.mean(1)?;
    let weights: Vec<f64> = ts.iter().map(|&t| sched.weight(t)).collect();
    let weights = Tensor::from_vec(weights, batch, x.device())?.to_dtype(x.dtype())?;
    let loss = (per_item * weights)?.mean_all()?;
    let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss(value));
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::FusionKind;
    use crate::rng::seeded;
    use candle_core::Device;

    /// Recovers the injected noise from `z_t` using the known clean latent.
    struct Oracle {
        x: Tensor,
        sched: NoiseSchedule,
    }

    impl Denoiser for Oracle {
        fn predict_noise(&self, z_t: &Tensor, ts: &[usize], _: &FusedConditioning) -> Result<Tensor> {
            let mut items = Vec::new();
            for (i, &t) in ts.iter().enumerate() {
                let z = z_t.narrow(0, i, 1)?;
                let x = self.x.narrow(0, i, 1)?;
                items.push(((z - (x * self.sched.alpha_bar(t).sqrt())?)? / self.sched.sigma(t))?);
            }
            Ok(Tensor::cat(&items, 0)?)
        }
    }

    struct Constant(f64);

    impl Denoiser for Constant {
        fn predict_noise(&self, z_t: &Tensor, _: &[usize], _: &FusedConditioning) -> Result<Tensor> {
            Ok((z_t.zeros_like()? + self.0)?)
        }
    }

    fn setup() -> (Tensor, FusedConditioning, NoiseSchedule) {
        let x = standard_normal((3, 2, 2, 2, 2), &mut seeded(0), DType::F64, &Device::Cpu).unwrap();
        let cond = FusedConditioning {
            vector: Tensor::zeros((3, 4), DType::F64, &Device::Cpu).unwrap(),
            frame_latent: Tensor::zeros((3, 2, 2, 2), DType::F64, &Device::Cpu).unwrap(),
            fusion: FusionKind::Linear,
        };
        (x, cond, NoiseSchedule::linear(100, 1e-3, 0.05).unwrap())
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let (x, cond, sched) = setup();
        let oracle = Oracle {
            x: x.clone(),
            sched: sched.clone(),
        };
        let loss = training_loss(&x, &cond, &oracle, &sched, &mut seeded(1)).unwrap();
        assert!(loss.to_scalar::<f64>().unwrap().abs() < 1e-10);
    }

    #[test]
    fn loss_is_non_negative_and_seeded() {
        let (x, cond, sched) = setup();
        for seed in 0..20 {
            let a = training_loss(&x, &cond, &Constant(0.3), &sched, &mut seeded(seed)).unwrap();
            let b = training_loss(&x, &cond, &Constant(0.3), &sched, &mut seeded(seed)).unwrap();
            let a = a.to_scalar::<f64>().unwrap();
            assert!(a >= 0.0);
            assert_eq!(a, b.to_scalar::<f64>().unwrap());
        }
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let (x, cond, sched) = setup();
        assert!(matches!(
            training_loss(&x, &cond, &Constant(f64::NAN), &sched, &mut seeded(0)),
            Err(Error::NonFiniteLoss(_))
        ));
    }
}
