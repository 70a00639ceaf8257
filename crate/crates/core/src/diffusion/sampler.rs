use candle_core::Tensor;
use rand_chacha::ChaCha8Rng;

use super::objective::Denoiser;
use super::process::{forward_marginal, reverse_step};
use super::NoiseSchedule;
use crate::conditioning::FusedConditioning;
use crate::error::{Error, Result};
use crate::rng::standard_normal;

fn noise_like(like: &Tensor, rngs: &mut [ChaCha8Rng]) -> Result<Tensor> {
    let item_shape = &like.dims()[1..];
    let items = rngs
        .iter_mut()
        .map(|r| standard_normal(item_shape, r, like.dtype(), like.device()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::stack(&items, 0)?)
}

/// Ancestral sampling over a strided timestep subsequence.
///
/// `init` is the clean initial latent (the conditioning frame tiled across
/// all frame slots), noised to `t = T` before denoising starts. Each batch
/// item draws all of its noise from its own RNG, so an item's result does not
/// depend on what else is in the batch.
pub fn sample_latents<D: Denoiser + ?Sized>(
    model: &D,
    cond: &FusedConditioning,
    init: &Tensor,
    sched: &NoiseSchedule,
    steps: usize,
    rngs: &mut [ChaCha8Rng],
) -> Result<Tensor> {
    if rngs.len() != init.dim(0)? {
        return Err(Error::Shape(format!(
            "{} RNG streams for batch of {}",
            rngs.len(),
            init.dim(0)?
        )));
    }
    let (respaced, timesteps) = sched.respaced(steps)?;
    let eps = noise_like(init, rngs)?;
    let mut z = forward_marginal(init, sched.len(), &eps, sched)?;
    let batch = init.dim(0)?;
    for i in (1..=steps).rev() {
        let ts = vec![timesteps[i - 1]; batch];
        let eps_hat = model.predict_noise(&z, &ts, cond)?;
        let noise = if i > 1 { Some(noise_like(&z, rngs)?) } else { None };
        z = reverse_step(&z, i, &eps_hat, &respaced, noise.as_ref())?;
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::FusionKind;
    use crate::rng::seeded;
    use candle_core::{DType, Device};

    /// Predicts the exact noise separating `z_t` from a fixed clean latent.
    struct Oracle {
        target: Tensor,
        sched: NoiseSchedule,
    }

    impl Denoiser for Oracle {
        fn predict_noise(&self, z_t: &Tensor, ts: &[usize], _: &FusedConditioning) -> Result<Tensor> {
            let t = ts[0];
            let signal = (self.target.broadcast_as(z_t.shape())? * self.sched.alpha_bar(t).sqrt())?;
            Ok(((z_t - signal)? / self.sched.sigma(t))?)
        }
    }

    fn cond(batch: usize) -> FusedConditioning {
        FusedConditioning {
            vector: Tensor::zeros((batch, 2), DType::F64, &Device::Cpu).unwrap(),
            frame_latent: Tensor::zeros((batch, 1, 2, 2), DType::F64, &Device::Cpu).unwrap(),
            fusion: FusionKind::Linear,
        }
    }

    fn oracle() -> Oracle {
        let target = standard_normal((1, 3, 1, 2, 2), &mut seeded(1), DType::F64, &Device::Cpu).unwrap();
        Oracle {
            target,
            sched: NoiseSchedule::linear(200, 1e-4, 0.05).unwrap(),
        }
    }

    fn diff(a: &Tensor, b: &Tensor) -> f64 {
        (a - b).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f64>().unwrap()
    }

    #[test]
    fn oracle_noise_lands_on_the_target() {
        let m = oracle();
        let init = Tensor::zeros((2, 3, 1, 2, 2), DType::F64, &Device::Cpu).unwrap();
        for steps in [1, 7, 200] {
            let mut rngs = vec![seeded(3), seeded(4)];
            let z = sample_latents(&m, &cond(2), &init, &m.sched, steps, &mut rngs).unwrap();
            let target = m.target.broadcast_as(z.shape()).unwrap();
            assert!(diff(&z, &target) < 1e-9, "steps {steps}");
        }
    }

    #[test]
    fn items_depend_only_on_their_own_seed() {
        struct Zero;
        impl Denoiser for Zero {
            fn predict_noise(&self, z_t: &Tensor, _: &[usize], _: &FusedConditioning) -> Result<Tensor> {
                Ok(z_t.zeros_like()?)
            }
        }
        let sched = NoiseSchedule::linear(50, 1e-3, 0.1).unwrap();
        let init = standard_normal((2, 3, 1, 2, 2), &mut seeded(0), DType::F64, &Device::Cpu).unwrap();
        let pair = sample_latents(&Zero, &cond(2), &init, &sched, 10, &mut [seeded(8), seeded(9)]).unwrap();
        let again = sample_latents(&Zero, &cond(2), &init, &sched, 10, &mut [seeded(8), seeded(9)]).unwrap();
        assert_eq!(diff(&pair, &again), 0.0);
        let second = init.narrow(0, 1, 1).unwrap();
        let alone = sample_latents(&Zero, &cond(1), &second, &sched, 10, &mut [seeded(9)]).unwrap();
        assert_eq!(diff(&pair.narrow(0, 1, 1).unwrap(), &alone), 0.0);
    }

    #[test]
    fn bad_step_counts_and_stream_counts_fail() {
        let m = oracle();
        let init = Tensor::zeros((1, 3, 1, 2, 2), DType::F64, &Device::Cpu).unwrap();
        assert!(sample_latents(&m, &cond(1), &init, &m.sched, 0, &mut [seeded(0)]).is_err());
        assert!(sample_latents(&m, &cond(1), &init, &m.sched, 201, &mut [seeded(0)]).is_err());
        assert!(sample_latents(&m, &cond(1), &init, &m.sched, 5, &mut []).is_err());
    }
}
