//! Finite-difference checks through the real conditioning and denoiser stack.

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use vidgen_core::conditioning::{Conditioner, ConditionerConfig};
use vidgen_core::diffusion::training_loss;
use vidgen_core::{ActionTriplet, ConditioningKind, DenoiserConfig, FusionKind, NoiseSchedule, VideoDenoiser};

fn normal(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

#[test]
fn learnable_table_entry_matches_finite_differences() {
    for fusion in FusionKind::ALL {
        let config = ConditionerConfig {
            kind: ConditioningKind::Learnable,
            fusion,
            token_dim: 4,
            cond_dim: 6,
        };
        let conditioner = Conditioner::with_dtype(config, None, 1, DType::F64).unwrap();
        let denoiser = VideoDenoiser::with_dtype(
            DenoiserConfig {
                latent_channels: 2,
                base_channels: 4,
                depth: 1,
                cond_dim: 6,
                temporal: true,
                time_embed_dim: 4,
                frames: 3,
            },
            2,
            DType::F64,
        )
        .unwrap();
        let sched = NoiseSchedule::linear(20, 1e-2, 0.3).unwrap();
        // 16x16 frames give four image tokens, so attention over them is not trivial
        let frames = normal(&[2, 3, 16, 16], 3).affine(0.5, 0.5).unwrap();
        let x = normal(&[2, 3, 2, 4, 4], 4);
        let frame_latent = x.narrow(1, 0, 1).unwrap().squeeze(1).unwrap();
        let triplets = [ActionTriplet::new(0, 2, 1), ActionTriplet::new(3, 5, 1)];
        let name = conditioner.store().names().find(|n| n.contains("verb")).unwrap().to_string();
        let table: Var = conditioner.store().get(&name).unwrap().clone();
        let original = table.as_tensor().copy().unwrap();

        let loss = || {
            let cond = conditioner.condition(&frames, &frame_latent, &triplets).unwrap();
            training_loss(&x, &cond, &denoiser, &sched, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
        };
        let grads = loss().backward().unwrap();
        let grad = grads.get(table.as_tensor()).unwrap().to_vec2::<f64>().unwrap();
        // verbs 0, 1, 3 are not in the batch
        assert!(grad[0].iter().chain(&grad[1]).chain(&grad[3]).all(|&g| g == 0.0));

        let dim = grad[0].len();
        // the attention paths have gradients near 1e-10, so a wide step keeps round-off small
        let h = 1e-2;
        for (row, col) in [(2, 0), (2, dim - 1), (5, 1)] {
            let at = |delta: f64| {
                let mut rows = original.to_vec2::<f64>().unwrap();
                rows[row][col] += delta;
                table.set(&Tensor::new(rows, &Device::Cpu).unwrap()).unwrap();
                loss().to_scalar::<f64>().unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            table.set(&original).unwrap();
            let g = grad[row][col];
            assert!(g != 0.0, "{fusion:?} ({row},{col})");
            let rel = (g - fd).abs() / g.abs().max(fd.abs());
            assert!(rel < 1e-4, "{fusion:?} ({row},{col}): analytic {g} vs fd {fd}");
        }
    }
}
