use candle_core::{DType, Module, Tensor, D};
use candle_nn::{Conv2d, Linear};
use ndarray::{Array2, ArrayView4};

use crate::error::{shape_err, Result};
use crate::nn::{apply_last, conv2d, linear};
use crate::params::ParamStore;
use crate::rng::seeded;
use crate::tensor::from_array4;

/// Seed of the default feature networks.
pub const FEATURE_SEED: u64 = 0x5eed_fea7;

/// Width of the clip features used for the video distance.
pub const FVD_FEATURE_DIM: usize = 64;

/// Per-frame random convolution tower for the perceptual proxy.
#[derive(Debug, Clone)]
pub struct FeatureNet {
    layers: Vec<Conv2d>,
    _store: ParamStore,
}

impl Default for FeatureNet {
    fn default() -> Self {
        Self::new(FEATURE_SEED).expect("fixed architecture")
    }
}

fn unit_channels(x: &Tensor) -> Result<Tensor> {
    let norm = (x.sqr()?.sum_keepdim(1)? + 1e-10)?.sqrt()?;
    Ok(x.broadcast_div(&norm)?)
}

impl FeatureNet {
    pub fn new(seed: u64) -> Result<Self> {
        let mut store = ParamStore::new(DType::F32);
        let mut rng = seeded(seed);
        let mut b = store.builder(&mut rng);
        let layers = vec![
            conv2d(&mut b.sub("0"), 3, 16, 3, 1, true)?,
            conv2d(&mut b.sub("1"), 16, 32, 3, 2, true)?,
            conv2d(&mut b.sub("2"), 32, 32, 3, 2, true)?,
        ];
        Ok(Self {
            layers,
            _store: store,
        })
    }

    /// Channel-normalised activations of every layer for `(N, 3, H, W)`
    /// frames in `[0, 1]`.
    pub fn features(&self, frames: &Tensor) -> Result<Vec<Tensor>> {
        let mut x = ((frames * 2.0)? - 1.0)?;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            x = layer.forward(&x)?.relu()?;
            out.push(unit_channels(&x)?);
        }
        Ok(out)
    }
}

/// Mean over frames and layers of the per-site squared distance between
/// channel-normalised feature maps of two `(K, 3, H, W)` videos.
pub fn lpips_proxy(a: ArrayView4<'_, f32>, b: ArrayView4<'_, f32>, net: &FeatureNet) -> Result<f64> {
    if a.dim() != b.dim() {
        return shape_err(format!("{:?} vs {:?}", a.dim(), b.dim()));
    }
    if a.is_empty() {
        return shape_err("empty video");
    }
    let fa = net.features(&from_array4(a, DType::F32)?)?;
    let fb = net.features(&from_array4(b, DType::F32)?)?;
    let mut total = 0.0f64;
    for (x, y) in fa.iter().zip(&fb) {
        let d = (x - y)?.sqr()?.sum(1)?.mean_all()?;
        total += d.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    }
    Ok(total / fa.len() as f64)
}

/// Clip-level random spatio-temporal tower for the video distance.
///
/// Each frame is paired with its difference to the previous frame, passed
/// through three strided convolutions, averaged spatially and scaled to unit
/// RMS. A temporal
/// convolution (kernel 3) over the frame sequence follows, then a mean over
/// time and a final projection to [`FVD_FEATURE_DIM`] values.
#[derive(Debug, Clone)]
pub struct VideoFeatureNet {
    spatial: Vec<Conv2d>,
    temporal: Linear,
    head: Linear,
    _store: ParamStore,
}

impl Default for VideoFeatureNet {
    fn default() -> Self {
        Self::new(FEATURE_SEED ^ 0xf7d, FVD_FEATURE_DIM).expect("fixed architecture")
    }
}

impl VideoFeatureNet {
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        let mut store = ParamStore::new(DType::F32);
        let mut rng = seeded(seed);
        let mut b = store.builder(&mut rng);
        let spatial = vec![
            conv2d(&mut b.sub("s0"), 6, 16, 3, 2, true)?,
            conv2d(&mut b.sub("s1"), 16, 32, 3, 2, true)?,
            conv2d(&mut b.sub("s2"), 32, 32, 3, 2, true)?,
        ];
        let temporal = linear(&mut b.sub("t"), 3 * 32, dim, true)?;
        let head = linear(&mut b.sub("head"), dim, dim, true)?;
        Ok(Self {
            spatial,
            temporal,
            head,
            _store: store,
        })
    }

    pub fn dim(&self) -> usize {
        self.head.weight().dim(0).unwrap_or(0)
    }

    /// One feature vector per `(K, 3, H, W)` clip, as rows of an `n × d`
    /// matrix.
    pub fn features(&self, clips: &[ArrayView4<'_, f32>]) -> Result<Array2<f64>> {
        let mut rows = Vec::with_capacity(clips.len());
        for clip in clips {
            rows.push(self.clip_features(*clip)?);
        }
        let d = self.dim();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Array2::from_shape_vec((clips.len(), d), flat).expect("rows have width d"))
    }

    fn clip_features(&self, clip: ArrayView4<'_, f32>) -> Result<Vec<f64>> {
        let (k, c, _, _) = clip.dim();
        if k == 0 || c != 3 {
            return shape_err(format!("clip of shape {:?}", clip.dim()));
        }
        let x = ((from_array4(clip, DType::F32)? * 2.0)? - 1.0)?;
        let prev = Tensor::cat(&[&x.narrow(0, 0, 1)?, &x.narrow(0, 0, k - 1)?], 0)?;
        let mut h = Tensor::cat(&[&x, &(&x - prev)?], 1)?;
        for conv in &self.spatial {
            h = conv.forward(&h)?.relu()?;
        }
        // unit RMS per frame so feature magnitudes do not shrink with depth
        let per_frame = h.mean((2, 3))?;
        let rms = (per_frame.sqr()?.mean_keepdim(1)? + 1e-12)?.sqrt()?;
        let per_frame = per_frame.broadcast_div(&rms)?;
        let padded = per_frame.pad_with_zeros(0, 1, 1)?;
        let window = Tensor::cat(
            &[
                &padded.narrow(0, 0, k)?,
                &padded.narrow(0, 1, k)?,
                &padded.narrow(0, 2, k)?,
            ],
            D::Minus1,
        )?;
        let t = apply_last(&self.temporal, &window)?.relu()?.mean(0)?;
        let out = self.head.forward(&t.unsqueeze(0)?)?.squeeze(0)?;
        Ok(out.to_dtype(DType::F64)?.to_vec1::<f64>()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn video(seed: u64) -> Array4<f32> {
        let mut rng = seeded(seed);
        Array4::from_shape_fn((3, 3, 16, 16), |(_, c, y, x)| {
            0.5 + 0.3 * ((y as f32 * 0.4 + c as f32).sin() * (x as f32 * 0.3).cos()) + 0.05 * rng.random::<f32>()
        })
    }

    fn noisy(a: &Array4<f32>, sigma: f32, seed: u64) -> Array4<f32> {
        let mut rng = seeded(seed);
        a.mapv(|v| {
            let n: f32 = StandardNormal.sample(&mut rng);
            (v + sigma * n).clamp(0.0, 1.0)
        })
    }

    #[test]
    fn lpips_identity_and_symmetry() {
        let net = FeatureNet::default();
        let a = video(0);
        let b = video(1);
        assert_eq!(lpips_proxy(a.view(), a.view(), &net).unwrap(), 0.0);
        let ab = lpips_proxy(a.view(), b.view(), &net).unwrap();
        let ba = lpips_proxy(b.view(), a.view(), &net).unwrap();
        assert!(ab > 0.0);
        assert_eq!(ab, ba);
    }

    #[test]
    fn lpips_monotone_in_noise() {
        let net = FeatureNet::default();
        let a = video(2);
        let trials = 100;
        let mean = |sigma: f32| {
            (0..trials)
                .map(|s| lpips_proxy(a.view(), noisy(&a, sigma, s).view(), &net).unwrap())
                .sum::<f64>()
                / trials as f64
        };
        let (l1, l2, l3) = (mean(0.05), mean(0.1), mean(0.2));
        assert!(l1 < l2 && l2 < l3, "{l1} {l2} {l3}");
    }

    #[test]
    fn video_features_shape_and_determinism() {
        let net = VideoFeatureNet::default();
        let clips = [video(0), video(1)];
        let views: Vec<_> = clips.iter().map(|c| c.view()).collect();
        let f = net.features(&views).unwrap();
        assert_eq!(f.dim(), (2, FVD_FEATURE_DIM));
        assert_eq!(f, VideoFeatureNet::default().features(&views).unwrap());
        assert!(f.iter().all(|v| v.is_finite()));
    }
}
