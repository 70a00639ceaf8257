use ndarray::{Array2, ArrayView, ArrayView2, ArrayView3, ArrayView4, Axis, Dimension};

use crate::error::{shape_err, Result};

/// PSNR reported for identical inputs.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Peak signal-to-noise ratio in dB over all elements, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr<D: Dimension>(a: ArrayView<'_, f32, D>, b: ArrayView<'_, f32, D>, max_val: f64) -> Result<f64> {
    psnr_with_cap(a, b, max_val, PSNR_CAP_DB)
}

pub fn psnr_with_cap<D: Dimension>(
    a: ArrayView<'_, f32, D>,
    b: ArrayView<'_, f32, D>,
    max_val: f64,
    cap: f64,
) -> Result<f64> {
    if a.shape() != b.shape() {
        return shape_err(format!("{:?} vs {:?}", a.shape(), b.shape()));
    }
    if a.is_empty() {
        return shape_err("empty input");
    }
    let mse = a
        .iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(cap);
    }
    Ok((10.0 * (max_val * max_val / mse).log10()).min(cap))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the inputs.
    pub range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 8,
            k1: 0.01,
            k2: 0.03,
            range: 1.0,
        }
    }
}

/// `(3, H, W)` RGB to BT.601 luma.
pub fn luma(frame: ArrayView3<'_, f32>) -> Array2<f64> {
    let (_, h, w) = frame.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        0.299 * frame[[0, y, x]] as f64 + 0.587 * frame[[1, y, x]] as f64 + 0.114 * frame[[2, y, x]] as f64
    })
}

/// Summed-area table with a zero border row and column.
fn integral(f: impl Fn(usize, usize) -> f64, h: usize, w: usize) -> Array2<f64> {
    let mut s = Array2::zeros((h + 1, w + 1));
    for y in 0..h {
        for x in 0..w {
            s[[y + 1, x + 1]] = f(y, x) + s[[y, x + 1]] + s[[y + 1, x]] - s[[y, x]];
        }
    }
    s
}

fn window_sum(s: &Array2<f64>, y: usize, x: usize, n: usize) -> f64 {
    s[[y + n, x + n]] - s[[y, x + n]] - s[[y + n, x]] + s[[y, x]]
}

/// Mean SSIM over all `window × window` windows at stride 1, with uniform
/// weights and population statistics. With the product form used here,
/// zero-variance windows get a contrast-structure factor of 1.
pub fn ssim(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, cfg: &SsimConfig) -> Result<f64> {
    if a.dim() != b.dim() {
        return shape_err(format!("{:?} vs {:?}", a.dim(), b.dim()));
    }
    let (h, w) = a.dim();
    let n = cfg.window;
    if n == 0 || h < n || w < n {
        return shape_err(format!("{h}x{w} frame smaller than {n}x{n} window"));
    }
    let c1 = (cfg.k1 * cfg.range).powi(2);
    let c2 = (cfg.k2 * cfg.range).powi(2);
    let sa = integral(|y, x| a[[y, x]], h, w);
    let sb = integral(|y, x| b[[y, x]], h, w);
    let saa = integral(|y, x| a[[y, x]] * a[[y, x]], h, w);
    let sbb = integral(|y, x| b[[y, x]] * b[[y, x]], h, w);
    let sab = integral(|y, x| a[[y, x]] * b[[y, x]], h, w);
    let area = (n * n) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - n {
        for x in 0..=w - n {
            let ma = window_sum(&sa, y, x, n) / area;
            let mb = window_sum(&sb, y, x, n) / area;
            let va = (window_sum(&saa, y, x, n) / area - ma * ma).max(0.0);
            let vb = (window_sum(&sbb, y, x, n) / area - mb * mb).max(0.0);
            let cov = window_sum(&sab, y, x, n) / area - ma * mb;
            let lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            let cs = (2.0 * cov + c2) / (va + vb + c2);
            total += lum * cs;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean luma SSIM over the frames of two `(K, 3, H, W)` videos.
pub fn ssim_video(a: ArrayView4<'_, f32>, b: ArrayView4<'_, f32>, cfg: &SsimConfig) -> Result<f64> {
    if a.dim() != b.dim() {
        return shape_err(format!("{:?} vs {:?}", a.dim(), b.dim()));
    }
    if a.len_of(Axis(0)) == 0 {
        return shape_err("empty video");
    }
    let mut total = 0.0;
    for (fa, fb) in a.axis_iter(Axis(0)).zip(b.axis_iter(Axis(0))) {
        total += ssim(luma(fa).view(), luma(fb).view(), cfg)?;
    }
    Ok(total / a.len_of(Axis(0)) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array4};
    use proptest::prelude::*;

    #[test]
    fn psnr_reference_values() {
        let a = Array4::<f32>::zeros((7, 3, 8, 8));
        let b = Array4::<f32>::from_elem((7, 3, 8, 8), 0.5);
        assert_eq!(psnr(a.view(), a.view(), 1.0).unwrap(), PSNR_CAP_DB);
        let db = psnr(a.view(), b.view(), 1.0).unwrap();
        assert!((db - 10.0 * 4f64.log10()).abs() < 1e-9);
        assert!((db - 6.0206).abs() < 1e-3);
        let mut c = a.clone();
        c[[3, 1, 2, 2]] = 1.0;
        let one = psnr(a.view(), c.view(), 1.0).unwrap();
        assert!(one.is_finite() && one < PSNR_CAP_DB);
        assert!(psnr(a.view(), Array4::<f32>::zeros((7, 3, 8, 9)).view(), 1.0).is_err());
    }

    #[test]
    fn ssim_reference_values() {
        let cfg = SsimConfig::default();
        let a = Array2::from_shape_fn((16, 16), |(y, x)| ((y * 7 + x * 3) % 11) as f64 / 10.0);
        assert!((ssim(a.view(), a.view(), &cfg).unwrap() - 1.0).abs() < 1e-9);
        let zero = Array2::<f64>::zeros((16, 16));
        let one = Array2::<f64>::ones((16, 16));
        let c1 = 0.01f64.powi(2);
        let s = ssim(zero.view(), one.view(), &cfg).unwrap();
        assert!((s - c1 / (1.0 + c1)).abs() < 1e-12);
        assert!(ssim(Array2::zeros((4, 16)).view(), Array2::zeros((4, 16)).view(), &cfg).is_err());
    }

    #[test]
    fn ssim_matches_direct_window_loop() {
        let cfg = SsimConfig { window: 3, ..SsimConfig::default() };
        let a = Array2::from_shape_fn((5, 6), |(y, x)| ((y * 5 + x * 3) % 7) as f64 / 6.0);
        let b = Array2::from_shape_fn((5, 6), |(y, x)| ((y * 2 + x * 5) % 9) as f64 / 8.0);
        let (c1, c2) = (1e-4, 9e-4);
        let mut total = 0.0;
        let mut n = 0.0;
        for y in 0..3 {
            for x in 0..4 {
                let wa: Vec<f64> = (0..9).map(|i| a[[y + i / 3, x + i % 3]]).collect();
                let wb: Vec<f64> = (0..9).map(|i| b[[y + i / 3, x + i % 3]]).collect();
                let ma = wa.iter().sum::<f64>() / 9.0;
                let mb = wb.iter().sum::<f64>() / 9.0;
                let va = wa.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / 9.0;
                let vb = wb.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / 9.0;
                let cov = wa.iter().zip(&wb).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / 9.0;
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                n += 1.0;
            }
        }
        assert!((ssim(a.view(), b.view(), &cfg).unwrap() - total / n).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn psnr_and_ssim_symmetric(seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = crate::rng::seeded(seed);
            let a = Array4::from_shape_fn((2, 3, 8, 8), |_| rng.random::<f32>());
            let b = Array4::from_shape_fn((2, 3, 8, 8), |_| rng.random::<f32>());
            prop_assert_eq!(psnr(a.view(), b.view(), 1.0).unwrap(), psnr(b.view(), a.view(), 1.0).unwrap());
            let cfg = SsimConfig::default();
            let s1 = ssim_video(a.view(), b.view(), &cfg).unwrap();
            let s2 = ssim_video(b.view(), a.view(), &cfg).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&s1));
        }

        #[test]
        fn psnr_decreases_with_mse(d1 in 0.01f32..0.5, extra in 0.01f32..0.4) {
            let a = Array4::<f32>::zeros((1, 3, 4, 4));
            let b = Array4::from_elem((1, 3, 4, 4), d1);
            let c = Array4::from_elem((1, 3, 4, 4), d1 + extra);
            prop_assert!(psnr(a.view(), b.view(), 1.0).unwrap() > psnr(a.view(), c.view(), 1.0).unwrap());
        }
    }
}
