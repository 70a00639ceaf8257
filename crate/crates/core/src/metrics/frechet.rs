use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, ArrayView4};

use super::VideoFeatureNet;
use crate::error::{shape_err, Error, Result};

/// Mean and covariance of a feature sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mu: Array1<f64>,
    pub sigma: Array2<f64>,
    pub n: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    fn is_finite(&self) -> bool {
        self.mu.iter().chain(self.sigma.iter()).all(|v| v.is_finite())
    }
}

/// Sample mean and symmetrised sample covariance (denominator `n - 1`) of
/// the rows of `features`.
pub fn gaussian_stats(features: ArrayView2<'_, f64>) -> Result<GaussianStats> {
    let (n, d) = features.dim();
    if n < 2 {
        return Err(Error::Empty(format!("need at least 2 samples, got {n}")));
    }
    let mut mu = Array1::<f64>::zeros(d);
    for row in features.rows() {
        mu += &row;
    }
    mu /= n as f64;
    let mut sigma = Array2::<f64>::zeros((d, d));
    for row in features.rows() {
        let c = &row - &mu;
        for i in 0..d {
            for j in 0..d {
                sigma[[i, j]] += c[i] * c[j];
            }
        }
    }
    sigma /= (n - 1) as f64;
    let sym = (&sigma + &sigma.t()) * 0.5;
    Ok(GaussianStats { mu, sigma: sym, n })
}

fn to_matrix(a: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

/// Square root of a symmetric positive semi-definite matrix, with negative
/// eigenvalues clipped to zero.
fn sqrt_psd(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let roots = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `‖μ₁−μ₂‖² + tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2})`.
///
/// The trace term uses `tr((√Σ₁ Σ₂ √Σ₁)^{1/2})`, which equals
/// `tr((Σ₁Σ₂)^{1/2})` but stays symmetric, so no complex residue arises.
pub fn frechet_distance(s1: &GaussianStats, s2: &GaussianStats) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return shape_err(format!("feature dims {} vs {}", s1.dim(), s2.dim()));
    }
    if !s1.is_finite() || !s2.is_finite() {
        return Err(Error::NonFinite("Gaussian statistics contain NaN or infinity".into()));
    }
    let mean_term: f64 = (&s1.mu - &s2.mu).iter().map(|v| v * v).sum();
    let a = to_matrix(&s1.sigma);
    let b = to_matrix(&s2.sigma);
    let ra = sqrt_psd(a.clone());
    let inner = &ra * &b * &ra;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum();
    Ok((mean_term + a.trace() + b.trace() - 2.0 * cross).max(0.0))
}

/// Fréchet distance between the feature Gaussians of two clip sets.
pub fn fvd(real: &[ArrayView4<'_, f32>], generated: &[ArrayView4<'_, f32>], net: &VideoFeatureNet) -> Result<f64> {
    if real.is_empty() || generated.is_empty() {
        return Err(Error::Empty("video distance needs clips on both sides".into()));
    }
    let min = net.dim() / 4;
    if real.len() < min || generated.len() < min {
        log::warn!(
            "video distance over {} real / {} generated clips; {} per side recommended",
            real.len(),
            generated.len(),
            min
        );
    }
    let fr = gaussian_stats(net.features(real)?.view())?;
    let fg = gaussian_stats(net.features(generated)?.view())?;
    frechet_distance(&fr, &fg)
}
