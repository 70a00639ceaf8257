use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How per-timestep loss weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LossWeighting {
    /// `w_t = 1`: plain reconstruction error of the clean latent.
    Unit,
    /// `w_t = alpha_bar_t / sigma_t^2`, which turns the clean-latent error of an
    /// ε-predicting network into the plain ε error.
    #[default]
    Snr,
}

/// Schedule hyper-parameters as stored in configs and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    #[serde(default)]
    pub weighting: LossWeighting,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            timesteps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            weighting: LossWeighting::Snr,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        Ok(NoiseSchedule::linear(self.timesteps, self.beta_start, self.beta_end)?
            .with_weighting(self.weighting))
    }
}

/// A discrete variance-preserving noise schedule over timesteps `1..=T`.
///
/// Accessors take the 1-based timestep. `alpha_bar(0)` is 1 by convention so
/// the posterior at `t = 1` has zero variance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sigmas: Vec<f64>,
    weights: Vec<f64>,
}

impl NoiseSchedule {
    /// Betas linearly spaced from `beta_start` to `beta_end`, both inclusive.
    pub fn linear(timesteps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if timesteps == 0 {
            return Err(Error::Config("schedule needs at least one timestep".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
            )));
        }
        let betas = if timesteps == 1 {
            vec![beta_start]
        } else {
            let span = (timesteps - 1) as f64;
            (0..timesteps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / span)
                .collect()
        };
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("schedule needs at least one timestep".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Config(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let sigmas = alpha_bars.iter().map(|ab| (1.0 - ab).sqrt()).collect();
        let weights = vec![1.0; betas.len()];
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
            sigmas,
            weights,
        })
    }

    pub fn with_weighting(mut self, weighting: LossWeighting) -> Self {
        self.weights = match weighting {
            LossWeighting::Unit => vec![1.0; self.betas.len()],
            LossWeighting::Snr => self
                .alpha_bars
                .iter()
                .zip(&self.sigmas)
                .map(|(ab, s)| ab / (s * s))
                .collect(),
        };
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.betas.len() {
            return Err(Error::Config(format!(
                "{} weights for {} timesteps",
                weights.len(),
                self.betas.len()
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    /// Number of timesteps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            return Err(Error::Config(format!(
                "timestep {t} outside 1..={}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.sigmas[t - 1]
        }
    }

    pub fn weight(&self, t: usize) -> f64 {
        self.weights[t - 1]
    }

    /// Standard deviation of the ancestral step's injected noise.
    pub fn posterior_sigma(&self, t: usize) -> f64 {
        let var = self.beta(t) * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t));
        var.max(0.0).sqrt()
    }

    /// Sampling subsequence of `steps` timesteps and the schedule whose steps
    /// jump between them.
    ///
    /// Returns `(respaced, timesteps)`: `timesteps[i]` is the original
    /// timestep the model is queried at when the respaced schedule is at step
    /// `i + 1`; `respaced.alpha_bar(i + 1) == self.alpha_bar(timesteps[i])`.
    pub fn respaced(&self, steps: usize) -> Result<(NoiseSchedule, Vec<usize>)> {
        if steps == 0 || steps > self.len() {
            return Err(Error::Config(format!(
                "sampling steps {steps} outside 1..={}",
                self.len()
            )));
        }
        let total = self.len();
        let timesteps: Vec<usize> = (1..=steps)
            .map(|i| ((i * total) as f64 / steps as f64).round() as usize)
            .collect();
        let mut betas = Vec::with_capacity(steps);
        let mut prev = 1.0;
        for &t in &timesteps {
            let ab = self.alpha_bar(t);
            betas.push(1.0 - ab / prev);
            prev = ab;
        }
        let weights = timesteps.iter().map(|&t| self.weight(t)).collect();
        let respaced = NoiseSchedule::from_betas(betas)?.with_weights(weights)?;
        Ok((respaced, timesteps))
    }
}
