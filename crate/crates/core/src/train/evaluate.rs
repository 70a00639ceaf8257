use std::collections::BTreeSet;

use ndarray::{Array4, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::conditioning::ActionTriplet;
use crate::data::Clip;
use crate::error::{shape_err, Error, Result};
use crate::metrics::{fvd, lpips_proxy, psnr, ssim_video, FeatureNet, MetricsReport, SsimConfig, VideoFeatureNet};
use crate::pipeline::{ModelBundle, DEFAULT_SAMPLING_STEPS};

/// Anything that turns (first frame, triplet, seed) into a clip.
pub trait ClipGenerator {
    fn generate(
        &self,
        frames: &[ArrayView3<'_, f32>],
        triplets: &[ActionTriplet],
        seeds: &[u64],
    ) -> Result<Vec<Array4<f32>>>;
}

/// Samples from a trained bundle.
pub struct BundleGenerator<'a> {
    pub bundle: &'a ModelBundle,
    pub steps: usize,
}

impl ClipGenerator for BundleGenerator<'_> {
    fn generate(
        &self,
        frames: &[ArrayView3<'_, f32>],
        triplets: &[ActionTriplet],
        seeds: &[u64],
    ) -> Result<Vec<Array4<f32>>> {
        self.bundle.sample_videos(frames, triplets, self.steps, seeds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub steps: usize,
    pub seed: u64,
    /// Clips generated per call.
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_SAMPLING_STEPS,
            seed: 0,
            batch_size: 16,
        }
    }
}

/// Sampling seed of the `index`-th test clip.
fn clip_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Fails with [`Error::Overlap`] when a test id is also a training id.
pub fn check_disjoint<'a>(
    train_ids: impl IntoIterator<Item = &'a str>,
    test_ids: impl IntoIterator<Item = &'a str>,
) -> Result<()> {
    let train: BTreeSet<&str> = train_ids.into_iter().collect();
    let shared = test_ids.into_iter().filter(|id| train.contains(id)).count();
    if shared > 0 {
        return Err(Error::Overlap(shared));
    }
    Ok(())
}

/// Generates one clip per test clip from its first frame and common triplet
/// and scores it against the ground truth. PSNR, SSIM and the perceptual
/// proxy are computed per clip and averaged; the video distance compares
/// the whole generated set with the whole test set.
pub fn evaluate<G: ClipGenerator + ?Sized>(
    model_name: &str,
    generator: &G,
    test_clips: &[Clip],
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    if test_clips.len() < 2 {
        return Err(Error::Empty(format!(
            "evaluation needs at least 2 test clips, got {}",
            test_clips.len()
        )));
    }
    let mut generated = Vec::with_capacity(test_clips.len());
    let batch = cfg.batch_size.max(1);
    for (chunk_idx, chunk) in test_clips.chunks(batch).enumerate() {
        let frames: Vec<_> = chunk.iter().map(|c| c.frame(0)).collect();
        let triplets: Vec<_> = chunk.iter().map(|c| c.common_triplet).collect();
        let seeds: Vec<_> = (0..chunk.len())
            .map(|i| clip_seed(cfg.seed, chunk_idx * batch + i))
            .collect();
        let out = generator.generate(&frames, &triplets, &seeds)?;
        if out.len() != chunk.len() {
            return shape_err(format!("generator returned {} clips for {}", out.len(), chunk.len()));
        }
        generated.extend(out);
    }
    score(model_name, test_clips, &generated)
}

fn score(model_name: &str, test_clips: &[Clip], generated: &[Array4<f32>]) -> Result<MetricsReport> {
    let perceptual = FeatureNet::default();
    let ssim_cfg = SsimConfig::default();
    let (mut p, mut s, mut l) = (0.0, 0.0, 0.0);
    for (clip, gen) in test_clips.iter().zip(generated) {
        if gen.dim() != clip.frames.dim() {
            return shape_err(format!(
                "generated {:?} for clip {} of shape {:?}",
                gen.dim(),
                clip.id,
                clip.frames.dim()
            ));
        }
        p += psnr(clip.frames.view(), gen.view(), 1.0)?;
        s += ssim_video(clip.frames.view(), gen.view(), &ssim_cfg)?;
        l += lpips_proxy(clip.frames.view(), gen.view(), &perceptual)?;
    }
    let n = test_clips.len() as f64;
    let real: Vec<_> = test_clips.iter().map(|c| c.frames.view()).collect();
    let fake: Vec<_> = generated.iter().map(|g| g.view()).collect();
    Ok(MetricsReport {
        model: model_name.to_string(),
        fvd: fvd(&real, &fake, &VideoFeatureNet::default())?,
        psnr: p / n,
        lpips: l / n,
        ssim: s / n,
        n_clips: test_clips.len(),
    })
}
