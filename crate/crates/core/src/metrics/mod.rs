//! Video quality metrics: PSNR, SSIM, a feature-distance perceptual proxy and
//! a Fréchet video distance over fixed random-weight features.
//!
//! The perceptual and video-distance features come from seeded random
//! convolution towers, not pretrained networks, so their magnitudes are only
//! comparable with each other.

mod features;
mod frechet;
mod pixel;
mod report;

pub use features::{lpips_proxy, FeatureNet, VideoFeatureNet, FEATURE_SEED, FVD_FEATURE_DIM};
pub use frechet::{fvd, frechet_distance, gaussian_stats, GaussianStats};
pub use pixel::{luma, psnr, psnr_with_cap, ssim, ssim_video, SsimConfig, PSNR_CAP_DB};
pub use report::{write_reports, MetricsReport};
