//! Content-change scoring between frames and hard-cut detection.
//!
//! The score is the mean absolute HSV difference between two frames over all
//! pixels and the three channels. Hue distance is circular and rescaled so
//! that opposite hues are 1 apart; saturation and value are already in
//! `[0, 1]`. The score therefore lies in `[0, 1]`.

use ndarray::{Array3, ArrayView3};

use super::RawVideo;
use crate::error::{shape_err, Result};

pub const DEFAULT_CUT_THRESHOLD: f64 = 0.27;

/// RGB in `[0, 1]` to `(hue, saturation, value)` with hue in `[0, 1)`.
pub fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, s, v);
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    ((h / 6.0).rem_euclid(1.0), s, v)
}

/// `(3, H, W)` RGB frame to a `(3, H, W)` HSV frame.
pub fn frame_hsv(frame: ArrayView3<'_, f32>) -> Array3<f32> {
    let (_, h, w) = frame.dim();
    let mut out = Array3::zeros((3, h, w));
    for y in 0..h {
        for x in 0..w {
            let (hh, s, v) = rgb_to_hsv(frame[[0, y, x]], frame[[1, y, x]], frame[[2, y, x]]);
            out[[0, y, x]] = hh;
            out[[1, y, x]] = s;
            out[[2, y, x]] = v;
        }
    }
    out
}

fn hsv_score(a: &Array3<f32>, b: &Array3<f32>) -> f64 {
    let (_, h, w) = a.dim();
    let mut total = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let dh = (a[[0, y, x]] - b[[0, y, x]]).abs() as f64;
            let dh = 2.0 * dh.min(1.0 - dh);
            let ds = (a[[1, y, x]] - b[[1, y, x]]).abs() as f64;
            let dv = (a[[2, y, x]] - b[[2, y, x]]).abs() as f64;
            total += dh + ds + dv;
        }
    }
    total / (3 * h * w) as f64
}

pub fn content_score(a: ArrayView3<'_, f32>, b: ArrayView3<'_, f32>) -> Result<f64> {
    if a.dim() != b.dim() {
        return shape_err(format!("frames {:?} vs {:?}", a.dim(), b.dim()));
    }
    if a.dim().0 != 3 {
        return shape_err(format!("expected RGB frames, got {:?}", a.dim()));
    }
    Ok(hsv_score(&frame_hsv(a), &frame_hsv(b)))
}

/// Indices `i` with `content_score(frame[i-1], frame[i]) > threshold`, ascending.
pub fn detect_scene_cuts(video: &RawVideo, threshold: f64) -> Vec<usize> {
    let hsv: Vec<Array3<f32>> = (0..video.len()).map(|i| frame_hsv(video.frame(i))).collect();
    (1..hsv.len())
        .filter(|&i| hsv_score(&hsv[i - 1], &hsv[i]) > threshold)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn hsv_reference_colors() {
        assert_eq!(rgb_to_hsv(1.0, 0.0, 0.0), (0.0, 1.0, 1.0));
        let (h, s, v) = rgb_to_hsv(0.0, 1.0, 0.0);
        assert!((h - 1.0 / 3.0).abs() < 1e-6 && s == 1.0 && v == 1.0);
        let (h, ..) = rgb_to_hsv(0.0, 0.0, 1.0);
        assert!((h - 2.0 / 3.0).abs() < 1e-6);
        let (h, ..) = rgb_to_hsv(1.0, 0.0, 0.5);
        assert!((h - 11.0 / 12.0).abs() < 1e-6);
        assert_eq!(rgb_to_hsv(0.5, 0.5, 0.5), (0.0, 0.0, 0.5));
    }

    #[test]
    fn identical_frames_score_zero() {
        let a = Array3::from_shape_fn((3, 4, 4), |(c, y, x)| (c + y + x) as f32 / 10.0);
        assert_eq!(content_score(a.view(), a.view()).unwrap(), 0.0);
    }

    #[test]
    fn black_vs_white_is_one_third() {
        let black = Array3::<f32>::zeros((3, 4, 4));
        let white = Array3::<f32>::ones((3, 4, 4));
        let s = content_score(black.view(), white.view()).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hue_distance_wraps() {
        // hue 0.05 vs 0.95 are 0.1 apart on the circle
        let mk = |h: f32| {
            let mut f = Array3::<f32>::zeros((3, 1, 1));
            // pure hues on the red side: red = 1, blue carries the offset
            if h < 0.5 {
                f[[0, 0, 0]] = 1.0;
                f[[1, 0, 0]] = h * 6.0;
            } else {
                f[[0, 0, 0]] = 1.0;
                f[[2, 0, 0]] = (1.0 - h) * 6.0;
            }
            f
        };
        let s = content_score(mk(0.05).view(), mk(0.95).view()).unwrap();
        assert!((s - 0.2 / 3.0).abs() < 1e-6, "{s}");
    }

    #[test]
    fn shape_mismatch() {
        let a = Array3::<f32>::zeros((3, 4, 4));
        let b = Array3::<f32>::zeros((3, 4, 5));
        assert!(content_score(a.view(), b.view()).is_err());
    }
}
