//! Procedural stand-in for annotated procedure videos.
//!
//! A video is a run of segments. Each segment shows a coloured target blob
//! and an instrument sprite over a shaded background and carries one fixed
//! triplet. The triplet's verb picks the sprite's motion, which repeats every
//! [`DEFAULT_CLIP_LEN`] frames, so a clip aligned with a segment start sees
//! one full motion cycle.
//!
//! With cuts enabled, consecutive segments alternate between a bright, pale
//! palette and a dark, saturated one with opposite hues, which puts the cut
//! score well above [`DEFAULT_CUT_THRESHOLD`](super::DEFAULT_CUT_THRESHOLD).

use std::f32::consts::TAU;

use ndarray::{Array4, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FrameAnnotation, RawVideo, DEFAULT_CLIP_LEN};
use crate::conditioning::{ActionTriplet, NULL_VERB, NUM_INSTRUMENTS, NUM_PHASES, NUM_TARGETS};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Smallest supported frame side in pixels.
pub const MIN_FRAME_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_segments: usize,
    pub segment_len: usize,
    pub height: usize,
    pub width: usize,
    pub include_cuts: bool,
    pub include_black: bool,
    pub include_static: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_segments: 4,
            segment_len: 14,
            height: 32,
            width: 32,
            include_cuts: true,
            include_black: false,
            include_static: false,
        }
    }
}

impl SynthSpec {
    pub fn num_frames(&self) -> usize {
        self.num_segments * self.segment_len
    }

    fn validate(&self) -> Result<()> {
        if self.num_segments == 0 {
            return Err(Error::Config("num_segments must be at least 1".into()));
        }
        if self.segment_len < DEFAULT_CLIP_LEN {
            return Err(Error::Config(format!(
                "segment_len {} is shorter than a clip ({DEFAULT_CLIP_LEN})",
                self.segment_len
            )));
        }
        if self.height < MIN_FRAME_SIZE || self.width < MIN_FRAME_SIZE {
            return Err(Error::Config(format!(
                "{}x{} frames are below the {MIN_FRAME_SIZE}px sprite size",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

pub(crate) fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[derive(Debug, Clone, Copy)]
struct Palette {
    hue: f32,
    saturation: f32,
    value: f32,
}

#[derive(Debug, Clone)]
struct Segment {
    triplet: ActionTriplet,
    phase: i32,
    palette: Palette,
    target_center: [f32; 2],
    /// Sprite centre for each frame of one motion cycle, `(y, x)`.
    path: Vec<[f32; 2]>,
}

/// Sprite displacement after `k` frames of `verb`'s motion, in units of the
/// per-frame speed.
fn motion_offset(verb: i32, k: usize, toward: [f32; 2]) -> [f32; 2] {
    let k = k as f32;
    let angle = TAU * k / DEFAULT_CLIP_LEN as f32;
    match verb {
        0 => [toward[0] * k, toward[1] * k],
        1 => [-toward[0] * k, -toward[1] * k],
        2 => [0.0, 2.5 * angle.sin()],
        3 => [2.5 * angle.sin(), 0.0],
        4 => [0.0, k],
        5 => [0.0, -k],
        6 => [-k, 0.0],
        7 => [k, 0.0],
        8 => [2.0 * angle.sin(), 2.0 * (angle.cos() - 1.0)],
        _ => [0.0, 0.0],
    }
}

struct Geometry {
    height: f32,
    width: f32,
    sprite_half: f32,
    blob_radius: f32,
    speed: f32,
}

impl Geometry {
    fn new(spec: &SynthSpec) -> Self {
        let side = spec.height.min(spec.width) as f32;
        Self {
            height: spec.height as f32,
            width: spec.width as f32,
            sprite_half: (side / 10.0).max(1.5),
            blob_radius: side / 6.0,
            speed: (side / 16.0).max(1.0),
        }
    }

    fn random_point(&self, rng: &mut ChaCha8Rng, margin: f32) -> [f32; 2] {
        [
            rng.random_range(margin..self.height - margin),
            rng.random_range(margin..self.width - margin),
        ]
    }

    fn path(&self, verb: i32, start: [f32; 2], target: [f32; 2]) -> Vec<[f32; 2]> {
        let d = [target[0] - start[0], target[1] - start[1]];
        let norm = (d[0] * d[0] + d[1] * d[1]).sqrt().max(1e-3);
        let toward = [d[0] / norm, d[1] / norm];
        let m = self.sprite_half;
        (0..DEFAULT_CLIP_LEN)
            .map(|k| {
                let o = motion_offset(verb, k, toward);
                [
                    (start[0] + self.speed * o[0]).clamp(m, self.height - 1.0 - m),
                    (start[1] + self.speed * o[1]).clamp(m, self.width - 1.0 - m),
                ]
            })
            .collect()
    }
}

fn plan_segments(spec: &SynthSpec, geo: &Geometry, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let static_segment = spec
        .include_static
        .then(|| rng.random_range(0..spec.num_segments));
    let base_hue: f32 = rng.random();
    let shared_target = rng.random_range(0..NUM_TARGETS as i32 - 1);
    let shared_center = geo.random_point(rng, geo.blob_radius + 1.0);
    (0..spec.num_segments)
        .map(|s| {
            let palette = if spec.include_cuts {
                let jitter = rng.random_range(-0.08f32..0.08);
                if s % 2 == 0 {
                    Palette {
                        hue: base_hue + jitter,
                        saturation: 0.35,
                        value: 0.9,
                    }
                } else {
                    Palette {
                        hue: base_hue + 0.5 + jitter,
                        saturation: 0.9,
                        value: 0.4,
                    }
                }
            } else {
                Palette {
                    hue: base_hue,
                    saturation: 0.35,
                    value: 0.9,
                }
            };
            let (target, target_center) = if spec.include_cuts {
                (
                    rng.random_range(0..NUM_TARGETS as i32 - 1),
                    geo.random_point(rng, geo.blob_radius + 1.0),
                )
            } else {
                (shared_target, shared_center)
            };
            let instrument = rng.random_range(0..NUM_INSTRUMENTS as i32);
            let verb = if static_segment == Some(s) {
                NULL_VERB
            } else {
                rng.random_range(0..NULL_VERB)
            };
            let start = geo.random_point(rng, geo.sprite_half + 1.0);
            Segment {
                triplet: ActionTriplet::new(instrument, verb, target),
                phase: rng.random_range(0..NUM_PHASES as i32),
                palette,
                target_center,
                path: geo.path(verb, start, target_center),
            }
        })
        .collect()
}

fn blend(px: &mut [f32; 3], color: [f32; 3], alpha: f32) {
    for c in 0..3 {
        px[c] = px[c] * (1.0 - alpha) + color[c] * alpha;
    }
}

fn render(seg: &Segment, k: usize, geo: &Geometry, frame: &mut ndarray::ArrayViewMut3<'_, f32>) {
    let (_, h, w) = frame.dim();
    let target_rgb = hsv_to_rgb(seg.triplet.target as f32 / NUM_TARGETS as f32, 0.7, 0.65);
    let sprite_rgb = hsv_to_rgb(
        seg.triplet.instrument as f32 / NUM_INSTRUMENTS as f32 + 0.08,
        0.9,
        1.0,
    );
    let [sy, sx] = seg.path[k % seg.path.len()];
    let [ty, tx] = seg.target_center;
    for y in 0..h {
        let shade = 0.8 + 0.2 * y as f32 / (h - 1) as f32;
        let bg = hsv_to_rgb(seg.palette.hue, seg.palette.saturation, seg.palette.value * shade);
        for x in 0..w {
            let (fy, fx) = (y as f32, x as f32);
            let mut px = bg;
            let r = ((fy - ty).powi(2) + (fx - tx).powi(2)).sqrt();
            blend(&mut px, target_rgb, (geo.blob_radius + 0.5 - r).clamp(0.0, 1.0));
            let d = (fy - sy).abs().max((fx - sx).abs());
            blend(&mut px, sprite_rgb, (geo.sprite_half + 0.5 - d).clamp(0.0, 1.0));
            for c in 0..3 {
                frame[[c, y, x]] = px[c];
            }
        }
    }
}

/// Renders a video from `spec`; identical `(spec, seed)` give identical
/// videos.
pub fn synth_video(spec: &SynthSpec, seed: u64) -> Result<RawVideo> {
    spec.validate()?;
    let mut rng = seeded(seed);
    let geo = Geometry::new(spec);
    let segments = plan_segments(spec, &geo, &mut rng);
    let n = spec.num_frames();
    let mut frames = Array4::<f32>::zeros((n, 3, spec.height, spec.width));
    let mut annotations = Vec::with_capacity(n);
    for (s, seg) in segments.iter().enumerate() {
        for k in 0..spec.segment_len {
            let i = s * spec.segment_len + k;
            render(seg, k, &geo, &mut frames.index_axis_mut(Axis(0), i));
            let mut triplets = vec![seg.triplet];
            // An occasional idle second instrument, never on a cycle's first
            // frame so it cannot become a clip's common triplet.
            if k % DEFAULT_CLIP_LEN != 0 && rng.random_bool(0.25) {
                let other = (seg.triplet.instrument + rng.random_range(1..NUM_INSTRUMENTS as i32))
                    % NUM_INSTRUMENTS as i32;
                triplets.push(ActionTriplet::new(other, NULL_VERB, seg.triplet.target));
            }
            annotations.push(FrameAnnotation {
                triplets,
                phase: seg.phase,
            });
        }
    }
    if spec.include_black {
        let s = rng.random_range(0..spec.num_segments);
        let run = 3.min(spec.segment_len);
        let offset = rng.random_range(0..=spec.segment_len - run);
        for i in s * spec.segment_len + offset..s * spec.segment_len + offset + run {
            frames.index_axis_mut(Axis(0), i).fill(0.0);
            annotations[i].triplets.clear();
        }
    }
    Ok(RawVideo {
        frames,
        annotations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{content_score, detect_scene_cuts, DEFAULT_CUT_THRESHOLD};

    #[test]
    fn hsv_round_trip() {
        for &(h, s, v) in &[(0.1f32, 0.5f32, 0.7f32), (0.6, 0.9, 0.3), (0.95, 0.2, 1.0)] {
            let [r, g, b] = hsv_to_rgb(h, s, v);
            let (h2, s2, v2) = crate::data::rgb_to_hsv(r, g, b);
            assert!((h - h2).abs() < 1e-5 && (s - s2).abs() < 1e-5 && (v - v2).abs() < 1e-5);
        }
    }

    #[test]
    fn shape_range_and_determinism() {
        let spec = SynthSpec::default();
        let a = synth_video(&spec, 5).unwrap();
        let b = synth_video(&spec, 5).unwrap();
        assert_eq!(a.frames.dim(), (56, 3, 32, 32));
        assert_eq!(a.annotations.len(), 56);
        assert!(a.frames.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(a.annotations.iter().all(|x| x.is_valid()));
        assert_eq!(a, b);
        assert_ne!(a, synth_video(&spec, 6).unwrap());
    }

    #[test]
    fn rejects_small_specs() {
        let spec = SynthSpec {
            height: 8,
            ..SynthSpec::default()
        };
        assert!(synth_video(&spec, 0).is_err());
        let spec = SynthSpec {
            segment_len: 6,
            ..SynthSpec::default()
        };
        assert!(synth_video(&spec, 0).is_err());
    }

    #[test]
    fn single_uncut_segment_has_no_cuts() {
        for seed in 0..10 {
            let spec = SynthSpec {
                num_segments: 1,
                segment_len: 21,
                include_cuts: false,
                ..SynthSpec::default()
            };
            let v = synth_video(&spec, seed).unwrap();
            assert!(detect_scene_cuts(&v, DEFAULT_CUT_THRESHOLD).is_empty());
        }
    }

    #[test]
    fn planted_cuts_clear_threshold_with_margin() {
        for seed in 0..10 {
            let spec = SynthSpec::default();
            let v = synth_video(&spec, seed).unwrap();
            for i in 1..v.len() {
                let score = content_score(v.frame(i - 1), v.frame(i)).unwrap();
                if i % spec.segment_len == 0 {
                    assert!(score >= DEFAULT_CUT_THRESHOLD + 0.1, "seed {seed} frame {i}: {score}");
                } else {
                    assert!(score <= DEFAULT_CUT_THRESHOLD - 0.1, "seed {seed} frame {i}: {score}");
                }
            }
        }
    }

    #[test]
    fn black_and_static_injection() {
        let spec = SynthSpec {
            include_black: true,
            include_static: true,
            ..SynthSpec::default()
        };
        let v = synth_video(&spec, 2).unwrap();
        let black: Vec<usize> = (0..v.len()).filter(|&i| crate::data::is_black(v.frame(i))).collect();
        assert_eq!(black.len(), 3);
        assert!(black.iter().all(|&i| v.annotations[i].triplets.is_empty()));
        assert!(v.annotations.iter().any(|a| a.triplets.first().is_some_and(|t| t.verb == NULL_VERB)));
    }

    #[test]
    fn verb_drives_motion() {
        let spec = SynthSpec {
            num_segments: 1,
            include_cuts: false,
            include_static: true,
            ..SynthSpec::default()
        };
        let v = synth_video(&spec, 4).unwrap();
        assert_eq!(v.annotations[0].triplets[0].verb, NULL_VERB);
        for i in 1..v.len() {
            assert_eq!(v.frame(i), v.frame(0));
        }
    }
}
