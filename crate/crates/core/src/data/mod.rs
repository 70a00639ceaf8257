//! Synthetic procedure videos with triplet annotations, and the pipeline
//! that cuts them into fixed-length training clips.

mod clips;
mod scene;
mod store;
mod synth;

use ndarray::{Array4, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

pub use clips::{extract_clips, filter_static, preprocess, split_scenes, PreprocessConfig};
pub use scene::{content_score, detect_scene_cuts, frame_hsv, rgb_to_hsv, DEFAULT_CUT_THRESHOLD};
pub use store::{
    read_clip, read_clip_store, read_frames_dir, read_png, read_raw_store, write_clip,
    write_clip_store, write_frames, write_raw_store, ClipManifest, RawManifest,
};
pub use synth::{synth_video, SynthSpec, MIN_FRAME_SIZE};

use crate::conditioning::{ActionTriplet, NUM_PHASES};

pub const DEFAULT_CLIP_LEN: usize = 7;

/// Seed of the `index`-th video of a dataset generated from `seed`.
pub fn video_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Dataset-wide clip id: generator seed, video index and start frame.
pub fn clip_id(seed: u64, video: usize, start: usize) -> String {
    format!("s{seed}_v{video:04}_f{start:04}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    /// Zero to three triplets.
    pub triplets: Vec<ActionTriplet>,
    pub phase: i32,
}

impl FrameAnnotation {
    pub fn empty(phase: i32) -> Self {
        Self {
            triplets: Vec::new(),
            phase,
        }
    }

    /// Triplets with no undefined element.
    pub fn defined_triplets(&self) -> impl Iterator<Item = &ActionTriplet> {
        self.triplets.iter().filter(|t| t.is_defined())
    }

    pub fn is_valid(&self) -> bool {
        self.triplets.len() <= 3 && (0..NUM_PHASES as i32).contains(&self.phase)
    }
}

/// An uncut video: `(N, 3, H, W)` frames in `[0, 1]` and one annotation per
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVideo {
    pub frames: Array4<f32>,
    pub annotations: Vec<FrameAnnotation>,
}

impl RawVideo {
    pub fn len(&self) -> usize {
        self.frames.len_of(Axis(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self, i: usize) -> ArrayView3<'_, f32> {
        self.frames.index_axis(Axis(0), i)
    }
}

/// A training clip: consecutive frames sharing `common_triplet`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub id: String,
    pub frames: Array4<f32>,
    pub annotations: Vec<FrameAnnotation>,
    pub common_triplet: ActionTriplet,
}

pub fn is_black(frame: ArrayView3<'_, f32>) -> bool {
    frame.iter().all(|&x| x <= 0.0)
}

impl Clip {
    pub fn len(&self) -> usize {
        self.frames.len_of(Axis(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame(&self, i: usize) -> ArrayView3<'_, f32> {
        self.frames.index_axis(Axis(0), i)
    }

    pub fn height(&self) -> usize {
        self.frames.len_of(Axis(2))
    }

    pub fn width(&self) -> usize {
        self.frames.len_of(Axis(3))
    }

    /// Describes the first violated clip invariant, if any.
    pub fn invariant_violation(&self) -> Option<String> {
        if self.annotations.len() != self.len() || self.is_empty() {
            return Some(format!(
                "{} frames but {} annotations",
                self.len(),
                self.annotations.len()
            ));
        }
        if !self.common_triplet.is_defined() {
            return Some("common triplet is undefined".into());
        }
        for (i, ann) in self.annotations.iter().enumerate() {
            if !ann.is_valid() {
                return Some(format!("frame {i}: malformed annotation"));
            }
            if ann.defined_triplets().next().is_none() {
                return Some(format!("frame {i}: empty triplet list"));
            }
            if !ann.triplets.contains(&self.common_triplet) {
                return Some(format!("frame {i}: common triplet missing"));
            }
            if is_black(self.frame(i)) {
                return Some(format!("frame {i}: all black"));
            }
        }
        None
    }
}
