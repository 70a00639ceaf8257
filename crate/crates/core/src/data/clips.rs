use std::ops::Range;

use ndarray::s;
use serde::{Deserialize, Serialize};

use super::{detect_scene_cuts, is_black, Clip, RawVideo, DEFAULT_CLIP_LEN, DEFAULT_CUT_THRESHOLD};
use crate::conditioning::{ActionTriplet, NULL_VERB};

/// Preprocessing knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub cut_threshold: f64,
    pub clip_len: usize,
    /// Windows start every `stride` frames inside a scene. Equal to
    /// `clip_len` for non-overlapping tiling.
    pub stride: usize,
    /// Verbs that count as "no action" for static-clip removal.
    pub no_action_verbs: Vec<i32>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            cut_threshold: DEFAULT_CUT_THRESHOLD,
            clip_len: DEFAULT_CLIP_LEN,
            stride: DEFAULT_CLIP_LEN,
            no_action_verbs: vec![NULL_VERB],
        }
    }
}

/// Cut-free frame ranges of an `n`-frame video. `cuts` must be sorted.
pub fn split_scenes(n: usize, cuts: &[usize]) -> Vec<Range<usize>> {
    let mut scenes = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for &c in cuts.iter().filter(|&&c| c > 0 && c < n) {
        if c > start {
            scenes.push(start..c);
            start = c;
        }
    }
    if start < n {
        scenes.push(start..n);
    }
    scenes
}

/// Smallest triplet shared by every frame of the window, provided no frame
/// is empty or black.
fn window_triplet(video: &RawVideo, window: Range<usize>) -> Option<ActionTriplet> {
    let mut shared: Option<Vec<ActionTriplet>> = None;
    for i in window {
        if is_black(video.frame(i)) {
            return None;
        }
        let mut set: Vec<ActionTriplet> = video.annotations[i].defined_triplets().copied().collect();
        if set.is_empty() {
            return None;
        }
        set.sort();
        set.dedup();
        shared = Some(match shared {
            None => set,
            Some(prev) => prev.into_iter().filter(|t| set.binary_search(t).is_ok()).collect(),
        });
    }
    shared.and_then(|s| s.into_iter().min())
}

/// Tiles every scene into non-overlapping `clip_len` windows and keeps the
/// windows whose frames share a triplet. Clip ids are `f{start:04}`.
pub fn extract_clips(video: &RawVideo, cuts: &[usize], clip_len: usize) -> Vec<Clip> {
    extract_clips_strided(video, cuts, clip_len, clip_len)
}

pub(crate) fn extract_clips_strided(
    video: &RawVideo,
    cuts: &[usize],
    clip_len: usize,
    stride: usize,
) -> Vec<Clip> {
    let mut clips = Vec::new();
    if clip_len == 0 || stride == 0 || video.annotations.len() != video.len() {
        return clips;
    }
    for scene in split_scenes(video.len(), cuts) {
        let mut start = scene.start;
        while start + clip_len <= scene.end {
            let window = start..start + clip_len;
            if let Some(common) = window_triplet(video, window.clone()) {
                clips.push(Clip {
                    id: format!("f{start:04}"),
                    frames: video.frames.slice(s![window.clone(), .., .., ..]).to_owned(),
                    annotations: video.annotations[window].to_vec(),
                    common_triplet: common,
                });
            }
            start += stride;
        }
    }
    clips
}

fn is_static(clip: &Clip, no_action_verbs: &[i32]) -> bool {
    clip.annotations
        .iter()
        .all(|a| a.triplets.iter().all(|t| no_action_verbs.contains(&t.verb)))
}

/// Drops clips that break a clip invariant and clips in which every triplet
/// of every frame has a no-action verb.
pub fn filter_static(clips: Vec<Clip>, no_action_verbs: &[i32]) -> Vec<Clip> {
    clips
        .into_iter()
        .filter(|c| c.invariant_violation().is_none() && !is_static(c, no_action_verbs))
        .collect()
}

/// Scene cuts, clip extraction and static filtering for one video.
pub fn preprocess(video: &RawVideo, cfg: &PreprocessConfig) -> Vec<Clip> {
    let cuts = detect_scene_cuts(video, cfg.cut_threshold);
    let clips = extract_clips_strided(video, &cuts, cfg.clip_len, cfg.stride);
    filter_static(clips, &cfg.no_action_verbs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FrameAnnotation;
    use ndarray::{Array4, Axis};
    use proptest::prelude::*;

    fn t(i: i32, v: i32, tg: i32) -> ActionTriplet {
        ActionTriplet::new(i, v, tg)
    }

    fn video(anns: Vec<Vec<ActionTriplet>>) -> RawVideo {
        let n = anns.len();
        RawVideo {
            frames: Array4::from_elem((n, 3, 2, 2), 0.5),
            annotations: anns
                .into_iter()
                .map(|triplets| FrameAnnotation { triplets, phase: 0 })
                .collect(),
        }
    }

    #[test]
    fn scenes_partition_frames() {
        assert_eq!(split_scenes(10, &[]), vec![0..10]);
        assert_eq!(split_scenes(10, &[3, 7]), vec![0..3, 3..7, 7..10]);
        assert_eq!(split_scenes(10, &[0, 10]), vec![0..10]);
    }

    #[test]
    fn fourteen_shared_frames_give_two_clips() {
        let v = video(vec![vec![t(1, 2, 3)]; 14]);
        let clips = extract_clips(&v, &[], 7);
        assert_eq!(clips.len(), 2);
        assert!(clips.iter().all(|c| c.common_triplet == t(1, 2, 3)));
        assert_eq!(clips[1].id, "f0007");
        assert!(clips.iter().all(|c| c.invariant_violation().is_none()));
    }

    #[test]
    fn disjoint_frame_drops_window() {
        let mut anns = vec![vec![t(1, 2, 3)]; 7];
        anns[3] = vec![t(0, 0, 0)];
        assert!(extract_clips(&video(anns), &[], 7).is_empty());
    }

    #[test]
    fn lexicographic_minimum_wins() {
        let v = video(vec![vec![t(2, 0, 0), t(1, 5, 5)]; 7]);
        assert_eq!(extract_clips(&v, &[], 7)[0].common_triplet, t(1, 5, 5));
    }

    #[test]
    fn undefined_elements_count_as_empty() {
        let mut anns = vec![vec![t(1, 2, 3)]; 7];
        anns[2] = vec![t(1, -1, 3)];
        assert!(extract_clips(&video(anns), &[], 7).is_empty());
    }

    #[test]
    fn cuts_split_windows() {
        let v = video(vec![vec![t(1, 2, 3)]; 14]);
        assert!(extract_clips(&v, &[5], 7).len() == 1);
        assert!(extract_clips(&v, &[4, 10], 7).is_empty());
    }

    #[test]
    fn black_frame_drops_window() {
        let mut v = video(vec![vec![t(1, 2, 3)]; 7]);
        v.frames.index_axis_mut(Axis(0), 4).fill(0.0);
        assert!(extract_clips(&v, &[], 7).is_empty());
    }

    #[test]
    fn filter_static_rules() {
        let v = video(vec![vec![t(1, 2, 3)]; 7]);
        let good = extract_clips(&v, &[], 7);
        assert_eq!(filter_static(good.clone(), &[NULL_VERB]).len(), 1);

        let mut black = good[0].clone();
        black.frames.index_axis_mut(Axis(0), 0).fill(0.0);
        assert!(filter_static(vec![black], &[NULL_VERB]).is_empty());

        let v = video(vec![vec![t(1, NULL_VERB, 3)]; 7]);
        let idle = extract_clips(&v, &[], 7);
        assert_eq!(idle.len(), 1);
        assert!(filter_static(idle, &[NULL_VERB]).is_empty());
    }

    proptest! {
        #[test]
        fn filter_static_is_idempotent(verbs in proptest::collection::vec(0i32..10, 1..30)) {
            let anns: Vec<_> = verbs.iter().map(|&v| vec![t(0, v, 0)]).collect();
            let clips = extract_clips(&video(anns), &[], 1);
            let once = filter_static(clips, &[NULL_VERB]);
            let twice = filter_static(once.clone(), &[NULL_VERB]);
            prop_assert_eq!(once, twice);
        }
    }
}
