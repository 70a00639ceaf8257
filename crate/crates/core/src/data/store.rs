//! On-disk layout for raw videos and clip stores.
//!
//! A raw store holds `video_NNNN/` directories with `frame_NNNN.png` files and
//! an `annotations.json` list. A clip store holds one directory per clip with
//! `frame_NN.png` files and an `annotation.json`. Both carry a `manifest.json`
//! at the root.

use std::fs;
use std::path::Path;

use image::RgbImage;
use ndarray::{Array3, Array4, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use super::{Clip, FrameAnnotation, RawVideo, SynthSpec};
use crate::conditioning::ActionTriplet;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawManifest {
    pub generator: SynthSpec,
    pub seed: u64,
    pub videos: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub clips: Vec<String>,
    /// The raw store's generator spec.
    pub generator: Option<SynthSpec>,
    pub seed: Option<u64>,
    pub cut_threshold: f64,
    pub clip_len: usize,
}

#[derive(Serialize, Deserialize)]
struct ClipAnnotation {
    triplets: Vec<Vec<ActionTriplet>>,
    phase: Vec<i32>,
    common_triplet: ActionTriplet,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_png(path: &Path, frame: ArrayView3<'_, f32>) -> Result<()> {
    let (c, h, w) = frame.dim();
    if c != 3 {
        return Err(Error::Shape(format!("expected RGB frame, got {c} channels")));
    }
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let px = |ch: usize| (frame[[ch, y as usize, x as usize]].clamp(0.0, 1.0) * 255.0).round() as u8;
        image::Rgb([px(0), px(1), px(2)])
    });
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_png(path: impl AsRef<Path>) -> Result<Array3<f32>> {
    let img = image::open(path.as_ref())?.to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Array3::from_shape_fn((3, h as usize, w as usize), |(c, y, x)| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    }))
}

fn read_frames(dir: &Path, names: impl Iterator<Item = String>) -> Result<Array4<f32>> {
    let frames = names
        .map(|n| read_png(&dir.join(n)))
        .collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = frames.iter().map(|f| f.view()).collect();
    ndarray::stack(Axis(0), &views).map_err(|e| Error::Shape(format!("{}: {e}", dir.display())))
}

/// Writes `(K, 3, H, W)` frames as `frame_00.png`, `frame_01.png`, ...
pub fn write_frames(dir: impl AsRef<Path>, frames: ndarray::ArrayView4<'_, f32>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, f) in frames.axis_iter(Axis(0)).enumerate() {
        write_png(&dir.join(format!("frame_{i:02}.png")), f)?;
    }
    Ok(())
}

/// Reads `frame_00.png`, `frame_01.png`, ... until the first gap.
pub fn read_frames_dir(dir: impl AsRef<Path>) -> Result<Array4<f32>> {
    let dir = dir.as_ref();
    let n = (0..).take_while(|i| dir.join(format!("frame_{i:02}.png")).exists()).count();
    if n == 0 {
        return Err(Error::Empty(format!("no frames in {}", dir.display())));
    }
    read_frames(dir, (0..n).map(|i| format!("frame_{i:02}.png")))
}

pub fn write_raw_store(dir: impl AsRef<Path>, videos: &[RawVideo], generator: SynthSpec, seed: u64) -> Result<RawManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(videos.len());
    for (v, video) in videos.iter().enumerate() {
        let name = format!("video_{v:04}");
        let vdir = dir.join(&name);
        fs::create_dir_all(&vdir)?;
        for i in 0..video.len() {
            write_png(&vdir.join(format!("frame_{i:04}.png")), video.frame(i))?;
        }
        write_json(&vdir.join("annotations.json"), &video.annotations)?;
        names.push(name);
    }
    let manifest = RawManifest {
        generator,
        seed,
        videos: names,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_raw_store(dir: impl AsRef<Path>) -> Result<(RawManifest, Vec<RawVideo>)> {
    let dir = dir.as_ref();
    let manifest: RawManifest = read_json(&dir.join(MANIFEST))?;
    let mut videos = Vec::with_capacity(manifest.videos.len());
    for name in &manifest.videos {
        let vdir = dir.join(name);
        let annotations: Vec<FrameAnnotation> = read_json(&vdir.join("annotations.json"))?;
        if annotations.is_empty() {
            return Err(Error::Empty(format!("{} has no frames", vdir.display())));
        }
        let frames = read_frames(&vdir, (0..annotations.len()).map(|i| format!("frame_{i:04}.png")))?;
        videos.push(RawVideo {
            frames,
            annotations,
        });
    }
    Ok((manifest, videos))
}

pub fn write_clip(dir: impl AsRef<Path>, clip: &Clip) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for i in 0..clip.len() {
        write_png(&dir.join(format!("frame_{i:02}.png")), clip.frame(i))?;
    }
    let ann = ClipAnnotation {
        triplets: clip.annotations.iter().map(|a| a.triplets.clone()).collect(),
        phase: clip.annotations.iter().map(|a| a.phase).collect(),
        common_triplet: clip.common_triplet,
    };
    write_json(&dir.join("annotation.json"), &ann)
}

/// Reads the clip stored in `dir`; its id is the directory name.
pub fn read_clip(dir: impl AsRef<Path>) -> Result<Clip> {
    let dir = dir.as_ref();
    let ann: ClipAnnotation = read_json(&dir.join("annotation.json"))?;
    if ann.triplets.len() != ann.phase.len() || ann.triplets.is_empty() {
        return Err(Error::Shape(format!(
            "{}: {} triplet lists, {} phases",
            dir.display(),
            ann.triplets.len(),
            ann.phase.len()
        )));
    }
    let frames = read_frames(dir, (0..ann.triplets.len()).map(|i| format!("frame_{i:02}.png")))?;
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Clip {
        id,
        frames,
        annotations: ann
            .triplets
            .into_iter()
            .zip(ann.phase)
            .map(|(triplets, phase)| FrameAnnotation { triplets, phase })
            .collect(),
        common_triplet: ann.common_triplet,
    })
}

/// Writes each clip to a directory named by its id.
pub fn write_clip_store(
    dir: impl AsRef<Path>,
    clips: &[Clip],
    generator: Option<SynthSpec>,
    seed: Option<u64>,
    cut_threshold: f64,
) -> Result<ClipManifest> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut names: Vec<String> = Vec::with_capacity(clips.len());
    for clip in clips {
        if clip.id.is_empty() || clip.id.contains(['/', '\\']) || names.contains(&clip.id) {
            return Err(Error::Config(format!("unusable clip id {:?}", clip.id)));
        }
        write_clip(dir.join(&clip.id), clip)?;
        names.push(clip.id.clone());
    }
    let manifest = ClipManifest {
        clips: names,
        generator,
        seed,
        cut_threshold,
        clip_len: clips.first().map_or(super::DEFAULT_CLIP_LEN, |c| c.len()),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_clip_store(dir: impl AsRef<Path>) -> Result<(ClipManifest, Vec<Clip>)> {
    let dir = dir.as_ref();
    let manifest: ClipManifest = read_json(&dir.join(MANIFEST))?;
    let clips = manifest
        .clips
        .iter()
        .map(|name| read_clip(dir.join(name)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, clips))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{preprocess, synth_video, PreprocessConfig};

    #[test]
    fn png_quantization_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = Array3::from_shape_fn((3, 4, 5), |(c, y, x)| ((c * 20 + y * 5 + x) as f32) / 255.0);
        let p = dir.path().join("f.png");
        write_png(&p, f.view()).unwrap();
        let back = read_png(&p).unwrap();
        assert!(f.iter().zip(back.iter()).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn frames_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let f = Array4::from_shape_fn((3, 3, 4, 4), |(k, c, y, x)| ((k + c + y + x) * 10) as f32 / 255.0);
        write_frames(dir.path(), f.view()).unwrap();
        let back = read_frames_dir(dir.path()).unwrap();
        assert!(f.iter().zip(back.iter()).all(|(a, b)| (a - b).abs() < 1e-6));
        assert!(read_frames_dir(dir.path().join("missing")).is_err());
    }

    #[test]
    fn raw_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            num_segments: 1,
            segment_len: 7,
            height: 16,
            width: 16,
            ..SynthSpec::default()
        };
        let v = synth_video(&spec, 0).unwrap();
        write_raw_store(dir.path(), std::slice::from_ref(&v), spec, 0).unwrap();
        let (m, back) = read_raw_store(dir.path()).unwrap();
        assert_eq!(m.videos, vec!["video_0000"]);
        assert_eq!(back[0].annotations, v.annotations);
        assert!(back[0]
            .frames
            .iter()
            .zip(v.frames.iter())
            .all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-6));
    }

    #[test]
    fn clip_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = synth_video(&SynthSpec::default(), 1).unwrap();
        let clips = preprocess(&v, &PreprocessConfig::default());
        assert!(!clips.is_empty());
        let m = write_clip_store(dir.path(), &clips, None, Some(1), 0.27).unwrap();
        let (m2, back) = read_clip_store(dir.path()).unwrap();
        assert_eq!(m, m2);
        assert_eq!(back.len(), clips.len());
        for (a, b) in back.iter().zip(&clips) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.annotations, b.annotations);
            assert_eq!(a.common_triplet, b.common_triplet);
            assert!(a.invariant_violation().is_none());
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let v = synth_video(&SynthSpec::default(), 1).unwrap();
        let clips = preprocess(&v, &PreprocessConfig::default());
        let twice = vec![clips[0].clone(), clips[0].clone()];
        assert!(write_clip_store(dir.path(), &twice, None, None, 0.27).is_err());
    }
}
