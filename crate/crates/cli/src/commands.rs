use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use vidgen_core::codec::{pretrain_codec as fit_codec, Codec, CodecConfig, CodecTrainConfig};
use vidgen_core::conditioning::{pretrain_text_encoder, Lexicon, TextEncoder, TextPretrainConfig};
use vidgen_core::data::{
    self, clip_id, read_clip, read_clip_store, read_png, read_raw_store, synth_video, video_seed,
    write_clip_store, write_frames, write_raw_store, PreprocessConfig, SynthSpec,
};
use vidgen_core::metrics::write_reports;
use vidgen_core::pipeline::ModelBundle;
use vidgen_core::rng::seeded;
use vidgen_core::train::{
    check_disjoint, evaluate, run_ablation, write_ablation_csv, write_loss_trace, AblationGrid,
    BundleGenerator, EvalConfig, TrainConfig,
};
use vidgen_core::{ActionTriplet, Clip};

use crate::{
    AblateArgs, EvalArgs, ModelArgs, PreprocessArgs, PretrainCodecArgs, PretrainTextArgs,
    SampleArgs, SynthArgs, TrainArgs,
};

pub fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        num_segments: a.segments,
        segment_len: a.segment_len,
        height: a.height,
        width: a.width,
        include_cuts: !a.no_cuts,
        include_black: a.black,
        include_static: a.idle,
    };
    let videos = (0..a.videos)
        .map(|i| synth_video(&spec, video_seed(a.seed, i)))
        .collect::<vidgen_core::Result<Vec<_>>>()?;
    write_raw_store(&a.out, &videos, spec, a.seed)?;
    log::info!("wrote {} videos to {}", videos.len(), a.out.display());
    Ok(())
}

pub fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let (manifest, videos) =
        read_raw_store(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let cfg = PreprocessConfig {
        cut_threshold: a.cut_threshold,
        clip_len: a.frames,
        stride: a.stride.unwrap_or(a.frames),
        ..PreprocessConfig::default()
    };
    let mut clips = Vec::new();
    for (v, video) in videos.iter().enumerate() {
        for mut clip in data::preprocess(video, &cfg) {
            let start: usize = clip.id.trim_start_matches('f').parse()?;
            clip.id = clip_id(manifest.seed, v, start);
            clips.push(clip);
        }
    }
    write_clip_store(&a.out, &clips, Some(manifest.generator), Some(manifest.seed), a.cut_threshold)?;
    log::info!("wrote {} clips from {} videos to {}", clips.len(), videos.len(), a.out.display());
    Ok(())
}

fn load_clips(dir: &Path) -> Result<Vec<Clip>> {
    let (_, clips) = read_clip_store(dir).with_context(|| format!("reading clip store {}", dir.display()))?;
    if clips.is_empty() {
        bail!("clip store {} is empty", dir.display());
    }
    Ok(clips)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn pretrain_codec(a: &PretrainCodecArgs) -> Result<()> {
    let clips = load_clips(&a.data)?;
    let config = if a.identity {
        CodecConfig::identity(a.latent_channels)
    } else {
        CodecConfig {
            factor: a.factor,
            latent_channels: a.latent_channels,
            hidden: a.hidden,
            identity: false,
        }
    };
    let train = CodecTrainConfig {
        iterations: a.iterations,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
    };
    let (codec, losses) = fit_codec(&clips, config, &train)?;
    ensure_parent(&a.out)?;
    codec.save(&a.out)?;
    write_loss_trace(sibling(&a.out, "_loss.csv"), &losses)?;
    if let Some(last) = losses.last() {
        log::info!("codec loss {:.5} -> {last:.5}", losses[0]);
    }
    Ok(())
}

pub fn pretrain_text(a: &PretrainTextArgs) -> Result<()> {
    let clips = load_clips(&a.data)?;
    let lexicon = match &a.lexicon {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::default(),
    };
    let cfg = TextPretrainConfig {
        dim: a.dim,
        iterations: a.iterations,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
        ..TextPretrainConfig::default()
    };
    let (encoder, losses) = pretrain_text_encoder(&clips, lexicon, &cfg)?;
    ensure_parent(&a.out)?;
    encoder.save(&a.out)?;
    write_loss_trace(sibling(&a.out, "_loss.csv"), &losses)?;
    if let Some(last) = losses.last() {
        log::info!("contrastive loss {:.4} -> {last:.4}", losses[0]);
    }
    Ok(())
}

fn train_config(m: &ModelArgs) -> Result<TrainConfig> {
    let mut cfg = match &m.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = m.$flag { cfg.$field = v; })*
        };
    }
    set!(iterations => iterations, lr => learning_rate, batch => batch_size, seed => seed,
         base_channels => base_channels, depth => depth, token_dim => token_dim, cond_dim => cond_dim);
    if m.no_temporal {
        cfg.temporal = false;
    }
    if let Some(c) = m.clip_norm {
        cfg.clip_norm = (c > 0.0).then_some(c);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    ensure_parent(path)?;
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = train_config(&a.model)?;
    if let Some(c) = a.conditioning {
        cfg.conditioning = c;
    }
    if let Some(f) = a.fusion {
        cfg.fusion = f;
    }
    if a.checkpoint_every.is_some() {
        cfg.checkpoint_every = a.checkpoint_every;
    }
    cfg.validate()?;
    let clips = load_clips(&a.data)?;
    let codec = Codec::load(&a.codec)?;
    let text = match (&a.text_encoder, cfg.conditioning.uses_text()) {
        (Some(p), true) => Some(TextEncoder::load(p)?),
        (None, true) => bail!("--conditioning {} needs --text-encoder", cfg.conditioning.as_str()),
        _ => None,
    };
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("config.json"), &cfg)?;
    let out = vidgen_core::train::train(&cfg, &clips, codec, text, Some(&a.out))?;
    log::info!(
        "trained {} iterations; final loss {:.5}",
        out.losses.len(),
        out.losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn sample(a: &SampleArgs) -> Result<()> {
    let mut bundle = ModelBundle::load(&a.checkpoint)?;
    if a.frames == 0 || a.frames > bundle.denoiser.config().frames {
        bail!("--frames must be in 1..={}", bundle.denoiser.config().frames);
    }
    bundle.frames = a.frames;
    let (frame, triplet) = match (&a.clip, &a.frame, &a.triplet) {
        (Some(dir), _, _) => {
            let clip = read_clip(dir)?;
            (clip.frame(0).to_owned(), clip.common_triplet)
        }
        (None, Some(png), Some(t)) => (read_png(png)?, t.parse::<ActionTriplet>()?),
        _ => bail!("give either --clip or both --frame and --triplet"),
    };
    let video = bundle.sample_video(frame.view(), triplet, a.steps, a.seed)?;
    write_frames(&a.out, video.view())?;
    log::info!("wrote {} frames to {}", video.dim().0, a.out.display());
    Ok(())
}

fn train_ids(bundle: &ModelBundle) -> Vec<String> {
    bundle.metadata["train_clips"]
        .as_array()
        .map(|ids| ids.iter().filter_map(|v| v.as_str().map(String::from)).collect())
        .unwrap_or_default()
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let bundle = ModelBundle::load(&a.checkpoint)?;
    let clips = load_clips(&a.data)?;
    let train = train_ids(&bundle);
    check_disjoint(train.iter().map(String::as_str), clips.iter().map(|c| c.id.as_str()))?;
    let name = a.model.clone().unwrap_or_else(|| {
        a.checkpoint
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into())
    });
    let generator = BundleGenerator {
        bundle: &bundle,
        steps: a.steps,
    };
    let cfg = EvalConfig {
        steps: a.steps,
        seed: a.seed,
        ..EvalConfig::default()
    };
    let report = evaluate(&name, &generator, &clips, &cfg)?;
    write_reports(&a.out, std::slice::from_ref(&report))?;
    log::info!(
        "fvd {:.3} psnr {:.2} lpips {:.4} ssim {:.4} over {} clips",
        report.fvd,
        report.psnr,
        report.lpips,
        report.ssim,
        report.n_clips
    );
    Ok(())
}

/// Deterministic train/test split by seed.
fn split(mut clips: Vec<Clip>, fraction: f64, seed: u64) -> Result<(Vec<Clip>, Vec<Clip>)> {
    if !(0.0..1.0).contains(&fraction) {
        bail!("--test-fraction must be in [0, 1)");
    }
    clips.shuffle(&mut seeded(seed));
    let n_test = ((clips.len() as f64 * fraction).round() as usize).max(2);
    if n_test >= clips.len() {
        bail!("{} clips are too few to hold out {n_test} for testing", clips.len());
    }
    let train = clips.split_off(n_test);
    Ok((train, clips))
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    let grid: AblationGrid = a.grid.parse()?;
    let base = train_config(&a.model)?;
    let clips = load_clips(&a.data)?;
    let (train, test) = match &a.test_data {
        Some(p) => (clips, load_clips(p)?),
        None => split(clips, a.test_fraction, base.seed)?,
    };
    check_disjoint(train.iter().map(|c| c.id.as_str()), test.iter().map(|c| c.id.as_str()))?;
    let codec = match &a.codec {
        Some(p) => Codec::load(p)?,
        None => {
            log::info!("pretraining codec on {} clips", train.len());
            let cfg = CodecTrainConfig {
                seed: base.seed,
                ..CodecTrainConfig::default()
            };
            fit_codec(&train, CodecConfig::default(), &cfg)?.0
        }
    };
    let text = match (&a.text_encoder, grid.needs_text()) {
        (Some(p), _) => Some(TextEncoder::load(p)?),
        (None, true) => {
            log::info!("pretraining text encoder on {} clips", train.len());
            let cfg = TextPretrainConfig {
                dim: base.token_dim,
                seed: base.seed,
                ..TextPretrainConfig::default()
            };
            Some(pretrain_text_encoder(&train, Lexicon::default(), &cfg)?.0)
        }
        (None, false) => None,
    };
    let eval = EvalConfig {
        steps: a.steps,
        seed: base.seed,
        ..EvalConfig::default()
    };
    let rows = run_ablation(&grid, &base, &train, &test, &codec, text.as_ref(), &eval);
    write_ablation_csv(&a.out, &rows)?;
    let reports: Vec<_> = rows.iter().filter_map(|r| r.report.clone()).collect();
    write_json(&a.out.with_extension("json"), &reports)?;
    let failed = rows.iter().filter(|r| r.report.is_none()).count();
    if failed > 0 {
        log::warn!("{failed} of {} ablation rows failed", rows.len());
    }
    Ok(())
}
