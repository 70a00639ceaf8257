//! Reconstruction quality of a codec pre-trained on the synthetic set,
//! measured on clips from videos it never saw.

use vidgen_core::codec::{pretrain_codec, CodecTrainConfig};
use vidgen_core::data::{preprocess, synth_video, PreprocessConfig, SynthSpec};
use vidgen_core::metrics::psnr;
use vidgen_core::{Clip, CodecConfig};

fn clips(seeds: std::ops::Range<u64>) -> Vec<Clip> {
    seeds
        .flat_map(|s| preprocess(&synth_video(&SynthSpec::default(), s).unwrap(), &PreprocessConfig::default()))
        .collect()
}

#[test]
fn pretrained_codec_reconstructs_held_out_clips() {
    let train = clips(0..8);
    let test = clips(500..504);
    let (codec, losses) = pretrain_codec(&train, CodecConfig::default(), &CodecTrainConfig::default()).unwrap();
    assert!(losses.last().unwrap() < &losses[0]);
    let mut total = 0.0;
    for clip in &test {
        let rec = codec.decode_video(&codec.encode_video(clip.frames.view()).unwrap()).unwrap();
        assert_eq!(rec.dim(), clip.frames.dim());
        total += psnr(rec.view(), clip.frames.view(), 1.0).unwrap();
    }
    let mean = total / test.len() as f64;
    // pilot runs of the default codec land at 25.5 to 26.2 dB
    assert!(mean >= 25.0, "held-out reconstruction PSNR {mean:.2} dB");
}
