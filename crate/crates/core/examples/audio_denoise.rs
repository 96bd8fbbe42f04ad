//! Desk-scale speech-enhancement analog: a predictor trained on complex STFT
//! frames of synthetic harmonic tones in white noise, evaluated with SI-SDR.
//! Writes clean, noisy and enhanced WAV files to the directory given as the
//! first argument (default `audio_demo`).
//!
//! `cargo run --release --example audio_denoise [out_dir] [steps]`

use std::path::PathBuf;

use flowse::audio::{enhance_waveform, si_sdr, synth_pair, write_wav, FrameBank, FrameCodec, SynthConfig};
use flowse::model::train;
use flowse::paths::NoiseDomain;
use flowse::{InferenceConfig, LossKind, PathSpec, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> flowse::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "audio_demo".into()));
    let steps = args.next().and_then(|s| s.parse().ok()).unwrap_or(3000);
    std::fs::create_dir_all(&out).map_err(|e| flowse::Error::Io {
        path: out.clone(),
        source: e,
    })?;

    let synth = SynthConfig {
        duration_s: 0.5,
        ..SynthConfig::default()
    };
    let codec = FrameCodec::new(128, 32)?;
    let bank = FrameBank::synthesize(&codec, &synth, 16, 1)?;
    println!("training on {} frames of dimension {}", bank.len(), codec.dim());

    let path = PathSpec::icfm(0.1)?;
    let cfg = TrainConfig {
        steps,
        noise_domain: NoiseDomain::Complex,
        ..TrainConfig::default()
    };
    let model = train(&cfg, &path, &bank, 2)?.model;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..3 {
        let pair = synth_pair(&synth, &mut rng)?;
        let ode = enhance_waveform(
            &model,
            &codec,
            &pair.noisy,
            &InferenceConfig::ode(path, LossKind::Dp, 10),
        )?;
        let ddp = enhance_waveform(&model, &codec, &pair.noisy, &InferenceConfig::ddp(path, LossKind::Dp))?;
        println!(
            "clip {i}: input SNR {:5.2} dB | SI-SDR noisy {:6.2}  ode-10 {:6.2}  ddp {:6.2} dB",
            pair.snr_db,
            si_sdr(&pair.noisy.samples, &pair.clean.samples)?,
            si_sdr(&ode.samples, &pair.clean.samples)?,
            si_sdr(&ddp.samples, &pair.clean.samples)?,
        );
        write_wav(&out.join(format!("clip{i}_clean.wav")), &pair.clean)?;
        write_wav(&out.join(format!("clip{i}_noisy.wav")), &pair.noisy)?;
        write_wav(&out.join(format!("clip{i}_enhanced.wav")), &ode)?;
    }
    println!("wrote WAV files to {}", out.display());
    Ok(())
}
