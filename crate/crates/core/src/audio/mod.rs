//! Desk-scale audio front end: complex STFT, SI-SDR, synthetic clean/noisy
//! pairs and 16-bit PCM WAV files.

mod frames;
mod metrics;
mod stft;
mod synth;
mod wav;

pub use frames::{enhance_waveform, EncodedClip, FrameBank, FrameCodec};
pub use metrics::{si_sdr, SI_SDR_CLIP_DB};
pub use stft::{check_config, hann_periodic, istft, stft, ComplexSpectrogram, DEFAULT_HOP, DEFAULT_WINDOW};
pub use synth::{synth_pair, NoiseColor, SynthConfig, SynthPair};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono audio samples, nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("waveform contains non-finite samples"));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }
}
