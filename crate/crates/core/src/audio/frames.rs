//! Bridges waveforms and the real vectors the flow models operate on.
//!
//! Each STFT frame becomes one row of interleaved `(re, im)` values, so a clip
//! is a batch of `window + 2` dimensional items. Clips are normalised by the
//! peak of the noisy waveform (the same gain is applied to the clean target)
//! and spectra by `1 / sqrt(window)`, which keeps coefficients near unit
//! scale for any window size. The gain is undone on the way back.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{istft, stft, synth_pair, ComplexSpectrogram, SynthConfig, Waveform};
use crate::error::{Error, Result};
use crate::model::PairSource;
use crate::paths::PairedBatch;
use crate::sampler::{infer_batch, InferenceConfig, Predictor};

/// STFT framing parameters shared by training and enhancement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameCodec {
    pub window: usize,
    pub hop: usize,
}

/// Frame rows of one clip plus what is needed to invert them.
#[derive(Debug, Clone)]
pub struct EncodedClip {
    pub rows: Array2<f64>,
    layout: ComplexSpectrogram,
    gain: f64,
}

impl FrameCodec {
    pub fn new(window: usize, hop: usize) -> Result<Self> {
        super::check_config(window, hop)?;
        Ok(FrameCodec { window, hop })
    }

    /// Length of one frame vector.
    pub fn dim(&self) -> usize {
        2 * (self.window / 2 + 1)
    }

    fn spectral_scale(&self) -> f64 {
        (self.window as f64).sqrt().recip()
    }

    /// Peak-normalising gain for a noisy clip.
    pub fn gain_for(noisy: &Waveform) -> f64 {
        let peak = noisy.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        if peak > 0.0 {
            peak.recip()
        } else {
            1.0
        }
    }

    /// Encodes `w` with an explicit `gain`.
    pub fn encode_with_gain(&self, w: &Waveform, gain: f64) -> Result<EncodedClip> {
        let spec = stft(w, self.window, self.hop)?;
        let scale = gain * self.spectral_scale();
        let mut rows = Array2::zeros((spec.n_frames(), self.dim()));
        for (mut row, frame) in rows.rows_mut().into_iter().zip(spec.data.rows()) {
            for (k, c) in frame.iter().enumerate() {
                row[2 * k] = scale * c.re;
                row[2 * k + 1] = scale * c.im;
            }
        }
        Ok(EncodedClip {
            rows,
            layout: spec,
            gain,
        })
    }

    pub fn encode(&self, noisy: &Waveform) -> Result<EncodedClip> {
        self.encode_with_gain(noisy, Self::gain_for(noisy))
    }

    /// Inverts frame rows laid out like `clip`.
    pub fn decode(&self, clip: &EncodedClip, rows: ArrayView2<'_, f64>) -> Result<Waveform> {
        if rows.dim() != clip.rows.dim() {
            return Err(Error::DimensionMismatch {
                expected: clip.rows.len(),
                actual: rows.len(),
            });
        }
        let mut spec = clip.layout.clone();
        let inv = (clip.gain * self.spectral_scale()).recip();
        for (m, row) in rows.rows().into_iter().enumerate() {
            let values: Vec<f64> = row.iter().map(|v| v * inv).collect();
            spec.set_frame_vector(m, &values)?;
        }
        istft(&spec)
    }
}

/// Runs `predictor` over every frame of `noisy` and resynthesises the result.
pub fn enhance_waveform<P: Predictor + ?Sized>(
    predictor: &P,
    codec: &FrameCodec,
    noisy: &Waveform,
    cfg: &InferenceConfig,
) -> Result<Waveform> {
    let clip = codec.encode(noisy)?;
    let out = infer_batch(predictor, clip.rows.view(), cfg)?;
    codec.decode(&clip, out.view())
}

/// Matched clean/noisy frame rows drawn from synthetic clips, used as a
/// training source.
#[derive(Debug, Clone)]
pub struct FrameBank {
    clean: Vec<Vec<f64>>,
    noisy: Vec<Vec<f64>>,
    dim: usize,
}

impl FrameBank {
    /// Synthesises `n_clips` pairs with a generator seeded by `seed`.
    pub fn synthesize(codec: &FrameCodec, synth: &SynthConfig, n_clips: usize, seed: u64) -> Result<Self> {
        if n_clips == 0 {
            return Err(Error::invalid("a frame bank needs at least one clip"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut clean, mut noisy) = (Vec::new(), Vec::new());
        for _ in 0..n_clips {
            let pair = synth_pair(synth, &mut rng)?;
            let gain = FrameCodec::gain_for(&pair.noisy);
            let c = codec.encode_with_gain(&pair.clean, gain)?;
            let n = codec.encode_with_gain(&pair.noisy, gain)?;
            clean.extend(c.rows.rows().into_iter().map(|r| r.to_vec()));
            noisy.extend(n.rows.rows().into_iter().map(|r| r.to_vec()));
        }
        Ok(FrameBank {
            clean,
            noisy,
            dim: codec.dim(),
        })
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }
}

impl PairSource for FrameBank {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_pairs(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<PairedBatch> {
        let (x0, y) = (0..n)
            .map(|_| {
                let i = rng.random_range(0..self.len());
                (self.clean[i].clone(), self.noisy[i].clone())
            })
            .unzip();
        PairedBatch::new(x0, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_is_lossless() {
        let cfg = SynthConfig {
            duration_s: 0.1,
            ..SynthConfig::default()
        };
        let pair = synth_pair(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let codec = FrameCodec::new(128, 32).unwrap();
        let clip = codec.encode(&pair.noisy).unwrap();
        assert_eq!(clip.rows.ncols(), codec.dim());
        let back = codec.decode(&clip, clip.rows.view()).unwrap();
        let err = back
            .samples
            .iter()
            .zip(&pair.noisy.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn bank_rows_are_paired() {
        let cfg = SynthConfig {
            duration_s: 0.05,
            snr_db_range: [60.0, 60.0],
            ..SynthConfig::default()
        };
        let codec = FrameCodec::new(64, 16).unwrap();
        let bank = FrameBank::synthesize(&codec, &cfg, 2, 1).unwrap();
        let batch = bank.sample_pairs(8, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(batch.dim(), 66);
        // at 60 dB SNR the noisy frame is nearly the clean one
        for (x0, y) in batch.iter() {
            let num: f64 = x0.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
            let den: f64 = x0.iter().map(|a| a * a).sum::<f64>().max(1e-12);
            assert!(num / den < 1e-2 || den < 1e-6);
        }
    }
}
