//! Synthetic clean/noisy pairs: a harmonic tone with a smooth envelope plus
//! white or pink noise at a prescribed SNR.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{Waveform, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseColor {
    #[default]
    White,
    /// Power spectral density falling as `1 / f`.
    Pink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Fundamental frequency range in Hz.
    pub f0_range_hz: [f64; 2],
    pub harmonics: usize,
    pub noise_color: NoiseColor,
    /// SNR range in dB; the SNR of each pair is drawn uniformly from it.
    pub snr_db_range: [f64; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            duration_s: 1.0,
            sample_rate: DEFAULT_SAMPLE_RATE,
            f0_range_hz: [120.0, 300.0],
            harmonics: 8,
            noise_color: NoiseColor::White,
            snr_db_range: [0.0, 10.0],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config("synth duration must be positive".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("synth sample rate must be positive".into()));
        }
        let [f_lo, f_hi] = self.f0_range_hz;
        if !(f_lo > 0.0 && f_lo <= f_hi) {
            return Err(Error::Config("f0 range must be positive and ordered".into()));
        }
        let [s_lo, s_hi] = self.snr_db_range;
        if !(s_lo.is_finite() && s_hi.is_finite() && s_lo <= s_hi) {
            return Err(Error::Config("SNR range must be finite and ordered".into()));
        }
        if self.harmonics == 0 {
            return Err(Error::Config("at least one harmonic is required".into()));
        }
        if self.n_samples() < 2 {
            return Err(Error::Config("synth duration is shorter than two samples".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub clean: Waveform,
    pub noisy: Waveform,
    /// The additive noise actually mixed in, `noisy - clean`.
    pub noise: Vec<f64>,
    pub snr_db: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn colored_noise<R: Rng + ?Sized>(n: usize, color: NoiseColor, rng: &mut R) -> Vec<f64> {
    let white: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    match color {
        NoiseColor::White => white,
        NoiseColor::Pink => {
            let mut planner = FftPlanner::new();
            let mut buf: Vec<Complex64> = white.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            planner.plan_fft_forward(n).process(&mut buf);
            buf[0] = Complex64::new(0.0, 0.0);
            for (k, c) in buf.iter_mut().enumerate().skip(1) {
                // mirror so the shaping stays Hermitian
                let f = k.min(n - k) as f64;
                *c /= f.sqrt();
            }
            planner.plan_fft_inverse(n).process(&mut buf);
            buf.iter().map(|c| c.re / n as f64).collect()
        }
    }
}

/// Draws one clean/noisy pair. The noise is scaled so that
/// `10 log10(|clean|^2 / |noise|^2)` equals the drawn SNR.
pub fn synth_pair<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<SynthPair> {
    cfg.validate()?;
    let n = cfg.n_samples();
    let sr = cfg.sample_rate as f64;
    let f0 = uniform(rng, cfg.f0_range_hz);
    let decay: f64 = rng.random_range(0.5..0.85);
    let vibrato_hz: f64 = rng.random_range(2.0..6.0);
    let nyquist = 0.5 * sr;
    let partials: Vec<(f64, f64, f64)> = (1..=cfg.harmonics)
        .filter(|&h| h as f64 * f0 < nyquist)
        .map(|h| {
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (h as f64 * f0, decay.powi(h as i32 - 1), phase)
        })
        .collect();

    let fade = (0.05 * n as f64).max(1.0);
    let clean: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let ramp_in = (i as f64 / fade).min(1.0);
            let ramp_out = ((n - 1 - i) as f64 / fade).min(1.0);
            let env = ramp_in.min(ramp_out) * (1.0 + 0.3 * (std::f64::consts::TAU * vibrato_hz * t).sin());
            let tone: f64 = partials
                .iter()
                .map(|&(f, a, p)| a * (std::f64::consts::TAU * f * t + p).sin())
                .sum();
            0.25 * env * tone
        })
        .collect();

    let snr_db = uniform(rng, cfg.snr_db_range);
    let raw = colored_noise(n, cfg.noise_color, rng);
    let clean_energy: f64 = clean.iter().map(|v| v * v).sum();
    let raw_energy: f64 = raw.iter().map(|v| v * v).sum();
    let gain = (clean_energy / (raw_energy * 10f64.powf(snr_db / 10.0))).sqrt();
    let noise: Vec<f64> = raw.iter().map(|v| gain * v).collect();
    let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(c, w)| c + w).collect();

    Ok(SynthPair {
        clean: Waveform::new(clean, cfg.sample_rate)?,
        noisy: Waveform::new(noisy, cfg.sample_rate)?,
        noise,
        snr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::stft;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixed_snr_is_exact() {
        let cfg = SynthConfig {
            snr_db_range: [10.0, 10.0],
            ..SynthConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for color in [NoiseColor::White, NoiseColor::Pink] {
            let cfg = SynthConfig {
                noise_color: color,
                ..cfg.clone()
            };
            let pair = synth_pair(&cfg, &mut rng).unwrap();
            let en: f64 = pair.noise.iter().map(|v| v * v).sum();
            let measured = 10.0 * (pair.clean.energy() / en).log10();
            assert!((measured - 10.0).abs() < 1e-6, "{color:?}: {measured}");
        }
    }

    #[test]
    fn same_seed_same_pair() {
        let cfg = SynthConfig::default();
        let a = synth_pair(&cfg, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = synth_pair(&cfg, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
        let c = synth_pair(&cfg, &mut ChaCha8Rng::seed_from_u64(43)).unwrap();
        assert_ne!(a.clean, c.clean);
    }

    fn mean_periodogram(noise: &[f64]) -> Vec<f64> {
        let w = Waveform::new(noise.to_vec(), 16_000).unwrap();
        let s = stft(&w, 256, 64).unwrap();
        let frames = s.n_frames() - 8;
        (0..s.n_bins())
            .map(|k| (4..4 + frames).map(|m| s.data[[m, k]].norm_sqr()).sum::<f64>() / frames as f64)
            .collect()
    }

    #[test]
    fn white_noise_is_flat_and_pink_is_not() {
        let cfg = SynthConfig {
            duration_s: 8.0,
            ..SynthConfig::default()
        };
        let pair = synth_pair(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let p = mean_periodogram(&pair.noise);
        let inner = &p[2..p.len() - 2];
        let mean = inner.iter().sum::<f64>() / inner.len() as f64;
        // ~2000 frames with 4x overlap: relative sd of each bin is about 4%
        for (k, v) in inner.iter().enumerate() {
            assert!((v / mean - 1.0).abs() < 0.25, "bin {}: {}", k + 2, v / mean);
        }

        let pink = synth_pair(
            &SynthConfig {
                noise_color: NoiseColor::Pink,
                ..cfg
            },
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        let p = mean_periodogram(&pink.noise);
        assert!(p[4] > 10.0 * p[100]);
    }

    #[test]
    fn invalid_config() {
        let bad = SynthConfig {
            snr_db_range: [10.0, 0.0],
            ..SynthConfig::default()
        };
        assert!(synth_pair(&bad, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let bad = SynthConfig {
            duration_s: 0.0,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
