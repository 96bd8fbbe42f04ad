//! Hann-windowed short-time Fourier transform with least-squares overlap-add
//! inversion.
//!
//! The signal is zero-padded by `window / 2` on both sides so frame `m` is
//! centred on sample `m * hop`. Frames hold the one-sided spectrum
//! (`window / 2 + 1` bins) of an unnormalised DFT.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Waveform;
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 512;
pub const DEFAULT_HOP: usize = 128;

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Checks that `window`/`hop` is a valid Hann configuration: power-of-two
/// window, `0 < hop <= window`, and constant overlap-add of the window.
pub fn check_config(window: usize, hop: usize) -> Result<()> {
    if window < 2 || !window.is_power_of_two() {
        return Err(Error::invalid(format!(
            "STFT window must be a power of two >= 2, got {window}"
        )));
    }
    if hop == 0 || hop > window {
        return Err(Error::invalid(format!("STFT hop must lie in 1..={window}, got {hop}")));
    }
    let w = hann_periodic(window);
    let sums: Vec<f64> = (0..hop).map(|n| w.iter().skip(n).step_by(hop).sum()).collect();
    let (lo, hi) = sums.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
        (lo.min(s), hi.max(s))
    });
    if hi - lo > 1e-9 * hi.abs().max(1.0) {
        return Err(Error::invalid(format!(
            "Hann window {window} with hop {hop} does not satisfy constant overlap-add"
        )));
    }
    Ok(())
}

/// Complex STFT frames (`frames x bins`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub data: Array2<Complex64>,
    pub window: usize,
    pub hop: usize,
    /// Length of the waveform the frames were computed from.
    pub n_samples: usize,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.data.ncols()
    }

    /// Number of frames `stft` produces for a signal of `n_samples`.
    pub fn frames_for(n_samples: usize, hop: usize) -> usize {
        n_samples.div_ceil(hop) + 1
    }

    /// A spectrogram of zeros with the layout `stft` would produce.
    pub fn zeros(n_samples: usize, window: usize, hop: usize, sample_rate: u32) -> Result<Self> {
        check_config(window, hop)?;
        Ok(ComplexSpectrogram {
            data: Array2::zeros((Self::frames_for(n_samples, hop), window / 2 + 1)),
            window,
            hop,
            n_samples,
            sample_rate,
        })
    }

    /// Row-major frames flattened to interleaved `(re, im)` reals.
    pub fn to_interleaved(&self) -> Vec<f64> {
        self.data.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    /// Inverse of [`ComplexSpectrogram::to_interleaved`] for a spectrogram of
    /// the same layout as `self`.
    pub fn with_interleaved(&self, values: &[f64]) -> Result<Self> {
        if values.len() != 2 * self.data.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.data.len(),
                actual: values.len(),
            });
        }
        let mut out = self.clone();
        for (c, pair) in out.data.iter_mut().zip(values.chunks_exact(2)) {
            *c = Complex64::new(pair[0], pair[1]);
        }
        Ok(out)
    }

    /// Frame `m` as interleaved `(re, im)` reals.
    pub fn frame_vector(&self, m: usize) -> Vec<f64> {
        self.data.row(m).iter().flat_map(|c| [c.re, c.im]).collect()
    }

    pub fn set_frame_vector(&mut self, m: usize, values: &[f64]) -> Result<()> {
        if values.len() != 2 * self.n_bins() {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.n_bins(),
                actual: values.len(),
            });
        }
        for (c, pair) in self.data.row_mut(m).iter_mut().zip(values.chunks_exact(2)) {
            *c = Complex64::new(pair[0], pair[1]);
        }
        Ok(())
    }

    /// Debug dump: one `frame,bin,re,im` row per coefficient.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "frame,bin,re,im")?;
        for ((m, k), c) in self.data.indexed_iter() {
            writeln!(out, "{m},{k},{:.16e},{:.16e}", c.re, c.im)?;
        }
        Ok(())
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

pub fn stft(w: &Waveform, window: usize, hop: usize) -> Result<ComplexSpectrogram> {
    check_config(window, hop)?;
    let n = w.samples.len();
    let pad = window / 2;
    let frames = ComplexSpectrogram::frames_for(n, hop);
    let padded_len = (frames - 1) * hop + window;
    let mut padded = vec![0.0; padded_len];
    padded[pad..pad + n].copy_from_slice(&w.samples);

    let win = hann_periodic(window);
    let fft = plans(window).forward;
    let bins = window / 2 + 1;
    let mut data = Array2::zeros((frames, bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); window];
    for m in 0..frames {
        let start = m * hop;
        for (j, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(padded[start + j] * win[j], 0.0);
        }
        fft.process(&mut buf);
        for (dst, src) in data.row_mut(m).iter_mut().zip(&buf[..bins]) {
            *dst = *src;
        }
    }
    Ok(ComplexSpectrogram {
        data,
        window,
        hop,
        n_samples: n,
        sample_rate: w.sample_rate,
    })
}

/// Overlap-add inverse: `x = sum_m w * ifft(X_m) / sum_m w^2`.
pub fn istft(s: &ComplexSpectrogram) -> Result<Waveform> {
    check_config(s.window, s.hop)?;
    let (window, hop) = (s.window, s.hop);
    let bins = window / 2 + 1;
    if s.n_bins() != bins {
        return Err(Error::DimensionMismatch {
            expected: bins,
            actual: s.n_bins(),
        });
    }
    if s.n_frames() != ComplexSpectrogram::frames_for(s.n_samples, hop) {
        return Err(Error::invalid("frame count does not match the recorded sample count"));
    }
    let frames = s.n_frames();
    let padded_len = (frames - 1) * hop + window;
    let win = hann_periodic(window);
    let ifft = plans(window).inverse;
    let mut acc = vec![0.0; padded_len];
    let mut env = vec![0.0; padded_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); window];
    let scale = 1.0 / window as f64;
    for m in 0..frames {
        let row = s.data.row(m);
        for k in 0..window {
            buf[k] = if k < bins { row[k] } else { row[window - k].conj() };
        }
        // the one-sided spectrum of a real frame has real DC and Nyquist bins
        buf[0].im = 0.0;
        buf[window / 2].im = 0.0;
        ifft.process(&mut buf);
        let start = m * hop;
        for j in 0..window {
            acc[start + j] += win[j] * buf[j].re * scale;
            env[start + j] += win[j] * win[j];
        }
    }
    let pad = window / 2;
    let samples = (pad..pad + s.n_samples)
        .map(|i| if env[i] > 1e-12 { acc[i] / env[i] } else { 0.0 })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: s.sample_rate,
    })
}
