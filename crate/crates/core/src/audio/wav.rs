//! RIFF/WAVE reader and writer for 16-bit PCM mono.
//!
//! Samples map to integers as `round(x * 32768)` clamped to the i16 range, and
//! back as `q / 32768`.

use std::fs;
use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

const PCM_SCALE: f64 = 32768.0;

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Parses a WAV file image; `path` is only used in error messages.
pub fn decode_wav(bytes: &[u8], path: &Path) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed(path, "missing RIFF/WAVE header"));
    }
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                malformed(
                    path,
                    format!("chunk {:?} overruns the file", String::from_utf8_lossy(id)),
                )
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(malformed(path, "fmt chunk shorter than 16 bytes"));
                }
                format = Some((u16_at(body, 0), u16_at(body, 2), u32_at(body, 4), u16_at(body, 14)));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }
    let (tag, channels, sample_rate, bits) = format.ok_or_else(|| malformed(path, "no fmt chunk"))?;
    let data = data.ok_or_else(|| malformed(path, "no data chunk"))?;
    if tag != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "format tag {tag} (only PCM is supported)"
        )));
    }
    if channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{channels} channels (only mono is supported)"
        )));
    }
    if bits != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{bits}-bit samples (only 16-bit is supported)"
        )));
    }
    if sample_rate == 0 {
        return Err(malformed(path, "zero sample rate"));
    }
    if data.len() % 2 != 0 {
        return Err(malformed(path, "data chunk has an odd byte count"));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / PCM_SCALE)
        .collect();
    Ok(Waveform { samples, sample_rate })
}

/// Canonical 44-byte-header PCM16 mono image of `w`.
pub fn encode_wav(w: &Waveform) -> Result<Vec<u8>> {
    let data_len = w
        .samples
        .len()
        .checked_mul(2)
        .filter(|&n| n <= (u32::MAX - 36) as usize)
        .ok_or_else(|| Error::invalid("waveform too long for a WAV file"))?;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &w.samples {
        if !s.is_finite() {
            return Err(Error::invalid("cannot encode non-finite samples"));
        }
        let q = (s * PCM_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    Ok(out)
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes, path)
}

pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    fs::write(path, encode_wav(w)?).map_err(|e| Error::io(path, e))
}
