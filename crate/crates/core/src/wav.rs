//! Canonical 44-byte-header PCM16 mono WAV files.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::Waveform;

pub const HEADER_LEN: usize = 44;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// Parses a canonical WAV. Samples are scaled to `[-1, 1)` by `1/32768`.
pub fn decode(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len(), "file shorter than a 44-byte WAV header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::format(0, "missing RIFF tag"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::format(8, "missing WAVE tag"));
    }
    if &bytes[12..16] != b"fmt " || u32_at(bytes, 16) != 16 {
        return Err(Error::format(12, "expected a 16-byte PCM fmt chunk"));
    }
    if u16_at(bytes, 20) != 1 {
        return Err(Error::format(20, "only uncompressed PCM is supported"));
    }
    let channels = u16_at(bytes, 22);
    if channels != 1 {
        return Err(Error::format(22, format!("expected mono, found {channels} channels")));
    }
    let sample_rate = u32_at(bytes, 24);
    if u16_at(bytes, 34) != 16 {
        return Err(Error::format(34, "expected 16 bits per sample"));
    }
    if &bytes[36..40] != b"data" {
        return Err(Error::format(36, "expected data chunk at byte 36"));
    }
    let data_len = u32_at(bytes, 40) as usize;
    let data = &bytes[HEADER_LEN..];
    if data.len() < data_len || data_len % 2 != 0 {
        return Err(Error::format(
            bytes.len(),
            format!("data chunk declares {data_len} bytes, found {}", data.len()),
        ));
    }
    let samples = data[..data_len]
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Waveform::new(samples, sample_rate)
}

/// Writes samples clamped to `[-1, 1]` as PCM16.
pub fn encode(w: &Waveform) -> Vec<u8> {
    let n = w.len();
    let data_len = (2 * n) as u32;
    let sr = w.sample_rate();
    let mut out = Vec::with_capacity(HEADER_LEN + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sr.to_le_bytes());
    out.extend_from_slice(&(sr * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in w.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn read(path: impl AsRef<Path>) -> Result<Waveform> {
    decode(&fs::read(path)?)
}

pub fn write(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    fs::write(path, encode(w))?;
    Ok(())
}
