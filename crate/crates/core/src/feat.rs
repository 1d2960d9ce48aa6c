//! The FEAT binary container for feature matrices.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"FEAT"`                         |
//! | 4      | 1    | version, currently `1`                  |
//! | 5      | 4    | `T` (u32), number of frames             |
//! | 9      | 4    | `D` (u32), feature dimension            |
//! | 13     | 4    | frame shift in ms (f32)                 |
//! | 17     | 1    | source tag: 0 = SF, 1 = SSL, 2 = FUSED  |
//! | 18     | 4·T·D| payload, f32, row-major                 |
//!
//! Values are held as `f64` in memory and narrowed to `f32` on write, so a
//! read followed by a write reproduces the input bytes exactly.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FEAT";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamSource {
    Sf,
    Ssl,
    Fused,
}

impl StreamSource {
    pub fn tag(self) -> u8 {
        match self {
            StreamSource::Sf => 0,
            StreamSource::Ssl => 1,
            StreamSource::Fused => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(StreamSource::Sf),
            1 => Some(StreamSource::Ssl),
            2 => Some(StreamSource::Fused),
            _ => None,
        }
    }
}

/// A `T × D` feature stream on a fixed frame clock.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Array2<f64>,
    pub frame_shift_ms: f32,
    pub source: StreamSource,
}

impl FeatureMatrix {
    /// Rejects non-finite entries.
    pub fn new(data: Array2<f64>, frame_shift_ms: f32, source: StreamSource) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite feature value at flat index {pos}"
            )));
        }
        Ok(Self {
            data,
            frame_shift_ms,
            source,
        })
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (t, d) = self.data.dim();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * t * d);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(t as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&self.frame_shift_ms.to_le_bytes());
        out.push(self.source.tag());
        for v in self.data.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
            return Err(Error::format(0, "missing FEAT magic"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(
                bytes.len(),
                format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
            ));
        }
        if bytes[4] != VERSION {
            return Err(Error::format(4, format!("unsupported version {}", bytes[4])));
        }
        let t = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let frame_shift_ms = f32::from_le_bytes(bytes[13..17].try_into().unwrap());
        let source = StreamSource::from_tag(bytes[17])
            .ok_or_else(|| Error::format(17, format!("unknown source tag {}", bytes[17])))?;

        let expected = t
            .checked_mul(d)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::format(5, "T*D overflows"))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() < expected {
            return Err(Error::format(
                bytes.len(),
                format!(
                    "truncated payload: header declares {t}x{d} ({expected} bytes), found {}",
                    payload.len()
                ),
            ));
        }
        if payload.len() > expected {
            return Err(Error::format(
                HEADER_LEN + expected,
                "trailing bytes after payload",
            ));
        }
        let mut values = Vec::with_capacity(t * d);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::InvalidData(format!(
                    "non-finite value at byte {}",
                    HEADER_LEN + 4 * i
                )));
            }
            values.push(v as f64);
        }
        let data = Array2::from_shape_vec((t, d), values)
            .map_err(|e| Error::format(HEADER_LEN, e.to_string()))?;
        Ok(Self {
            data,
            frame_shift_ms,
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
