//! Binary checkpoints for [`ToyModel`].
//!
//! Layout, all little-endian:
//!
//! | size | field                                               |
//! |------|-----------------------------------------------------|
//! | 4    | magic `b"FCKP"`                                     |
//! | 1    | version, currently `1`                              |
//! | 1    | fusion variant tag                                  |
//! | 1    | gating tag: 0 = softmax, 1 = log-softmax            |
//! | 1    | flags: bit 0 = bias                                 |
//! | 4    | kernel size (u32)                                   |
//! | 4    | number of classes (u32)                             |
//! | 4    | fusion dim (u32)                                    |
//! | 4    | SSL input dim of the align block, 0 if absent (u32) |
//! | 4    | number of tensors (u32)                             |
//!
//! followed by one record per tensor: name length (u16), UTF-8 name,
//! rows (u32), cols (u32), and `rows·cols` f32 values, row-major. Weights
//! are narrowed to f32 on write, so save → load → save is byte-stable.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::model::{ModelConfig, ToyModel};
use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, FusionVariant, Gating};
use crate::params::Params;

pub const MAGIC: &[u8; 4] = b"FCKP";
pub const VERSION: u8 = 1;

pub fn to_bytes(cfg: &ModelConfig, model: &ToyModel) -> Vec<u8> {
    let f = &cfg.fusion;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(f.variant.tag());
    out.push(match f.theta {
        Gating::SoftMax => 0,
        Gating::LogSoftMax => 1,
    });
    out.push(u8::from(f.bias));
    for v in [
        f.kernel_size,
        cfg.n_classes,
        f.dim,
        cfg.align_ssl_dim.unwrap_or(0),
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let tensors = model.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
        for v in t.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.bytes.len(), "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<(ModelConfig, ToyModel)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format(0, "bad checkpoint magic"));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let variant = FusionVariant::from_tag(r.u8()?)
        .ok_or_else(|| Error::format(5, "unknown fusion variant tag"))?;
    let theta = match r.u8()? {
        0 => Gating::SoftMax,
        1 => Gating::LogSoftMax,
        _ => return Err(Error::format(6, "unknown gating tag")),
    };
    let bias = r.u8()? & 1 == 1;
    let kernel_size = r.u32()?;
    let n_classes = r.u32()?;
    let dim = r.u32()?;
    let ssl = r.u32()?;
    let cfg = ModelConfig {
        fusion: FusionConfig { variant, dim, theta, kernel_size, bias },
        n_classes,
        align_ssl_dim: (ssl > 0).then_some(ssl),
    };
    let mut model = ToyModel::init(&cfg, 0)?;

    let n = r.u32()?;
    let expected: Vec<(&'static str, (usize, usize))> =
        model.tensors().iter().map(|(name, t)| (*name, t.dim())).collect();
    if n != expected.len() {
        return Err(Error::format(
            r.pos - 4,
            format!("checkpoint holds {n} tensors, configuration needs {}", expected.len()),
        ));
    }
    let mut loaded = Vec::with_capacity(n);
    for (want, shape) in &expected {
        let at = r.pos;
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format(at + 2, "tensor name is not UTF-8"))?;
        if name != *want {
            return Err(Error::format(at, format!("expected tensor '{want}', found '{name}'")));
        }
        let (rows, cols) = (r.u32()?, r.u32()?);
        if (rows, cols) != *shape {
            return Err(Error::format(
                at,
                format!("tensor '{name}' is {rows}x{cols}, expected {}x{}", shape.0, shape.1),
            ));
        }
        let payload = r.take(rows * cols * 4)?;
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("tensor '{name}' holds non-finite values")));
        }
        loaded.push(Array2::from_shape_vec((rows, cols), values).expect("shape checked"));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos, "trailing bytes after checkpoint"));
    }
    for (slot, t) in model.tensors_mut().into_iter().zip(loaded) {
        *slot = t;
    }
    Ok((cfg, model))
}

pub fn save(path: impl AsRef<Path>, cfg: &ModelConfig, model: &ToyModel) -> Result<()> {
    fs::write(path, to_bytes(cfg, model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(ModelConfig, ToyModel)> {
    from_bytes(&fs::read(path)?)
}
