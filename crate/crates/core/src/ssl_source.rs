//! Self-supervised feature streams without a self-supervised model.
//!
//! Features come either from a FEAT file produced elsewhere, or from a
//! seeded Gaussian generator used by the toy experiments.

use std::path::{Path, PathBuf};

use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::feat::{FeatureMatrix, StreamSource};
use crate::rng::SplitMix64;

pub const DEFAULT_SSL_DIM: usize = 1024;
pub const DEFAULT_SSL_SHIFT_MS: f32 = 20.0;

/// Receptive field and hop (in samples at 16 kHz) of the usual wav2vec2/HuBERT
/// convolutional front-end.
pub const SSL_RECEPTIVE_FIELD: usize = 400;
pub const SSL_HOP: usize = 320;

#[derive(Debug, Clone, PartialEq)]
pub enum SslSourceKind {
    File(PathBuf),
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SslSourceConfig {
    pub kind: SslSourceKind,
    pub dim: usize,
    pub frame_shift_ms: f32,
}

impl SslSourceConfig {
    pub fn synthetic(seed: u64, dim: usize) -> Self {
        Self {
            kind: SslSourceKind::Synthetic { seed },
            dim,
            frame_shift_ms: DEFAULT_SSL_SHIFT_MS,
        }
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: SslSourceKind::File(path.into()),
            dim: DEFAULT_SSL_DIM,
            frame_shift_ms: DEFAULT_SSL_SHIFT_MS,
        }
    }

    /// SSL streams are expected to be wider than the spectral stream they are
    /// projected onto. Returns a warning message when they are not.
    pub fn dim_warning(&self, sf_dim: usize) -> Option<String> {
        (self.dim <= sf_dim).then(|| {
            format!(
                "SSL dimension {} is not larger than the spectral dimension {sf_dim}",
                self.dim
            )
        })
    }
}

/// Frame count of an SSL encoder with a 400-sample receptive field and a
/// 320-sample hop, for `n_samples` of 16 kHz audio.
pub fn ssl_frame_count(n_samples: usize) -> usize {
    crate::spectral::frame_count(n_samples, SSL_RECEPTIVE_FIELD, SSL_HOP)
}

/// Reads a FEAT file as the SSL stream. The returned matrix is tagged
/// [`StreamSource::Ssl`] whatever the file header says.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let mut m = FeatureMatrix::load(path)?;
    m.source = StreamSource::Ssl;
    Ok(m)
}

/// Seeded standard-normal features of shape `n_frames × cfg.dim`.
///
/// Entries are drawn row-major from [`SplitMix64::gaussian`] seeded with the
/// config seed. When `injected` (`n_frames × k`) is given, its columns
/// overwrite feature columns `0..k`.
pub fn synth_features(
    cfg: &SslSourceConfig,
    n_frames: usize,
    injected: Option<&Array2<f64>>,
) -> Result<FeatureMatrix> {
    let seed = match cfg.kind {
        SslSourceKind::Synthetic { seed } => seed,
        SslSourceKind::File(_) => {
            return Err(Error::Config(
                "synth_features needs a synthetic source config".into(),
            ))
        }
    };
    if cfg.dim == 0 {
        return Err(Error::Config("SSL dimension must be at least 1".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let mut data = rng.gaussian_matrix(n_frames, cfg.dim);
    if let Some(sig) = injected {
        let (t, k) = sig.dim();
        if t != n_frames || k > cfg.dim {
            return Err(Error::Shape(format!(
                "injected signal is {t}x{k}, features are {n_frames}x{}",
                cfg.dim
            )));
        }
        data.slice_mut(s![.., ..k]).assign(sig);
    }
    FeatureMatrix::new(data, cfg.frame_shift_ms, StreamSource::Ssl)
}

/// Dispatches on the configured source kind.
pub fn features(cfg: &SslSourceConfig, n_frames: usize) -> Result<FeatureMatrix> {
    match &cfg.kind {
        SslSourceKind::File(p) => load_features(p),
        SslSourceKind::Synthetic { .. } => synth_features(cfg, n_frames, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SslSourceConfig::synthetic(42, 16);
        let a = synth_features(&cfg, 10, None).unwrap();
        let b = synth_features(&cfg, 10, None).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(a.frame_shift_ms, 20.0);
        let c = synth_features(&SslSourceConfig::synthetic(43, 16), 10, None).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn zero_frames() {
        let cfg = SslSourceConfig::synthetic(1, DEFAULT_SSL_DIM);
        let m = synth_features(&cfg, 0, None).unwrap();
        assert_eq!(m.data.dim(), (0, 1024));
    }

    #[test]
    fn injected_columns_verbatim() {
        let cfg = SslSourceConfig::synthetic(5, 6);
        let sig = Array2::from_elem((4, 2), 3.5);
        let m = synth_features(&cfg, 4, Some(&sig)).unwrap();
        assert_eq!(m.data.slice(s![.., ..2]), sig);
        let plain = synth_features(&cfg, 4, None).unwrap();
        assert_eq!(m.data.slice(s![.., 2..]), plain.data.slice(s![.., 2..]));
    }

    #[test]
    fn injected_shape_errors() {
        let cfg = SslSourceConfig::synthetic(5, 3);
        assert!(matches!(
            synth_features(&cfg, 4, Some(&Array2::zeros((4, 4)))),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            synth_features(&cfg, 4, Some(&Array2::zeros((3, 2)))),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn file_source_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        let cfg = SslSourceConfig::synthetic(9, 8);
        let m = synth_features(&cfg, 5, None).unwrap();
        m.save(&path).unwrap();
        let loaded = load_features(&path).unwrap();
        assert_eq!(loaded.to_bytes(), m.to_bytes());
        assert_eq!(loaded.source, StreamSource::Ssl);
        assert!(features(&SslSourceConfig::file(&path), 0).is_ok());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_features("/nonexistent/x.feat"),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn ssl_clock_matches_halved_spectral_clock() {
        assert_eq!(ssl_frame_count(16_000), 49);
        assert_eq!(ssl_frame_count(399), 0);
        assert_eq!(ssl_frame_count(400), 1);
    }

    #[test]
    fn dim_warning() {
        assert!(SslSourceConfig::synthetic(0, 64).dim_warning(80).is_some());
        assert!(SslSourceConfig::synthetic(0, 1024).dim_warning(80).is_none());
    }
}
