//! Synthetic supervised task for training and probing the fusion front-ends.
//!
//! Each utterance carries one class label. The class is planted as a
//! mean shift `snr · pattern[class]` on the first four columns of the
//! informative stream(s); everything else is seeded Gaussian noise. The
//! spectral stream additionally sits on a constant level (`sf_level`),
//! mimicking the non-zero mean of log-Mel energies. Patterns are unit-norm
//! points `(cos θ, sin θ, cos 2θ, sin 2θ)/√2` with `θ = 2π·class/n_classes`.

pub mod checkpoint;
pub mod model;
pub mod train;

use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub use model::{ModelConfig, ToyModel};
pub use train::{evaluate, mean_gate_weight, probe_accuracy, train, train_probe, TrainConfig};

pub const PLANTED_COLUMNS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Informative {
    Sf,
    Ssl,
    Both,
}

impl FromStr for Informative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sf" => Ok(Informative::Sf),
            "ssl" => Ok(Informative::Ssl),
            "both" => Ok(Informative::Both),
            other => Err(Error::Config(format!(
                "unknown informative stream '{other}' (expected sf, ssl or both)"
            ))),
        }
    }
}

/// Which stream a single-stream probe reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Sf,
    Ssl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDatasetSpec {
    pub n_utts: usize,
    pub frames_per_utt: usize,
    pub n_classes: usize,
    pub dim: usize,
    pub informative: Informative,
    /// Signal scale on the informative stream(s).
    pub snr: f64,
    /// Overrides `snr` on the SSL stream when both streams are informative.
    pub snr_ssl: Option<f64>,
    pub sf_level: f64,
    pub seed: u64,
}

impl Default for ToyDatasetSpec {
    fn default() -> Self {
        Self {
            n_utts: 64,
            frames_per_utt: 20,
            n_classes: 2,
            dim: 8,
            informative: Informative::Sf,
            snr: 5.0,
            snr_ssl: None,
            sf_level: 1.0,
            seed: 0,
        }
    }
}

impl ToyDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.frames_per_utt == 0 {
            return Err(Error::Config("frames_per_utt must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be at least 1".into()));
        }
        if !self.snr.is_finite() || self.snr_ssl.is_some_and(|s| !s.is_finite()) {
            return Err(Error::Config("snr must be finite".into()));
        }
        Ok(())
    }

    fn stream_snr(&self) -> (f64, f64) {
        match self.informative {
            Informative::Sf => (self.snr, 0.0),
            Informative::Ssl => (0.0, self.snr),
            Informative::Both => (self.snr, self.snr_ssl.unwrap_or(self.snr)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub f_sf: Array2<f64>,
    pub f_ssl: Array2<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub utterances: Vec<Utterance>,
    pub n_classes: usize,
    pub dim: usize,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

/// Unit-norm class pattern on the planted columns.
pub fn class_pattern(class: usize, n_classes: usize) -> [f64; PLANTED_COLUMNS] {
    let theta = 2.0 * std::f64::consts::PI * class as f64 / n_classes as f64;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        s * theta.cos(),
        s * theta.sin(),
        s * (2.0 * theta).cos(),
        s * (2.0 * theta).sin(),
    ]
}

fn plant(x: &mut Array2<f64>, class: usize, n_classes: usize, scale: f64) {
    if scale == 0.0 {
        return;
    }
    let pattern = class_pattern(class, n_classes);
    let cols = PLANTED_COLUMNS.min(x.ncols());
    for mut row in x.rows_mut() {
        for j in 0..cols {
            row[j] += scale * pattern[j];
        }
    }
}

/// Labels cycle through the classes (`i mod n_classes`), so any multiple of
/// `n_classes` utterances is balanced.
pub fn make_dataset(spec: &ToyDatasetSpec) -> Result<ToyDataset> {
    spec.validate()?;
    let (snr_sf, snr_ssl) = spec.stream_snr();
    let mut root = SplitMix64::new(spec.seed);
    let (t, d) = (spec.frames_per_utt, spec.dim);
    let utterances = (0..spec.n_utts)
        .map(|i| {
            let mut rng = root.fork();
            let label = i % spec.n_classes;
            let mut f_sf = rng.gaussian_matrix(t, d) + spec.sf_level;
            let mut f_ssl = rng.gaussian_matrix(t, d);
            plant(&mut f_sf, label, spec.n_classes, snr_sf);
            plant(&mut f_ssl, label, spec.n_classes, snr_ssl);
            Utterance { f_sf, f_ssl, label }
        })
        .collect();
    Ok(ToyDataset {
        utterances,
        n_classes: spec.n_classes,
        dim: spec.dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let spec = ToyDatasetSpec::default();
        assert_eq!(make_dataset(&spec).unwrap(), make_dataset(&spec).unwrap());
        let other = ToyDatasetSpec { seed: 1, ..spec.clone() };
        assert_ne!(make_dataset(&spec).unwrap(), make_dataset(&other).unwrap());
    }

    #[test]
    fn balanced_labels() {
        let ds = make_dataset(&ToyDatasetSpec { n_classes: 4, n_utts: 40, ..Default::default() }).unwrap();
        for c in 0..4 {
            assert_eq!(ds.utterances.iter().filter(|u| u.label == c).count(), 10);
        }
    }

    #[test]
    fn patterns_are_unit_and_distinct() {
        for n in 2..7 {
            let ps: Vec<_> = (0..n).map(|c| class_pattern(c, n)).collect();
            for (i, p) in ps.iter().enumerate() {
                let norm: f64 = p.iter().map(|v| v * v).sum();
                assert!((norm - 1.0).abs() < 1e-12);
                for q in &ps[i + 1..] {
                    let dist: f64 = p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum();
                    assert!(dist > 0.1);
                }
            }
        }
    }

    #[test]
    fn signal_lands_only_in_informative_stream() {
        let base = ToyDatasetSpec { snr: 0.0, ..Default::default() };
        let noisy = make_dataset(&base).unwrap();
        let planted = make_dataset(&ToyDatasetSpec { snr: 3.0, ..base.clone() }).unwrap();
        for (a, b) in noisy.utterances.iter().zip(&planted.utterances) {
            assert_eq!(a.f_ssl, b.f_ssl);
            let diff = &b.f_sf - &a.f_sf;
            let p = class_pattern(a.label, 2);
            for row in diff.rows() {
                for j in 0..4 {
                    assert!((row[j] - 3.0 * p[j]).abs() < 1e-12);
                }
                assert!(row.iter().skip(4).all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            ToyDatasetSpec { n_classes: 1, ..Default::default() },
            ToyDatasetSpec { frames_per_utt: 0, ..Default::default() },
            ToyDatasetSpec { snr: f64::NAN, ..Default::default() },
        ] {
            assert!(make_dataset(&spec).is_err());
        }
    }
}
