//! Gate-weight interpretation and the character error reduction rate.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fusion::{GateSource, GateWeights};

/// Rescales each row to sum to 1. Log-softmax gates are exponentiated first.
pub fn normalize_gates(g: &GateWeights) -> Result<GateWeights> {
    if g.normalized {
        return Ok(g.clone());
    }
    let mut w: Array2<f64> = match g.source {
        GateSource::LogSoftMax => g.w.mapv(f64::exp),
        GateSource::SoftMax | GateSource::Raw => g.w.clone(),
    };
    for (i, mut row) in w.rows_mut().into_iter().enumerate() {
        let sum = row.sum();
        if !(sum > 0.0) || !sum.is_finite() || row.iter().any(|v| *v < 0.0) {
            return Err(Error::DegenerateRow { row: i, sum });
        }
        row /= sum;
    }
    Ok(GateWeights {
        w,
        normalized: true,
        source: g.source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryScope {
    Utterance,
    Corpus,
}

impl std::str::FromStr for SummaryScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "utterance" => Ok(SummaryScope::Utterance),
            "corpus" => Ok(SummaryScope::Corpus),
            other => Err(Error::Config(format!(
                "unknown summary scope '{other}' (expected utterance or corpus)"
            ))),
        }
    }
}

/// Statistics of normalised gate weights over a set of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStats {
    pub frames: usize,
    pub mean_w_sf: f64,
    pub mean_w_ssl: f64,
    pub min_w_ssl: f64,
    pub max_w_ssl: f64,
    /// Population variance of per-frame `w_ssl`.
    pub var_w_ssl: f64,
}

fn stats<'a>(rows: impl Iterator<Item = (f64, f64)> + Clone + 'a) -> Option<WeightStats> {
    let mut n = 0usize;
    let (mut s_sf, mut s_ssl) = (0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (sf, ssl) in rows.clone() {
        n += 1;
        s_sf += sf;
        s_ssl += ssl;
        lo = lo.min(ssl);
        hi = hi.max(ssl);
    }
    if n == 0 {
        return None;
    }
    let mean_ssl = s_ssl / n as f64;
    let var = rows.map(|(_, ssl)| (ssl - mean_ssl).powi(2)).sum::<f64>() / n as f64;
    Some(WeightStats {
        frames: n,
        mean_w_sf: s_sf / n as f64,
        mean_w_ssl: mean_ssl,
        min_w_ssl: lo,
        max_w_ssl: hi,
        var_w_ssl: var,
    })
}

/// One entry per utterance, or a single frame-weighted corpus entry.
/// Utterances without frames are skipped in utterance scope.
pub fn weight_summary(gates: &[GateWeights], scope: SummaryScope) -> Result<Vec<WeightStats>> {
    if let Some(i) = gates.iter().position(|g| !g.normalized) {
        return Err(Error::InvalidInput(format!(
            "gate set {i} is not normalized"
        )));
    }
    let frame_pairs = |g: &GateWeights| {
        g.w.rows()
            .into_iter()
            .map(|r| (r[0], r[1]))
            .collect::<Vec<_>>()
    };
    let out: Vec<WeightStats> = match scope {
        SummaryScope::Utterance => gates
            .iter()
            .filter_map(|g| stats(frame_pairs(g).into_iter()))
            .collect(),
        SummaryScope::Corpus => {
            let all: Vec<(f64, f64)> = gates.iter().flat_map(frame_pairs).collect();
            stats(all.into_iter()).into_iter().collect()
        }
    };
    if out.is_empty() {
        return Err(Error::UndefinedMetric(
            "no gate frames to summarise".into(),
        ));
    }
    Ok(out)
}

/// Mean of per-utterance means, each utterance counting once.
pub fn utterance_weighted_mean_w_ssl(gates: &[GateWeights]) -> Result<f64> {
    let per = weight_summary(gates, SummaryScope::Utterance)?;
    Ok(per.iter().map(|s| s.mean_w_ssl).sum::<f64>() / per.len() as f64)
}

/// Character error reduction rate in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cerr {
    pub raw: f64,
    /// Nearest integer percent.
    pub rounded: i64,
}

impl std::fmt::Display for Cerr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}%", self.rounded)
    }
}

/// `(cer_base - cer_other) / cer_base × 100`. Negative when the second system
/// is worse.
pub fn cerr(cer_base: f64, cer_other: f64) -> Result<Cerr> {
    if !(cer_base > 0.0) || !cer_base.is_finite() {
        return Err(Error::Domain(format!(
            "baseline CER must be positive, got {cer_base}"
        )));
    }
    if !cer_other.is_finite() {
        return Err(Error::Domain(format!("CER must be finite, got {cer_other}")));
    }
    let raw = (cer_base - cer_other) / cer_base * 100.0;
    Ok(Cerr {
        raw,
        rounded: raw.round() as i64,
    })
}
