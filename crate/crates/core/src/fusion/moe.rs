//! Mixture-of-experts fusion with a gate driven by the spectral stream.
//!
//! `w = Θ(f_sf · W_MoE)` row-wise, then
//! `out[t] = w[t,0]·f_sf[t] + w[t,1]·f_ssl[t]`. The raw Θ outputs are used in
//! the sum, so with `Θ = log-softmax` both weights are non-positive.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use super::{check_streams, log_softmax_rows, softmax_rows, GateWeights, Gating};
use crate::error::Result;
use crate::params::Params;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct MoEParams {
    /// `D × 2`; column 0 scores the spectral expert.
    pub w_moe: Array2<f64>,
    pub theta: Gating,
}

impl MoEParams {
    pub fn init(dim: usize, theta: Gating, rng: &mut SplitMix64) -> Self {
        Self {
            w_moe: rng.fan_in_matrix(dim, 2),
            theta,
        }
    }

    pub fn zeros(dim: usize, theta: Gating) -> Self {
        Self {
            w_moe: Array2::zeros((dim, 2)),
            theta,
        }
    }

    pub fn dim(&self) -> usize {
        self.w_moe.nrows()
    }
}

impl Params for MoEParams {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        vec![("w_moe", &self.w_moe)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.w_moe]
    }
}

pub fn apply_gating(logits: ArrayView2<f64>, theta: Gating) -> Array2<f64> {
    match theta {
        Gating::SoftMax => softmax_rows(logits),
        Gating::LogSoftMax => log_softmax_rows(logits),
    }
}

/// Un-normalised gate weights for every frame.
pub fn gate_weights(f_sf: ArrayView2<f64>, p: &MoEParams) -> Result<GateWeights> {
    check_streams(f_sf, f_sf, p.dim())?;
    let logits = f_sf.dot(&p.w_moe);
    Ok(GateWeights {
        w: apply_gating(logits.view(), p.theta),
        normalized: false,
        source: p.theta.into(),
    })
}

/// `w_sf ⊙ sf + w_ssl ⊙ ssl`, row-broadcast.
pub(crate) fn mix(f_sf: ArrayView2<f64>, f_ssl: ArrayView2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let w_sf = w.column(0).insert_axis(Axis(1));
    let w_ssl = w.column(1).insert_axis(Axis(1));
    let mut out = Array2::zeros(f_sf.raw_dim());
    Zip::from(&mut out)
        .and(&f_sf)
        .and(&f_ssl)
        .and_broadcast(&w_sf)
        .and_broadcast(&w_ssl)
        .for_each(|o, &a, &b, &ws, &wl| *o = ws * a + wl * b);
    out
}

pub fn fuse_moe(
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    p: &MoEParams,
) -> Result<(Array2<f64>, GateWeights)> {
    check_streams(f_sf, f_ssl, p.dim())?;
    let gates = gate_weights(f_sf, p)?;
    Ok((mix(f_sf, f_ssl, &gates.w), gates))
}
