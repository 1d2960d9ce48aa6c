//! Hand-derived gradients and their finite-difference certification.
//!
//! [`backward`] returns the gradient of `Σ G ⊙ fuse(f_sf, f_ssl)` for an
//! upstream gradient `G`, with respect to every parameter tensor (in
//! [`Params::tensors`] order) and both input streams. The same is provided for
//! the alignment projections ([`align`]) and the toy classifier head
//! ([`head`]). [`check`] compares any of them against central differences.
//!
//! Softmax and log-softmax use the usual Jacobian-vector forms, row by row,
//! with `p = softmax(s)`:
//!
//! ```text
//! y = softmax(s):      ds = p ⊙ (dy - Σ_j dy_j p_j)
//! y = log_softmax(s):  ds = dy - p · Σ_j dy_j
//! ```

pub mod align;
pub mod check;
pub mod fusion;
pub mod head;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::fusion::{FusionParams, FusionVariant};

pub use check::{finite_diff_check, relative_error, GradCheckReport, DEFAULT_EPS};

/// Gradients of one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GradRecord {
    pub names: Vec<&'static str>,
    /// Same order and shapes as the parameter tensors.
    pub params: Vec<Array2<f64>>,
    pub f_sf: Array2<f64>,
    pub f_ssl: Array2<f64>,
}

impl GradRecord {
    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.names
            .iter()
            .position(|n| *n == name)
            .map(|i| &self.params[i])
    }
}

pub fn backward(
    variant: FusionVariant,
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    params: &FusionParams,
    upstream: ArrayView2<f64>,
) -> Result<GradRecord> {
    if params.variant() != variant {
        return Err(Error::Config(format!(
            "variant {variant} requested with {} parameters",
            params.variant()
        )));
    }
    crate::fusion::check_streams(f_sf, f_ssl, params.dim())?;
    if upstream.dim() != f_sf.dim() {
        return Err(Error::Shape(format!(
            "upstream gradient is {:?}, output is {:?}",
            upstream.dim(),
            f_sf.dim()
        )));
    }
    Ok(match params {
        FusionParams::Linear(p) => fusion::linear_backward(f_sf, f_ssl, p, upstream),
        FusionParams::Conv(p) => fusion::conv_backward(f_sf, f_ssl, p, upstream),
        FusionParams::CoAttention(p) => fusion::coattention_backward(f_sf, f_ssl, p, upstream)?,
        FusionParams::MoE(p) => fusion::moe_backward(f_sf, f_ssl, p, upstream)?,
    })
}

/// Row-wise softmax backward given the softmax output `p`.
pub fn softmax_backward(p: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let dot = (dy * p).sum_axis(Axis(1)).insert_axis(Axis(1));
    p * &(dy - &dot)
}

/// Row-wise log-softmax backward given the softmax probabilities `p`.
pub fn log_softmax_backward(p: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let total = dy.sum_axis(Axis(1)).insert_axis(Axis(1));
    dy - &(p * &total)
}
