//! Co-attention fusion.
//!
//! With `Q_i = f_i W_i^Q`, `K_i = f_i W_i^K`, `V_i = f_i W_i^V` for
//! `i ∈ {sf, ssl}`:
//!
//! ```text
//! h_sf  = softmax(Q_sf  K_sslᵀ / √D) V_ssl + f_sf
//! h_ssl = softmax(Q_ssl K_sfᵀ  / √D) V_sf  + f_ssl
//! out   = [h_sf ‖ h_ssl] W_out + b_out
//! ```
//!
//! Softmaxes are taken row-wise, over the `T` key positions. One head only.

use ndarray::{Array2, ArrayView2};

use super::{affine, bias_row, check_streams, concat, softmax_rows};
use crate::error::Result;
use crate::params::Params;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct CoAttentionParams {
    pub w_sf_q: Array2<f64>,
    pub w_sf_k: Array2<f64>,
    pub w_sf_v: Array2<f64>,
    pub w_ssl_q: Array2<f64>,
    pub w_ssl_k: Array2<f64>,
    pub w_ssl_v: Array2<f64>,
    /// `2D × D`; rows `0..D` read `h_sf`.
    pub w_out: Array2<f64>,
    pub b_out: Option<Array2<f64>>,
}

impl CoAttentionParams {
    pub fn init(dim: usize, bias: bool, rng: &mut SplitMix64) -> Self {
        Self {
            w_sf_q: rng.fan_in_matrix(dim, dim),
            w_sf_k: rng.fan_in_matrix(dim, dim),
            w_sf_v: rng.fan_in_matrix(dim, dim),
            w_ssl_q: rng.fan_in_matrix(dim, dim),
            w_ssl_k: rng.fan_in_matrix(dim, dim),
            w_ssl_v: rng.fan_in_matrix(dim, dim),
            w_out: rng.fan_in_matrix(2 * dim, dim),
            b_out: bias_row(dim, bias),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_out.ncols()
    }
}

impl Params for CoAttentionParams {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        let mut v = vec![
            ("w_sf_q", &self.w_sf_q),
            ("w_sf_k", &self.w_sf_k),
            ("w_sf_v", &self.w_sf_v),
            ("w_ssl_q", &self.w_ssl_q),
            ("w_ssl_k", &self.w_ssl_k),
            ("w_ssl_v", &self.w_ssl_v),
            ("w_out", &self.w_out),
        ];
        if let Some(b) = &self.b_out {
            v.push(("b_out", b));
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = vec![
            &mut self.w_sf_q,
            &mut self.w_sf_k,
            &mut self.w_sf_v,
            &mut self.w_ssl_q,
            &mut self.w_ssl_k,
            &mut self.w_ssl_v,
            &mut self.w_out,
        ];
        if let Some(b) = &mut self.b_out {
            v.push(b);
        }
        v
    }
}

/// Intermediates of one forward pass, reused by the backward pass.
#[derive(Debug, Clone)]
pub struct CoAttentionTrace {
    pub q_sf: Array2<f64>,
    pub k_sf: Array2<f64>,
    pub v_sf: Array2<f64>,
    pub q_ssl: Array2<f64>,
    pub k_ssl: Array2<f64>,
    pub v_ssl: Array2<f64>,
    /// Attention of spectral queries over SSL keys, `T × T`.
    pub attn_sf: Array2<f64>,
    /// Attention of SSL queries over spectral keys, `T × T`.
    pub attn_ssl: Array2<f64>,
    pub h_sf: Array2<f64>,
    pub h_ssl: Array2<f64>,
    pub out: Array2<f64>,
}

pub fn trace(
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    p: &CoAttentionParams,
) -> Result<CoAttentionTrace> {
    check_streams(f_sf, f_ssl, p.dim())?;
    let scale = 1.0 / (p.dim() as f64).sqrt();
    let q_sf = f_sf.dot(&p.w_sf_q);
    let k_sf = f_sf.dot(&p.w_sf_k);
    let v_sf = f_sf.dot(&p.w_sf_v);
    let q_ssl = f_ssl.dot(&p.w_ssl_q);
    let k_ssl = f_ssl.dot(&p.w_ssl_k);
    let v_ssl = f_ssl.dot(&p.w_ssl_v);

    let attn_sf = softmax_rows((q_sf.dot(&k_ssl.t()) * scale).view());
    let attn_ssl = softmax_rows((q_ssl.dot(&k_sf.t()) * scale).view());
    let h_sf = attn_sf.dot(&v_ssl) + f_sf;
    let h_ssl = attn_ssl.dot(&v_sf) + f_ssl;
    let out = affine(concat(h_sf.view(), h_ssl.view()).view(), &p.w_out, p.b_out.as_ref());
    Ok(CoAttentionTrace {
        q_sf,
        k_sf,
        v_sf,
        q_ssl,
        k_ssl,
        v_ssl,
        attn_sf,
        attn_ssl,
        h_sf,
        h_ssl,
        out,
    })
}

/// The two context vectors `(h_sf, h_ssl)` before the output projection.
pub fn context_vectors(
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    p: &CoAttentionParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let tr = trace(f_sf, f_ssl, p)?;
    Ok((tr.h_sf, tr.h_ssl))
}

pub fn fuse_coattention(
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    p: &CoAttentionParams,
) -> Result<Array2<f64>> {
    trace(f_sf, f_ssl, p).map(|tr| tr.out)
}
