//! Gradients of [`crate::align::align_pair`].

use ndarray::{s, Array2, ArrayView2};

use crate::align::{pair_frames, reconcile_frames, AlignParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AlignGrads {
    pub proj_ssl: Array2<f64>,
    pub down_sf: Array2<f64>,
    pub f_sf: Array2<f64>,
    pub f_ssl: Array2<f64>,
}

impl AlignGrads {
    pub fn params(&self) -> Vec<Array2<f64>> {
        vec![self.proj_ssl.clone(), self.down_sf.clone()]
    }
}

/// Backward pass of `align_pair` given upstream gradients for both aligned
/// outputs (each `T × D`).
pub fn align_backward(
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    p: &AlignParams,
    g_sf: ArrayView2<f64>,
    g_ssl: ArrayView2<f64>,
) -> Result<AlignGrads> {
    p.validate()?;
    let pairs = pair_frames(f_sf);
    let t = reconcile_frames(pairs.nrows(), f_ssl.nrows())?;
    if g_sf.dim() != (t, p.out_dim()) || g_ssl.dim() != (t, p.out_dim()) {
        return Err(Error::Shape(format!(
            "upstream gradients {:?}/{:?}, aligned outputs are {t}x{}",
            g_sf.dim(),
            g_ssl.dim(),
            p.out_dim()
        )));
    }
    let used_pairs = pairs.slice(s![..t, ..]);
    let used_ssl = f_ssl.slice(s![..t, ..]);

    let down_sf = used_pairs.t().dot(&g_sf);
    let proj_ssl = used_ssl.t().dot(&g_ssl);

    let d_sf = f_sf.ncols();
    let dpairs = g_sf.dot(&p.down_sf.t());
    let mut df_sf = Array2::zeros(f_sf.raw_dim());
    for r in 0..t {
        df_sf.row_mut(2 * r).assign(&dpairs.slice(s![r, ..d_sf]));
        df_sf.row_mut(2 * r + 1).assign(&dpairs.slice(s![r, d_sf..]));
    }
    let mut df_ssl = Array2::zeros(f_ssl.raw_dim());
    df_ssl
        .slice_mut(s![..t, ..])
        .assign(&g_ssl.dot(&p.proj_ssl.t()));

    Ok(AlignGrads {
        proj_ssl,
        down_sf,
        f_sf: df_sf,
        f_ssl: df_ssl,
    })
}
