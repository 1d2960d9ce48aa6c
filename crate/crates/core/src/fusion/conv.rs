//! Per-stream 1-D convolution over time, then concatenation and projection.
//!
//! Kernels are stored tap-major as a `(kernel_size·D) × D` matrix: rows
//! `k·D..(k+1)·D` hold tap `k`. With `h = kernel_size / 2`, stride 1 and zero
//! padding of `h` frames on both sides,
//!
//! ```text
//! z[t] = Σ_k x[t + k - h] · K_k + b
//! ```
//!
//! so the output keeps all `T` frames.

use ndarray::{s, Array2, ArrayView2};

use super::{affine, bias_row, check_streams, concat};
use crate::error::Result;
use crate::params::Params;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvFusionParams {
    pub kernel_size: usize,
    /// `(kernel_size·D) × D`.
    pub k_sf: Array2<f64>,
    pub k_ssl: Array2<f64>,
    pub b_sf: Option<Array2<f64>>,
    pub b_ssl: Option<Array2<f64>>,
    /// `2D × D`.
    pub w_cat: Array2<f64>,
    pub bias: Option<Array2<f64>>,
}

impl ConvFusionParams {
    pub fn init(dim: usize, kernel_size: usize, bias: bool, rng: &mut SplitMix64) -> Self {
        Self {
            kernel_size,
            k_sf: rng.fan_in_matrix(kernel_size * dim, dim),
            k_ssl: rng.fan_in_matrix(kernel_size * dim, dim),
            b_sf: bias_row(dim, bias),
            b_ssl: bias_row(dim, bias),
            w_cat: rng.fan_in_matrix(2 * dim, dim),
            bias: bias_row(dim, bias),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_cat.ncols()
    }

    /// Kernel with tap `kernel_size/2` equal to the identity and all other
    /// taps zero.
    pub fn delta_kernel(dim: usize, kernel_size: usize) -> Array2<f64> {
        let mut k = Array2::zeros((kernel_size * dim, dim));
        let c = kernel_size / 2;
        k.slice_mut(s![c * dim..(c + 1) * dim, ..]).assign(&Array2::eye(dim));
        k
    }
}

impl Params for ConvFusionParams {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        let mut v = vec![("k_sf", &self.k_sf), ("k_ssl", &self.k_ssl)];
        if let Some(b) = &self.b_sf {
            v.push(("b_sf", b));
        }
        if let Some(b) = &self.b_ssl {
            v.push(("b_ssl", b));
        }
        v.push(("w_cat", &self.w_cat));
        if let Some(b) = &self.bias {
            v.push(("b_cat", b));
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = vec![&mut self.k_sf, &mut self.k_ssl];
        if let Some(b) = &mut self.b_sf {
            v.push(b);
        }
        if let Some(b) = &mut self.b_ssl {
            v.push(b);
        }
        v.push(&mut self.w_cat);
        if let Some(b) = &mut self.bias {
            v.push(b);
        }
        v
    }
}

/// `T × (kernel_size·D)` matrix whose row `t` stacks the zero-padded frames
/// `x[t-h] … x[t+h]`.
pub(crate) fn unfold(x: ArrayView2<f64>, kernel_size: usize) -> Array2<f64> {
    let (t, d) = x.dim();
    let h = (kernel_size / 2) as isize;
    let mut out = Array2::zeros((t, kernel_size * d));
    for row in 0..t {
        for k in 0..kernel_size {
            let src = row as isize + k as isize - h;
            if src >= 0 && (src as usize) < t {
                out.slice_mut(s![row, k * d..(k + 1) * d])
                    .assign(&x.row(src as usize));
            }
        }
    }
    out
}

/// Adjoint of [`unfold`]: scatters an unfolded gradient back onto frames.
pub(crate) fn fold(cols: ArrayView2<f64>, kernel_size: usize, dim: usize) -> Array2<f64> {
    let t = cols.nrows();
    let h = (kernel_size / 2) as isize;
    let mut out = Array2::zeros((t, dim));
    for row in 0..t {
        for k in 0..kernel_size {
            let dst = row as isize + k as isize - h;
            if dst >= 0 && (dst as usize) < t {
                let mut r = out.row_mut(dst as usize);
                r += &cols.slice(s![row, k * dim..(k + 1) * dim]);
            }
        }
    }
    out
}

pub(crate) fn conv1d(
    x: ArrayView2<f64>,
    kernel: &Array2<f64>,
    bias: Option<&Array2<f64>>,
    kernel_size: usize,
) -> Array2<f64> {
    affine(unfold(x, kernel_size).view(), kernel, bias)
}

pub fn fuse_conv(
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    p: &ConvFusionParams,
) -> Result<Array2<f64>> {
    check_streams(f_sf, f_ssl, p.dim())?;
    let z_sf = conv1d(f_sf, &p.k_sf, p.b_sf.as_ref(), p.kernel_size);
    let z_ssl = conv1d(f_ssl, &p.k_ssl, p.b_ssl.as_ref(), p.kernel_size);
    Ok(affine(concat(z_sf.view(), z_ssl.view()).view(), &p.w_cat, p.bias.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct sliding-window sum with explicit bounds checks.
    fn naive_conv(x: &Array2<f64>, k: &Array2<f64>, ks: usize) -> Array2<f64> {
        let (t, d) = x.dim();
        let h = ks as isize / 2;
        let mut y = Array2::zeros((t, d));
        for i in 0..t as isize {
            for o in 0..d {
                let mut acc = 0.0;
                for tap in 0..ks as isize {
                    let src = i + tap - h;
                    if src < 0 || src >= t as isize {
                        continue;
                    }
                    for c in 0..d {
                        acc += x[[src as usize, c]] * k[[tap as usize * d + c, o]];
                    }
                }
                y[[i as usize, o]] = acc;
            }
        }
        y
    }

    fn selector(d: usize) -> Array2<f64> {
        let mut w = Array2::zeros((2 * d, d));
        w.slice_mut(s![..d, ..]).assign(&Array2::eye(d));
        w
    }

    #[test]
    fn delta_kernel_is_identity() {
        let d = 3;
        let mut rng = SplitMix64::new(2);
        let p = ConvFusionParams {
            kernel_size: 5,
            k_sf: ConvFusionParams::delta_kernel(d, 5),
            k_ssl: ConvFusionParams::delta_kernel(d, 5),
            b_sf: None,
            b_ssl: None,
            w_cat: selector(d),
            bias: None,
        };
        let a = rng.gaussian_matrix(6, d);
        let b = rng.gaussian_matrix(6, d);
        assert_eq!(fuse_conv(a.view(), b.view(), &p).unwrap(), a);
    }

    #[test]
    fn zero_kernels_give_constant_output() {
        let d = 2;
        let mut rng = SplitMix64::new(3);
        let c = 0.75;
        let w_cat = rng.fan_in_matrix(2 * d, d);
        let b = ndarray::array![[0.1, -0.2]];
        let p = ConvFusionParams {
            kernel_size: 5,
            k_sf: Array2::zeros((5 * d, d)),
            k_ssl: Array2::zeros((5 * d, d)),
            b_sf: Some(Array2::from_elem((1, d), c)),
            b_ssl: Some(Array2::from_elem((1, d), c)),
            w_cat: w_cat.clone(),
            bias: Some(b.clone()),
        };
        let x = rng.gaussian_matrix(7, d);
        let y = fuse_conv(x.view(), x.view(), &p).unwrap();
        let expected = Array2::from_elem((1, 2 * d), c).dot(&w_cat) + &b;
        for row in y.rows() {
            for (u, v) in row.iter().zip(expected.iter()) {
                assert!((u - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matches_sliding_window_oracle() {
        let d = 3;
        let mut rng = SplitMix64::new(4);
        let p = ConvFusionParams::init(d, 5, false, &mut rng);
        let a = rng.gaussian_matrix(7, d);
        let b = rng.gaussian_matrix(7, d);
        let z_sf = naive_conv(&a, &p.k_sf, 5);
        let z_ssl = naive_conv(&b, &p.k_ssl, 5);
        let mut expected = Array2::zeros((7, d));
        for t in 0..7 {
            for j in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += z_sf[[t, c]] * p.w_cat[[c, j]] + z_ssl[[t, c]] * p.w_cat[[d + c, j]];
                }
                expected[[t, j]] = acc;
            }
        }
        let y = fuse_conv(a.view(), b.view(), &p).unwrap();
        for (u, v) in y.iter().zip(expected.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn short_sequences_shorter_than_kernel() {
        let mut rng = SplitMix64::new(5);
        let p = ConvFusionParams::init(2, 5, true, &mut rng);
        for t in 0..3 {
            let a = rng.gaussian_matrix(t, 2);
            let y = fuse_conv(a.view(), a.view(), &p).unwrap();
            assert_eq!(y.dim(), (t, 2));
            let z = naive_conv(&a, &p.k_sf, 5);
            let u = conv1d(a.view(), &p.k_sf, None, 5);
            for (x, y) in z.iter().zip(u.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn fold_is_adjoint_of_unfold(seed in any::<u64>(), t in 0usize..8, ks in prop::sample::select(vec![1usize, 3, 5, 7])) {
            let d = 3;
            let mut rng = SplitMix64::new(seed);
            let x = rng.gaussian_matrix(t, d);
            let g = rng.gaussian_matrix(t, ks * d);
            let lhs = (&unfold(x.view(), ks) * &g).sum();
            let rhs = (&x * &fold(g.view(), ks, d)).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn superposition_without_bias(seed in any::<u64>(), alpha in -2.0f64..2.0) {
            let mut rng = SplitMix64::new(seed);
            let p = ConvFusionParams::init(3, 5, false, &mut rng);
            let (x1, x2, y1, y2) = (
                rng.gaussian_matrix(6, 3),
                rng.gaussian_matrix(6, 3),
                rng.gaussian_matrix(6, 3),
                rng.gaussian_matrix(6, 3),
            );
            let lhs = fuse_conv((&x1 * alpha + &y1).view(), (&x2 * alpha + &y2).view(), &p).unwrap();
            let rhs = fuse_conv(x1.view(), x2.view(), &p).unwrap() * alpha
                + fuse_conv(y1.view(), y2.view(), &p).unwrap();
            for (u, v) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((u - v).abs() < 1e-10);
            }
        }
    }
}
