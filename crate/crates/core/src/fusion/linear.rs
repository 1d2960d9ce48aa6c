//! Concatenation followed by a `2D → D` projection.

use ndarray::{Array2, ArrayView2};

use super::{affine, bias_row, check_streams, concat};
use crate::error::Result;
use crate::params::Params;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFusionParams {
    /// `2D × D`; rows `0..D` read the spectral stream.
    pub w_cat: Array2<f64>,
    /// `1 × D`.
    pub bias: Option<Array2<f64>>,
}

impl LinearFusionParams {
    pub fn init(dim: usize, bias: bool, rng: &mut SplitMix64) -> Self {
        Self {
            w_cat: rng.fan_in_matrix(2 * dim, dim),
            bias: bias_row(dim, bias),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_cat.ncols()
    }
}

impl Params for LinearFusionParams {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        let mut v = vec![("w_cat", &self.w_cat)];
        if let Some(b) = &self.bias {
            v.push(("b_cat", b));
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = vec![&mut self.w_cat];
        if let Some(b) = &mut self.bias {
            v.push(b);
        }
        v
    }
}

/// Row `t` is `[sf[t] ‖ ssl[t]] · W_cat + b`.
pub fn fuse_linear(
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    p: &LinearFusionParams,
) -> Result<Array2<f64>> {
    check_streams(f_sf, f_ssl, p.dim())?;
    Ok(affine(concat(f_sf, f_ssl).view(), &p.w_cat, p.bias.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use ndarray::{array, s};
    use proptest::prelude::*;

    #[test]
    fn zero_weights_give_zero() {
        let mut rng = SplitMix64::new(0);
        let mut p = LinearFusionParams::init(3, false, &mut rng);
        p.w_cat.fill(0.0);
        let a = rng.gaussian_matrix(4, 3);
        let y = fuse_linear(a.view(), a.view(), &p).unwrap();
        assert_eq!(y, Array2::zeros((4, 3)));
    }

    #[test]
    fn selector_returns_sf() {
        let mut rng = SplitMix64::new(1);
        let mut p = LinearFusionParams::init(3, false, &mut rng);
        p.w_cat.fill(0.0);
        p.w_cat.slice_mut(s![..3, ..]).assign(&Array2::eye(3));
        let a = rng.gaussian_matrix(4, 3);
        let b = rng.gaussian_matrix(4, 3);
        assert_eq!(fuse_linear(a.view(), b.view(), &p).unwrap(), a);
    }

    #[test]
    fn matches_hand_matmul() {
        let a = array![[0.3, -1.2, 0.7], [1.1, 0.4, -0.6]];
        let b = array![[-0.5, 0.9, 0.2], [0.8, -0.3, 1.4]];
        let w = array![
            [0.1, -0.2, 0.3],
            [0.4, 0.5, -0.6],
            [-0.7, 0.8, 0.9],
            [1.0, -1.1, 1.2],
            [0.13, 0.14, -0.15],
            [-0.16, 0.17, 0.18]
        ];
        let p = LinearFusionParams { w_cat: w.clone(), bias: None };
        let y = fuse_linear(a.view(), b.view(), &p).unwrap();
        for t in 0..2 {
            let row: Vec<f64> = a.row(t).iter().chain(b.row(t).iter()).copied().collect();
            for j in 0..3 {
                let expected: f64 = (0..6).map(|k| row[k] * w[[k, j]]).sum();
                assert!((y[[t, j]] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bias_is_added() {
        let mut p = LinearFusionParams::init(2, true, &mut SplitMix64::new(0));
        p.w_cat.fill(0.0);
        p.bias = Some(array![[1.5, -2.0]]);
        let x = Array2::zeros((3, 2));
        let y = fuse_linear(x.view(), x.view(), &p).unwrap();
        assert!(y.rows().into_iter().all(|r| r == array![1.5, -2.0]));
    }

    #[test]
    fn shape_mismatch() {
        let p = LinearFusionParams::init(2, false, &mut SplitMix64::new(0));
        let a = Array2::zeros((3, 2));
        let b = Array2::zeros((4, 2));
        assert!(matches!(fuse_linear(a.view(), b.view(), &p), Err(Error::Shape(_))));
        let c = Array2::zeros((3, 3));
        assert!(matches!(fuse_linear(c.view(), c.view(), &p), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn superposition(seed in any::<u64>(), alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let mut rng = SplitMix64::new(seed);
            let p = LinearFusionParams::init(3, false, &mut rng);
            let (x1, x2, y1, y2) = (
                rng.gaussian_matrix(4, 3),
                rng.gaussian_matrix(4, 3),
                rng.gaussian_matrix(4, 3),
                rng.gaussian_matrix(4, 3),
            );
            let lhs = fuse_linear((&x1 * alpha + &y1 * beta).view(), (&x2 * alpha + &y2 * beta).view(), &p).unwrap();
            let rhs = fuse_linear(x1.view(), x2.view(), &p).unwrap() * alpha
                + fuse_linear(y1.view(), y2.view(), &p).unwrap() * beta;
            for (u, v) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((u - v).abs() < 1e-10);
            }
        }
    }
}
