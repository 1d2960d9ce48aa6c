//! Bringing the spectral and SSL streams to one `T × D` shape.
//!
//! The SSL stream (`T_SSL × D_SSL`) is projected to `D = D_SF` by a learned
//! matrix. The spectral stream runs at twice the SSL frame rate; consecutive
//! frame pairs `(2t, 2t+1)` are concatenated into `2·D_SF` vectors and mapped
//! to `D` by a second learned matrix, which halves its frame count. An odd
//! trailing spectral frame is dropped. If the two resulting frame counts
//! differ, the longer stream is truncated to the shorter one; differences of
//! more than [`MAX_FRAME_MISMATCH`] frames are rejected as a clock mismatch.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::feat::FeatureMatrix;
use crate::params::Params;
use crate::rng::SplitMix64;

pub const MAX_FRAME_MISMATCH: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignParams {
    /// `D_SSL × D`.
    pub proj_ssl: Array2<f64>,
    /// `2·D_SF × D`.
    pub down_sf: Array2<f64>,
}

impl AlignParams {
    pub fn init(ssl_dim: usize, sf_dim: usize, rng: &mut SplitMix64) -> Self {
        Self {
            proj_ssl: rng.fan_in_matrix(ssl_dim, sf_dim),
            down_sf: rng.fan_in_matrix(2 * sf_dim, sf_dim),
        }
    }

    pub fn ssl_dim(&self) -> usize {
        self.proj_ssl.nrows()
    }

    pub fn sf_dim(&self) -> usize {
        self.down_sf.nrows() / 2
    }

    pub fn out_dim(&self) -> usize {
        self.proj_ssl.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.down_sf.nrows() % 2 != 0 || self.down_sf.ncols() != self.proj_ssl.ncols() {
            return Err(Error::Shape(format!(
                "inconsistent align params: proj_ssl {:?}, down_sf {:?}",
                self.proj_ssl.dim(),
                self.down_sf.dim()
            )));
        }
        Ok(())
    }
}

impl Params for AlignParams {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        vec![("proj_ssl", &self.proj_ssl), ("down_sf", &self.down_sf)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.proj_ssl, &mut self.down_sf]
    }
}

pub fn project_ssl(f_ssl: &FeatureMatrix, p: &AlignParams) -> Result<FeatureMatrix> {
    if f_ssl.dim() != p.ssl_dim() {
        return Err(Error::Shape(format!(
            "SSL features have dim {}, projection expects {}",
            f_ssl.dim(),
            p.ssl_dim()
        )));
    }
    FeatureMatrix::new(f_ssl.data.dot(&p.proj_ssl), f_ssl.frame_shift_ms, f_ssl.source)
}

/// `T' × 2D` matrix of concatenated frame pairs, `T' = floor(T/2)`.
pub fn pair_frames(x: ArrayView2<f64>) -> Array2<f64> {
    let (t, d) = x.dim();
    let pairs = t / 2;
    x.slice(s![..2 * pairs, ..])
        .to_owned()
        .into_shape_with_order((pairs, 2 * d))
        .expect("row-major pairs")
}

/// Checks the two frame clocks agree within tolerance and returns the common
/// frame count.
pub fn reconcile_frames(paired: usize, target: usize) -> Result<usize> {
    if paired.abs_diff(target) > MAX_FRAME_MISMATCH {
        return Err(Error::Alignment(format!(
            "downsampled spectral stream has {paired} frames, SSL stream has {target} \
             (tolerance {MAX_FRAME_MISMATCH})"
        )));
    }
    Ok(paired.min(target))
}

/// Pairs spectral frames and projects them; the result has
/// `min(floor(T_SF/2), target_frames)` rows and twice the frame shift.
pub fn downsample_sf(
    f_sf: &FeatureMatrix,
    p: &AlignParams,
    target_frames: usize,
) -> Result<FeatureMatrix> {
    if f_sf.dim() != p.sf_dim() {
        return Err(Error::Shape(format!(
            "spectral features have dim {}, downsampler expects {}",
            f_sf.dim(),
            p.sf_dim()
        )));
    }
    let paired = pair_frames(f_sf.data.view());
    let t = reconcile_frames(paired.nrows(), target_frames)?;
    let out = paired.slice(s![..t, ..]).dot(&p.down_sf);
    FeatureMatrix::new(out, f_sf.frame_shift_ms * 2.0, f_sf.source)
}

/// Both streams as `T × D`, `T = min(floor(T_SF/2), T_SSL)`.
pub fn align_pair(
    f_sf: &FeatureMatrix,
    f_ssl: &FeatureMatrix,
    p: &AlignParams,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    p.validate()?;
    let sf = downsample_sf(f_sf, p, f_ssl.frames())?;
    let mut ssl = project_ssl(f_ssl, p)?;
    let t = sf.frames();
    if ssl.frames() > t {
        ssl.data = ssl.data.slice(s![..t, ..]).to_owned();
    }
    Ok((sf, ssl))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feat::StreamSource;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn feat(data: Array2<f64>, shift: f32, src: StreamSource) -> FeatureMatrix {
        FeatureMatrix::new(data, shift, src).unwrap()
    }

    fn params(ssl_dim: usize, sf_dim: usize, seed: u64) -> AlignParams {
        AlignParams::init(ssl_dim, sf_dim, &mut SplitMix64::new(seed))
    }

    #[test]
    fn zero_projection_annihilates() {
        let mut p = params(5, 2, 0);
        p.proj_ssl.fill(0.0);
        let x = feat(SplitMix64::new(1).gaussian_matrix(3, 5), 20.0, StreamSource::Ssl);
        let y = project_ssl(&x, &p).unwrap();
        assert_eq!(y.data, Array2::zeros((3, 2)));
    }

    #[test]
    fn selector_projection_keeps_leading_columns() {
        let mut p = params(5, 2, 0);
        p.proj_ssl.fill(0.0);
        p.proj_ssl[[0, 0]] = 1.0;
        p.proj_ssl[[1, 1]] = 1.0;
        let x = feat(SplitMix64::new(2).gaussian_matrix(3, 5), 20.0, StreamSource::Ssl);
        let y = project_ssl(&x, &p).unwrap();
        assert_eq!(y.data, x.data.slice(s![.., ..2]));
    }

    #[test]
    fn projection_matches_hand_product() {
        let x = array![
            [0.5, -1.0, 2.0, 0.0, 1.5],
            [1.0, 0.25, -0.5, 3.0, -2.0],
            [-1.5, 2.0, 0.0, 1.0, 0.5]
        ];
        let w = array![[1.0, 0.5], [-2.0, 1.0], [0.0, 0.25], [1.5, -1.0], [0.5, 2.0]];
        let mut p = params(5, 2, 0);
        p.proj_ssl = w.clone();
        let y = project_ssl(&feat(x.clone(), 20.0, StreamSource::Ssl), &p).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..5 {
                    acc += x[[i, k]] * w[[k, j]];
                }
                assert!((y.data[[i, j]] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_dim_mismatch() {
        let p = params(5, 2, 0);
        let x = feat(Array2::zeros((3, 4)), 20.0, StreamSource::Ssl);
        assert!(matches!(project_ssl(&x, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn selector_downsampler_keeps_even_frames() {
        let d = 3;
        let mut p = params(4, d, 0);
        p.down_sf.fill(0.0);
        for i in 0..d {
            p.down_sf[[i, i]] = 1.0;
        }
        let x = SplitMix64::new(3).gaussian_matrix(4, d);
        let y = downsample_sf(&feat(x.clone(), 10.0, StreamSource::Sf), &p, 2).unwrap();
        assert_eq!(y.data.row(0), x.row(0));
        assert_eq!(y.data.row(1), x.row(2));
        assert_eq!(y.frame_shift_ms, 20.0);
    }

    #[test]
    fn odd_frame_dropped() {
        let p = params(4, 3, 0);
        for (t_sf, expected) in [(98, 49), (99, 49)] {
            let x = feat(Array2::zeros((t_sf, 3)), 10.0, StreamSource::Sf);
            assert_eq!(downsample_sf(&x, &p, 49).unwrap().frames(), expected);
        }
    }

    #[test]
    fn clock_mismatch_rejected() {
        let p = params(4, 3, 0);
        let x = feat(Array2::zeros((98, 3)), 10.0, StreamSource::Sf);
        assert!(downsample_sf(&x, &p, 51).is_ok());
        assert!(downsample_sf(&x, &p, 47).is_ok());
        assert!(matches!(downsample_sf(&x, &p, 52), Err(Error::Alignment(_))));
        assert!(matches!(downsample_sf(&x, &p, 46), Err(Error::Alignment(_))));
    }

    #[test]
    fn align_pair_shapes() {
        let p = params(1024, 80, 7);
        let sf = feat(Array2::zeros((98, 80)), 10.0, StreamSource::Sf);
        let ssl = feat(Array2::zeros((49, 1024)), 20.0, StreamSource::Ssl);
        let (a, b) = align_pair(&sf, &ssl, &p).unwrap();
        assert_eq!(a.data.dim(), (49, 80));
        assert_eq!(b.data.dim(), (49, 80));

        let sf = feat(Array2::zeros((99, 80)), 10.0, StreamSource::Sf);
        let (a, b) = align_pair(&sf, &ssl, &p).unwrap();
        assert_eq!((a.frames(), b.frames()), (49, 49));

        let sf = feat(Array2::zeros((0, 80)), 10.0, StreamSource::Sf);
        let ssl = feat(Array2::zeros((0, 1024)), 20.0, StreamSource::Ssl);
        let (a, b) = align_pair(&sf, &ssl, &p).unwrap();
        assert_eq!(a.data.dim(), (0, 80));
        assert_eq!(b.data.dim(), (0, 80));
    }

    #[test]
    fn longer_ssl_stream_is_truncated() {
        let p = params(6, 3, 7);
        let sf = feat(Array2::ones((10, 3)), 10.0, StreamSource::Sf);
        let ssl = feat(Array2::ones((6, 6)), 20.0, StreamSource::Ssl);
        let (a, b) = align_pair(&sf, &ssl, &p).unwrap();
        assert_eq!((a.frames(), b.frames()), (5, 5));
    }

    proptest! {
        #[test]
        fn align_is_linear(
            seed in any::<u64>(),
            t_ssl in 0usize..6,
            extra in 0usize..2,
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let (ssl_dim, sf_dim) = (5, 3);
            let mut rng = SplitMix64::new(seed);
            let p = AlignParams::init(ssl_dim, sf_dim, &mut rng);
            let t_sf = 2 * t_ssl + extra;
            let x_sf = rng.gaussian_matrix(t_sf, sf_dim);
            let y_sf = rng.gaussian_matrix(t_sf, sf_dim);
            let x_ssl = rng.gaussian_matrix(t_ssl, ssl_dim);
            let y_ssl = rng.gaussian_matrix(t_ssl, ssl_dim);
            let run = |sf: Array2<f64>, ssl: Array2<f64>| {
                align_pair(
                    &feat(sf, 10.0, StreamSource::Sf),
                    &feat(ssl, 20.0, StreamSource::Ssl),
                    &p,
                )
                .unwrap()
            };
            let (cs, cl) = run(&x_sf * a + &y_sf * b, &x_ssl * a + &y_ssl * b);
            let (xs, xl) = run(x_sf, x_ssl);
            let (ys, yl) = run(y_sf, y_ssl);
            let es = &xs.data * a + &ys.data * b;
            let el = &xl.data * a + &yl.data * b;
            for (u, v) in cs.data.iter().zip(es.iter()).chain(cl.data.iter().zip(el.iter())) {
                prop_assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()));
            }
        }

        #[test]
        fn align_shapes_for_any_clock(seed in any::<u64>(), t_ssl in 0usize..40, delta in -2i64..=2) {
            let mut rng = SplitMix64::new(seed);
            let p = AlignParams::init(6, 4, &mut rng);
            let t_sf = (2 * t_ssl as i64 + 2 * delta).max(0) as usize;
            let sf = feat(rng.gaussian_matrix(t_sf, 4), 10.0, StreamSource::Sf);
            let ssl = feat(rng.gaussian_matrix(t_ssl, 6), 20.0, StreamSource::Ssl);
            let (a, b) = align_pair(&sf, &ssl, &p).unwrap();
            prop_assert_eq!(a.data.dim(), b.data.dim());
            prop_assert_eq!(a.dim(), 4);
            prop_assert!(a.frames() <= t_ssl && t_ssl - a.frames() <= MAX_FRAME_MISMATCH);
            prop_assert!(a.data.iter().chain(b.data.iter()).all(|v| v.is_finite()));
        }
    }
}
