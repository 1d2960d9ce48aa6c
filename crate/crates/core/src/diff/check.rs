//! Central-difference gradient checking.
//!
//! For each scalar `θ` the numeric derivative is
//! `(L(θ + eps) - L(θ - eps)) / (2 eps)` and the error against the analytic
//! value `a` is `|a - n| / max(|a|, |n|, 1e-8)`.

use ndarray::{Array2, ArrayView2};

use super::align::align_backward;
use super::head::{head_backward, HeadParams};
use super::{backward, GradRecord};
use crate::align::{align_pair, AlignParams};
use crate::error::{Error, Result};
use crate::feat::{FeatureMatrix, StreamSource};
use crate::fusion::{fuse, FusionParams};
use crate::params::Params;

pub const DEFAULT_EPS: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// A differentiable scalar loss over a set of named tensors.
pub trait Checkable: Clone {
    fn names(&self) -> Vec<String>;
    fn slots(&mut self) -> Vec<&mut Array2<f64>>;
    fn loss(&self) -> f64;
    /// Analytic gradients, one per slot.
    fn analytic(&self) -> Vec<Array2<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error per tensor.
    pub per_tensor: Vec<(String, f64)>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Central differences over every scalar of every slot.
pub fn numeric_gradients<C: Checkable>(case: &C, eps: f64) -> Vec<Array2<f64>> {
    let mut work = case.clone();
    let shapes: Vec<_> = work.slots().iter().map(|t| t.raw_dim()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (i, shape) in shapes.into_iter().enumerate() {
        let mut g = Array2::zeros(shape);
        for idx in 0..g.len() {
            let orig = {
                let slot = &mut work.slots()[i];
                let v = slot.as_slice_mut().expect("standard layout");
                let orig = v[idx];
                v[idx] = orig + eps;
                orig
            };
            let plus = work.loss();
            work.slots()[i].as_slice_mut().unwrap()[idx] = orig - eps;
            let minus = work.loss();
            work.slots()[i].as_slice_mut().unwrap()[idx] = orig;
            g.as_slice_mut().unwrap()[idx] = (plus - minus) / (2.0 * eps);
        }
        out.push(g);
    }
    out
}

pub fn check<C: Checkable>(case: &C, eps: f64) -> Result<GradCheckReport> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let analytic = case.analytic();
    let numeric = numeric_gradients(case, eps);
    let mut per_tensor = Vec::with_capacity(analytic.len());
    let mut max_rel_error = 0.0f64;
    for ((name, a), n) in case.names().into_iter().zip(&analytic).zip(&numeric) {
        let err = a
            .iter()
            .zip(n.iter())
            .map(|(x, y)| relative_error(*x, *y))
            .fold(0.0f64, f64::max);
        max_rel_error = max_rel_error.max(err);
        per_tensor.push((name, err));
    }
    Ok(GradCheckReport {
        per_tensor,
        max_rel_error,
    })
}

fn half_sq_norm(x: &Array2<f64>) -> f64 {
    0.5 * x.iter().map(|v| v * v).sum::<f64>()
}

/// Fusion operator under `L = ½‖fuse(f_sf, f_ssl)‖²`; the inputs are checked
/// alongside the parameters.
#[derive(Debug, Clone)]
pub struct FusionCase {
    pub f_sf: Array2<f64>,
    pub f_ssl: Array2<f64>,
    pub params: FusionParams,
}

impl FusionCase {
    fn output(&self) -> Array2<f64> {
        fuse(self.params.variant(), self.f_sf.view(), self.f_ssl.view(), &self.params)
            .expect("consistent case")
    }

    pub fn grad_record(&self) -> GradRecord {
        let y = self.output();
        backward(
            self.params.variant(),
            self.f_sf.view(),
            self.f_ssl.view(),
            &self.params,
            y.view(),
        )
        .expect("consistent case")
    }
}

impl Checkable for FusionCase {
    fn names(&self) -> Vec<String> {
        let mut n: Vec<String> = self.params.tensors().iter().map(|(s, _)| s.to_string()).collect();
        n.push("f_sf".into());
        n.push("f_ssl".into());
        n
    }

    fn slots(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = self.params.tensors_mut();
        v.push(&mut self.f_sf);
        v.push(&mut self.f_ssl);
        v
    }

    fn loss(&self) -> f64 {
        half_sq_norm(&self.output())
    }

    fn analytic(&self) -> Vec<Array2<f64>> {
        let r = self.grad_record();
        let mut v = r.params;
        v.push(r.f_sf);
        v.push(r.f_ssl);
        v
    }
}

/// Alignment under `L = ½(‖sf'‖² + ‖ssl'‖²)`.
#[derive(Debug, Clone)]
pub struct AlignCase {
    pub f_sf: Array2<f64>,
    pub f_ssl: Array2<f64>,
    pub params: AlignParams,
}

impl AlignCase {
    fn outputs(&self) -> (Array2<f64>, Array2<f64>) {
        let sf = FeatureMatrix::new(self.f_sf.clone(), 10.0, StreamSource::Sf).unwrap();
        let ssl = FeatureMatrix::new(self.f_ssl.clone(), 20.0, StreamSource::Ssl).unwrap();
        let (a, b) = align_pair(&sf, &ssl, &self.params).expect("consistent case");
        (a.data, b.data)
    }
}

impl Checkable for AlignCase {
    fn names(&self) -> Vec<String> {
        ["proj_ssl", "down_sf", "f_sf", "f_ssl"].map(String::from).to_vec()
    }

    fn slots(&mut self) -> Vec<&mut Array2<f64>> {
        vec![
            &mut self.params.proj_ssl,
            &mut self.params.down_sf,
            &mut self.f_sf,
            &mut self.f_ssl,
        ]
    }

    fn loss(&self) -> f64 {
        let (a, b) = self.outputs();
        half_sq_norm(&a) + half_sq_norm(&b)
    }

    fn analytic(&self) -> Vec<Array2<f64>> {
        let (a, b) = self.outputs();
        let g = align_backward(self.f_sf.view(), self.f_ssl.view(), &self.params, a.view(), b.view())
            .expect("consistent case");
        vec![g.proj_ssl, g.down_sf, g.f_sf, g.f_ssl]
    }
}

/// Classifier head under mean cross-entropy over a few labelled utterances.
#[derive(Debug, Clone)]
pub struct HeadCase {
    pub utterances: Vec<Array2<f64>>,
    pub labels: Vec<usize>,
    pub params: HeadParams,
}

impl Checkable for HeadCase {
    fn names(&self) -> Vec<String> {
        let mut n = vec!["head_w".to_string(), "head_b".to_string()];
        n.extend((0..self.utterances.len()).map(|i| format!("h[{i}]")));
        n
    }

    fn slots(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = self.params.tensors_mut();
        v.extend(self.utterances.iter_mut());
        v
    }

    fn loss(&self) -> f64 {
        let n = self.utterances.len() as f64;
        self.utterances
            .iter()
            .zip(&self.labels)
            .map(|(h, &y)| super::head::cross_entropy(self.params.logits(h.view()).view(), y))
            .sum::<f64>()
            / n
    }

    fn analytic(&self) -> Vec<Array2<f64>> {
        let n = self.utterances.len() as f64;
        let mut gw = Array2::zeros(self.params.w.raw_dim());
        let mut gb = Array2::zeros(self.params.b.raw_dim());
        let mut gh = Vec::new();
        for (h, &y) in self.utterances.iter().zip(&self.labels) {
            let g = head_backward(&self.params, h.view(), y);
            gw += &(g.w / n);
            gb += &(g.b / n);
            gh.push(g.h / n);
        }
        let mut v = vec![gw, gb];
        v.extend(gh);
        v
    }
}

/// Checks a fusion operator's parameter and input gradients under
/// `L = ½‖output‖²`.
pub fn finite_diff_check(
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    params: &FusionParams,
    eps: f64,
) -> Result<GradCheckReport> {
    crate::fusion::check_streams(f_sf, f_ssl, params.dim())?;
    check(
        &FusionCase {
            f_sf: f_sf.to_owned(),
            f_ssl: f_ssl.to_owned(),
            params: params.clone(),
        },
        eps,
    )
}

/// Which block a randomly generated check exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradTarget {
    Fusion(crate::fusion::FusionVariant),
    Align,
    Head,
}

impl std::str::FromStr for GradTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "align" => Ok(GradTarget::Align),
            "head" => Ok(GradTarget::Head),
            other => other.parse().map(GradTarget::Fusion),
        }
    }
}

/// Builds a small random instance of `target` from `seed` and checks it.
/// Fusion cases use `T = 6`, `D = 4`, kernel size 3 and default biases and
/// gating; align maps `9 × 3` and `4 × 5` inputs; the head scores three
/// utterances over three classes.
pub fn random_check(target: GradTarget, seed: u64, eps: f64) -> Result<GradCheckReport> {
    use crate::fusion::FusionConfig;
    use crate::rng::SplitMix64;

    let mut rng = SplitMix64::new(seed);
    match target {
        GradTarget::Fusion(variant) => {
            let mut cfg = FusionConfig::new(variant, 4);
            cfg.kernel_size = 3;
            let params = FusionParams::init(&cfg, &mut rng)?;
            let f_sf = rng.gaussian_matrix(6, 4);
            let f_ssl = rng.gaussian_matrix(6, 4);
            finite_diff_check(f_sf.view(), f_ssl.view(), &params, eps)
        }
        GradTarget::Align => {
            let params = AlignParams::init(5, 3, &mut rng);
            let case = AlignCase {
                f_sf: rng.gaussian_matrix(9, 3),
                f_ssl: rng.gaussian_matrix(4, 5),
                params,
            };
            check(&case, eps)
        }
        GradTarget::Head => {
            let mut params = HeadParams::init(4, 3, &mut rng);
            params.b = rng.gaussian_matrix(1, 3);
            let case = HeadCase {
                utterances: (0..3).map(|_| rng.gaussian_matrix(5, 4)).collect(),
                labels: vec![0, 2, 1],
                params,
            };
            check(&case, eps)
        }
    }
}
