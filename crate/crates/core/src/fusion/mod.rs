//! Learnable combinations of two aligned `T × D` streams.
//!
//! Four operators are provided:
//!
//! * [`linear`]: concatenate the streams frame by frame and project `2D → D`.
//! * [`conv`]: a 1-D convolution over time on each stream, then as linear.
//! * [`coattention`]: two parallel single-head cross-attention blocks with
//!   residuals, each stream querying the other, then a `2D → D` projection.
//! * [`moe`]: a per-frame gate computed from the spectral stream weights the
//!   two streams, `out[t] = w_sf[t]·sf[t] + w_ssl[t]·ssl[t]`.
//!
//! Biases on the output projections (and conv layers) are optional; with
//! `bias = false` every operator is a pure matrix expression.

pub mod coattention;
pub mod conv;
pub mod linear;
pub mod moe;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::params::Params;
use crate::rng::SplitMix64;

pub use coattention::CoAttentionParams;
pub use conv::ConvFusionParams;
pub use linear::LinearFusionParams;
pub use moe::MoEParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionVariant {
    Linear,
    Conv,
    CoAttention,
    MoE,
}

impl FusionVariant {
    pub const ALL: [FusionVariant; 4] = [
        FusionVariant::Linear,
        FusionVariant::Conv,
        FusionVariant::CoAttention,
        FusionVariant::MoE,
    ];

    pub fn tag(self) -> u8 {
        match self {
            FusionVariant::Linear => 0,
            FusionVariant::Conv => 1,
            FusionVariant::CoAttention => 2,
            FusionVariant::MoE => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionVariant::Linear => "linear",
            FusionVariant::Conv => "conv",
            FusionVariant::CoAttention => "coattention",
            FusionVariant::MoE => "moe",
        })
    }
}

impl FromStr for FusionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(FusionVariant::Linear),
            "conv" => Ok(FusionVariant::Conv),
            "coattention" | "co-attention" | "coatt" => Ok(FusionVariant::CoAttention),
            "moe" => Ok(FusionVariant::MoE),
            other => Err(Error::Config(format!("unknown fusion variant '{other}'"))),
        }
    }
}

/// Gate nonlinearity Θ of the mixture of experts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gating {
    SoftMax,
    LogSoftMax,
}

impl FromStr for Gating {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "softmax" => Ok(Gating::SoftMax),
            "logsoftmax" | "log-softmax" | "log_softmax" => Ok(Gating::LogSoftMax),
            other => Err(Error::Config(format!("unknown gating function '{other}'"))),
        }
    }
}

impl fmt::Display for Gating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gating::SoftMax => "softmax",
            Gating::LogSoftMax => "logsoftmax",
        })
    }
}

/// Where a gate matrix came from, which decides how it is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateSource {
    SoftMax,
    LogSoftMax,
    /// Arbitrary non-negative weights.
    Raw,
}

impl From<Gating> for GateSource {
    fn from(g: Gating) -> Self {
        match g {
            Gating::SoftMax => GateSource::SoftMax,
            Gating::LogSoftMax => GateSource::LogSoftMax,
        }
    }
}

/// Per-frame expert weights; column 0 is the spectral stream, column 1 SSL.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights {
    pub w: Array2<f64>,
    pub normalized: bool,
    pub source: GateSource,
}

impl GateWeights {
    pub fn frames(&self) -> usize {
        self.w.nrows()
    }

    pub fn w_sf(&self) -> ndarray::ArrayView1<'_, f64> {
        self.w.column(0)
    }

    pub fn w_ssl(&self) -> ndarray::ArrayView1<'_, f64> {
        self.w.column(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub variant: FusionVariant,
    pub dim: usize,
    pub theta: Gating,
    pub kernel_size: usize,
    pub bias: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            variant: FusionVariant::Linear,
            dim: 80,
            theta: Gating::LogSoftMax,
            kernel_size: 5,
            bias: true,
        }
    }
}

impl FusionConfig {
    pub fn new(variant: FusionVariant, dim: usize) -> Self {
        Self {
            variant,
            dim,
            ..Default::default()
        }
    }

    /// Bias-free configuration, every operator reduces to matrix products.
    pub fn bias_free(variant: FusionVariant, dim: usize) -> Self {
        Self {
            bias: false,
            ..Self::new(variant, dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("fusion.dim must be at least 1".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "fusion.kernel_size must be odd, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FusionParams {
    Linear(LinearFusionParams),
    Conv(ConvFusionParams),
    CoAttention(CoAttentionParams),
    MoE(MoEParams),
}

impl FusionParams {
    pub fn init(cfg: &FusionConfig, rng: &mut SplitMix64) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        Ok(match cfg.variant {
            FusionVariant::Linear => FusionParams::Linear(LinearFusionParams::init(d, cfg.bias, rng)),
            FusionVariant::Conv => {
                FusionParams::Conv(ConvFusionParams::init(d, cfg.kernel_size, cfg.bias, rng))
            }
            FusionVariant::CoAttention => {
                FusionParams::CoAttention(CoAttentionParams::init(d, cfg.bias, rng))
            }
            FusionVariant::MoE => FusionParams::MoE(MoEParams::init(d, cfg.theta, rng)),
        })
    }

    pub fn variant(&self) -> FusionVariant {
        match self {
            FusionParams::Linear(_) => FusionVariant::Linear,
            FusionParams::Conv(_) => FusionVariant::Conv,
            FusionParams::CoAttention(_) => FusionVariant::CoAttention,
            FusionParams::MoE(_) => FusionVariant::MoE,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FusionParams::Linear(p) => p.dim(),
            FusionParams::Conv(p) => p.dim(),
            FusionParams::CoAttention(p) => p.dim(),
            FusionParams::MoE(p) => p.dim(),
        }
    }

    pub fn forward(&self, f_sf: ArrayView2<f64>, f_ssl: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            FusionParams::Linear(p) => linear::fuse_linear(f_sf, f_ssl, p),
            FusionParams::Conv(p) => conv::fuse_conv(f_sf, f_ssl, p),
            FusionParams::CoAttention(p) => coattention::fuse_coattention(f_sf, f_ssl, p),
            FusionParams::MoE(p) => moe::fuse_moe(f_sf, f_ssl, p).map(|(y, _)| y),
        }
    }
}

impl Params for FusionParams {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        match self {
            FusionParams::Linear(p) => p.tensors(),
            FusionParams::Conv(p) => p.tensors(),
            FusionParams::CoAttention(p) => p.tensors(),
            FusionParams::MoE(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        match self {
            FusionParams::Linear(p) => p.tensors_mut(),
            FusionParams::Conv(p) => p.tensors_mut(),
            FusionParams::CoAttention(p) => p.tensors_mut(),
            FusionParams::MoE(p) => p.tensors_mut(),
        }
    }
}

/// `f_FUSE(S)` for the requested variant. The params must be of the same
/// variant.
pub fn fuse(
    variant: FusionVariant,
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    params: &FusionParams,
) -> Result<Array2<f64>> {
    if params.variant() != variant {
        return Err(Error::Config(format!(
            "variant {variant} requested with {} parameters",
            params.variant()
        )));
    }
    params.forward(f_sf, f_ssl)
}

pub(crate) fn check_streams(f_sf: ArrayView2<f64>, f_ssl: ArrayView2<f64>, dim: usize) -> Result<()> {
    if f_sf.dim() != f_ssl.dim() {
        return Err(Error::Shape(format!(
            "streams differ in shape: {:?} vs {:?}",
            f_sf.dim(),
            f_ssl.dim()
        )));
    }
    if f_sf.ncols() != dim {
        return Err(Error::Shape(format!(
            "streams have dim {}, fusion expects {dim}",
            f_sf.ncols()
        )));
    }
    Ok(())
}

/// `[a ‖ b]` along the feature axis.
pub(crate) fn concat(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a, b]).expect("equal row counts")
}

/// `x · w (+ bias)` where bias is a `1 × n` row.
pub(crate) fn affine(x: ArrayView2<f64>, w: &Array2<f64>, bias: Option<&Array2<f64>>) -> Array2<f64> {
    let mut y = x.dot(w);
    if let Some(b) = bias {
        y += b;
    }
    y
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
    out
}

/// Row-wise log-softmax, `x - max - ln Σ exp(x - max)`.
pub fn log_softmax_rows(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = row.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub(crate) fn bias_row(dim: usize, enabled: bool) -> Option<Array2<f64>> {
    enabled.then(|| Array2::zeros((1, dim)))
}

pub(crate) fn col_sum(g: &Array2<f64>) -> Array2<f64> {
    let s: Array1<f64> = g.sum_axis(Axis(0));
    s.insert_axis(Axis(0))
}
