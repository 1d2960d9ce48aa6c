use ndarray::{Array2, ArrayView2};

use crate::align::{align_pair, AlignParams};
use crate::analysis::normalize_gates;
use crate::diff::align::align_backward;
use crate::diff::head::{head_backward, HeadParams};
use crate::diff::backward;
use crate::error::{Error, Result};
use crate::feat::{FeatureMatrix, StreamSource};
use crate::fusion::moe::gate_weights;
use crate::fusion::{FusionConfig, FusionParams, GateWeights};
use crate::params::Params;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub fusion: FusionConfig,
    pub n_classes: usize,
    /// SSL input width when the model aligns raw streams itself; `None` for
    /// pre-aligned `T × D` inputs.
    pub align_ssl_dim: Option<usize>,
}

/// Optional alignment, one fusion front-end, and a mean-pooled linear
/// classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub align: Option<AlignParams>,
    pub fusion: FusionParams,
    pub head: HeadParams,
}

impl ToyModel {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        if cfg.n_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        let mut rng = SplitMix64::new(seed);
        let d = cfg.fusion.dim;
        let align = cfg.align_ssl_dim.map(|ssl| AlignParams::init(ssl, d, &mut rng));
        let fusion = FusionParams::init(&cfg.fusion, &mut rng)?;
        let head = HeadParams::init(d, cfg.n_classes, &mut rng);
        Ok(Self { align, fusion, head })
    }

    pub fn dim(&self) -> usize {
        self.fusion.dim()
    }

    /// Number of leading tensors owned by the alignment block.
    pub fn align_tensor_count(&self) -> usize {
        self.align.as_ref().map_or(0, |a| a.tensors().len())
    }

    pub fn fusion_tensor_count(&self) -> usize {
        self.fusion.tensors().len()
    }

    /// Both streams on the common `T × D` grid.
    pub fn aligned(&self, f_sf: ArrayView2<f64>, f_ssl: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        match &self.align {
            None => Ok((f_sf.to_owned(), f_ssl.to_owned())),
            Some(a) => {
                let sf = FeatureMatrix::new(f_sf.to_owned(), 10.0, StreamSource::Sf)?;
                let ssl = FeatureMatrix::new(f_ssl.to_owned(), 20.0, StreamSource::Ssl)?;
                let (x, y) = align_pair(&sf, &ssl, a)?;
                Ok((x.data, y.data))
            }
        }
    }

    pub fn fused(&self, f_sf: ArrayView2<f64>, f_ssl: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (a, b) = self.aligned(f_sf, f_ssl)?;
        self.fusion.forward(a.view(), b.view())
    }

    /// Normalised per-frame gate weights; only MoE models have a gate.
    pub fn gates(&self, f_sf: ArrayView2<f64>, f_ssl: ArrayView2<f64>) -> Result<GateWeights> {
        let FusionParams::MoE(moe) = &self.fusion else {
            return Err(Error::Config(format!(
                "gate weights need a moe model, got {}",
                self.fusion.variant()
            )));
        };
        let (sf, _) = self.aligned(f_sf, f_ssl)?;
        normalize_gates(&gate_weights(sf.view(), moe)?)
    }

    pub fn predict(&self, f_sf: ArrayView2<f64>, f_ssl: ArrayView2<f64>) -> Result<usize> {
        Ok(self.head.predict(self.fused(f_sf, f_ssl)?.view()))
    }

    pub fn loss(&self, f_sf: ArrayView2<f64>, f_ssl: ArrayView2<f64>, label: usize) -> Result<f64> {
        let h = self.fused(f_sf, f_ssl)?;
        Ok(crate::diff::head::cross_entropy(self.head.logits(h.view()).view(), label))
    }

    /// Cross-entropy and gradients for every tensor in [`Params::tensors`]
    /// order.
    pub fn loss_and_grads(
        &self,
        f_sf: ArrayView2<f64>,
        f_ssl: ArrayView2<f64>,
        label: usize,
    ) -> Result<(f64, Vec<Array2<f64>>)> {
        if label >= self.head.n_classes() {
            return Err(Error::InvalidInput(format!(
                "label {label} out of range for {} classes",
                self.head.n_classes()
            )));
        }
        let (a, b) = self.aligned(f_sf, f_ssl)?;
        let h = self.fusion.forward(a.view(), b.view())?;
        let hg = head_backward(&self.head, h.view(), label);
        let fg = backward(self.fusion.variant(), a.view(), b.view(), &self.fusion, hg.h.view())?;

        let mut grads = Vec::new();
        if let Some(al) = &self.align {
            let ag = align_backward(f_sf, f_ssl, al, fg.f_sf.view(), fg.f_ssl.view())?;
            grads.extend(ag.params());
        }
        grads.extend(fg.params);
        grads.push(hg.w);
        grads.push(hg.b);
        Ok((hg.loss, grads))
    }
}

impl Params for ToyModel {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        let mut v = Vec::new();
        if let Some(a) = &self.align {
            v.extend(a.tensors());
        }
        v.extend(self.fusion.tensors());
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = Vec::new();
        if let Some(a) = &mut self.align {
            v.extend(a.tensors_mut());
        }
        v.extend(self.fusion.tensors_mut());
        v.extend(self.head.tensors_mut());
        v
    }
}
