//! Mean-pooled linear classifier with softmax cross-entropy.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::params::Params;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `D × n_classes`.
    pub w: Array2<f64>,
    /// `1 × n_classes`.
    pub b: Array2<f64>,
}

impl HeadParams {
    pub fn init(dim: usize, n_classes: usize, rng: &mut SplitMix64) -> Self {
        Self {
            w: rng.fan_in_matrix(dim, n_classes),
            b: Array2::zeros((1, n_classes)),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.w.ncols()
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// Class scores for one utterance's `T × D` features.
    pub fn logits(&self, h: ArrayView2<f64>) -> Array1<f64> {
        let pooled = pool(h);
        pooled.dot(&self.w) + self.b.row(0)
    }

    /// Argmax class, ties to the lowest index.
    pub fn predict(&self, h: ArrayView2<f64>) -> usize {
        argmax(self.logits(h).view())
    }
}

impl Params for HeadParams {
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        vec![("head_w", &self.w), ("head_b", &self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Frame mean; an empty utterance pools to zeros.
pub fn pool(h: ArrayView2<f64>) -> Array1<f64> {
    h.mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(h.ncols()))
}

pub fn argmax(x: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy `-log softmax(z)[label]`, stable for large scores.
pub fn cross_entropy(z: ndarray::ArrayView1<f64>, label: usize) -> f64 {
    let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    lse - z[label]
}

#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub loss: f64,
    pub w: Array2<f64>,
    pub b: Array2<f64>,
    /// Gradient with respect to the `T × D` input features.
    pub h: Array2<f64>,
}

/// Loss and gradients for one labelled utterance.
pub fn head_backward(p: &HeadParams, h: ArrayView2<f64>, label: usize) -> HeadGrads {
    let pooled = pool(h);
    let z = pooled.dot(&p.w) + p.b.row(0);
    let loss = cross_entropy(z.view(), label);
    let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut dz = z.mapv(|v| (v - m).exp());
    let s = dz.sum();
    dz /= s;
    dz[label] -= 1.0;

    let w = pooled
        .view()
        .insert_axis(Axis(1))
        .dot(&dz.view().insert_axis(Axis(0)));
    let b = dz.clone().insert_axis(Axis(0));
    let t = h.nrows();
    let dpooled = p.w.dot(&dz);
    let mut dh = Array2::zeros(h.raw_dim());
    if t > 0 {
        let row = dpooled / t as f64;
        for mut r in dh.rows_mut() {
            r.assign(&row);
        }
    }
    HeadGrads { loss, w, b, h: dh }
}
