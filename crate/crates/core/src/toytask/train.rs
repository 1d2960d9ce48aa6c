//! Gradient-descent training, evaluation and gate measurements.

use ndarray::Array2;

use super::model::ToyModel;
use super::{Stream, ToyDataset, Utterance};
use crate::diff::head::{head_backward, HeadParams};
use crate::error::{Error, Result};
use crate::fusion::GateWeights;
use crate::params::{zeros_like, Params};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Shuffles mini-batches; unused for full-batch training.
    pub seed: u64,
    pub train_align: bool,
    pub train_fusion: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.1,
            batch_size: None,
            seed: 0,
            train_align: true,
            train_fusion: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

fn batch_grads(model: &ToyModel, batch: &[&Utterance]) -> Result<(f64, Vec<Array2<f64>>)> {
    let mut total = zeros_like(model);
    let mut loss = 0.0;
    for u in batch {
        let (l, g) = model.loss_and_grads(u.f_sf.view(), u.f_ssl.view(), u.label)?;
        loss += l;
        for (acc, gi) in total.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    let n = batch.len() as f64;
    for g in &mut total {
        *g /= n;
    }
    Ok((loss / n, total))
}

fn shuffled(n: usize, rng: &mut SplitMix64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i + 1);
        idx.swap(i, j);
    }
    idx
}

/// Plain gradient descent on mean cross-entropy. The loss curve holds one
/// entry per epoch: the mean batch loss measured before each update.
pub fn train(model: &ToyModel, data: &ToyDataset, cfg: &TrainConfig) -> Result<(ToyModel, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty dataset".into()));
    }
    let mut model = model.clone();
    let n_align = model.align_tensor_count();
    let n_fusion = model.fusion_tensor_count();
    let mut rng = SplitMix64::new(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let order: Vec<usize> = match cfg.batch_size {
            None => (0..data.len()).collect(),
            Some(_) => shuffled(data.len(), &mut rng),
        };
        let bs = cfg.batch_size.unwrap_or(data.len());
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(bs) {
            let batch: Vec<&Utterance> = chunk.iter().map(|&i| &data.utterances[i]).collect();
            let (loss, mut grads) = batch_grads(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            for (i, g) in grads.iter_mut().enumerate() {
                let frozen = (i < n_align && !cfg.train_align)
                    || (i >= n_align && i < n_align + n_fusion && !cfg.train_fusion);
                if frozen {
                    g.fill(0.0);
                }
            }
            model.descend(&grads, cfg.learning_rate);
            epoch_loss += loss;
            batches += 1;
        }
        curve.push(epoch_loss / batches as f64);
    }
    Ok((model, curve))
}

/// Fraction of utterances classified correctly.
pub fn evaluate(model: &ToyModel, data: &ToyDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty dataset".into()));
    }
    let mut correct = 0usize;
    for u in &data.utterances {
        if model.predict(u.f_sf.view(), u.f_ssl.view())? == u.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Normalised gate weights of every utterance.
pub fn utterance_gates(model: &ToyModel, data: &ToyDataset) -> Result<Vec<GateWeights>> {
    data.utterances
        .iter()
        .map(|u| model.gates(u.f_sf.view(), u.f_ssl.view()))
        .collect()
}

/// Frame-weighted mean of the normalised `(w_sf, w_ssl)` over the dataset.
pub fn mean_gate_weight(model: &ToyModel, data: &ToyDataset) -> Result<(f64, f64)> {
    let gates = utterance_gates(model, data)?;
    let (mut s_sf, mut s_ssl, mut n) = (0.0, 0.0, 0usize);
    for g in &gates {
        s_sf += g.w_sf().sum();
        s_ssl += g.w_ssl().sum();
        n += g.frames();
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("no frames to average".into()));
    }
    Ok((s_sf / n as f64, s_ssl / n as f64))
}

fn stream_of(u: &Utterance, s: Stream) -> &Array2<f64> {
    match s {
        Stream::Sf => &u.f_sf,
        Stream::Ssl => &u.f_ssl,
    }
}

/// Linear probe (mean pooling + softmax regression) on one stream alone.
pub fn train_probe(data: &ToyDataset, stream: Stream, cfg: &TrainConfig, init_seed: u64) -> Result<HeadParams> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty dataset".into()));
    }
    let mut head = HeadParams::init(data.dim, data.n_classes, &mut SplitMix64::new(init_seed));
    let n = data.len() as f64;
    for epoch in 0..cfg.epochs {
        let mut gw = Array2::zeros(head.w.raw_dim());
        let mut gb = Array2::zeros(head.b.raw_dim());
        let mut loss = 0.0;
        for u in &data.utterances {
            let g = head_backward(&head, stream_of(u, stream).view(), u.label);
            loss += g.loss;
            gw += &g.w;
            gb += &g.b;
        }
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: loss / n });
        }
        head.descend(&[gw / n, gb / n], cfg.learning_rate);
    }
    Ok(head)
}

pub fn probe_accuracy(head: &HeadParams, data: &ToyDataset, stream: Stream) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty dataset".into()));
    }
    let correct = data
        .utterances
        .iter()
        .filter(|u| head.predict(stream_of(u, stream).view()) == u.label)
        .count();
    Ok(correct as f64 / data.len() as f64)
}
