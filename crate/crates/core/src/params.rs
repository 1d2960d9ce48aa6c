//! Named parameter tensors.
//!
//! Every learnable block exposes its matrices in a fixed order so that the
//! trainer, the finite-difference checker and the checkpoint writer can walk
//! them uniformly. Bias vectors are stored as `1 × n` rows.

use ndarray::Array2;

pub trait Params {
    /// Names and tensors, in a stable order.
    fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)>;

    /// Same order as [`Params::tensors`].
    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>>;

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self -= lr * grads`, tensor by tensor.
    fn descend(&mut self, grads: &[Array2<f64>], lr: f64) {
        let slots = self.tensors_mut();
        assert_eq!(slots.len(), grads.len(), "gradient count mismatch");
        for (p, g) in slots.into_iter().zip(grads) {
            p.scaled_add(-lr, g);
        }
    }
}

/// Zeroed tensors with the same shapes as `p`.
pub fn zeros_like<P: Params + ?Sized>(p: &P) -> Vec<Array2<f64>> {
    p.tensors()
        .iter()
        .map(|(_, t)| Array2::zeros(t.raw_dim()))
        .collect()
}
