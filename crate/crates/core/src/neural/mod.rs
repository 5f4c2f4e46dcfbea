//! Dense and LSTM building blocks with exact backpropagation.
//!
//! Batches are stored column-wise: a `DMatrix` with one column per sample.

mod activation;
mod dense;
mod lstm;
mod train;

pub use activation::Activation;
pub use dense::{backprop_gradients, DenseCache, DenseGradient, DenseLayer, DenseNetwork, LayerGradient};
pub use lstm::{LstmCell, LstmGradient, LstmStepCache};
pub(crate) use train::stack_columns;
pub use train::{train, Adam, OptimizerKind, Sample, TrainConfig, TrainReport, Trainable};

use nalgebra::DMatrix;
use rand::Rng;

/// Uniform Glorot initialisation in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..=limit))
}

/// Mean squared error over every entry and the gradient with respect to
/// `output`.
pub fn mse_with_grad(output: &DMatrix<f64>, target: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let diff = output - target;
    let count = diff.len().max(1) as f64;
    let loss = diff.norm_squared() / count;
    (loss, diff * (2.0 / count))
}
