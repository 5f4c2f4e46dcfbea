use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{backprop_gradients, DenseNetwork};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::invalid(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Rescale gradients whose global L2 norm exceeds this value.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it freezes the parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::invalid("gradient clip threshold must be positive"));
            }
        }
        Ok(())
    }
}

/// A model trained by minibatch gradient descent on a flat parameter vector.
pub trait Trainable {
    type Sample;

    fn parameters(&self) -> Vec<f64>;

    fn set_parameters(&mut self, params: &[f64]);

    /// Mean loss over `batch` and its gradient, in `parameters()` order.
    fn loss_and_gradient(&self, batch: &[&Self::Sample]) -> Result<(f64, Vec<f64>)>;
}

/// Input/target pair for plain regression.
pub type Sample = (DVector<f64>, DVector<f64>);

pub(crate) fn stack_columns<'a>(cols: impl ExactSizeIterator<Item = &'a DVector<f64>>, rows: usize) -> DMatrix<f64> {
    let n = cols.len();
    let mut m = DMatrix::zeros(rows, n);
    for (j, c) in cols.enumerate() {
        m.set_column(j, c);
    }
    m
}

impl Trainable for DenseNetwork {
    type Sample = Sample;

    fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.parameters_into(&mut out);
        out
    }

    fn set_parameters(&mut self, params: &[f64]) {
        self.set_parameters_from(params);
    }

    fn loss_and_gradient(&self, batch: &[&Sample]) -> Result<(f64, Vec<f64>)> {
        let x = stack_columns(batch.iter().map(|s| &s.0), self.input_dim());
        let y = stack_columns(batch.iter().map(|s| &s.1), self.output_dim());
        let (loss, grad) = backprop_gradients(self, &x, &y)?;
        Ok((loss, grad.flatten()))
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Sample-weighted mean minibatch loss of every epoch.
    pub loss_history: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().unwrap_or(&f64::NAN)
    }
}

/// Minibatch training with a seeded shuffle per epoch. Deterministic for a
/// fixed seed.
pub fn train<M: Trainable>(model: &mut M, dataset: &[M::Sample], config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = model.parameters();
    let mut adam = Adam::new(params.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&M::Sample> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (loss, mut grad) = model.loss_and_gradient(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            total += loss * chunk.len() as f64;
            if let Some(clip) = config.grad_clip {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    let s = clip / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            match config.optimizer {
                OptimizerKind::Adam => adam.step(&mut params, &grad, config.learning_rate),
                OptimizerKind::Sgd => {
                    for (p, g) in params.iter_mut().zip(&grad) {
                        *p -= config.learning_rate * g;
                    }
                }
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence { epoch, loss: f64::NAN });
            }
            model.set_parameters(&params);
        }
        let epoch_loss = total / dataset.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: epoch_loss,
            });
        }
        history.push(epoch_loss);
    }
    Ok(TrainReport { loss_history: history })
}
