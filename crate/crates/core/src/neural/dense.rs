use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{glorot_uniform, mse_with_grad, Activation};
use crate::error::{ensure_dim, Error, Result};
use crate::io::{read_matrix, read_vector, write_matrix, write_vector, Manifest};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Feed-forward stack of affine layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<DenseLayer>,
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    /// `inputs[k]` feeds layer `k`; the last entry is the network output.
    activations: Vec<DMatrix<f64>>,
    pre_activations: Vec<DMatrix<f64>>,
}

impl DenseCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.activations.last().expect("cache holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Gradient with the same layout as the network it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGradient {
    pub layers: Vec<LayerGradient>,
}

impl DenseGradient {
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.flatten_into(&mut out);
        out
    }
}

impl DenseNetwork {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("a dense network needs at least one layer"));
        }
        for (k, layer) in layers.iter().enumerate() {
            layer.activation.validate()?;
            ensure_dim("dense layer bias", layer.output_dim(), layer.bias.len())?;
            if k > 0 {
                ensure_dim("dense layer chaining", layers[k - 1].output_dim(), layer.input_dim())?;
            }
            if layer.weights.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation {
                    context: "dense parameters",
                    layer: k,
                });
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-initialised network with zero biases. `widths` lists every
    /// layer boundary, so `widths.len() == activations.len() + 1`.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if widths.len() != activations.len() + 1 {
            return Err(Error::invalid(format!(
                "{} widths cannot describe {} layers",
                widths.len(),
                activations.len()
            )));
        }
        let layers = widths
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| DenseLayer {
                weights: glorot_uniform(w[1], w[0], rng),
                bias: DVector::zeros(w[1]),
                activation,
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<DenseLayer> {
        self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("dense input", self.input_dim(), x.len())?;
        let mut cur = x.clone();
        for layer in &self.layers {
            let mut z = &layer.weights * &cur + &layer.bias;
            z.apply(|v| *v = layer.activation.apply(*v));
            cur = z;
        }
        Ok(cur)
    }

    /// Forward a batch (one sample per column).
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim("dense batch input", self.input_dim(), x.nrows())?;
        let mut cur = x.clone();
        for layer in &self.layers {
            let mut z = &layer.weights * &cur;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            z.apply(|v| *v = layer.activation.apply(*v));
            cur = z;
        }
        Ok(cur)
    }

    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<DenseCache> {
        ensure_dim("dense batch input", self.input_dim(), x.nrows())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(x.clone());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weights * &activations[k];
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            let mut a = z.clone();
            a.apply(|v| *v = layer.activation.apply(*v));
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation {
                    context: "dense forward",
                    layer: k,
                });
            }
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(DenseCache {
            activations,
            pre_activations,
        })
    }

    /// Backpropagate `d_output` (gradient of the loss with respect to the
    /// network output) through a cached forward pass. Returns the parameter
    /// gradient and the gradient with respect to the network input.
    pub fn backward(&self, cache: &DenseCache, d_output: &DMatrix<f64>) -> (DenseGradient, DMatrix<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_output.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre_activations[k];
            let a = &cache.activations[k + 1];
            delta.zip_zip_apply(z, a, |d, zv, av| *d *= layer.activation.derivative(zv, av));
            let weights = &delta * cache.activations[k].transpose();
            let bias = delta.column_sum();
            grads.push(LayerGradient { weights, bias });
            delta = layer.weights.transpose() * &delta;
        }
        grads.reverse();
        (DenseGradient { layers: grads }, delta)
    }

    pub fn parameters_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
    }

    /// Load parameters from a flat slice in `parameters_into` order; returns
    /// the number of values consumed.
    pub fn set_parameters_from(&mut self, p: &[f64]) -> usize {
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.as_mut_slice().copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.as_mut_slice().copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
        off
    }

    /// Concatenate two networks into one (`self` first).
    pub fn chain(&self, next: &DenseNetwork) -> Result<DenseNetwork> {
        let mut layers = self.layers.clone();
        layers.extend(next.layers.iter().cloned());
        Self::new(layers)
    }

    /// Split into the first `k` layers and the rest.
    pub fn split_at(&self, k: usize) -> Result<(DenseNetwork, DenseNetwork)> {
        if k == 0 || k >= self.layers.len() {
            return Err(Error::invalid(format!(
                "cannot split {} layers at {k}",
                self.layers.len()
            )));
        }
        Ok((
            Self::new(self.layers[..k].to_vec())?,
            Self::new(self.layers[k..].to_vec())?,
        ))
    }

    /// Write `{prefix}_layer{k}_weights.txt` / `_bias.txt` and the layer
    /// description into `manifest`.
    pub fn save(&self, dir: &Path, prefix: &str, manifest: &mut Manifest) -> Result<()> {
        manifest.set(&format!("{prefix}.layers"), self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            let key = format!("{prefix}.layer{k}");
            manifest.set(&format!("{key}.shape"), format!("{} {}", l.output_dim(), l.input_dim()));
            manifest.set(&format!("{key}.activation"), l.activation);
            write_matrix(dir.join(format!("{prefix}_layer{k}_weights.txt")), &l.weights)?;
            write_vector(dir.join(format!("{prefix}_layer{k}_bias.txt")), &l.bias)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, prefix: &str, manifest: &Manifest) -> Result<Self> {
        let count: usize = manifest.get(&format!("{prefix}.layers"))?;
        let mut layers = Vec::with_capacity(count);
        for k in 0..count {
            let key = format!("{prefix}.layer{k}");
            let shape: Vec<usize> = manifest.get_list(&format!("{key}.shape"))?;
            let activation: Activation = manifest.get_str(&format!("{key}.activation"))?.parse()?;
            let weights = read_matrix(dir.join(format!("{prefix}_layer{k}_weights.txt")))?;
            let bias = read_vector(dir.join(format!("{prefix}_layer{k}_bias.txt")))?;
            if shape.len() != 2 || shape[0] != weights.nrows() || shape[1] != weights.ncols() {
                return Err(Error::Parse {
                    path: dir.to_path_buf(),
                    msg: format!("{key} shape does not match its weight file"),
                });
            }
            layers.push(DenseLayer {
                weights,
                bias,
                activation,
            });
        }
        Self::new(layers)
    }
}

/// Mean-squared-error loss over the batch (mean over samples and output
/// components) and its gradient with respect to every parameter.
pub fn backprop_gradients(
    net: &DenseNetwork,
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
) -> Result<(f64, DenseGradient)> {
    if inputs.ncols() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    ensure_dim("batch size", inputs.ncols(), targets.ncols())?;
    ensure_dim("target width", net.output_dim(), targets.nrows())?;
    let cache = net.forward_cached(inputs)?;
    let (loss, d_out) = mse_with_grad(cache.output(), targets);
    let (grad, _) = net.backward(&cache, &d_out);
    Ok((loss, grad))
}
