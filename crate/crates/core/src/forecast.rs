//! Incremental sequence-to-sequence LSTM forecaster in latent space.
//!
//! The encoder consumes `l_input` standardised states; its final hidden
//! state is repeated as the decoder input for `l_output` steps, and a dense
//! head maps every decoder hidden state to a latent increment. Predicted
//! states are the cumulative sum of increments from the last input state.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_dim, Error, Result};
use crate::io::{join_list, read_vector, write_vector, Manifest};
use crate::neural::{
    mse_with_grad, stack_columns, train, Activation, DenseNetwork, LstmCell, LstmGradient, LstmStepCache, TrainConfig,
    TrainReport, Trainable,
};

/// Sliding windows over a latent trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Vec<Vec<DVector<f64>>>,
    /// `targets[k][j] = x[k + l_in + j] - x[k + l_in + j - 1]`.
    pub targets: Vec<Vec<DVector<f64>>>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }

    pub fn samples(&self) -> Vec<Window> {
        self.inputs
            .iter()
            .zip(&self.targets)
            .map(|(i, t)| Window {
                input: i.clone(),
                target: t.clone(),
            })
            .collect()
    }
}

/// One training sample: raw input states and raw target increments.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub input: Vec<DVector<f64>>,
    pub target: Vec<DVector<f64>>,
}

pub fn make_windows(series: &[DVector<f64>], l_input: usize, l_output: usize) -> Result<WindowedDataset> {
    if l_input == 0 || l_output == 0 {
        return Err(Error::invalid("window lengths must be at least 1"));
    }
    if series.len() < l_input + l_output {
        return Err(Error::invalid(format!(
            "series of length {} is shorter than l_input + l_output = {}",
            series.len(),
            l_input + l_output
        )));
    }
    let dim = series[0].len();
    for s in series {
        ensure_dim("latent series", dim, s.len())?;
    }
    let count = series.len() - l_input - l_output + 1;
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for k in 0..count {
        inputs.push(series[k..k + l_input].to_vec());
        targets.push(
            (0..l_output)
                .map(|j| &series[k + l_input + j] - &series[k + l_input + j - 1])
                .collect(),
        );
    }
    Ok(WindowedDataset { inputs, targets })
}

/// Named blocks of a concatenated latent vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatentLayout {
    pub fields: Vec<(String, usize)>,
}

impl LatentLayout {
    pub fn single(dim: usize) -> Self {
        Self {
            fields: vec![("state".into(), dim)],
        }
    }

    pub fn dim(&self) -> usize {
        self.fields.iter().map(|f| f.1).sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.fields
            .iter()
            .map(|f| {
                let o = off;
                off += f.1;
                o
            })
            .collect()
    }

    pub fn concat(&self, parts: &[DVector<f64>]) -> Result<DVector<f64>> {
        ensure_dim("latent layout fields", self.fields.len(), parts.len())?;
        for (p, f) in parts.iter().zip(&self.fields) {
            ensure_dim("latent layout field width", f.1, p.len())?;
        }
        Ok(DVector::from_iterator(
            self.dim(),
            parts.iter().flat_map(|p| p.iter().copied()),
        ))
    }

    pub fn split(&self, z: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        ensure_dim("latent layout", self.dim(), z.len())?;
        Ok(self
            .offsets()
            .into_iter()
            .zip(&self.fields)
            .map(|(o, f)| z.rows(o, f.1).into_owned())
            .collect())
    }
}

/// Per-component affine standardisation of states and scaling of
/// increments.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: DVector<f64>,
    pub scale: DVector<f64>,
    pub increment_scale: DVector<f64>,
}

fn guard_scale(s: f64) -> f64 {
    if s > 1e-12 && s.is_finite() {
        s
    } else {
        1.0
    }
}

impl Scaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            scale: DVector::from_element(dim, 1.0),
            increment_scale: DVector::from_element(dim, 1.0),
        }
    }

    /// Mean and standard deviation of the input states, and root mean
    /// square of the target increments.
    pub fn fit(data: &WindowedDataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot fit a scaler on no windows"));
        }
        let dim = data.inputs[0][0].len();
        let states: Vec<&DVector<f64>> = data.inputs.iter().flatten().collect();
        let n = states.len() as f64;
        let mean = states.iter().fold(DVector::zeros(dim), |a, s| a + *s) / n;
        let var = states.iter().fold(DVector::zeros(dim), |a: DVector<f64>, s| {
            a + (*s - &mean).map(|v| v * v)
        }) / n;
        let incs: Vec<&DVector<f64>> = data.targets.iter().flatten().collect();
        let ms = incs
            .iter()
            .fold(DVector::zeros(dim), |a: DVector<f64>, s| a + s.map(|v| v * v))
            / incs.len() as f64;
        Ok(Self {
            mean,
            scale: var.map(|v| guard_scale(v.sqrt())),
            increment_scale: ms.map(|v| guard_scale(v.sqrt())),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn normalize_state(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.mean).component_div(&self.scale)
    }
}

/// Shape of a forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterConfig {
    pub l_input: usize,
    pub l_output: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    /// Hidden widths of the dense head; the final layer is linear.
    pub head_hidden: Vec<usize>,
    pub head_activation: Activation,
    pub standardize: bool,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            l_input: 30,
            l_output: 30,
            encoder_hidden: 50,
            decoder_hidden: 200,
            head_hidden: vec![],
            head_activation: Activation::Relu,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqForecaster {
    encoder: LstmCell,
    decoder: LstmCell,
    head: DenseNetwork,
    l_input: usize,
    l_output: usize,
    scaler: Scaler,
    layout: LatentLayout,
}

struct ForwardCache {
    enc: Vec<LstmStepCache>,
    dec: Vec<LstmStepCache>,
    head: crate::neural::DenseCache,
    batch: usize,
}

impl Seq2SeqForecaster {
    pub fn new(
        encoder: LstmCell,
        decoder: LstmCell,
        head: DenseNetwork,
        l_input: usize,
        l_output: usize,
        scaler: Scaler,
        layout: LatentLayout,
    ) -> Result<Self> {
        if l_input == 0 || l_output == 0 {
            return Err(Error::invalid("window lengths must be at least 1"));
        }
        let dim = layout.dim();
        ensure_dim("forecaster encoder input", dim, encoder.input_dim())?;
        ensure_dim("forecaster decoder input", encoder.hidden_dim(), decoder.input_dim())?;
        ensure_dim("forecaster head input", decoder.hidden_dim(), head.input_dim())?;
        ensure_dim("forecaster head output", dim, head.output_dim())?;
        ensure_dim("forecaster scaler", dim, scaler.dim())?;
        Ok(Self {
            encoder,
            decoder,
            head,
            l_input,
            l_output,
            scaler,
            layout,
        })
    }

    pub fn init(latent_dim: usize, config: &ForecasterConfig, scaler: Scaler, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = LstmCell::init(latent_dim, config.encoder_hidden, &mut rng);
        let decoder = LstmCell::init(config.encoder_hidden, config.decoder_hidden, &mut rng);
        let mut widths = vec![config.decoder_hidden];
        widths.extend(&config.head_hidden);
        widths.push(latent_dim);
        let mut acts = vec![config.head_activation; config.head_hidden.len()];
        acts.push(Activation::Linear);
        let head = DenseNetwork::init(&widths, &acts, &mut rng)?;
        Self::new(
            encoder,
            decoder,
            head,
            config.l_input,
            config.l_output,
            scaler,
            LatentLayout::single(latent_dim),
        )
    }

    pub fn with_layout(mut self, layout: LatentLayout) -> Result<Self> {
        ensure_dim("forecaster layout", self.latent_dim(), layout.dim())?;
        self.layout = layout;
        Ok(self)
    }

    pub fn latent_dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn l_input(&self) -> usize {
        self.l_input
    }

    pub fn l_output(&self) -> usize {
        self.l_output
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    pub fn encoder(&self) -> &LstmCell {
        &self.encoder
    }

    pub fn decoder(&self) -> &LstmCell {
        &self.decoder
    }

    pub fn head(&self) -> &DenseNetwork {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut DenseNetwork {
        &mut self.head
    }

    /// `inputs[t]` holds the normalised state at step `t` for every sample.
    fn forward(&self, inputs: &[DMatrix<f64>]) -> Result<ForwardCache> {
        let batch = inputs[0].ncols();
        let eh = self.encoder.hidden_dim();
        let mut h = DMatrix::zeros(eh, batch);
        let mut c = DMatrix::zeros(eh, batch);
        let mut enc = Vec::with_capacity(inputs.len());
        for x in inputs {
            let step = self.encoder.step_batch(&h, &c, x)?;
            h = step.h.clone();
            c = step.c.clone();
            enc.push(step);
        }
        let repeated = h;
        let dh = self.decoder.hidden_dim();
        let mut h = DMatrix::zeros(dh, batch);
        let mut c = DMatrix::zeros(dh, batch);
        let mut dec = Vec::with_capacity(self.l_output);
        let mut stacked = DMatrix::zeros(dh, batch * self.l_output);
        for j in 0..self.l_output {
            let step = self.decoder.step_batch(&h, &c, &repeated)?;
            stacked.columns_mut(j * batch, batch).copy_from(&step.h);
            h = step.h.clone();
            c = step.c.clone();
            dec.push(step);
        }
        let head = self.head.forward_cached(&stacked)?;
        Ok(ForwardCache { enc, dec, head, batch })
    }

    fn normalized_inputs(&self, windows: &[&[DVector<f64>]]) -> Vec<DMatrix<f64>> {
        let dim = self.latent_dim();
        (0..self.l_input)
            .map(|t| {
                let cols: Vec<DVector<f64>> = windows.iter().map(|w| self.scaler.normalize_state(&w[t])).collect();
                stack_columns(cols.iter(), dim)
            })
            .collect()
    }

    /// Raw (unscaled) increments for one window, one vector per output step.
    pub fn predict_increments(&self, input: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        ensure_dim("forecaster window length", self.l_input, input.len())?;
        for x in input {
            ensure_dim("forecaster input width", self.latent_dim(), x.len())?;
        }
        let cache = self.forward(&self.normalized_inputs(&[input]))?;
        let out = cache.head.output();
        Ok((0..self.l_output)
            .map(|j| out.column(j).component_mul(&self.scaler.increment_scale))
            .collect())
    }

    /// Absolute states for the `l_output` steps after `input`.
    pub fn predict_window(&self, input: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let incs = self.predict_increments(input)?;
        let mut state = input[input.len() - 1].clone();
        Ok(incs
            .into_iter()
            .map(|d| {
                state += d;
                state.clone()
            })
            .collect())
    }

    /// Autoregressive forecast of `horizon` states following `warmup`.
    pub fn rollout(&self, warmup: &[DVector<f64>], horizon: usize) -> Result<Vec<DVector<f64>>> {
        if horizon == 0 {
            return Err(Error::invalid("rollout horizon must be positive"));
        }
        if warmup.len() < self.l_input {
            return Err(Error::invalid(format!(
                "warmup of {} states is shorter than l_input = {}",
                warmup.len(),
                self.l_input
            )));
        }
        let mut history: Vec<DVector<f64>> = warmup[warmup.len() - self.l_input..].to_vec();
        let mut out = Vec::with_capacity(horizon);
        while out.len() < horizon {
            let window = &history[history.len() - self.l_input..];
            let pred = self.predict_window(window)?;
            history.extend(pred.iter().cloned());
            out.extend(pred);
        }
        out.truncate(horizon);
        Ok(out)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut m = Manifest::new();
        m.set("kind", "seq2seq_forecaster");
        m.set("l_input", self.l_input);
        m.set("l_output", self.l_output);
        m.set(
            "layout.names",
            join_list(&self.layout.fields.iter().map(|f| f.0.clone()).collect::<Vec<_>>()),
        );
        m.set(
            "layout.widths",
            join_list(&self.layout.fields.iter().map(|f| f.1).collect::<Vec<_>>()),
        );
        m.set("layout.offsets", join_list(&self.layout.offsets()));
        self.encoder.save(dir, "encoder", &mut m)?;
        self.decoder.save(dir, "decoder", &mut m)?;
        self.head.save(dir, "head", &mut m)?;
        write_vector(dir.join("scaler_mean.txt"), &self.scaler.mean)?;
        write_vector(dir.join("scaler_scale.txt"), &self.scaler.scale)?;
        write_vector(dir.join("scaler_increment_scale.txt"), &self.scaler.increment_scale)?;
        m.write(dir.join("manifest.txt"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m = Manifest::read(dir.join("manifest.txt"))?;
        let names: Vec<String> = m.get_list("layout.names")?;
        let widths: Vec<usize> = m.get_list("layout.widths")?;
        ensure_dim("forecaster layout", names.len(), widths.len())?;
        let layout = LatentLayout {
            fields: names.into_iter().zip(widths).collect(),
        };
        let scaler = Scaler {
            mean: read_vector(dir.join("scaler_mean.txt"))?,
            scale: read_vector(dir.join("scaler_scale.txt"))?,
            increment_scale: read_vector(dir.join("scaler_increment_scale.txt"))?,
        };
        Self::new(
            LstmCell::load(dir, "encoder", &m)?,
            LstmCell::load(dir, "decoder", &m)?,
            DenseNetwork::load(dir, "head", &m)?,
            m.get("l_input")?,
            m.get("l_output")?,
            scaler,
            layout,
        )
    }
}

impl Trainable for Seq2SeqForecaster {
    type Sample = Window;

    fn parameters(&self) -> Vec<f64> {
        let mut p =
            Vec::with_capacity(self.encoder.param_count() + self.decoder.param_count() + self.head.param_count());
        self.encoder.parameters_into(&mut p);
        self.decoder.parameters_into(&mut p);
        self.head.parameters_into(&mut p);
        p
    }

    fn set_parameters(&mut self, params: &[f64]) {
        let mut off = self.encoder.set_parameters_from(params);
        off += self.decoder.set_parameters_from(&params[off..]);
        self.head.set_parameters_from(&params[off..]);
    }

    /// Mean squared error of the scaled increments.
    fn loss_and_gradient(&self, batch: &[&Window]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let dim = self.latent_dim();
        for w in batch {
            ensure_dim("forecaster window length", self.l_input, w.input.len())?;
            ensure_dim("forecaster target length", self.l_output, w.target.len())?;
        }
        let windows: Vec<&[DVector<f64>]> = batch.iter().map(|w| w.input.as_slice()).collect();
        let cache = self.forward(&self.normalized_inputs(&windows))?;
        let b = cache.batch;
        let mut target = DMatrix::zeros(dim, b * self.l_output);
        for (k, w) in batch.iter().enumerate() {
            for (j, t) in w.target.iter().enumerate() {
                ensure_dim("forecaster target width", dim, t.len())?;
                target.set_column(j * b + k, &t.component_div(&self.scaler.increment_scale));
            }
        }
        let (loss, d_out) = mse_with_grad(cache.head.output(), &target);
        let (head_grad, d_stacked) = self.head.backward(&cache.head, &d_out);

        let mut dec_grad = LstmGradient::zeros_like(&self.decoder);
        let dh_dim = self.decoder.hidden_dim();
        let mut dh = DMatrix::zeros(dh_dim, b);
        let mut dc = DMatrix::zeros(dh_dim, b);
        let mut d_repeat = DMatrix::zeros(self.encoder.hidden_dim(), b);
        for j in (0..self.l_output).rev() {
            dh += d_stacked.columns(j * b, b);
            let (dh_prev, dc_prev, dx) = self.decoder.backward_step(&cache.dec[j], &dh, &dc, &mut dec_grad);
            d_repeat += dx;
            dh = dh_prev;
            dc = dc_prev;
        }

        let mut enc_grad = LstmGradient::zeros_like(&self.encoder);
        let mut dh = d_repeat;
        let mut dc = DMatrix::zeros(self.encoder.hidden_dim(), b);
        for step in cache.enc.iter().rev() {
            let (dh_prev, dc_prev, _) = self.encoder.backward_step(step, &dh, &dc, &mut enc_grad);
            dh = dh_prev;
            dc = dc_prev;
        }

        let mut g = Vec::with_capacity(self.parameters().len());
        enc_grad.flatten_into(&mut g);
        dec_grad.flatten_into(&mut g);
        head_grad.flatten_into(&mut g);
        Ok((loss, g))
    }
}

/// Build windows from a latent trajectory, split them 80/20 by
/// interleaving, fit the scaler on the training part and train.
pub fn train_forecaster(
    series: &[DVector<f64>],
    config: &ForecasterConfig,
    train_config: &TrainConfig,
) -> Result<(Seq2SeqForecaster, TrainReport, WindowedDataset)> {
    train_forecaster_multi(&[series], config, train_config)
}

/// As [`train_forecaster`], with windows drawn from several independent
/// trajectories (no window crosses a trajectory boundary).
pub fn train_forecaster_multi(
    series: &[&[DVector<f64>]],
    config: &ForecasterConfig,
    train_config: &TrainConfig,
) -> Result<(Seq2SeqForecaster, TrainReport, WindowedDataset)> {
    if series.is_empty() {
        return Err(Error::invalid("no trajectories to train on"));
    }
    let mut windows = WindowedDataset {
        inputs: Vec::new(),
        targets: Vec::new(),
    };
    for s in series {
        let w = make_windows(s, config.l_input, config.l_output)?;
        windows.inputs.extend(w.inputs);
        windows.targets.extend(w.targets);
    }
    let dim = series[0][0].len();
    for w in &windows.inputs {
        ensure_dim("latent series", dim, w[0].len())?;
    }
    let (train_idx, test_idx) = crate::rom::interleaved_split(windows.len(), 5);
    let train_set = windows.select(&train_idx);
    if train_set.is_empty() {
        return Err(Error::invalid("no training windows"));
    }
    let scaler = if config.standardize {
        Scaler::fit(&train_set)?
    } else {
        Scaler::identity(dim)
    };
    let mut model = Seq2SeqForecaster::init(dim, config, scaler, train_config.seed)?;
    let report = train(&mut model, &train_set.samples(), train_config)?;
    Ok((model, report, windows.select(&test_idx)))
}
