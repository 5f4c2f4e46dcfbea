//! Twin-experiment orchestration on a synthetic viscous Burgers flow.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::assim::{read_report, run_gla, write_report, GlaConfig, GlaOutput, RefitPolicy, ReportRow};
use crate::error::{ensure_dim, Error, Result};
use crate::forecast::{train_forecaster_multi, ForecasterConfig, Seq2SeqForecaster};
use crate::io::{read_matrix, write_matrix, Manifest};
use crate::neural::TrainConfig;
use crate::obsgen::{observe_trajectory, LatentObsOperator, MarginalFn, SelectionMatrix};
use crate::rom::{fit_pod_ae, interleaved_split, AeArchitecture, PodAeModel, SnapshotMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Zero,
    /// `offset + amplitude · exp(−((x − center)/width)²)` with periodic
    /// distance.
    GaussianBump {
        amplitude: f64,
        center: f64,
        width: f64,
        offset: f64,
    },
    /// `offset + amplitude · sin(2π k x)`.
    Sine {
        amplitude: f64,
        wavenumber: u32,
        offset: f64,
    },
}

impl InitialCondition {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialCondition::Zero => 0.0,
            InitialCondition::GaussianBump {
                amplitude,
                center,
                width,
                offset,
            } => {
                let mut d = (x - center).rem_euclid(1.0);
                if d > 0.5 {
                    d -= 1.0;
                }
                offset + amplitude * (-(d / width).powi(2)).exp()
            }
            InitialCondition::Sine {
                amplitude,
                wavenumber,
                offset,
            } => offset + amplitude * (2.0 * std::f64::consts::PI * wavenumber as f64 * x).sin(),
        }
    }
}

/// 1D viscous Burgers on the periodic unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersSpec {
    pub n: usize,
    pub viscosity: f64,
    pub dt: f64,
    /// Number of stored states, the initial one included.
    pub snapshots: usize,
    /// Time steps between stored states.
    pub stride: usize,
    pub ic: InitialCondition,
}

impl Default for BurgersSpec {
    fn default() -> Self {
        Self {
            n: 256,
            viscosity: 0.01,
            dt: 2.5e-4,
            snapshots: 1000,
            stride: 4,
            ic: InitialCondition::GaussianBump {
                amplitude: 1.0,
                center: 0.25,
                width: 0.05,
                offset: 0.5,
            },
        }
    }
}

impl BurgersSpec {
    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn initial_state(&self) -> DVector<f64> {
        let dx = self.dx();
        DVector::from_fn(self.n, |i, _| self.ic.eval((i as f64 + 0.5) * dx))
    }

    /// Largest admissible time step: `0.5 · min(dx/u_max, dx²/(2ν))`.
    pub fn stable_dt(&self) -> f64 {
        let dx = self.dx();
        let umax = self.initial_state().amax();
        let advective = if umax > 0.0 { dx / umax } else { f64::INFINITY };
        let diffusive = if self.viscosity > 0.0 {
            dx * dx / (2.0 * self.viscosity)
        } else {
            f64::INFINITY
        };
        0.5 * advective.min(diffusive)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 || self.snapshots < 2 || self.stride == 0 {
            return Err(Error::invalid("Burgers needs n >= 3, snapshots >= 2, stride >= 1"));
        }
        if !(self.dt > 0.0) || self.viscosity < 0.0 {
            return Err(Error::invalid("Burgers needs dt > 0 and viscosity >= 0"));
        }
        let limit = self.stable_dt();
        if self.dt > limit {
            return Err(Error::invalid(format!(
                "dt = {} exceeds the stability limit {limit}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Semi-discrete right-hand side: Rusanov flux for `u²/2` and a central
/// second difference for the viscous term.
pub fn burgers_rhs(u: &DVector<f64>, dx: f64, viscosity: f64) -> DVector<f64> {
    let n = u.len();
    let mut flux = vec![0.0; n];
    for (i, f) in flux.iter_mut().enumerate() {
        // interface i + 1/2
        let (l, r) = (u[i], u[(i + 1) % n]);
        let a = l.abs().max(r.abs());
        *f = 0.25 * (l * l + r * r) - 0.5 * a * (r - l);
    }
    DVector::from_fn(n, |i, _| {
        let left = flux[(i + n - 1) % n];
        let right = flux[i];
        let lap = u[(i + 1) % n] - 2.0 * u[i] + u[(i + n - 1) % n];
        -(right - left) / dx + viscosity * lap / (dx * dx)
    })
}

/// Integrate with Heun's method and store every `stride`-th state.
pub fn generate_synthetic_snapshots(spec: &BurgersSpec) -> Result<SnapshotMatrix> {
    spec.validate()?;
    let dx = spec.dx();
    let mut u = spec.initial_state();
    let mut data = DMatrix::zeros(spec.n, spec.snapshots);
    data.set_column(0, &u);
    let mut step = 0;
    for k in 1..spec.snapshots {
        for _ in 0..spec.stride {
            step += 1;
            let k1 = burgers_rhs(&u, dx, spec.viscosity);
            let mid = &u + &k1 * spec.dt;
            let k2 = burgers_rhs(&mid, dx, spec.viscosity);
            u += (k1 + k2) * (0.5 * spec.dt);
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Unstable { step });
            }
        }
        data.set_column(k, &u);
    }
    SnapshotMatrix::new(data)
}

/// Per-step `(latent, full)` relative errors of a latent trajectory against
/// full-space truth columns. Zero-norm truth gives `NaN`.
pub fn compute_relative_errors(
    truth: &DMatrix<f64>,
    predicted: &[DVector<f64>],
    model: &PodAeModel,
) -> Result<Vec<(f64, f64)>> {
    ensure_dim("relative error steps", truth.ncols(), predicted.len())?;
    ensure_dim("relative error dof", model.dof(), truth.nrows())?;
    let mut out = Vec::with_capacity(predicted.len());
    for (t, z) in predicted.iter().enumerate() {
        let x = truth.column(t).into_owned();
        let coeffs = model.basis().encode(&x)?;
        let rec_coeffs = model.decode_coefficients(z)?;
        let rec = model.basis().decode(&rec_coeffs)?;
        let ratio = |num: f64, den: f64| if den == 0.0 { f64::NAN } else { num / den };
        out.push((
            ratio((&coeffs - &rec_coeffs).norm(), coeffs.norm()),
            ratio((&x - rec).norm(), x.norm()),
        ));
    }
    Ok(out)
}

/// Textual conversion for configuration values.
pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> std::result::Result<Self, String>;
    fn format_value(&self) -> String;
}

macro_rules! fromstr_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> std::result::Result<Self, String> {
                s.trim().parse::<$t>().map_err(|e| e.to_string())
            }
            fn format_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

fromstr_value!(usize, u32, u64, f64, MarginalFn, RefitPolicy);

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok(PathBuf::from(s.trim()))
    }
    fn format_value(&self) -> String {
        self.display().to_string()
    }
}

impl ConfigValue for String {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        Ok(s.trim().to_string())
    }
    fn format_value(&self) -> String {
        self.clone()
    }
}

/// `all` or a count.
impl ConfigValue for Option<usize> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "all" | "auto" | "" => Ok(None),
            v => v.parse().map(Some).map_err(|e: std::num::ParseIntError| e.to_string()),
        }
    }
    fn format_value(&self) -> String {
        self.map(|v| v.to_string()).unwrap_or_else(|| "auto".into())
    }
}

/// Whitespace-separated list.
impl ConfigValue for Vec<usize> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        s.split_whitespace()
            .map(|t| t.parse().map_err(|e: std::num::ParseIntError| e.to_string()))
            .collect()
    }
    fn format_value(&self) -> String {
        self.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
    }
}

/// Indices and inclusive ranges such as `450-459 600`.
impl ConfigValue for BTreeSet<usize> {
    fn parse_value(s: &str) -> std::result::Result<Self, String> {
        let mut set = BTreeSet::new();
        for tok in s.split_whitespace() {
            let parse = |v: &str| v.parse::<usize>().map_err(|_| format!("bad schedule entry `{tok}`"));
            match tok.split_once('-') {
                Some((a, b)) => {
                    let (a, b) = (parse(a)?, parse(b)?);
                    if a > b {
                        return Err(format!("empty schedule range `{tok}`"));
                    }
                    set.extend(a..=b);
                }
                None => {
                    set.insert(parse(tok)?);
                }
            }
        }
        Ok(set)
    }
    fn format_value(&self) -> String {
        let mut parts = Vec::new();
        let mut iter = self.iter().copied().peekable();
        while let Some(start) = iter.next() {
            let mut end = start;
            while iter.peek() == Some(&(end + 1)) {
                end = iter.next().unwrap();
            }
            parts.push(if start == end {
                start.to_string()
            } else {
                format!("{start}-{end}")
            });
        }
        parts.join(" ")
    }
}

macro_rules! experiment_config {
    ($($key:literal => $field:ident : $ty:ty = $default:expr, $doc:literal;)*) => {
        /// Flat experiment configuration; see [`CONFIG_KEYS`].
        #[derive(Debug, Clone, PartialEq)]
        pub struct ExperimentConfig {
            $(pub $field: $ty,)*
        }

        impl Default for ExperimentConfig {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        /// Every configuration key with a short description.
        pub const CONFIG_KEYS: &[(&str, &str)] = &[$(($key, $doc)),*];

        impl ExperimentConfig {
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$field = <$ty as ConfigValue>::parse_value(value)
                            .map_err(|e| Error::invalid(format!("config key `{key}`: {e}")))?;
                    })*
                    _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $($key => Some(ConfigValue::format_value(&self.$field)),)*
                    _ => None,
                }
            }
        }
    };
}

experiment_config! {
    "output_dir" => output_dir: PathBuf = PathBuf::from("gla-out"), "directory for every artifact";
    "seed" => seed: u64 = 0, "master seed; stage seeds are derived from it";
    "burgers.n" => burgers_n: usize = 256, "grid points";
    "burgers.viscosity" => burgers_viscosity: f64 = 0.01, "kinematic viscosity";
    "burgers.dt" => burgers_dt: f64 = 2.5e-4, "time step";
    "burgers.snapshots" => burgers_snapshots: usize = 1000, "stored states";
    "burgers.stride" => burgers_stride: usize = 4, "time steps between stored states";
    "burgers.ic" => burgers_ic: String = "bump".into(), "initial condition: bump, sine or zero";
    "burgers.amplitude" => burgers_amplitude: f64 = 1.0, "initial amplitude";
    "burgers.center" => burgers_center: f64 = 0.25, "bump centre";
    "burgers.width" => burgers_width: f64 = 0.05, "bump width";
    "burgers.offset" => burgers_offset: f64 = 0.5, "constant background velocity";
    "burgers.wavenumber" => burgers_wavenumber: u32 = 1, "sine wavenumber";
    "burgers.members" => burgers_members: usize = 0, "training trajectories with jittered initial conditions (0 = train on the truth)";
    "burgers.jitter" => burgers_jitter: f64 = 0.2, "relative jitter of the training initial conditions";
    "rom.q" => rom_q: Option<usize> = None, "POD modes before the autoencoder (auto = all)";
    "rom.latent_dim" => rom_latent_dim: usize = 8, "state latent dimension";
    "rom.hidden" => rom_hidden: Vec<usize> = vec![128], "autoencoder hidden widths";
    "rom.epochs" => rom_epochs: usize = 200, "autoencoder epochs";
    "rom.learning_rate" => rom_learning_rate: f64 = 1e-3, "autoencoder learning rate";
    "rom.batch_size" => rom_batch_size: usize = 32, "autoencoder batch size";
    "forecast.l_input" => forecast_l_input: usize = 10, "input window length";
    "forecast.l_output" => forecast_l_output: usize = 10, "output window length";
    "forecast.encoder_hidden" => forecast_encoder_hidden: usize = 50, "encoder LSTM width";
    "forecast.decoder_hidden" => forecast_decoder_hidden: usize = 200, "decoder LSTM width";
    "forecast.epochs" => forecast_epochs: usize = 100, "forecaster epochs";
    "forecast.learning_rate" => forecast_learning_rate: f64 = 1e-3, "forecaster learning rate";
    "forecast.batch_size" => forecast_batch_size: usize = 32, "forecaster batch size";
    "forecast.grad_clip" => forecast_grad_clip: f64 = 1.0, "forecaster gradient norm clip";
    "forecast.start" => forecast_start: usize = 300, "first forecast snapshot index";
    "forecast.warmup" => forecast_warmup: Option<usize> = None, "encoded truth states before the start (auto = l_input)";
    "obs.m" => obs_m: usize = 200, "observation count";
    "obs.p" => obs_p: f64 = 0.05, "selection probability";
    "obs.marginal" => obs_marginal: MarginalFn = MarginalFn::Quadratic, "quadratic or reciprocal";
    "obs.q" => obs_q: Option<usize> = None, "observation POD modes (auto = all)";
    "obs.latent_dim" => obs_latent_dim: usize = 8, "observation latent dimension";
    "obs.hidden" => obs_hidden: Vec<usize> = vec![128], "observation autoencoder hidden widths";
    "obs.epochs" => obs_epochs: usize = 200, "observation autoencoder epochs";
    "obs.learning_rate" => obs_learning_rate: f64 = 1e-3, "observation autoencoder learning rate";
    "obs.batch_size" => obs_batch_size: usize = 32, "observation autoencoder batch size";
    "obs.noise_std" => obs_noise_std: f64 = 0.0, "additive Gaussian noise on observations";
    "gla.degree" => gla_degree: u32 = 4, "surrogate polynomial degree";
    "gla.range" => gla_range: f64 = 0.3, "LHS range fraction";
    "gla.samples" => gla_samples: usize = 1000, "LHS sample count";
    "gla.s_floor" => gla_s_floor: f64 = 1e-3, "LHS scale floor";
    "gla.k_max" => gla_k_max: usize = 50, "optimizer iterations";
    "gla.grad_tol" => gla_grad_tol: f64 = 0.01, "optimizer gradient tolerance";
    "gla.outer_tol" => gla_outer_tol: f64 = 0.05, "background gradient below which no minimisation runs";
    "gla.b_variance" => gla_b_variance: f64 = 1.0, "background error variance";
    "gla.r_variance" => gla_r_variance: f64 = 0.1, "observation error variance";
    "gla.refit" => gla_refit: RefitPolicy = RefitPolicy::PerStep, "per_step or per_burst";
    "gla.schedule" => gla_schedule: BTreeSet<usize> = [450..460, 600..610, 750..760].into_iter().flatten().collect(), "assimilated snapshot indices, ranges allowed";
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let manifest = Manifest::parse(text, path)?;
        let mut cfg = Self::default();
        for (k, v) in manifest.iter() {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path)?, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _) in CONFIG_KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).unwrap_or_default());
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn burgers(&self) -> Result<BurgersSpec> {
        let ic = match self.burgers_ic.as_str() {
            "bump" => InitialCondition::GaussianBump {
                amplitude: self.burgers_amplitude,
                center: self.burgers_center,
                width: self.burgers_width,
                offset: self.burgers_offset,
            },
            "sine" => InitialCondition::Sine {
                amplitude: self.burgers_amplitude,
                wavenumber: self.burgers_wavenumber,
                offset: self.burgers_offset,
            },
            "zero" => InitialCondition::Zero,
            other => return Err(Error::invalid(format!("unknown initial condition `{other}`"))),
        };
        Ok(BurgersSpec {
            n: self.burgers_n,
            viscosity: self.burgers_viscosity,
            dt: self.burgers_dt,
            snapshots: self.burgers_snapshots,
            stride: self.burgers_stride,
            ic,
        })
    }

    /// Training trajectories: the truth itself when `burgers.members` is 0,
    /// otherwise independent runs with jittered initial-condition
    /// parameters.
    pub fn training_specs(&self) -> Result<Vec<BurgersSpec>> {
        let truth = self.burgers()?;
        if self.burgers_members == 0 {
            return Ok(vec![truth]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.stage_seed(7));
        let j = self.burgers_jitter;
        let mut u = || j * rng.random_range(-1.0..=1.0);
        let ic = |u: &mut dyn FnMut() -> f64| match truth.ic {
            InitialCondition::Zero => InitialCondition::Zero,
            InitialCondition::GaussianBump {
                amplitude,
                center,
                width,
                offset,
            } => InitialCondition::GaussianBump {
                amplitude: amplitude * (1.0 + u()),
                center: center + 0.5 * u(),
                width: width * (1.0 + u()),
                offset: offset * (1.0 + u()),
            },
            InitialCondition::Sine {
                amplitude,
                wavenumber,
                offset,
            } => InitialCondition::Sine {
                amplitude: amplitude * (1.0 + u()),
                wavenumber,
                offset: offset * (1.0 + u()),
            },
        };
        Ok((0..self.burgers_members)
            .map(|_| BurgersSpec {
                ic: ic(&mut u),
                ..truth.clone()
            })
            .collect())
    }

    pub fn forecaster(&self) -> ForecasterConfig {
        ForecasterConfig {
            l_input: self.forecast_l_input,
            l_output: self.forecast_l_output,
            encoder_hidden: self.forecast_encoder_hidden,
            decoder_hidden: self.forecast_decoder_hidden,
            ..ForecasterConfig::default()
        }
    }

    pub fn warmup(&self) -> usize {
        self.forecast_warmup.unwrap_or(self.forecast_l_input)
    }

    /// Schedule relative to the first forecast step.
    pub fn gla(&self) -> Result<GlaConfig> {
        let mut schedule = BTreeSet::new();
        for &t in &self.gla_schedule {
            if t < self.forecast_start || t >= self.burgers_snapshots {
                return Err(Error::invalid(format!(
                    "scheduled snapshot {t} outside the forecast range {}..{}",
                    self.forecast_start, self.burgers_snapshots
                )));
            }
            schedule.insert(t - self.forecast_start);
        }
        Ok(GlaConfig {
            degree: self.gla_degree,
            range: self.gla_range,
            samples: self.gla_samples,
            s_floor: self.gla_s_floor,
            k_max: self.gla_k_max,
            grad_tol: self.gla_grad_tol,
            outer_tol: self.gla_outer_tol,
            b_variance: self.gla_b_variance,
            r_variance: self.gla_r_variance,
            refit: self.gla_refit,
            schedule,
            seed: self.stage_seed(6),
        })
    }

    fn stage_seed(&self, stage: u64) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(stage)
    }

    fn training(&self, epochs: usize, lr: f64, batch: usize, stage: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            epochs,
            batch_size: batch,
            seed: self.stage_seed(stage),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.burgers()?.validate()?;
        if self.forecast_start < self.warmup() || self.warmup() < self.forecast_l_input {
            return Err(Error::invalid(
                "forecast.start must leave room for a warmup of at least l_input states",
            ));
        }
        if self.forecast_start >= self.burgers_snapshots {
            return Err(Error::invalid("forecast.start must precede the last snapshot"));
        }
        if self.obs_noise_std < 0.0 {
            return Err(Error::invalid("obs.noise_std must be non-negative"));
        }
        self.gla()?.validate()
    }
}

/// Artifact locations inside `output_dir`.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    pub root: PathBuf,
}

impl ArtifactPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn snapshots(&self) -> PathBuf {
        self.root.join("snapshots.txt")
    }
    pub fn state_model(&self) -> PathBuf {
        self.root.join("state_model")
    }
    pub fn latent(&self) -> PathBuf {
        self.root.join("latent.txt")
    }
    pub fn training_snapshots(&self) -> PathBuf {
        self.root.join("training_snapshots.txt")
    }
    pub fn training_latent(&self) -> PathBuf {
        self.root.join("training_latent.txt")
    }
    pub fn forecaster(&self) -> PathBuf {
        self.root.join("forecaster")
    }
    pub fn selection(&self) -> PathBuf {
        self.root.join("selection.txt")
    }
    pub fn observations(&self) -> PathBuf {
        self.root.join("observations.txt")
    }
    pub fn obs_model(&self) -> PathBuf {
        self.root.join("obs_model")
    }
    pub fn free_report(&self) -> PathBuf {
        self.root.join("free_report.csv")
    }
    pub fn gla_report(&self) -> PathBuf {
        self.root.join("gla_report.csv")
    }
    pub fn free_latent(&self) -> PathBuf {
        self.root.join("free_latent.txt")
    }
    pub fn gla_latent(&self) -> PathBuf {
        self.root.join("gla_latent.txt")
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.txt")
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }
}

fn columns(vs: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, vs.len());
    for (j, v) in vs.iter().enumerate() {
        m.set_column(j, v);
    }
    m
}

fn column_vec(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

pub fn stage_simulate(cfg: &ExperimentConfig) -> Result<SnapshotMatrix> {
    stage(
        "simulate",
        (|| {
            let paths = ArtifactPaths::new(&cfg.output_dir);
            fs::create_dir_all(&paths.root)?;
            cfg.write(paths.config())?;
            let snaps = generate_synthetic_snapshots(&cfg.burgers()?)?;
            snaps.write(paths.snapshots())?;
            if cfg.burgers_members > 0 {
                let members = cfg
                    .training_specs()?
                    .iter()
                    .map(generate_synthetic_snapshots)
                    .collect::<Result<Vec<_>>>()?;
                let t = snaps.n_state();
                let mut all = DMatrix::zeros(snaps.dof(), t * members.len());
                for (k, m) in members.iter().enumerate() {
                    all.columns_mut(k * t, t).copy_from(m.data());
                }
                write_matrix(paths.training_snapshots(), &all)?;
            }
            Ok(snaps)
        })(),
    )
}

fn training_snapshots(cfg: &ExperimentConfig, paths: &ArtifactPaths) -> Result<SnapshotMatrix> {
    if cfg.burgers_members > 0 {
        SnapshotMatrix::read(paths.training_snapshots())
    } else {
        SnapshotMatrix::read(paths.snapshots())
    }
}

/// Fit the state POD-AE on the interleaved training columns and store the
/// encoded truth and training trajectories.
pub fn stage_train_rom(cfg: &ExperimentConfig) -> Result<PodAeModel> {
    stage(
        "train-rom",
        (|| {
            let paths = ArtifactPaths::new(&cfg.output_dir);
            let snaps = SnapshotMatrix::read(paths.snapshots())?;
            let training = training_snapshots(cfg, &paths)?;
            let (train_idx, _) = interleaved_split(training.n_state(), 5);
            let train = training.select(&train_idx)?;
            let (_, test_idx) = interleaved_split(snaps.n_state(), 5);
            let arch = AeArchitecture {
                hidden: cfg.rom_hidden.clone(),
                ..AeArchitecture::default()
            };
            let tc = cfg.training(cfg.rom_epochs, cfg.rom_learning_rate, cfg.rom_batch_size, 1);
            let (model, report) = fit_pod_ae(&train, cfg.rom_q, cfg.rom_latent_dim, &arch, &tc)?;
            model.save(paths.state_model())?;
            write_matrix(paths.latent(), &model.encode_batch(snaps.data())?)?;
            write_matrix(paths.training_latent(), &model.encode_batch(training.data())?)?;
            let test = snaps.data().select_columns(&test_idx);
            let rec = model.decode_batch(&model.encode_batch(&test)?)?;
            log::info!(
                "state autoencoder: final loss {:.3e}, test relative error {:.3e}",
                report.final_loss(),
                (rec - &test).norm() / test.norm()
            );
            Ok(model)
        })(),
    )
}

pub fn stage_train_forecaster(cfg: &ExperimentConfig) -> Result<Seq2SeqForecaster> {
    stage(
        "train-forecaster",
        (|| {
            let paths = ArtifactPaths::new(&cfg.output_dir);
            let latent = column_vec(&read_matrix(paths.training_latent())?);
            let t = cfg.burgers_snapshots;
            if latent.len() % t != 0 {
                return Err(Error::invalid(
                    "training latent length is not a multiple of burgers.snapshots",
                ));
            }
            let series: Vec<&[DVector<f64>]> = latent.chunks(t).collect();
            let mut tc = cfg.training(
                cfg.forecast_epochs,
                cfg.forecast_learning_rate,
                cfg.forecast_batch_size,
                2,
            );
            tc.grad_clip = Some(cfg.forecast_grad_clip);
            let (model, report, test) = train_forecaster_multi(&series, &cfg.forecaster(), &tc)?;
            let mut err = 0.0;
            let mut norm = 0.0;
            for (input, target) in test.inputs.iter().zip(&test.targets) {
                let pred = model.predict_increments(input)?;
                err += (&pred[0] - &target[0]).norm_squared();
                norm += target[0].norm_squared();
            }
            log::info!(
                "forecaster: final loss {:.3e}, held-out first-increment relative error {:.3e}",
                report.final_loss(),
                (err / norm).sqrt()
            );
            model.save(paths.forecaster())?;
            Ok(model)
        })(),
    )
}

/// Sample the selection matrix, observe the truth trajectory and fit the
/// observation POD-AE.
pub fn stage_gen_obs(cfg: &ExperimentConfig) -> Result<PodAeModel> {
    stage(
        "gen-obs",
        (|| {
            let paths = ArtifactPaths::new(&cfg.output_dir);
            let snaps = SnapshotMatrix::read(paths.snapshots())?;
            let h = SelectionMatrix::sample(cfg.obs_m, snaps.dof(), cfg.obs_p, cfg.stage_seed(3))?;
            h.save(paths.selection())?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.stage_seed(5));
            let normal = Normal::new(0.0, cfg.obs_noise_std).map_err(|e| Error::invalid(e.to_string()))?;
            let mut observe = |states: &DMatrix<f64>| -> Result<DMatrix<f64>> {
                let mut y = observe_trajectory(&h, cfg.obs_marginal, states)?;
                if cfg.obs_noise_std > 0.0 {
                    y.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
                }
                Ok(y)
            };
            let y = observe(snaps.data())?;
            write_matrix(paths.observations(), &y)?;
            let y_train = if cfg.burgers_members > 0 {
                observe(training_snapshots(cfg, &paths)?.data())?
            } else {
                y
            };
            let (train_idx, _) = interleaved_split(y_train.ncols(), 5);
            let train = SnapshotMatrix::new(y_train.select_columns(&train_idx))?;
            let arch = AeArchitecture {
                hidden: cfg.obs_hidden.clone(),
                ..AeArchitecture::default()
            };
            let tc = cfg.training(cfg.obs_epochs, cfg.obs_learning_rate, cfg.obs_batch_size, 4);
            let (model, report) = fit_pod_ae(&train, cfg.obs_q, cfg.obs_latent_dim, &arch, &tc)?;
            log::info!("observation autoencoder: final loss {:.3e}", report.final_loss());
            model.save(paths.obs_model())?;
            Ok(model)
        })(),
    )
}

/// Time-averaged errors over the steps from the first assimilation on.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub from_step: usize,
    pub steps: usize,
    pub free_full: f64,
    pub gla_full: f64,
    pub free_latent: f64,
    pub gla_latent: f64,
    pub assimilated: usize,
}

impl Summary {
    pub fn from_reports(free: &[ReportRow], gla: &[ReportRow]) -> Result<Self> {
        ensure_dim("report lengths", free.len(), gla.len())?;
        if free.is_empty() {
            return Err(Error::invalid("empty reports"));
        }
        let from_step = gla
            .iter()
            .find(|r| r.assimilated)
            .map(|r| r.step)
            .unwrap_or(gla[0].step);
        let window =
            |rows: &[ReportRow]| -> Vec<ReportRow> { rows.iter().filter(|r| r.step >= from_step).cloned().collect() };
        let (f, g) = (window(free), window(gla));
        let mean = |rows: &[ReportRow], pick: fn(&ReportRow) -> f64| {
            let vals: Vec<f64> = rows.iter().map(pick).filter(|v| v.is_finite()).collect();
            vals.iter().sum::<f64>() / vals.len().max(1) as f64
        };
        Ok(Self {
            from_step,
            steps: g.len(),
            free_full: mean(&f, |r| r.full_rel_err),
            gla_full: mean(&g, |r| r.full_rel_err),
            free_latent: mean(&f, |r| r.latent_rel_err),
            gla_latent: mean(&g, |r| r.latent_rel_err),
            assimilated: gla.iter().filter(|r| r.assimilated).count(),
        })
    }

    /// `1 − gla/free` on the full-space error.
    pub fn full_reduction(&self) -> f64 {
        1.0 - self.gla_full / self.free_full
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("from_step", self.from_step)
            .set("steps", self.steps)
            .set("assimilated_steps", self.assimilated)
            .set("free.mean_full_rel_err", self.free_full)
            .set("gla.mean_full_rel_err", self.gla_full)
            .set("free.mean_latent_rel_err", self.free_latent)
            .set("gla.mean_latent_rel_err", self.gla_latent)
            .set("full_rel_err_reduction", self.full_reduction());
        m
    }
}

fn report_rows(start: usize, errors: &[(f64, f64)], gla: Option<&GlaOutput>) -> Vec<ReportRow> {
    errors
        .iter()
        .enumerate()
        .map(|(t, &(latent, full))| {
            let rec = gla.map(|g| &g.steps[t]);
            ReportRow {
                step: start + t,
                latent_rel_err: latent,
                full_rel_err: full,
                assimilated: rec.is_some_and(|r| r.assimilated),
                cost_before: rec.and_then(|r| r.cost_before),
                cost_after: rec.and_then(|r| r.cost_after),
                optimizer_iters: rec.map_or(0, |r| r.iterations),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GlaRun {
    pub summary: Summary,
    pub gla: GlaOutput,
    pub free: Vec<DVector<f64>>,
    pub free_rows: Vec<ReportRow>,
    pub gla_rows: Vec<ReportRow>,
}

/// Free-running forecast and assimilated forecast from `forecast.start`,
/// both scored against the truth.
pub fn stage_run_gla(cfg: &ExperimentConfig) -> Result<GlaRun> {
    stage(
        "run-gla",
        (|| {
            cfg.validate()?;
            let paths = ArtifactPaths::new(&cfg.output_dir);
            let snaps = SnapshotMatrix::read(paths.snapshots())?;
            let state_model = PodAeModel::load(paths.state_model())?;
            let obs_model = PodAeModel::load(paths.obs_model())?;
            let forecaster = Seq2SeqForecaster::load(paths.forecaster())?;
            let h = SelectionMatrix::load(paths.selection())?;
            let y = read_matrix(paths.observations())?;
            ensure_dim("observation stream length", snaps.n_state(), y.ncols())?;
            let gla_cfg = cfg.gla()?;

            let start = cfg.forecast_start;
            let horizon = snaps.n_state() - start;
            let warm_cols: Vec<usize> = (start - cfg.warmup()..start).collect();
            let warmup = column_vec(&state_model.encode_batch(&snaps.data().select_columns(&warm_cols))?);
            let operator = LatentObsOperator::new(obs_model.clone(), h, cfg.obs_marginal, state_model.clone())?;
            let mut observations = BTreeMap::new();
            for &t in &gla_cfg.schedule {
                observations.insert(t, obs_model.encode(&y.column(start + t).into_owned())?);
            }

            let free = forecaster.rollout(&warmup, horizon)?;
            let gla = run_gla(&forecaster, &operator, &warmup, horizon, &observations, &gla_cfg)?;

            let truth = snaps.data().columns(start, horizon).into_owned();
            let free_rows = report_rows(start, &compute_relative_errors(&truth, &free, &state_model)?, None);
            let gla_rows = report_rows(
                start,
                &compute_relative_errors(&truth, &gla.trajectory, &state_model)?,
                Some(&gla),
            );
            write_report(paths.free_report(), &free_rows)?;
            write_report(paths.gla_report(), &gla_rows)?;
            let dim = forecaster.latent_dim();
            write_matrix(paths.free_latent(), &columns(&free, dim))?;
            write_matrix(paths.gla_latent(), &columns(&gla.trajectory, dim))?;
            let summary = Summary::from_reports(&free_rows, &gla_rows)?;
            let mut m = summary.to_manifest();
            m.set("optimizer_warnings", gla.steps.iter().filter(|s| s.warning).count());
            m.write(paths.summary())?;
            Ok(GlaRun {
                summary,
                gla,
                free,
                free_rows,
                gla_rows,
            })
        })(),
    )
}

/// Summary recomputed from the report CSVs on disk.
pub fn stage_report(cfg: &ExperimentConfig) -> Result<Summary> {
    stage(
        "report",
        (|| {
            let paths = ArtifactPaths::new(&cfg.output_dir);
            Summary::from_reports(&read_report(paths.free_report())?, &read_report(paths.gla_report())?)
        })(),
    )
}

/// Every stage in order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<GlaRun> {
    stage("config", cfg.validate())?;
    stage_simulate(cfg)?;
    stage_train_rom(cfg)?;
    stage_train_forecaster(cfg)?;
    stage_gen_obs(cfg)?;
    stage_run_gla(cfg)
}
