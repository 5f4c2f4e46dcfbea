//! Latent variational assimilation: 3D-Var cost, BFGS minimisation and the
//! generalised latent assimilation loop.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_dim, Error, Result};
use crate::forecast::Seq2SeqForecaster;
use crate::surrogate::{
    evaluate_on, fit_local_polynomial, lhs_sample, LatentMap, LhsDesign, PolynomialSurrogate, DEFAULT_S_FLOOR,
};

/// Symmetric positive definite matrix with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct Covariance {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl Covariance {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::invalid("covariance must be a non-empty square matrix"));
        }
        let scale = matrix.amax().max(1.0);
        if (&matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite("matrix is not symmetric".into()));
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorisation failed".into()))?;
        Ok(Self { matrix, chol })
    }

    pub fn scaled_identity(dim: usize, variance: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * variance)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower triangular `L` with `L Lᵀ = C`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `C⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// `vᵀ C⁻¹ v`.
    pub fn mahalanobis(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.solve(v))
    }

    /// Draw from `N(0, C)`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        self.chol.l() * z
    }
}

/// A latent map with an exact Jacobian.
pub trait DifferentiableMap: LatentMap {
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

impl DifferentiableMap for PolynomialSurrogate {
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        PolynomialSurrogate::jacobian(self, x)
    }
}

/// `x ↦ H x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub h: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineMap {
    pub fn linear(h: DMatrix<f64>) -> Self {
        let b = DVector::zeros(h.nrows());
        Self { h, b }
    }
}

impl LatentMap for AffineMap {
    fn input_dim(&self) -> usize {
        self.h.ncols()
    }

    fn output_dim(&self) -> usize {
        self.h.nrows()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("affine map input", self.h.ncols(), x.len())?;
        Ok(&self.h * x + &self.b)
    }
}

impl DifferentiableMap for AffineMap {
    fn jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.h.clone())
    }
}

/// `J(x) = ½‖x − x_b‖²_{B⁻¹} + ½‖y − H(x)‖²_{R⁻¹}`.
pub struct AssimProblem<'a> {
    pub background: DVector<f64>,
    pub observation: DVector<f64>,
    pub b: &'a Covariance,
    pub r: &'a Covariance,
    pub operator: &'a dyn DifferentiableMap,
}

impl<'a> AssimProblem<'a> {
    pub fn new(
        background: DVector<f64>,
        observation: DVector<f64>,
        b: &'a Covariance,
        r: &'a Covariance,
        operator: &'a dyn DifferentiableMap,
    ) -> Result<Self> {
        ensure_dim("background covariance", background.len(), b.dim())?;
        ensure_dim("observation covariance", observation.len(), r.dim())?;
        ensure_dim("operator input", background.len(), operator.input_dim())?;
        ensure_dim("operator output", observation.len(), operator.output_dim())?;
        if background.iter().chain(observation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("background or observation is not finite"));
        }
        Ok(Self {
            background,
            observation,
            b,
            r,
            operator,
        })
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        ensure_dim("cost argument", self.background.len(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cost argument is not finite"));
        }
        Ok(())
    }

    pub fn cost(&self, x: &DVector<f64>) -> Result<f64> {
        self.check(x)?;
        let db = x - &self.background;
        let dy = &self.observation - self.operator.eval(x)?;
        Ok(0.5 * self.b.mahalanobis(&db) + 0.5 * self.r.mahalanobis(&dy))
    }

    /// `B⁻¹(x − x_b) − Jᵀ R⁻¹ (y − H(x))`.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.cost_and_gradient(x)?.1)
    }

    pub fn cost_and_gradient(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check(x)?;
        let db = x - &self.background;
        let dy = &self.observation - self.operator.eval(x)?;
        let bdb = self.b.solve(&db);
        let rdy = self.r.solve(&dy);
        let cost = 0.5 * db.dot(&bdb) + 0.5 * dy.dot(&rdy);
        let jac = self.operator.jacobian(x)?;
        Ok((cost, bdb - jac.tr_mul(&rdy)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    pub k_max: usize,
    pub grad_tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            k_max: 50,
            grad_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub analysis: DVector<f64>,
    /// Cost at every accepted iterate, starting with the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// The line search failed to find a decrease after the maximum
    /// number of halvings.
    pub line_search_failed: bool,
}

impl MinimizeResult {
    pub fn initial_cost(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_cost(&self) -> f64 {
        self.trace[self.trace.len() - 1]
    }
}

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 50;

/// BFGS with inverse-Hessian updates and backtracking Armijo line search.
pub fn minimize(
    problem: &AssimProblem<'_>,
    options: MinimizeOptions,
    initial: Option<&DVector<f64>>,
) -> Result<MinimizeResult> {
    if options.k_max == 0 || !(options.grad_tol > 0.0) {
        return Err(Error::invalid("k_max must be >= 1 and grad_tol > 0"));
    }
    let n = problem.background.len();
    let mut x = initial.cloned().unwrap_or_else(|| problem.background.clone());
    let (mut f, mut g) = problem.cost_and_gradient(&x)?;
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut line_search_failed = false;

    while iterations < options.k_max && g.norm() > options.grad_tol {
        let mut p = -(&hinv * &g);
        let mut slope = g.dot(&p);
        if !(slope < 0.0) {
            hinv.fill_with_identity();
            p = -g.clone();
            slope = -g.norm_squared();
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &x + &p * alpha;
            if trial.iter().all(|v| v.is_finite()) {
                if let Ok((ft, gt)) = problem.cost_and_gradient(&trial) {
                    if ft.is_finite() && ft <= f + ARMIJO_C * alpha * slope {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            line_search_failed = true;
            log::warn!("line search failed after {MAX_HALVINGS} halvings at iteration {iterations}");
            break;
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if iterations == 0 {
                hinv *= sy / y.norm_squared();
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        iterations += 1;
    }
    let grad_norm = g.norm();
    Ok(MinimizeResult {
        analysis: x,
        trace,
        iterations,
        grad_norm,
        converged: grad_norm <= options.grad_tol,
        line_search_failed,
    })
}

/// Monte Carlo estimate of `E[J(x_true)]` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationCheck {
    pub mean: f64,
    pub std_err: f64,
    /// `(dim_x + dim_y) / 2`.
    pub expected: f64,
}

pub fn expected_cost_check(dim_x: usize, dim_y: usize, n_mc: usize, seed: u64) -> Result<ExpectationCheck> {
    expected_cost_check_with(
        &Covariance::scaled_identity(dim_x, 1.0)?,
        &Covariance::scaled_identity(dim_y, 1.0)?,
        n_mc,
        seed,
    )
}

/// Draws `x_b − x_true ~ N(0, B)` and `y − H(x_true) ~ N(0, R)` around a
/// random truth and a random affine operator, and averages `J(x_true)`.
pub fn expected_cost_check_with(b: &Covariance, r: &Covariance, n_mc: usize, seed: u64) -> Result<ExpectationCheck> {
    if n_mc < 1000 {
        return Err(Error::invalid(format!("n_mc = {n_mc} is below 1000")));
    }
    let (dx, dy) = (b.dim(), r.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng, r, c| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng));
    let op = AffineMap {
        h: normal(&mut rng, dy, dx),
        b: normal(&mut rng, dy, 1).column(0).into_owned(),
    };
    let truth = normal(&mut rng, dx, 1).column(0).into_owned();
    let h_truth = op.eval(&truth)?;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_mc {
        let xb = &truth + b.sample(&mut rng);
        let y = &h_truth + r.sample(&mut rng);
        let problem = AssimProblem::new(xb, y, b, r, &op)?;
        let j = problem.cost(&truth)?;
        sum += j;
        sum_sq += j * j;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    Ok(ExpectationCheck {
        mean,
        std_err: (var / n).sqrt(),
        expected: (dx + dy) as f64 / 2.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefitPolicy {
    /// Refit the polynomial at every assimilated step.
    #[default]
    PerStep,
    /// Refit once at the first step of each run of consecutive steps.
    PerBurst,
}

impl fmt::Display for RefitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefitPolicy::PerStep => "per_step",
            RefitPolicy::PerBurst => "per_burst",
        })
    }
}

impl FromStr for RefitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "per_step" => Ok(RefitPolicy::PerStep),
            "per_burst" => Ok(RefitPolicy::PerBurst),
            other => Err(Error::invalid(format!("unknown refit policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlaConfig {
    pub degree: u32,
    pub range: f64,
    pub samples: usize,
    pub s_floor: f64,
    pub k_max: usize,
    /// Optimizer stopping tolerance on `‖∇J‖`.
    pub grad_tol: f64,
    /// The background is kept as the analysis when `‖∇J(x_b)‖` is
    /// already below this.
    pub outer_tol: f64,
    pub b_variance: f64,
    pub r_variance: f64,
    pub refit: RefitPolicy,
    /// Forecast steps (0-based from the first forecast) with observations.
    pub schedule: BTreeSet<usize>,
    pub seed: u64,
}

impl Default for GlaConfig {
    fn default() -> Self {
        Self {
            degree: 4,
            range: 0.3,
            samples: 1000,
            s_floor: DEFAULT_S_FLOOR,
            k_max: 50,
            grad_tol: 0.01,
            outer_tol: 0.05,
            b_variance: 1.0,
            r_variance: 0.1,
            refit: RefitPolicy::PerStep,
            schedule: BTreeSet::new(),
            seed: 0,
        }
    }
}

impl GlaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::invalid("k_max must be at least 1"));
        }
        if !(self.grad_tol > 0.0) || !(self.outer_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.degree == 0 {
            return Err(Error::invalid("surrogate degree must be at least 1"));
        }
        if !(self.range > 0.0) || self.samples < 2 {
            return Err(Error::invalid("LHS needs a positive range and at least 2 samples"));
        }
        if !(self.b_variance > 0.0) || !(self.r_variance > 0.0) {
            return Err(Error::invalid("covariance variances must be positive"));
        }
        Ok(())
    }
}

/// Outcome of one forecast step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub assimilated: bool,
    pub cost_before: Option<f64>,
    pub cost_after: Option<f64>,
    pub iterations: usize,
    pub monotone: bool,
    pub warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlaOutput {
    pub trajectory: Vec<DVector<f64>>,
    pub steps: Vec<StepRecord>,
}

/// Forecast `horizon` latent states after `warmup`, assimilating the latent
/// observations at the scheduled steps.
///
/// At each scheduled step the forecast is the background; a polynomial
/// surrogate of `operator` is fitted on a Latin hypercube around it, the
/// cost is minimised and the analysis replaces the forecast. When the
/// analysis differs from the background, pending predictions are discarded
/// so the next window starts from the corrected history.
pub fn run_gla(
    forecaster: &Seq2SeqForecaster,
    operator: &dyn LatentMap,
    warmup: &[DVector<f64>],
    horizon: usize,
    observations: &BTreeMap<usize, DVector<f64>>,
    config: &GlaConfig,
) -> Result<GlaOutput> {
    config.validate()?;
    let l_in = forecaster.l_input();
    if warmup.len() < l_in {
        return Err(Error::invalid(format!(
            "warmup of {} states is shorter than l_input = {l_in}",
            warmup.len()
        )));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be positive"));
    }
    ensure_dim(
        "operator input vs forecaster",
        forecaster.latent_dim(),
        operator.input_dim(),
    )?;
    for w in warmup {
        ensure_dim("warmup state", forecaster.latent_dim(), w.len())?;
    }
    for &t in &config.schedule {
        if t >= horizon {
            return Err(Error::invalid(format!("scheduled step {t} beyond horizon {horizon}")));
        }
        let y = observations
            .get(&t)
            .ok_or_else(|| Error::invalid(format!("no observation for scheduled step {t}")))?;
        ensure_dim("latent observation", operator.output_dim(), y.len())?;
    }

    let b = Covariance::scaled_identity(operator.input_dim(), config.b_variance)?;
    let r = Covariance::scaled_identity(operator.output_dim(), config.r_variance)?;
    let options = MinimizeOptions {
        k_max: config.k_max,
        grad_tol: config.grad_tol,
    };

    let mut history: Vec<DVector<f64>> = warmup[warmup.len() - l_in..].to_vec();
    let mut queue: VecDeque<DVector<f64>> = VecDeque::new();
    let mut surrogate: Option<PolynomialSurrogate> = None;
    let mut trajectory = Vec::with_capacity(horizon);
    let mut steps = Vec::with_capacity(horizon);

    for t in 0..horizon {
        if queue.is_empty() {
            queue.extend(forecaster.predict_window(&history[history.len() - l_in..])?);
        }
        let background = queue.pop_front().expect("window is non-empty");
        let mut record = StepRecord {
            step: t,
            assimilated: false,
            cost_before: None,
            cost_after: None,
            iterations: 0,
            monotone: true,
            warning: false,
        };
        let state = if config.schedule.contains(&t) {
            let starts_burst = t == 0 || !config.schedule.contains(&(t - 1));
            if surrogate.is_none() || config.refit == RefitPolicy::PerStep || starts_burst {
                let design = LhsDesign::new(
                    background.clone(),
                    config.range,
                    config.samples,
                    config.seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                )
                .with_floor(config.s_floor);
                let samples = lhs_sample(&design)?;
                let targets = evaluate_on(operator, &samples)?;
                surrogate = Some(fit_local_polynomial(&samples, &targets, config.degree)?);
            }
            let sur = surrogate.as_ref().expect("fitted above");
            let problem = AssimProblem::new(background.clone(), observations[&t].clone(), &b, &r, sur)?;
            let (j0, g0) = problem.cost_and_gradient(&background)?;
            let background_copy = background.clone();
            record.assimilated = true;
            record.cost_before = Some(j0);
            let analysis = if g0.norm() <= config.outer_tol {
                record.cost_after = Some(j0);
                background
            } else {
                let res = minimize(&problem, options, None)?;
                record.cost_after = Some(res.final_cost());
                record.iterations = res.iterations;
                record.monotone = res.trace.windows(2).all(|w| w[1] <= w[0]);
                record.warning = res.line_search_failed;
                res.analysis
            };
            if analysis != background_copy {
                queue.clear();
            }
            analysis
        } else {
            background
        };
        history.push(state.clone());
        trajectory.push(state);
        steps.push(record);
    }
    Ok(GlaOutput { trajectory, steps })
}

/// One line of the error report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub step: usize,
    pub latent_rel_err: f64,
    pub full_rel_err: f64,
    pub assimilated: bool,
    pub cost_before: Option<f64>,
    pub cost_after: Option<f64>,
    pub optimizer_iters: usize,
}

pub const REPORT_HEADER: [&str; 7] = [
    "step",
    "latent_rel_err",
    "full_rel_err",
    "assimilated_flag",
    "cost_before",
    "cost_after",
    "optimizer_iters",
];

pub fn write_report(path: impl AsRef<Path>, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.latent_rel_err.to_string(),
            r.full_rel_err.to_string(),
            u8::from(r.assimilated).to_string(),
            opt(r.cost_before),
            opt(r.cost_after),
            r.optimizer_iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let bad = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        msg,
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != REPORT_HEADER.len() {
            return Err(bad(format!(
                "expected {} fields, got {}",
                REPORT_HEADER.len(),
                rec.len()
            )));
        }
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number `{}`", &rec[i])))
        };
        let opt = |i: usize| if rec[i].is_empty() { Ok(None) } else { num(i).map(Some) };
        let int = |i: usize| {
            rec[i]
                .parse::<usize>()
                .map_err(|_| bad(format!("bad integer `{}`", &rec[i])))
        };
        rows.push(ReportRow {
            step: int(0)?,
            latent_rel_err: num(1)?,
            full_rel_err: num(2)?,
            assimilated: int(3)? != 0,
            cost_before: opt(4)?,
            cost_after: opt(5)?,
            optimizer_iters: int(6)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{ForecasterConfig, Scaler};
    use rand::Rng;

    fn spd(dim: usize, rng: &mut ChaCha8Rng) -> Covariance {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        Covariance::new(&a * a.transpose() + DMatrix::identity(dim, dim) * 0.5).unwrap()
    }

    fn rand_vec(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn covariance_validation() {
        assert!(Covariance::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(Covariance::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        let c = Covariance::scaled_identity(3, 4.0).unwrap();
        assert!((c.mahalanobis(&DVector::from_element(3, 2.0)) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_problem() {
        let one = Covariance::scaled_identity(1, 1.0).unwrap();
        let id = AffineMap::linear(DMatrix::identity(1, 1));
        let p = AssimProblem::new(DVector::zeros(1), DVector::from_element(1, 2.0), &one, &one, &id).unwrap();
        assert_eq!(p.cost(&DVector::from_element(1, 1.0)).unwrap(), 1.0);
        let res = minimize(
            &p,
            MinimizeOptions {
                k_max: 50,
                grad_tol: 1e-12,
            },
            None,
        )
        .unwrap();
        assert!((res.analysis[0] - 1.0).abs() < 1e-10);
        assert!((res.final_cost() - 1.0).abs() < 1e-12);

        let q = AssimProblem::new(DVector::zeros(1), DVector::zeros(1), &one, &one, &id).unwrap();
        assert_eq!(q.cost(&DVector::zeros(1)).unwrap(), 0.0);
        let res = minimize(&q, MinimizeOptions::default(), None).unwrap();
        assert_eq!(res.analysis, DVector::zeros(1));
        assert_eq!(res.iterations, 0);
        assert!(q.cost(&DVector::from_element(1, f64::NAN)).is_err());
    }

    #[test]
    fn cost_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let (dx, dy) = (rng.random_range(1..12), rng.random_range(1..12));
            let b = spd(dx, &mut rng);
            let r = spd(dy, &mut rng);
            let op = AffineMap {
                h: DMatrix::from_fn(dy, dx, |_, _| rng.random_range(-1.0..1.0)),
                b: rand_vec(dy, &mut rng),
            };
            let p = AssimProblem::new(rand_vec(dx, &mut rng), rand_vec(dy, &mut rng), &b, &r, &op).unwrap();
            let x = rand_vec(dx, &mut rng);
            let db = &x - &p.background;
            let dyv = &p.observation - (&op.h * &x + &op.b);
            let binv = b.matrix().clone().try_inverse().unwrap();
            let rinv = r.matrix().clone().try_inverse().unwrap();
            let oracle = 0.5 * (db.transpose() * &binv * &db)[0] + 0.5 * (dyv.transpose() * &rinv * &dyv)[0];
            assert!((p.cost(&x).unwrap() - oracle).abs() < 1e-10 * oracle.max(1.0));
            let g = &binv * &db - op.h.transpose() * &rinv * &dyv;
            assert!((p.gradient(&x).unwrap() - &g).amax() < 1e-10 * g.amax().max(1.0));
        }
    }

    #[test]
    fn constant_operator_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = spd(3, &mut rng);
        let r = spd(2, &mut rng);
        let op = AffineMap {
            h: DMatrix::zeros(2, 3),
            b: rand_vec(2, &mut rng),
        };
        let p = AssimProblem::new(rand_vec(3, &mut rng), rand_vec(2, &mut rng), &b, &r, &op).unwrap();
        let x = rand_vec(3, &mut rng);
        let g = p.gradient(&x).unwrap();
        assert!((g - b.solve(&(&x - &p.background))).amax() < 1e-12);
    }

    #[test]
    fn expectation_identity_small() {
        let c = expected_cost_check(1, 1, 20_000, 3).unwrap();
        assert!((c.mean - 1.0).abs() < 3.0 * c.std_err, "{c:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = Covariance::new(spd(2, &mut rng).matrix() * 4.0).unwrap();
        let r = spd(3, &mut rng);
        let c = expected_cost_check_with(&b, &r, 20_000, 5).unwrap();
        assert!((c.mean - 2.5).abs() < 3.0 * c.std_err, "{c:?}");
        assert!(expected_cost_check(1, 1, 10, 0).is_err());
    }

    #[test]
    fn empty_schedule_is_a_plain_rollout() {
        let cfg = ForecasterConfig {
            l_input: 3,
            l_output: 2,
            encoder_hidden: 4,
            decoder_hidden: 4,
            ..ForecasterConfig::default()
        };
        let model = Seq2SeqForecaster::init(2, &cfg, Scaler::identity(2), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let warm: Vec<_> = (0..4).map(|_| rand_vec(2, &mut rng)).collect();
        let op = AffineMap::linear(DMatrix::identity(2, 2));
        let out = run_gla(&model, &op, &warm, 7, &BTreeMap::new(), &GlaConfig::default()).unwrap();
        assert_eq!(out.trajectory, model.rollout(&warm, 7).unwrap());
        assert!(out.steps.iter().all(|s| !s.assimilated));

        let mut bad = GlaConfig::default();
        bad.schedule.insert(3);
        assert!(run_gla(&model, &op, &warm, 7, &BTreeMap::new(), &bad).is_err());
        bad.schedule = [9].into();
        let obs = BTreeMap::from([(9, DVector::zeros(2))]);
        assert!(run_gla(&model, &op, &warm, 7, &obs, &bad).is_err());
    }

    #[test]
    fn perfect_observations_keep_the_background() {
        let cfg = ForecasterConfig {
            l_input: 3,
            l_output: 2,
            encoder_hidden: 4,
            decoder_hidden: 4,
            ..ForecasterConfig::default()
        };
        let model = Seq2SeqForecaster::init(2, &cfg, Scaler::identity(2), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let warm: Vec<_> = (0..3).map(|_| rand_vec(2, &mut rng)).collect();
        let free = model.rollout(&warm, 6).unwrap();
        let op = AffineMap {
            h: DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.2, 1.0, 0.3, 0.3]),
            b: DVector::zeros(3),
        };
        let gla = GlaConfig {
            degree: 1,
            samples: 20,
            schedule: [1, 2, 4].into(),
            ..GlaConfig::default()
        };
        let obs: BTreeMap<_, _> = gla.schedule.iter().map(|&t| (t, op.eval(&free[t]).unwrap())).collect();
        let out = run_gla(&model, &op, &warm, 6, &obs, &gla).unwrap();
        for (a, b) in out.trajectory.iter().zip(&free) {
            assert!((a - b).amax() < 1e-6);
        }
        assert_eq!(out.steps.iter().filter(|s| s.assimilated).count(), 3);
    }

    #[test]
    fn report_round_trip() {
        let rows = vec![
            ReportRow {
                step: 0,
                latent_rel_err: 0.125,
                full_rel_err: 0.1,
                assimilated: false,
                cost_before: None,
                cost_after: None,
                optimizer_iters: 0,
            },
            ReportRow {
                step: 1,
                latent_rel_err: 1.0 / 3.0,
                full_rel_err: 0.2,
                assimilated: true,
                cost_before: Some(4.5),
                cost_after: Some(0.25),
                optimizer_iters: 7,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report(&path, &rows).unwrap();
        assert_eq!(read_report(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text
            .starts_with("step,latent_rel_err,full_rel_err,assimilated_flag,cost_before,cost_after,optimizer_iters\n"));
    }

    #[test]
    fn gla_config_validation() {
        assert!(GlaConfig::default().validate().is_ok());
        assert!(GlaConfig {
            k_max: 0,
            ..GlaConfig::default()
        }
        .validate()
        .is_err());
        assert!(GlaConfig {
            grad_tol: 0.0,
            ..GlaConfig::default()
        }
        .validate()
        .is_err());
        assert_eq!("per_burst".parse::<RefitPolicy>().unwrap(), RefitPolicy::PerBurst);
    }
}
