//! Synthetic nonlinear observation operators.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_dim, Error, Result};
use crate::rom::PodAeModel;
use crate::surrogate::LatentMap;

/// Sparse 0/1 selection matrix stored as sorted row index lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMatrix {
    n: usize,
    rows: Vec<Vec<usize>>,
    p: f64,
    seed: u64,
}

impl SelectionMatrix {
    /// Include every `(i, j)` independently with probability `p`.
    pub fn sample(m: usize, n: usize, p: f64, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::invalid("selection matrix needs m, n >= 1"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("selection probability {p} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..m)
            .map(|_| (0..n).filter(|_| rng.random::<f64>() < p).collect())
            .collect();
        Ok(Self { n, rows, p, seed })
    }

    pub fn from_rows(n: usize, mut rows: Vec<Vec<usize>>, p: f64, seed: u64) -> Result<Self> {
        if rows.is_empty() || n == 0 {
            return Err(Error::invalid("selection matrix needs m, n >= 1"));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            if let Some(&j) = row.last() {
                if j >= n {
                    return Err(Error::NodeOutOfRange {
                        element: i,
                        index: j,
                        n,
                    });
                }
            }
        }
        Ok(Self { n, rows, p, seed })
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn probability(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.m(), self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for &j in row {
                h[(i, j)] = 1.0;
            }
        }
        h
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = format!("{} {} {} {}\n", self.m(), self.n, self.p, self.seed);
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|j| j.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            msg,
        };
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("missing header".into()))?
            .split_whitespace()
            .collect();
        if header.len() != 4 {
            return Err(bad("header must be `m n P seed`".into()));
        }
        let m: usize = header[0].parse().map_err(|_| bad("bad m".into()))?;
        let n: usize = header[1].parse().map_err(|_| bad("bad n".into()))?;
        let p: f64 = header[2].parse().map_err(|_| bad("bad P".into()))?;
        let seed: u64 = header[3].parse().map_err(|_| bad("bad seed".into()))?;
        let mut rows = Vec::with_capacity(m);
        for (k, line) in lines.take(m).enumerate() {
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("row {k}: bad index")))?;
            rows.push(row);
        }
        while rows.len() < m {
            // trailing empty rows may lose their newline
            rows.push(Vec::new());
        }
        Self::from_rows(n, rows, p, seed)
    }
}

/// Elementwise nonlinearity applied before selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginalFn {
    Quadratic,
    Reciprocal { offset: f64 },
}

pub const RECIPROCAL_GUARD: f64 = 1e-9;

impl MarginalFn {
    pub fn reciprocal() -> Self {
        MarginalFn::Reciprocal { offset: 0.5 }
    }

    pub fn apply(self, x: f64, index: usize) -> Result<f64> {
        match self {
            MarginalFn::Quadratic => Ok(x * x),
            MarginalFn::Reciprocal { offset } => {
                if (x + offset).abs() < RECIPROCAL_GUARD {
                    Err(Error::ReciprocalSingularity { index, value: x })
                } else {
                    Ok(1.0 / (x + offset))
                }
            }
        }
    }
}

impl fmt::Display for MarginalFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarginalFn::Quadratic => write!(f, "quadratic"),
            MarginalFn::Reciprocal { offset } if *offset == 0.5 => write!(f, "reciprocal"),
            MarginalFn::Reciprocal { offset } => write!(f, "reciprocal:{offset}"),
        }
    }
}

impl FromStr for MarginalFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "quadratic" => Ok(MarginalFn::Quadratic),
            "reciprocal" => Ok(MarginalFn::reciprocal()),
            other => match other.strip_prefix("reciprocal:") {
                Some(o) => o
                    .parse()
                    .map(|offset| MarginalFn::Reciprocal { offset })
                    .map_err(|_| Error::invalid(format!("bad reciprocal offset `{o}`"))),
                None => Err(Error::invalid(format!("unknown marginal function `{other}`"))),
            },
        }
    }
}

/// `y(j) = Σ_{i ∈ row j} f(x(i))`.
pub fn apply_full_observation(h: &SelectionMatrix, f: MarginalFn, x: &DVector<f64>) -> Result<DVector<f64>> {
    ensure_dim("full observation state", h.n(), x.len())?;
    let mut y = DVector::zeros(h.m());
    for (k, row) in h.rows().iter().enumerate() {
        let mut acc = 0.0;
        for &i in row {
            acc += f.apply(x[i], i)?;
        }
        y[k] = acc;
    }
    Ok(y)
}

/// Observations of every column of a trajectory.
pub fn observe_trajectory(h: &SelectionMatrix, f: MarginalFn, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_dim("full observation state", h.n(), states.nrows())?;
    let mut out = DMatrix::zeros(h.m(), states.ncols());
    for t in 0..states.ncols() {
        out.set_column(t, &apply_full_observation(h, f, &states.column(t).into_owned())?);
    }
    Ok(out)
}

/// `H̃ = E_y ∘ H ∘ f ∘ D_x` between the state and observation latent spaces.
#[derive(Debug, Clone)]
pub struct LatentObsOperator {
    y_model: PodAeModel,
    h: SelectionMatrix,
    f: MarginalFn,
    x_model: PodAeModel,
}

impl LatentObsOperator {
    pub fn new(y_model: PodAeModel, h: SelectionMatrix, f: MarginalFn, x_model: PodAeModel) -> Result<Self> {
        ensure_dim("latent operator state dof", x_model.dof(), h.n())?;
        ensure_dim("latent operator observation count", h.m(), y_model.dof())?;
        Ok(Self { y_model, h, f, x_model })
    }

    pub fn selection(&self) -> &SelectionMatrix {
        &self.h
    }

    pub fn marginal(&self) -> MarginalFn {
        self.f
    }

    pub fn state_model(&self) -> &PodAeModel {
        &self.x_model
    }

    pub fn observation_model(&self) -> &PodAeModel {
        &self.y_model
    }
}

impl LatentMap for LatentObsOperator {
    fn input_dim(&self) -> usize {
        self.x_model.latent_dim()
    }

    fn output_dim(&self) -> usize {
        self.y_model.latent_dim()
    }

    fn eval(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.x_model.decode(z)?;
        let y = apply_full_observation(&self.h, self.f, &x)?;
        self.y_model.encode(&y)
    }
}
