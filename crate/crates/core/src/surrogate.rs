//! Latin hypercube sampling and local polynomial surrogates.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SVD};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{ensure_dim, Error, Result};
use crate::io::{read_matrix, read_vector, write_matrix, write_vector, Manifest};

/// A vector-valued map between latent spaces.
pub trait LatentMap: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Evaluate `map` on every sample in parallel, preserving order.
pub fn evaluate_on(map: &dyn LatentMap, samples: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    samples.par_iter().map(|x| map.eval(x)).collect()
}

pub const DEFAULT_S_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct LhsDesign {
    pub center: DVector<f64>,
    /// Half-width as a fraction of each component's scale.
    pub range: f64,
    pub count: usize,
    pub seed: u64,
    pub s_floor: f64,
}

impl LhsDesign {
    pub fn new(center: DVector<f64>, range: f64, count: usize, seed: u64) -> Self {
        Self {
            center,
            range,
            count,
            seed,
            s_floor: DEFAULT_S_FLOOR,
        }
    }

    pub fn with_floor(mut self, s_floor: f64) -> Self {
        self.s_floor = s_floor;
        self
    }

    /// `s_i = max(|c_i|, s_floor)`.
    pub fn scales(&self) -> DVector<f64> {
        self.center.map(|c| c.abs().max(self.s_floor))
    }

    pub fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let half = self.scales() * self.range;
        (&self.center - &half, &self.center + &half)
    }

    fn validate(&self) -> Result<()> {
        if !(self.range > 0.0) || !self.range.is_finite() {
            return Err(Error::invalid(format!("LHS range {} must be positive", self.range)));
        }
        if self.count == 0 {
            return Err(Error::invalid("LHS needs at least one sample"));
        }
        if !(self.s_floor > 0.0) {
            return Err(Error::invalid("LHS scale floor must be positive"));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("LHS center is not finite"));
        }
        Ok(())
    }
}

/// One sample per equal-width stratum in every dimension.
pub fn lhs_sample(design: &LhsDesign) -> Result<Vec<DVector<f64>>> {
    design.validate()?;
    let n = design.count;
    let dim = design.center.len();
    let (lo, hi) = design.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let mut samples = vec![DVector::zeros(dim); n];
    let mut strata: Vec<usize> = (0..n).collect();
    for i in 0..dim {
        strata.shuffle(&mut rng);
        let width = hi[i] - lo[i];
        for (k, &s) in strata.iter().enumerate() {
            let u: f64 = rng.random();
            let v = lo[i] + (s as f64 + u) / n as f64 * width;
            samples[k][i] = v.clamp(lo[i], hi[i]);
        }
    }
    Ok(samples)
}

/// Multi-indices with total degree `<= degree` in graded lexicographic
/// order: by total degree, then by decreasing exponent of earlier
/// variables (`[1, a, b, a², ab, b²]` for two variables).
pub fn monomial_exponents(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    fn fill(rest: u32, idx: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if idx + 1 == cur.len() {
            cur[idx] = rest;
            out.push(cur.clone());
            return;
        }
        for e in (0..=rest).rev() {
            cur[idx] = e;
            fill(rest - e, idx + 1, cur, out);
        }
    }
    let mut out = Vec::new();
    if dim == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut cur = vec![0; dim];
    for t in 0..=degree {
        fill(t, 0, &mut cur, &mut out);
    }
    out
}

pub fn monomial_features(x: &DVector<f64>, degree: u32) -> DVector<f64> {
    features_with(x.as_slice(), &monomial_exponents(x.len(), degree), degree)
}

fn power_table(x: &[f64], degree: u32) -> Vec<Vec<f64>> {
    x.iter()
        .map(|&v| {
            let mut p = Vec::with_capacity(degree as usize + 1);
            let mut acc = 1.0;
            for _ in 0..=degree {
                p.push(acc);
                acc *= v;
            }
            p
        })
        .collect()
}

fn features_with(x: &[f64], exps: &[Vec<u32>], degree: u32) -> DVector<f64> {
    let pw = power_table(x, degree);
    DVector::from_iterator(
        exps.len(),
        exps.iter()
            .map(|a| a.iter().enumerate().map(|(i, &e)| pw[i][e as usize]).product::<f64>()),
    )
}

/// Polynomial in normalised coordinates `u = (x - shift) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialSurrogate {
    degree: u32,
    exponents: Vec<Vec<u32>>,
    coefficients: DMatrix<f64>,
    shift: DVector<f64>,
    scale: DVector<f64>,
}

impl PolynomialSurrogate {
    pub fn new(degree: u32, coefficients: DMatrix<f64>, shift: DVector<f64>, scale: DVector<f64>) -> Result<Self> {
        let dim = shift.len();
        ensure_dim("surrogate scale", dim, scale.len())?;
        if scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("surrogate scales must be positive"));
        }
        let exponents = monomial_exponents(dim, degree);
        ensure_dim("surrogate coefficients", exponents.len(), coefficients.ncols())?;
        Ok(Self {
            degree,
            exponents,
            coefficients,
            shift,
            scale,
        })
    }

    /// Surrogate in raw coordinates (`shift = 0`, `scale = 1`).
    pub fn from_raw(degree: u32, coefficients: DMatrix<f64>, input_dim: usize) -> Result<Self> {
        Self::new(
            degree,
            coefficients,
            DVector::zeros(input_dim),
            DVector::from_element(input_dim, 1.0),
        )
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    pub fn scale(&self) -> &DVector<f64> {
        &self.scale
    }

    pub fn monomial_count(&self) -> usize {
        self.exponents.len()
    }

    fn normalize(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("surrogate input", self.shift.len(), x.len())?;
        Ok((x - &self.shift).component_div(&self.scale))
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let u = self.normalize(x)?;
        Ok(&self.coefficients * features_with(u.as_slice(), &self.exponents, self.degree))
    }

    /// Exact `output_dim × input_dim` derivative.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let u = self.normalize(x)?;
        let dim = u.len();
        let pw = power_table(u.as_slice(), self.degree);
        let mut dphi = DMatrix::zeros(self.exponents.len(), dim);
        for (k, a) in self.exponents.iter().enumerate() {
            for i in 0..dim {
                if a[i] == 0 {
                    continue;
                }
                let mut v = a[i] as f64 * pw[i][a[i] as usize - 1];
                for (j, &e) in a.iter().enumerate() {
                    if j != i {
                        v *= pw[j][e as usize];
                    }
                }
                dphi[(k, i)] = v / self.scale[i];
            }
        }
        Ok(&self.coefficients * dphi)
    }

    /// Coefficients with respect to monomials of the raw input, obtained by
    /// expanding the affine normalisation.
    pub fn raw_coefficients(&self) -> DMatrix<f64> {
        let index: BTreeMap<&[u32], usize> = self
            .exponents
            .iter()
            .enumerate()
            .map(|(k, a)| (a.as_slice(), k))
            .collect();
        let dim = self.shift.len();
        let mut out = DMatrix::zeros(self.coefficients.nrows(), self.exponents.len());
        for (k, a) in self.exponents.iter().enumerate() {
            // Π_i ((x_i - c_i) / s_i)^{a_i} as a sum of raw monomials
            let mut terms: Vec<(Vec<u32>, f64)> = vec![(vec![0; dim], 1.0)];
            for i in 0..dim {
                let ai = a[i];
                if ai == 0 {
                    continue;
                }
                let inv = self.scale[i].powi(-(ai as i32));
                let mut next = Vec::with_capacity(terms.len() * (ai as usize + 1));
                for (e, w) in &terms {
                    for j in 0..=ai {
                        let mut e2 = e.clone();
                        e2[i] = j;
                        let c = binomial(ai, j) * (-self.shift[i]).powi((ai - j) as i32) * inv;
                        next.push((e2, w * c));
                    }
                }
                terms = next;
            }
            for (e, w) in terms {
                let target = index[e.as_slice()];
                for r in 0..out.nrows() {
                    out[(r, target)] += self.coefficients[(r, k)] * w;
                }
            }
        }
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let dim = self.shift.len();
        let exps = DMatrix::from_fn(self.exponents.len(), dim, |k, i| self.exponents[k][i] as f64);
        write_matrix(dir.join("exponents.txt"), &exps)?;
        write_matrix(dir.join("coefficients.txt"), &self.coefficients)?;
        write_vector(dir.join("shift.txt"), &self.shift)?;
        write_vector(dir.join("scale.txt"), &self.scale)?;
        let mut m = Manifest::new();
        m.set("kind", "polynomial_surrogate");
        m.set("degree", self.degree);
        m.set("input_dim", dim);
        m.set("output_dim", self.coefficients.nrows());
        m.write(dir.join("manifest.txt"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m = Manifest::read(dir.join("manifest.txt"))?;
        let s = Self::new(
            m.get("degree")?,
            read_matrix(dir.join("coefficients.txt"))?,
            read_vector(dir.join("shift.txt"))?,
            read_vector(dir.join("scale.txt"))?,
        )?;
        let exps = read_matrix(dir.join("exponents.txt"))?;
        let stored: Vec<Vec<u32>> = exps.row_iter().map(|r| r.iter().map(|&v| v as u32).collect()).collect();
        if stored != s.exponents {
            return Err(Error::Parse {
                path: dir.join("exponents.txt"),
                msg: "exponent table does not match the graded ordering".into(),
            });
        }
        ensure_dim("surrogate manifest input", m.get("input_dim")?, s.shift.len())?;
        ensure_dim(
            "surrogate manifest output",
            m.get("output_dim")?,
            s.coefficients.nrows(),
        )?;
        Ok(s)
    }
}

impl LatentMap for PolynomialSurrogate {
    fn input_dim(&self) -> usize {
        self.shift.len()
    }

    fn output_dim(&self) -> usize {
        self.coefficients.nrows()
    }

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        PolynomialSurrogate::eval(self, x)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least-squares solve of `a · coef = b`, minimum-norm when `a` is rank
/// deficient or has more columns than rows.
pub fn least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_dim("least squares rows", a.nrows(), b.nrows())?;
    let (rows, cols) = a.shape();
    if rows >= cols {
        let qr = a.clone().qr();
        let r = qr.r();
        let diag_max = r.diagonal().amax();
        let diag_min = r.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if diag_max > 0.0 && diag_min > 1e-10 * diag_max {
            let mut qtb = b.clone();
            qr.q_tr_mul(&mut qtb);
            let top = qtb.rows(0, cols).into_owned();
            if let Some(x) = r.solve_upper_triangular(&top) {
                if x.iter().all(|v| v.is_finite()) {
                    return Ok(x);
                }
            }
        }
    }
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.amax();
    let eps = smax * rows.max(cols) as f64 * f64::EPSILON;
    svd.solve(b, eps).map_err(|e| Error::invalid(e.to_string()))
}

/// Fit a degree-`degree` polynomial to `(sample, target)` pairs. Inputs are
/// normalised to the bounding box of the samples before fitting.
pub fn fit_local_polynomial(
    samples: &[DVector<f64>],
    targets: &[DVector<f64>],
    degree: u32,
) -> Result<PolynomialSurrogate> {
    if samples.len() < 2 {
        return Err(Error::invalid("at least 2 samples are needed for a fit"));
    }
    if degree == 0 {
        return Err(Error::invalid("polynomial degree must be at least 1"));
    }
    ensure_dim("surrogate sample count", samples.len(), targets.len())?;
    let dim = samples[0].len();
    let out = targets[0].len();
    for (s, t) in samples.iter().zip(targets) {
        ensure_dim("surrogate sample width", dim, s.len())?;
        ensure_dim("surrogate target width", out, t.len())?;
    }
    let mut lo = samples[0].clone();
    let mut hi = samples[0].clone();
    for s in samples {
        lo = lo.inf(s);
        hi = hi.sup(s);
    }
    let shift = (&lo + &hi) * 0.5;
    let scale = ((&hi - &lo) * 0.5).map(|h| if h > 0.0 { h } else { 1.0 });

    let exps = monomial_exponents(dim, degree);
    let mut design = DMatrix::zeros(samples.len(), exps.len());
    for (k, s) in samples.iter().enumerate() {
        let u = (s - &shift).component_div(&scale);
        design.set_row(k, &features_with(u.as_slice(), &exps, degree).transpose());
    }
    let mut rhs = DMatrix::zeros(samples.len(), out);
    for (k, t) in targets.iter().enumerate() {
        rhs.set_row(k, &t.transpose());
    }
    let coef = least_squares(&design, &rhs)?;
    PolynomialSurrogate::new(degree, coef.transpose(), shift, scale)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub relative_rmse: f64,
    pub excluded: usize,
}

/// `sqrt(mean ‖H(x) - p(x)‖² / ‖H(x)‖²)` over samples with `H(x) != 0`.
pub fn validate_surrogate(
    surrogate: &dyn LatentMap,
    reference: &dyn LatentMap,
    samples: &[DVector<f64>],
) -> Result<Validation> {
    let truth = evaluate_on(reference, samples)?;
    let approx = evaluate_on(surrogate, samples)?;
    let mut sum = 0.0;
    let mut used = 0usize;
    for (t, a) in truth.iter().zip(&approx) {
        let nt = t.norm_squared();
        if nt == 0.0 {
            continue;
        }
        sum += (t - a).norm_squared() / nt;
        used += 1;
    }
    let excluded = samples.len() - used;
    if excluded > 0 {
        log::warn!("excluded {excluded} validation samples with a zero reference output");
    }
    if used == 0 {
        return Err(Error::invalid("every validation sample has a zero reference output"));
    }
    Ok(Validation {
        relative_rmse: (sum / used as f64).sqrt(),
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_vec(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_sample_and_zero_center() {
        let d = LhsDesign::new(DVector::from_vec(vec![2.0, -4.0]), 0.25, 1, 3);
        let s = lhs_sample(&d).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0][0] - 2.0).abs() <= 0.5 && (s[0][1] + 4.0).abs() <= 1.0);

        let d = LhsDesign::new(DVector::zeros(3), 0.5, 50, 4).with_floor(1.0);
        assert!(lhs_sample(&d).unwrap().iter().flatten().all(|v| v.abs() <= 0.5));
        assert!(lhs_sample(&LhsDesign::new(DVector::zeros(3), 0.0, 5, 1)).is_err());
    }

    #[test]
    fn every_stratum_holds_one_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let center = random_vec(8, &mut rng);
        let d = LhsDesign::new(center, 0.3, 100, 5);
        let (lo, hi) = d.bounds();
        let samples = lhs_sample(&d).unwrap();
        for i in 0..8 {
            let mut hist = vec![0; 100];
            for s in &samples {
                let bin = ((s[i] - lo[i]) / (hi[i] - lo[i]) * 100.0).floor() as usize;
                hist[bin.min(99)] += 1;
            }
            assert!(hist.iter().all(|&c| c == 1), "dimension {i}");
        }
        assert_eq!(lhs_sample(&d).unwrap(), samples);
    }

    #[test]
    fn feature_ordering_and_counts() {
        let f = monomial_features(&DVector::from_vec(vec![2.0, 3.0]), 2);
        assert_eq!(f.as_slice(), &[1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
        let z = monomial_features(&DVector::zeros(3), 3);
        assert_eq!(z[0], 1.0);
        assert!(z.iter().skip(1).all(|&v| v == 0.0));
        assert_eq!(monomial_exponents(3, 4).len(), 35);
        assert_eq!(monomial_exponents(8, 4).len(), 495);
    }

    #[test]
    fn recovers_an_exact_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n_feat = 10; // dim 3, degree 2
        let truth = DMatrix::from_fn(2, n_feat, |_, _| rng.random_range(-2.0..2.0));
        let gen = PolynomialSurrogate::from_raw(2, truth.clone(), 3).unwrap();
        let center = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let samples = lhs_sample(&LhsDesign::new(center, 0.3, 40, 6)).unwrap();
        let targets: Vec<_> = samples.iter().map(|s| gen.eval(s).unwrap()).collect();
        let fit = fit_local_polynomial(&samples, &targets, 2).unwrap();
        assert!((fit.raw_coefficients() - truth).amax() < 1e-8);
    }

    #[test]
    fn recovers_an_affine_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let b = random_vec(3, &mut rng);
        let samples: Vec<_> = (0..30).map(|_| random_vec(4, &mut rng)).collect();
        let targets: Vec<_> = samples.iter().map(|x| &a * x + &b).collect();
        let fit = fit_local_polynomial(&samples, &targets, 1).unwrap();
        let raw = fit.raw_coefficients();
        assert!((raw.column(0) - &b).amax() < 1e-8);
        assert!((raw.columns(1, 4) - &a).amax() < 1e-8);
        let x = random_vec(4, &mut rng);
        assert!((fit.jacobian(&x).unwrap() - &a).amax() < 1e-8);
    }

    #[test]
    fn residual_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(25, 6, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(25, 2, |_, _| rng.random_range(-1.0..1.0));
        let x = least_squares(&a, &b).unwrap();
        let oracle = (a.transpose() * &a).try_inverse().unwrap() * a.transpose() * &b;
        let r1 = (&a * x - &b).norm();
        let r2 = (&a * oracle - &b).norm();
        assert!((r1 - r2).abs() < 1e-8);
    }

    #[test]
    fn underdetermined_fit_is_minimum_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(4, 9, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(4, 1, |_, _| rng.random_range(-1.0..1.0));
        let x = least_squares(&a, &b).unwrap();
        let oracle = a.transpose() * (&a * a.transpose()).try_inverse().unwrap() * &b;
        assert!((x - oracle).amax() < 1e-10);

        // duplicated column: rank deficient but tall
        let mut c = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0));
        let col = c.column(0).into_owned();
        c.set_column(2, &col);
        let y = DMatrix::from_fn(12, 1, |_, _| rng.random_range(-1.0..1.0));
        let x = least_squares(&c, &y).unwrap();
        assert!((x[(0, 0)] - x[(2, 0)]).abs() < 1e-10);
    }

    #[test]
    fn jacobian_examples() {
        let c = PolynomialSurrogate::from_raw(3, DMatrix::from_fn(2, 20, |_, k| if k == 0 { 1.5 } else { 0.0 }), 3)
            .unwrap();
        assert_eq!(
            c.jacobian(&DVector::from_vec(vec![0.3, 1.0, -2.0])).unwrap(),
            DMatrix::zeros(2, 3)
        );

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = monomial_exponents(3, 4).len();
        let s = PolynomialSurrogate::new(
            4,
            DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.0..1.0)),
            random_vec(3, &mut rng),
            DVector::from_vec(vec![0.5, 2.0, 1.0]),
        )
        .unwrap();
        let x = random_vec(3, &mut rng);
        let j = s.jacobian(&x).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (s.eval(&xp).unwrap() - s.eval(&xm).unwrap()) / (2.0 * h);
            for r in 0..2 {
                let rel = (fd[r] - j[(r, i)]).abs() / j[(r, i)].abs().max(1e-12);
                assert!(rel < 1e-6, "({r},{i}) {rel}");
            }
        }
        assert!(s.jacobian(&DVector::zeros(2)).is_err());
    }

    struct Scaled<'a>(&'a PolynomialSurrogate, f64);

    impl LatentMap for Scaled<'_> {
        fn input_dim(&self) -> usize {
            self.0.input_dim()
        }
        fn output_dim(&self) -> usize {
            self.0.output_dim()
        }
        fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(self.0.eval(x)? * self.1)
        }
    }

    #[test]
    fn validation_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = PolynomialSurrogate::from_raw(2, DMatrix::from_fn(2, 6, |_, _| rng.random_range(0.5..1.0)), 2).unwrap();
        let samples = lhs_sample(&LhsDesign::new(DVector::from_vec(vec![1.0, 1.0]), 0.2, 20, 8)).unwrap();
        assert_eq!(validate_surrogate(&s, &s, &samples).unwrap().relative_rmse, 0.0);
        let v = validate_surrogate(&s, &Scaled(&s, 2.0), &samples).unwrap();
        assert!((v.relative_rmse - 0.5).abs() < 1e-12);
        let zero = Scaled(&s, 0.0);
        assert!(validate_surrogate(&s, &zero, &samples).is_err());
    }

    #[test]
    fn save_and_load() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<_> = (0..40).map(|_| random_vec(3, &mut rng)).collect();
        let targets: Vec<_> = samples
            .iter()
            .map(|x| DVector::from_vec(vec![x[0] * x[1], x[2].sin()]))
            .collect();
        let fit = fit_local_polynomial(&samples, &targets, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        fit.save(dir.path()).unwrap();
        assert_eq!(PolynomialSurrogate::load(dir.path()).unwrap(), fit);
    }

    #[test]
    fn rejects_bad_fits() {
        let one = vec![DVector::zeros(2)];
        assert!(fit_local_polynomial(&one, &one, 2).is_err());
        let two = vec![DVector::zeros(2), DVector::zeros(2)];
        assert!(fit_local_polynomial(&two, &one, 2).is_err());
    }
}
