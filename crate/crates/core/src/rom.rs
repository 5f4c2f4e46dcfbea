//! Snapshot reduction: POD and the two-stage POD autoencoder.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_dim, Error, Result};
use crate::io::{read_matrix, read_vector, write_matrix, write_vector, Manifest};
use crate::neural::{train, Activation, DenseNetwork, Sample, TrainConfig, TrainReport};

/// Field data with one column per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
}

impl SnapshotMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() < 2 {
            return Err(Error::invalid(format!(
                "a snapshot matrix needs at least 2 columns, got {}",
                data.ncols()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::invalid("snapshots have no degrees of freedom"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("snapshot matrix contains non-finite entries"));
        }
        Ok(Self { data })
    }

    pub fn dof(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_state(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn column(&self, t: usize) -> DVector<f64> {
        self.data.column(t).into_owned()
    }

    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        Self::new(self.data.select_columns(columns))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(read_matrix(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_matrix(path, &self.data)
    }
}

/// Split `0..n` into training and test indices, every `period`-th index
/// (offset `period - 1`) going to the test set.
pub fn interleaved_split(n: usize, period: usize) -> (Vec<usize>, Vec<usize>) {
    let period = period.max(2);
    (0..n).partition(|&i| i % period != period - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvdRoute {
    /// Direct thin SVD unless `dof` greatly exceeds the snapshot count.
    #[default]
    Auto,
    Direct,
    /// Method of snapshots: eigendecomposition of the `n_state × n_state`
    /// Gram matrix.
    Snapshots,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PodOptions {
    /// Subtract the temporal mean before the decomposition.
    pub center: bool,
    pub route: SvdRoute,
}

/// Truncated POD basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    modes: DMatrix<f64>,
    singular_values: DVector<f64>,
    n_state: usize,
    mean: Option<DVector<f64>>,
}

/// Flip each column so that its largest-magnitude entry is positive.
fn fix_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        for &v in col.iter() {
            if v.abs() > best.abs() {
                best = v;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

fn direct_svd(x: &DMatrix<f64>, q: usize) -> (DMatrix<f64>, DVector<f64>) {
    let svd = SVD::new(x.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = DVector::from_iterator(order.len(), order.iter().map(|&k| svd.singular_values[k]));
    let modes = u.select_columns(&order[..q]);
    (modes, sv)
}

fn snapshot_svd(x: &DMatrix<f64>, q: usize) -> (DMatrix<f64>, DVector<f64>) {
    let gram = x.tr_mul(x);
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let keep = x.nrows().min(x.ncols());
    let sv = DVector::from_iterator(keep, order[..keep].iter().map(|&k| eig.eigenvalues[k].max(0.0).sqrt()));
    let floor = sv[0] * f64::EPSILON;
    let mut modes = DMatrix::zeros(x.nrows(), q);
    for (j, &k) in order[..q].iter().enumerate() {
        let s = sv[j].max(floor).max(f64::MIN_POSITIVE);
        let col = x * eig.eigenvectors.column(k) / s;
        modes.set_column(j, &col);
    }
    // re-orthonormalise: X v / sigma loses orthogonality for tiny sigma
    let qr = modes.clone().qr();
    let mut qmat = qr.q();
    let r = qr.r();
    for j in 0..q {
        if r[(j, j)] < 0.0 {
            qmat.column_mut(j).neg_mut();
        }
    }
    (qmat, sv)
}

/// Fit a rank-`q` POD basis from raw (uncentred) snapshots.
pub fn fit_pod(snapshots: &SnapshotMatrix, q: usize) -> Result<PodBasis> {
    fit_pod_with(snapshots, q, PodOptions::default())
}

pub fn fit_pod_with(snapshots: &SnapshotMatrix, q: usize, options: PodOptions) -> Result<PodBasis> {
    let max_q = snapshots.dof().min(snapshots.n_state());
    if q == 0 || q > max_q {
        return Err(Error::invalid(format!("truncation q = {q} must lie in 1..={max_q}")));
    }
    let mut x = snapshots.data().clone();
    let mean = if options.center {
        let mean = x.column_mean();
        for mut col in x.column_iter_mut() {
            col -= &mean;
        }
        Some(mean)
    } else {
        None
    };
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("snapshots are identically zero"));
    }
    let route = match options.route {
        SvdRoute::Auto if x.nrows() > 4 * x.ncols() => SvdRoute::Snapshots,
        SvdRoute::Auto => SvdRoute::Direct,
        r => r,
    };
    let (mut modes, singular_values) = match route {
        SvdRoute::Snapshots => snapshot_svd(&x, q),
        _ => direct_svd(&x, q),
    };
    fix_signs(&mut modes);
    Ok(PodBasis {
        modes,
        singular_values,
        n_state: snapshots.n_state(),
        mean,
    })
}

/// Compression accuracy `γ` and rate `ρ` of a truncation.
///
/// `γ = Σ_{i<q} λ_i² / Σ_i λ_i²` with `λ_i = σ_i²` the POD eigenvalues, and
/// `ρ = q / n_state`.
pub fn compression_metrics(singular_values: &[f64], q: usize, n_state: usize) -> Result<(f64, f64)> {
    if singular_values.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    if q == 0 || q > singular_values.len() {
        return Err(Error::invalid(format!(
            "q = {q} outside the spectrum of length {}",
            singular_values.len()
        )));
    }
    let sq = |s: &f64| s.powi(4);
    let total: f64 = singular_values.iter().map(sq).sum();
    if total == 0.0 {
        return Err(Error::invalid("spectrum is identically zero"));
    }
    let kept: f64 = singular_values[..q].iter().map(sq).sum();
    Ok((kept / total, q as f64 / n_state as f64))
}

impl PodBasis {
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn q(&self) -> usize {
        self.modes.ncols()
    }

    pub fn dof(&self) -> usize {
        self.modes.nrows()
    }

    pub fn n_state(&self) -> usize {
        self.n_state
    }

    pub fn mean(&self) -> Option<&DVector<f64>> {
        self.mean.as_ref()
    }

    /// Basis built from explicit modes (no spectrum information beyond
    /// unit singular values).
    pub fn from_modes(modes: DMatrix<f64>) -> Result<Self> {
        let q = modes.ncols();
        if q == 0 || q > modes.nrows() {
            return Err(Error::invalid("modes must be a tall, non-empty matrix"));
        }
        Ok(Self {
            singular_values: DVector::from_element(q, 1.0),
            n_state: q,
            modes,
            mean: None,
        })
    }

    pub fn compression_metrics(&self) -> Result<(f64, f64)> {
        compression_metrics(self.singular_values.as_slice(), self.q(), self.n_state)
    }

    /// Leading `q` modes of this basis.
    pub fn truncated(&self, q: usize) -> Result<Self> {
        if q == 0 || q > self.q() {
            return Err(Error::invalid(format!("cannot truncate {} modes to {q}", self.q())));
        }
        Ok(Self {
            modes: self.modes.columns(0, q).into_owned(),
            ..self.clone()
        })
    }

    pub fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("pod encode", self.dof(), x.len())?;
        Ok(match &self.mean {
            Some(m) => self.modes.tr_mul(&(x - m)),
            None => self.modes.tr_mul(x),
        })
    }

    pub fn decode(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("pod decode", self.q(), z.len())?;
        let x = &self.modes * z;
        Ok(match &self.mean {
            Some(m) => x + m,
            None => x,
        })
    }

    pub fn encode_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim("pod encode", self.dof(), x.nrows())?;
        Ok(match &self.mean {
            Some(m) => {
                let mut c = x.clone();
                for mut col in c.column_iter_mut() {
                    col -= m;
                }
                self.modes.tr_mul(&c)
            }
            None => self.modes.tr_mul(x),
        })
    }

    pub fn decode_batch(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim("pod decode", self.q(), z.nrows())?;
        let mut x = &self.modes * z;
        if let Some(m) = &self.mean {
            for mut col in x.column_iter_mut() {
                col += m;
            }
        }
        Ok(x)
    }

    pub fn save(&self, dir: &Path, manifest: &mut Manifest) -> Result<()> {
        write_matrix(dir.join("basis.txt"), &self.modes)?;
        write_vector(dir.join("spectrum.txt"), &self.singular_values)?;
        manifest.set("pod.dof", self.dof());
        manifest.set("pod.q", self.q());
        manifest.set("pod.n_state", self.n_state);
        manifest.set("pod.centered", self.mean.is_some());
        if let Some(m) = &self.mean {
            write_vector(dir.join("mean.txt"), m)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, manifest: &Manifest) -> Result<Self> {
        let modes = read_matrix(dir.join("basis.txt"))?;
        let singular_values = read_vector(dir.join("spectrum.txt"))?;
        let centered: bool = manifest.get("pod.centered")?;
        let mean = if centered {
            Some(read_vector(dir.join("mean.txt"))?)
        } else {
            None
        };
        ensure_dim("pod manifest dof", manifest.get("pod.dof")?, modes.nrows())?;
        ensure_dim("pod manifest q", manifest.get("pod.q")?, modes.ncols())?;
        Ok(Self {
            modes,
            singular_values,
            n_state: manifest.get("pod.n_state")?,
            mean,
        })
    }
}

/// Dense autoencoder shape used on top of the POD coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AeArchitecture {
    /// Hidden widths of the encoder; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Activation of the latent layer and of the reconstruction layer.
    pub output_activation: Activation,
}

impl Default for AeArchitecture {
    fn default() -> Self {
        Self {
            hidden: vec![128],
            activation: Activation::LeakyRelu(0.3),
            output_activation: Activation::LeakyRelu(0.3),
        }
    }
}

/// POD truncation followed by a dense autoencoder on the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PodAeModel {
    basis: PodBasis,
    encoder: DenseNetwork,
    decoder: DenseNetwork,
    seed: u64,
}

impl PodAeModel {
    pub fn new(basis: PodBasis, encoder: DenseNetwork, decoder: DenseNetwork, seed: u64) -> Result<Self> {
        ensure_dim("pod-ae encoder input", basis.q(), encoder.input_dim())?;
        ensure_dim("pod-ae decoder output", basis.q(), decoder.output_dim())?;
        ensure_dim("pod-ae latent", encoder.output_dim(), decoder.input_dim())?;
        Ok(Self {
            basis,
            encoder,
            decoder,
            seed,
        })
    }

    pub fn basis(&self) -> &PodBasis {
        &self.basis
    }

    pub fn encoder(&self) -> &DenseNetwork {
        &self.encoder
    }

    pub fn decoder(&self) -> &DenseNetwork {
        &self.decoder
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn q_prior(&self) -> usize {
        self.basis.q()
    }

    pub fn dof(&self) -> usize {
        self.basis.dof()
    }

    pub fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.encoder.forward(&self.basis.encode(x)?)
    }

    pub fn decode(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.basis.decode(&self.decode_coefficients(z)?)
    }

    /// Reconstructed POD coefficients `D'(z)`.
    pub fn decode_coefficients(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("pod-ae decode", self.latent_dim(), z.len())?;
        self.decoder.forward(z)
    }

    pub fn encode_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.encoder.forward_batch(&self.basis.encode_batch(x)?)
    }

    pub fn decode_batch(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim("pod-ae decode", self.latent_dim(), z.nrows())?;
        self.basis.decode_batch(&self.decoder.forward_batch(z)?)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut m = Manifest::new();
        m.set("kind", "pod_ae");
        m.set("latent_dim", self.latent_dim());
        m.set("seed", self.seed);
        self.basis.save(dir, &mut m)?;
        self.encoder.save(dir, "encoder", &mut m)?;
        self.decoder.save(dir, "decoder", &mut m)?;
        m.write(dir.join("manifest.txt"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m = Manifest::read(dir.join("manifest.txt"))?;
        let basis = PodBasis::load(dir, &m)?;
        let encoder = DenseNetwork::load(dir, "encoder", &m)?;
        let decoder = DenseNetwork::load(dir, "decoder", &m)?;
        Self::new(basis, encoder, decoder, m.get("seed")?)
    }
}

/// Fit POD with `q_prior` modes (all available when `None`), then train
/// the autoencoder on the POD coefficients with an MSE loss.
pub fn fit_pod_ae(
    snapshots: &SnapshotMatrix,
    q_prior: Option<usize>,
    latent_dim: usize,
    arch: &AeArchitecture,
    config: &TrainConfig,
) -> Result<(PodAeModel, TrainReport)> {
    let max_q = snapshots.dof().min(snapshots.n_state());
    let q = q_prior.unwrap_or(max_q);
    if latent_dim == 0 || latent_dim > q {
        return Err(Error::invalid(format!(
            "latent dimension {latent_dim} must lie in 1..={q}"
        )));
    }
    let basis = fit_pod(snapshots, q)?;
    let coeffs = basis.encode_batch(snapshots.data())?;

    let mut widths = vec![q];
    widths.extend(&arch.hidden);
    widths.push(latent_dim);
    widths.extend(arch.hidden.iter().rev());
    widths.push(q);
    let n_hidden = arch.hidden.len();
    let mut activations = Vec::with_capacity(2 * n_hidden + 2);
    for half in 0..2 {
        activations.extend(std::iter::repeat_n(arch.activation, n_hidden));
        activations.push(arch.output_activation);
        let _ = half;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = DenseNetwork::init(&widths, &activations, &mut rng)?;

    let data: Vec<Sample> = coeffs.column_iter().map(|c| (c.into_owned(), c.into_owned())).collect();
    let report = train(&mut net, &data, config)?;
    let (encoder, decoder) = net.split_at(n_hidden + 1)?;
    Ok((PodAeModel::new(basis, encoder, decoder, config.seed)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::DenseLayer;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn rank_one_ensemble() {
        let c = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let x = DMatrix::from_fn(4, 5, |i, _| c[i]);
        let basis = fit_pod(&SnapshotMatrix::new(x).unwrap(), 1).unwrap();
        let expected = &c / c.norm();
        for i in 0..4 {
            assert!((basis.modes()[(i, 0)] - expected[i]).abs() < 1e-12);
        }
        let (gamma, rho) = basis.compression_metrics().unwrap();
        assert!((gamma - 1.0).abs() < 1e-12);
        assert_eq!(rho, 0.2);
    }

    #[test]
    fn identity_is_reconstructed_exactly() {
        let x = DMatrix::<f64>::identity(3, 3);
        let basis = fit_pod(&SnapshotMatrix::new(x.clone()).unwrap(), 3).unwrap();
        let rec = basis.decode_batch(&basis.encode_batch(&x).unwrap()).unwrap();
        assert!(max_abs(&(rec - &x)) < 1e-12);
        assert!((basis.compression_metrics().unwrap().0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_out_of_range_and_zero_snapshots() {
        let s = SnapshotMatrix::new(random_matrix(6, 4, 1)).unwrap();
        assert!(fit_pod(&s, 0).is_err());
        assert!(fit_pod(&s, 5).is_err());
        let z = SnapshotMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        assert!(fit_pod(&z, 1).is_err());
        assert!(SnapshotMatrix::new(DMatrix::zeros(3, 1)).is_err());
        let mut bad = DMatrix::zeros(2, 2);
        bad[(0, 0)] = f64::NAN;
        assert!(SnapshotMatrix::new(bad).is_err());
    }

    #[test]
    fn routes_agree() {
        for (rows, cols, seed) in [(6, 4, 2), (40, 7, 3), (5, 9, 4), (64, 64, 5)] {
            let s = SnapshotMatrix::new(random_matrix(rows, cols, seed)).unwrap();
            let q = rows.min(cols) - 1;
            let direct = fit_pod_with(
                &s,
                q,
                PodOptions {
                    route: SvdRoute::Direct,
                    ..Default::default()
                },
            )
            .unwrap();
            let gram = fit_pod_with(
                &s,
                q,
                PodOptions {
                    route: SvdRoute::Snapshots,
                    ..Default::default()
                },
            )
            .unwrap();
            let dsv = direct.singular_values();
            let gsv = gram.singular_values();
            for k in 0..dsv.len() {
                assert!((dsv[k] - gsv[k]).abs() < 1e-8, "sigma {k}: {} vs {}", dsv[k], gsv[k]);
            }
            assert!(max_abs(&(direct.modes() - gram.modes())) < 1e-8);
        }
    }

    #[test]
    fn gram_route_stays_orthonormal_past_rank() {
        // rank 2, but ask for 4 modes
        let a = random_matrix(50, 2, 6);
        let b = random_matrix(2, 6, 7);
        let s = SnapshotMatrix::new(a * b).unwrap();
        let basis = fit_pod_with(
            &s,
            4,
            PodOptions {
                route: SvdRoute::Snapshots,
                ..Default::default()
            },
        )
        .unwrap();
        let gram = basis.modes().tr_mul(basis.modes());
        assert!(max_abs(&(gram - DMatrix::identity(4, 4))) < 1e-10);
    }

    #[test]
    fn encode_decode_examples() {
        let s = SnapshotMatrix::new(random_matrix(8, 5, 8)).unwrap();
        let basis = fit_pod(&s, 3).unwrap();
        let m0 = basis.modes().column(0).into_owned();
        let z = basis.encode(&m0).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-12 && z[1].abs() < 1e-12 && z[2].abs() < 1e-12);
        assert!((basis.decode(&z).unwrap() - &m0).amax() < 1e-12);

        // orthogonal complement
        let full = fit_pod(&s, 5).unwrap();
        let perp = full.modes().column(4).into_owned();
        assert!(basis.encode(&perp).unwrap().amax() < 1e-12);

        // Pythagoras
        let x = DVector::from_fn(8, |i, _| (i as f64 * 0.7).sin());
        let zx = basis.encode(&x).unwrap();
        let residual = &x - basis.decode(&zx).unwrap();
        let lhs = residual.norm_squared();
        let rhs = x.norm_squared() - zx.norm_squared();
        assert!((lhs - rhs).abs() < 1e-12);

        assert!(basis.encode(&DVector::zeros(7)).is_err());
        assert!(basis.decode(&DVector::zeros(4)).is_err());
    }

    #[test]
    fn compression_metric_arithmetic() {
        let (g, r) = compression_metrics(&[3.0, 1.0], 1, 2).unwrap();
        assert!((g - 81.0 / 82.0).abs() < 1e-15);
        assert_eq!(r, 0.5);
        assert_eq!(compression_metrics(&[3.0, 1.0], 2, 2).unwrap().0, 1.0);
        assert!(compression_metrics(&[], 1, 2).is_err());
        assert!(compression_metrics(&[1.0], 2, 2).is_err());
    }

    #[test]
    fn centering_flag() {
        let base = random_matrix(6, 5, 9);
        let shifted = DMatrix::from_fn(6, 5, |i, j| base[(i, j)] + 10.0 + i as f64);
        let s = SnapshotMatrix::new(shifted.clone()).unwrap();
        let basis = fit_pod_with(
            &s,
            4,
            PodOptions {
                center: true,
                ..Default::default()
            },
        )
        .unwrap();
        // centred data of 5 columns has rank <= 4
        let rec = basis.decode_batch(&basis.encode_batch(&shifted).unwrap()).unwrap();
        assert!(max_abs(&(rec - &shifted)) < 1e-10);
    }

    fn identity_net(n: usize) -> DenseNetwork {
        DenseNetwork::new(vec![DenseLayer {
            weights: DMatrix::identity(n, n),
            bias: DVector::zeros(n),
            activation: Activation::Linear,
        }])
        .unwrap()
    }

    #[test]
    fn pod_ae_composition() {
        let s = SnapshotMatrix::new(random_matrix(10, 6, 10)).unwrap();
        let basis = fit_pod(&s, 4).unwrap();
        let model = PodAeModel::new(basis.clone(), identity_net(4), identity_net(4), 0).unwrap();
        let x = s.column(2);
        assert!((model.encode(&x).unwrap() - basis.encode(&x).unwrap()).amax() < 1e-15);

        let zero = |i, o| DenseLayer {
            weights: DMatrix::zeros(o, i),
            bias: DVector::zeros(o),
            activation: Activation::LeakyRelu(0.3),
        };
        let enc = DenseNetwork::new(vec![zero(4, 3), zero(3, 2)]).unwrap();
        let dec = DenseNetwork::new(vec![zero(2, 3), zero(3, 4)]).unwrap();
        let zm = PodAeModel::new(basis, enc, dec, 0).unwrap();
        assert_eq!(zm.encode(&x).unwrap(), DVector::zeros(2));
        let d0 = zm.decode(&DVector::zeros(2)).unwrap();
        assert_eq!(d0, zm.decode(&DVector::zeros(2)).unwrap());
        assert!(zm.encode(&DVector::zeros(9)).is_err());
        assert!(PodAeModel::new(zm.basis().clone(), identity_net(3), identity_net(4), 0).is_err());
    }

    #[test]
    fn linear_autoencoder_learns_identity() {
        let s = SnapshotMatrix::new(random_matrix(12, 20, 11)).unwrap();
        let arch = AeArchitecture {
            hidden: vec![],
            activation: Activation::Linear,
            output_activation: Activation::Linear,
        };
        let cfg = TrainConfig {
            learning_rate: 0.01,
            epochs: 1500,
            batch_size: 20,
            seed: 3,
            ..TrainConfig::default()
        };
        let (model, report) = fit_pod_ae(&s, Some(5), 5, &arch, &cfg).unwrap();
        assert!(report.loss_history.iter().all(|l| l.is_finite()));
        let coeffs = model.basis().encode_batch(s.data()).unwrap();
        let rec = model
            .decoder()
            .forward_batch(&model.encoder().forward_batch(&coeffs).unwrap())
            .unwrap();
        let mse = (rec - &coeffs).norm_squared() / coeffs.len() as f64;
        assert!(mse < 1e-6, "mse {mse}");
    }

    #[test]
    fn save_and_load_pod_ae() {
        let s = SnapshotMatrix::new(random_matrix(10, 8, 12)).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let (model, _) = fit_pod_ae(
            &s,
            Some(6),
            3,
            &AeArchitecture {
                hidden: vec![5],
                ..Default::default()
            },
            &cfg,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        assert_eq!(PodAeModel::load(dir.path()).unwrap(), model);
    }

    #[test]
    fn interleaved_split_every_fifth() {
        let (train, test) = interleaved_split(10, 5);
        assert_eq!(test, vec![4, 9]);
        assert_eq!(train, vec![0, 1, 2, 3, 5, 6, 7, 8]);
    }
}
