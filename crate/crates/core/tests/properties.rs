use gla_core::io::{read_matrix, write_matrix};
use gla_core::neural::{Activation, DenseLayer, DenseNetwork};
use gla_core::obsgen::{apply_full_observation, LatentObsOperator, MarginalFn, SelectionMatrix};
use gla_core::rom::{PodAeModel, PodBasis};
use gla_core::surrogate::{lhs_sample, LatentMap, LhsDesign};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q().columns(0, cols).into_owned()
}

fn layer(out: usize, inp: usize, activation: Activation, rng: &mut ChaCha8Rng) -> DenseLayer {
    DenseLayer {
        weights: DMatrix::from_fn(out, inp, |_, _| rng.random_range(-0.5..0.5)),
        bias: DVector::from_fn(out, |_, _| rng.random_range(-0.5..0.5)),
        activation,
    }
}

struct RawModel {
    modes: DMatrix<f64>,
    enc: DenseLayer,
    dec: DenseLayer,
}

impl RawModel {
    fn random(dof: usize, q: usize, latent: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            modes: orthonormal(dof, q, rng),
            enc: layer(latent, q, Activation::LeakyRelu(0.3), rng),
            dec: layer(q, latent, Activation::Tanh, rng),
        }
    }

    fn model(&self) -> PodAeModel {
        PodAeModel::new(
            PodBasis::from_modes(self.modes.clone()).unwrap(),
            DenseNetwork::new(vec![self.enc.clone()]).unwrap(),
            DenseNetwork::new(vec![self.dec.clone()]).unwrap(),
            0,
        )
        .unwrap()
    }
}

/// One dense layer by explicit loops.
fn apply_layer(l: &DenseLayer, x: &[f64]) -> Vec<f64> {
    (0..l.output_dim())
        .map(|r| {
            let z: f64 = l.bias[r] + (0..x.len()).map(|c| l.weights[(r, c)] * x[c]).sum::<f64>();
            match l.activation {
                Activation::Tanh => z.tanh(),
                Activation::LeakyRelu(a) => {
                    if z > 0.0 {
                        z
                    } else {
                        a * z
                    }
                }
                _ => unreachable!(),
            }
        })
        .collect()
}

#[test]
fn stacked_operator_matches_staged_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..10 {
        let (n, m) = (rng.random_range(10..40), rng.random_range(5..20));
        let (qx, qy, lx, ly) = (
            rng.random_range(2..6),
            rng.random_range(2..5),
            rng.random_range(1..4),
            rng.random_range(1..4),
        );
        let xm = RawModel::random(n, qx, lx, &mut rng);
        let ym = RawModel::random(m, qy, ly, &mut rng);
        let h = SelectionMatrix::sample(m, n, 0.3, case).unwrap();
        let f = if case % 2 == 0 {
            MarginalFn::Quadratic
        } else {
            MarginalFn::reciprocal()
        };
        let op = LatentObsOperator::new(ym.model(), h.clone(), f, xm.model()).unwrap();
        let z: Vec<f64> = (0..lx).map(|_| rng.random_range(-1.0..1.0)).collect();

        let coeffs = apply_layer(&xm.dec, &z);
        let x: Vec<f64> = (0..n)
            .map(|i| (0..qx).map(|k| xm.modes[(i, k)] * coeffs[k]).sum())
            .collect();
        let y: Vec<f64> = h
            .rows()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&i| match f {
                        MarginalFn::Quadratic => x[i] * x[i],
                        MarginalFn::Reciprocal { offset } => 1.0 / (x[i] + offset),
                    })
                    .sum()
            })
            .collect();
        let proj: Vec<f64> = (0..qy).map(|k| (0..m).map(|j| ym.modes[(j, k)] * y[j]).sum()).collect();
        let want = apply_layer(&ym.enc, &proj);

        let got = op.eval(&DVector::from_vec(z)).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10 * (1.0 + w.abs()), "case {case}: {g} vs {w}");
        }
    }
}

proptest! {
    #[test]
    fn quadratic_observation_is_additive_over_disjoint_supports(
        n in 2usize..40,
        m in 1usize..20,
        seed in any::<u64>(),
        split in 0.0f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = SelectionMatrix::sample(m, n, 0.4, seed).unwrap();
        let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let cut = (split * n as f64) as usize;
        let a = DVector::from_fn(n, |i, _| if i < cut { x[i] } else { 0.0 });
        let b = &x - &a;
        let f = MarginalFn::Quadratic;
        let whole = apply_full_observation(&h, f, &x).unwrap();
        let parts = apply_full_observation(&h, f, &a).unwrap() + apply_full_observation(&h, f, &b).unwrap();
        prop_assert!((whole - parts).amax() < 1e-12 * (1.0 + 9.0 * n as f64));
    }

    #[test]
    fn lhs_places_one_point_per_stratum(
        dim in 1usize..6,
        count in 1usize..200,
        seed in any::<u64>(),
        range in 0.01f64..2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = DVector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0));
        let design = LhsDesign::new(center, range, count, seed);
        let (lo, hi) = design.bounds();
        let samples = lhs_sample(&design).unwrap();
        prop_assert_eq!(samples.len(), count);
        for i in 0..dim {
            let mut hits = vec![0usize; count];
            for s in &samples {
                prop_assert!(s[i] >= lo[i] && s[i] <= hi[i]);
                let k = ((s[i] - lo[i]) / (hi[i] - lo[i]) * count as f64).floor() as usize;
                hits[k.min(count - 1)] += 1;
            }
            prop_assert!(hits.iter().all(|&h| h == 1), "dimension {}: {:?}", i, hits);
        }
    }

    #[test]
    fn matrix_files_round_trip_bitwise(
        rows in 1usize..8,
        cols in 1usize..8,
        values in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 64),
    ) {
        let m = DMatrix::from_fn(rows, cols, |r, c| values[r * cols + c]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        for (a, b) in back.iter().zip(m.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
