use gla_core::mesh::{bandwidth, reverse_cuthill_mckee, AdjacencyMatrix, NodePermutation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::{brute_force_bandwidth, random_edges};

fn check_against_minimum(n: usize, edges: &[(usize, usize)]) {
    let adj = AdjacencyMatrix::from_edges(n, edges).unwrap();
    let rcm = bandwidth(&adj, &reverse_cuthill_mckee(&adj)).unwrap();
    let best = brute_force_bandwidth(n, edges);
    assert!(rcm <= 2 * best, "n={n} edges={edges:?}: rcm {rcm}, minimum {best}");
}

#[test]
fn every_graph_up_to_six_nodes_is_within_twice_the_minimum() {
    for n in 1..=6usize {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let edges: Vec<_> = pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| mask & (1 << k) != 0)
                .map(|(_, &e)| e)
                .collect();
            check_against_minimum(n, &edges);
        }
    }
}

#[test]
fn random_graphs_on_seven_and_eight_nodes_are_within_twice_the_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let n = rng.random_range(7..=8);
        let density = rng.random_range(0.1..0.6);
        let edges = random_edges(n, density, &mut rng);
        check_against_minimum(n, &edges);
    }
}

#[test]
fn brute_force_agrees_with_bandwidth_on_identity_for_paths() {
    let edges: Vec<_> = (0..6).map(|i| (i, i + 1)).collect();
    let adj = AdjacencyMatrix::from_edges(7, &edges).unwrap();
    assert_eq!(bandwidth(&adj, &NodePermutation::identity(7)).unwrap(), 1);
    assert_eq!(brute_force_bandwidth(7, &edges), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rcm_is_a_permutation_no_wider_than_identity(
        n in 2usize..=64,
        seed in any::<u64>(),
        degree in 1.0f64..4.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = random_edges(n, degree / n as f64, &mut rng);
        let adj = AdjacencyMatrix::from_edges(n, &edges).unwrap();
        let perm = reverse_cuthill_mckee(&adj);
        let mut seen = vec![false; n];
        for &v in perm.as_slice() {
            prop_assert!(!seen[v]);
            seen[v] = true;
        }
        let rcm = bandwidth(&adj, &perm).unwrap();
        let identity = bandwidth(&adj, &NodePermutation::identity(n)).unwrap();
        prop_assert!(rcm <= identity, "rcm {} identity {}", rcm, identity);
    }
}
