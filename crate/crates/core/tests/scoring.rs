mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kgnn_ls::scoring::{build_user_adjacency, edge_weight, relation_weights, weighted_degree};
use kgnn_ls::EntityId;

use common::connected_kg;

fn instance(seed: u64) -> (kgnn_ls::kg::KnowledgeGraph, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..25);
    let kg = connected_kg(n, 3, rng.gen_range(0..n), 1, &mut rng);
    let user = Array2::from_shape_fn((1, 5), |_| rng.gen_range(-2.0..2.0));
    let rel = Array2::from_shape_fn((3, 5), |_| rng.gen_range(-2.0..2.0));
    (kg, user, rel)
}

proptest! {
    #[test]
    fn weights_are_positive_and_monotone(a in -40.0f64..40.0, b in -40.0f64..40.0) {
        prop_assert!(edge_weight(a) > 0.0);
        if a < b {
            prop_assert!(edge_weight(a) <= edge_weight(b));
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric_with_spectrum_in_unit_interval(seed in any::<u64>()) {
        let (kg, user, rel) = instance(seed);
        let adj = build_user_adjacency(&kg, user.row(0), rel.view(), true).unwrap();
        let norm = adj.normalize_symmetric().unwrap();
        prop_assert!(norm.is_symmetric());
        let eig = norm.to_dense().symmetric_eigen();
        for &l in eig.eigenvalues.iter() {
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&l), "eigenvalue {}", l);
        }
        // The largest eigenvalue is exactly 1, with eigenvector D^{1/2} 1.
        let top = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!((top - 1.0).abs() < 1e-9);
    }

    #[test]
    fn transition_rows_sum_to_one(seed in any::<u64>(), loops in any::<bool>()) {
        let (kg, user, rel) = instance(seed);
        let adj = build_user_adjacency(&kg, user.row(0), rel.view(), loops).unwrap();
        let p = adj.transition().unwrap();
        for i in 0..p.nrows() {
            prop_assert!((p.row_sum(i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn self_loops_add_one_to_every_degree(seed in any::<u64>()) {
        let (kg, user, rel) = instance(seed);
        let plain = build_user_adjacency(&kg, user.row(0), rel.view(), false).unwrap();
        let looped = build_user_adjacency(&kg, user.row(0), rel.view(), true).unwrap();
        let w = relation_weights(user.row(0), rel.view());
        for i in 0..kg.entity_count() {
            prop_assert!((looped.degree()[i] - plain.degree()[i] - 1.0).abs() < 1e-12);
            let exact = weighted_degree(&kg, EntityId::from_index(i), &w, true);
            prop_assert!((exact - looped.degree()[i]).abs() < 1e-12);
        }
        prop_assert_eq!(plain.with_self_loops(true), looped);
    }
}

#[test]
fn mismatched_embedding_width_is_an_error() {
    let (kg, user, _) = instance(1);
    let rel = Array2::zeros((3, 4));
    assert!(build_user_adjacency(&kg, user.row(0), rel.view(), true).is_err());
    let too_few = Array2::zeros((1, 5));
    assert!(build_user_adjacency(&kg, user.row(0), too_few.view(), true).is_err());
}
