mod common;

use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kgnn_ls::gnn::{forward, predict, standard_activations, ModelParams, ReceptiveField, LOGIT_CLAMP};
use kgnn_ls::scoring::build_user_adjacency;
use kgnn_ls::{EntityId, UserId};

use common::connected_kg;

fn to_dense(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Full-graph layers computed with dense matrices.
fn dense_oracle(kg: &kgnn_ls::kg::KnowledgeGraph, params: &ModelParams, user: usize) -> DMatrix<f64> {
    let adj = build_user_adjacency(kg, params.users.row(user), params.relations.view(), true).unwrap();
    let a_hat = adj.normalize_symmetric().unwrap().to_dense();
    let mut h = to_dense(&params.entities);
    let layers = params.layers();
    for (l, w) in params.weights.iter().enumerate() {
        let z = &a_hat * &h * to_dense(w);
        h = if l + 1 == layers {
            z.map(f64::tanh)
        } else {
            z.map(|x| x.max(0.0))
        };
    }
    h
}

fn setup(seed: u64, layers: usize) -> (kgnn_ls::kg::KnowledgeGraph, ModelParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(5..30);
    let kg = connected_kg(n, 3, rng.gen_range(0..n), 4.min(n), &mut rng);
    let mut params = ModelParams::init(2, 3, n, 5, layers, &mut rng);
    for t in params.tensors_mut().into_iter().take(3) {
        t.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    }
    (kg, params)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exhaustive_field_equals_full_graph(seed in any::<u64>(), layers in 1usize..=3) {
        let (kg, params) = setup(seed, layers);
        let oracle = dense_oracle(&kg, &params, 1);
        let seeds: Vec<EntityId> = kg.items().to_vec();
        let rf = ReceptiveField::exhaustive(&kg, &seeds, layers);
        let fwd = forward(&kg, &rf, &params, UserId(1), &standard_activations(layers)).unwrap();
        for (k, e) in seeds.iter().enumerate() {
            for c in 0..params.dim() {
                prop_assert!((fwd.output()[[k, c]] - oracle[(e.index(), c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seed_order_only_permutes_outputs(seed in any::<u64>()) {
        let (kg, params) = setup(seed, 2);
        let seeds: Vec<EntityId> = kg.items().to_vec();
        let mut rev = seeds.clone();
        rev.reverse();
        let act = standard_activations(2);
        let a = forward(&kg, &ReceptiveField::exhaustive(&kg, &seeds, 2), &params, UserId(0), &act).unwrap();
        let b = forward(&kg, &ReceptiveField::exhaustive(&kg, &rev, 2), &params, UserId(0), &act).unwrap();
        let n = seeds.len();
        for k in 0..n {
            for c in 0..params.dim() {
                prop_assert!((a.output()[[k, c]] - b.output()[[n - 1 - k, c]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn receptive_field_size_is_bounded_by_sample_size(seed in any::<u64>(), s in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kg = connected_kg(200, 4, 2000, 10, &mut rng);
        let seeds: Vec<EntityId> = kg.items().to_vec();
        let rf = ReceptiveField::build(&kg, &seeds, 2, s, &mut rng);
        prop_assert!(rf.len() <= seeds.len() * (1 + s + s * s));
        for k in 0..rf.hop_sizes()[1] {
            prop_assert!(rf.neighbors_of(k).len() <= s);
        }
    }

    #[test]
    fn predictions_are_probabilities(u in prop::collection::vec(-10.0f64..10.0, 4), v in prop::collection::vec(-10.0f64..10.0, 4)) {
        let u = ndarray::Array1::from(u);
        let v = ndarray::Array1::from(v);
        let p = predict(u.view(), v.view());
        prop_assert!(p > 0.0 && p < 1.0);
        let bound = 1.0 / (1.0 + (-LOGIT_CLAMP).exp());
        prop_assert!(p <= bound + 1e-15 && p >= 1.0 - bound - 1e-15);
    }
}

#[test]
fn large_sample_size_matches_exhaustive() {
    let (kg, params) = setup(5, 2);
    let seeds: Vec<EntityId> = kg.items().to_vec();
    let act = standard_activations(2);
    let full = forward(
        &kg,
        &ReceptiveField::exhaustive(&kg, &seeds, 2),
        &params,
        UserId(0),
        &act,
    )
    .unwrap();
    let rf = ReceptiveField::build(&kg, &seeds, 2, 1000, &mut ChaCha8Rng::seed_from_u64(3));
    let sampled = forward(&kg, &rf, &params, UserId(0), &act).unwrap();
    assert_eq!(full.output(), sampled.output());
}

#[test]
fn depth_mismatch_is_a_dimension_error() {
    let (kg, params) = setup(6, 2);
    let rf = ReceptiveField::exhaustive(&kg, kg.items(), 1);
    assert!(forward(&kg, &rf, &params, UserId(0), &standard_activations(2)).is_err());
}
