#![allow(dead_code)]

use kgnn_ls::kg::{KgBuilder, KnowledgeGraph};
use kgnn_ls::label_smoothness::LabelVector;
use kgnn_ls::scoring::{build_user_adjacency, UserAdjacency};
use kgnn_ls::{EntityId, RelationId};
use ndarray::Array2;
use rand::Rng;

/// A connected random graph: a random spanning tree plus `extra` chords.
pub fn connected_kg<R: Rng>(n: usize, relations: usize, extra: usize, items: usize, rng: &mut R) -> KnowledgeGraph {
    let mut b = KgBuilder::new(n, relations).with_leading_items(items);
    for e in 1..n {
        let r = RelationId::from_index(rng.gen_range(0..relations));
        b.add_edge(EntityId::from_index(rng.gen_range(0..e)), r, EntityId::from_index(e));
    }
    for _ in 0..extra {
        let (x, y) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let r = RelationId::from_index(rng.gen_range(0..relations));
        b.add_edge(EntityId::from_index(x), r, EntityId::from_index(y));
    }
    b.build().unwrap()
}

/// A user-weighted adjacency (no self-loops) over a connected random
/// graph, with the first `clamped` entities labeled 0 or 1.
pub struct LabelInstance {
    pub kg: KnowledgeGraph,
    pub adj: UserAdjacency,
    pub labels: LabelVector,
}

pub fn label_instance<R: Rng>(rng: &mut R) -> LabelInstance {
    let n = rng.gen_range(4..=30);
    let clamped = rng.gen_range(2..n);
    let extra = rng.gen_range(0..=n);
    let relations = 3;
    let kg = connected_kg(n, relations, extra, clamped, rng);
    let dim = 4;
    let user = Array2::from_shape_fn((1, dim), |_| rng.gen_range(-1.5..1.5));
    let rel = Array2::from_shape_fn((relations, dim), |_| rng.gen_range(-1.5..1.5));
    let adj = build_user_adjacency(&kg, user.row(0), rel.view(), false).unwrap();
    let mut clamps: Vec<(usize, f64)> = (0..clamped).map(|i| (i, rng.gen_range(0..=1) as f64)).collect();
    // Both label values present, so the fixed point is not constant.
    clamps[0].1 = 0.0;
    clamps[1].1 = 1.0;
    let labels = LabelVector::new(n, &clamps, 0.5);
    LabelInstance { kg, adj, labels }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
