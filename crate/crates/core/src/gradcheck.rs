//! Central finite-difference check of the unified-loss gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gnn::ModelParams;
use crate::ids::{EntityId, ItemId, RelationId, UserId};
use crate::interactions::{Interaction, InteractionMatrix};
use crate::kg::{KgBuilder, KnowledgeGraph};
use crate::trainer::{unified_loss, HyperParams, UserLabels};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub lambda: f64,
    pub gamma: f64,
    pub step: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lambda: 0.5,
            gamma: 1e-4,
            step: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst coordinate.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// A 12-entity graph with 4 items, 3 relation types and 2 users, with a
/// batch touching every item.
pub fn small_instance(seed: u64) -> (KnowledgeGraph, UserLabels, Vec<Interaction>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = KgBuilder::new(12, 3).with_leading_items(4);
    // A spanning chain plus random chords keeps the graph connected.
    for e in 1..12 {
        let r = RelationId::from_index(rng.gen_range(0..3));
        b.add_edge(EntityId::from_index(rng.gen_range(0..e)), r, EntityId::from_index(e));
    }
    let mut extra = 0;
    while extra < 6 {
        let (x, y) = (rng.gen_range(0..12), rng.gen_range(0..12));
        let r = RelationId::from_index(rng.gen_range(0..3));
        if b.add_edge(EntityId::from_index(x), r, EntityId::from_index(y)) {
            extra += 1;
        }
    }
    let kg = b.build().expect("valid instance");

    let row = |u: u32, v: u32, y: u8| Interaction {
        user: UserId(u),
        item: ItemId(v),
        label: y,
    };
    let train = [
        row(0, 0, 1),
        row(0, 1, 0),
        row(0, 2, 1),
        row(1, 3, 1),
        row(1, 1, 1),
        row(1, 0, 0),
    ];
    let labels = UserLabels::from_matrix(&kg, &InteractionMatrix::from_rows(2, 4, &train).expect("valid rows"));
    let batch = vec![row(0, 0, 1), row(0, 1, 0), row(0, 3, 1), row(1, 3, 1), row(1, 2, 0)];
    (kg, labels, batch)
}

/// Compares the analytic gradient of the unified loss with central
/// differences on every parameter of [`small_instance`] (`L = 2`, `d = 4`,
/// sample size covering every neighbor list).
pub fn grad_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let (kg, labels, batch) = small_instance(cfg.seed);
    let hp = HyperParams {
        sample_size: kg.max_degree().max(1),
        dim: 4,
        layers: 2,
        lambda: cfg.lambda,
        gamma: cfg.gamma,
        ..HyperParams::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut params = ModelParams::init(2, kg.relation_count(), kg.entity_count(), hp.dim, hp.layers, &mut rng);
    // Larger embeddings than the training init so every term is well away
    // from zero.
    for t in params.tensors_mut().into_iter().take(3) {
        t.mapv_inplace(|_| rng.gen_range(-0.8..0.8));
    }
    check_params(&kg, &labels, &batch, &params, &hp, cfg.step)
}

/// Finite-difference check at an arbitrary point.
pub fn check_params(
    kg: &KnowledgeGraph,
    labels: &UserLabels,
    batch: &[Interaction],
    params: &ModelParams,
    hp: &HyperParams,
    h: f64,
) -> Result<GradCheckReport> {
    // Every neighbor list is taken whole, so the rng is never consulted for
    // sampling and every evaluation sees the same graph.
    let loss_at = |p: &ModelParams| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(unified_loss(kg, labels, batch, p, hp, &mut rng)?.loss)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let analytic = unified_loss(kg, labels, batch, params, hp, &mut rng)?.grads;

    let names = params.tensor_names();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = params.clone();
    for (t, name) in names.iter().enumerate() {
        let len = params.tensors()[t].len();
        for k in 0..len {
            let orig = params.tensors()[t].as_slice().expect("standard layout")[k];
            probe.tensors_mut()[t].as_slice_mut().expect("standard layout")[k] = orig + h;
            let plus = loss_at(&probe)?;
            probe.tensors_mut()[t].as_slice_mut().expect("standard layout")[k] = orig - h;
            let minus = loss_at(&probe)?;
            probe.tensors_mut()[t].as_slice_mut().expect("standard layout")[k] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.tensors()[t].as_slice().expect("standard layout")[k];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.checked == 1 {
                report.max_rel_error = err;
                report.worst = (name.clone(), k);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_shape() {
        let (kg, _, batch) = small_instance(0);
        assert_eq!(kg.entity_count(), 12);
        assert_eq!(kg.item_count(), 4);
        assert_eq!(kg.edge_count(), 17);
        assert!(batch.iter().any(|r| r.label == 1));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert_eq!(relative_error(0.0, 1e-9), 1e-3);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
