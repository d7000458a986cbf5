//! CTR and top-K evaluation.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::gnn::{score_items, ModelParams};
use crate::ids::{ItemId, UserId};
use crate::interactions::InteractionMatrix;
use crate::kg::KnowledgeGraph;

/// Cutoffs reported by [`evaluate`].
pub const DEFAULT_KS: [usize; 7] = [1, 2, 5, 10, 20, 50, 100];

/// Area under the ROC curve by the rank-sum statistic, ties counted as
/// one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("AUC needs at least one positive and one negative"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based average ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += avg_rank * tied_pos as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Orders candidates by descending score, ties by ascending item id.
pub fn rank_candidates(scored: &mut [(ItemId, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Fraction of `positives` among the first `k` of an already ranked list.
/// `None` when there are no positives.
pub fn recall_at_k(ranked: &[(ItemId, f64)], positives: &HashSet<ItemId>, k: usize) -> Option<f64> {
    if positives.is_empty() {
        return None;
    }
    let hits = ranked.iter().take(k).filter(|(v, _)| positives.contains(v)).count();
    Some(hits as f64 / positives.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    /// Mean Recall@K over users with at least one positive in the
    /// evaluated rows.
    pub recall_at: BTreeMap<usize, f64>,
    pub users_evaluated: usize,
}

impl EvalReport {
    pub fn recall(&self, k: usize) -> f64 {
        self.recall_at.get(&k).copied().unwrap_or(f64::NAN)
    }
}

/// Scores the rows of `target` for AUC and ranks, per user, every item the
/// user has no training positive for, for Recall@K.
pub fn evaluate<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    params: &ModelParams,
    sample_size: usize,
    train: &InteractionMatrix,
    target: &InteractionMatrix,
    ks: &[usize],
    rng: &mut R,
) -> Result<EvalReport> {
    let mut all_scores = Vec::with_capacity(target.len());
    let mut all_labels = Vec::with_capacity(target.len());
    let mut recall_sums: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    let mut users_evaluated = 0;

    for u in 0..target.user_count() {
        let user = UserId::from_index(u);
        let rows = target.user_rows(user);
        if rows.is_empty() {
            continue;
        }
        let train_pos: HashSet<ItemId> = train.user_rows(user).iter().filter(|r| r.1 == 1).map(|r| r.0).collect();
        let candidates: Vec<ItemId> = (0..kg.item_count())
            .map(ItemId::from_index)
            .filter(|v| !train_pos.contains(v))
            .collect();
        let entities: Vec<_> = candidates.iter().map(|&v| kg.item_entity(v)).collect();
        let scores = score_items(kg, params, user, &entities, sample_size, rng)?;
        let mut scored: Vec<(ItemId, f64)> = candidates.iter().copied().zip(scores).collect();

        for &(item, label) in rows {
            // Rows of `target` are disjoint from training rows, and a
            // training positive cannot reappear in another split.
            let k = candidates.binary_search(&item).map_err(|_| {
                Error::Validation(format!(
                    "user {u} item {item} is both a training positive and an evaluation row"
                ))
            })?;
            all_scores.push(scored[k].1);
            all_labels.push(label);
        }

        let positives: HashSet<ItemId> = rows.iter().filter(|r| r.1 == 1).map(|r| r.0).collect();
        if positives.is_empty() {
            continue;
        }
        rank_candidates(&mut scored);
        users_evaluated += 1;
        for (&k, sum) in recall_sums.iter_mut() {
            *sum += recall_at_k(&scored, &positives, k).unwrap();
        }
    }

    let auc = auc(&all_scores, &all_labels)?;
    let denom = users_evaluated.max(1) as f64;
    Ok(EvalReport {
        auc,
        recall_at: recall_sums.into_iter().map(|(k, s)| (k, s / denom)).collect(),
        users_evaluated,
    })
}
