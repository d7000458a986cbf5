//! Label smoothness on a user's weighted graph.
//!
//! Item entities carry known relevance labels and are clamped; the
//! remaining entities are free. The minimum-energy labeling is harmonic on
//! the free entities and is reached by alternating `l <- P l` with a reset
//! of the clamped entries. Its closed form is
//! `l_free = (I - P_ff)^{-1} P_fc y`, ordering clamped entities first.
//!
//! The training-time regularizer holds out one labeled item at a time,
//! predicts it by a fixed number of unrolled propagation steps, and
//! back-propagates the cross-entropy of that prediction into the edge
//! weights.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ids::EntityId;
use crate::kg::KnowledgeGraph;
use crate::scoring::UserAdjacency;
use crate::sparse::SparseMatrix;

/// Probability clamp applied before the leave-one-out cross-entropy.
pub const LABEL_EPS: f64 = 1e-7;

/// Starting value of free entries in unrolled propagation.
pub const NEUTRAL_PRIOR: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct LabelVector {
    pub values: Vec<f64>,
    /// Clamp target per entity, `None` for free entities.
    pub clamp: Vec<Option<f64>>,
}

impl LabelVector {
    /// `n` entities, the listed ones clamped, free ones set to `free_init`.
    pub fn new(n: usize, clamped: &[(usize, f64)], free_init: f64) -> Self {
        let mut clamp = vec![None; n];
        let mut values = vec![free_init; n];
        for &(i, y) in clamped {
            clamp[i] = Some(y);
            values[i] = y;
        }
        Self { values, clamp }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_clamped(&self, i: usize) -> bool {
        self.clamp[i].is_some()
    }

    pub fn clamped_mask(&self) -> Vec<bool> {
        self.clamp.iter().map(Option::is_some).collect()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_clamped(i)).collect()
    }

    fn reset(&mut self) {
        for (v, c) in self.values.iter_mut().zip(&self.clamp) {
            if let Some(y) = c {
                *v = *y;
            }
        }
    }
}

/// `1/2 * sum_{i,j} A_ij (l_i - l_j)^2` over ordered pairs.
pub fn energy(labels: &[f64], adj: &UserAdjacency) -> f64 {
    assert_eq!(labels.len(), adj.len());
    0.5 * adj
        .matrix()
        .iter()
        .map(|(i, j, a)| a * (labels[i] - labels[j]).powi(2))
        .sum::<f64>()
}

/// One propagation step followed by the clamp reset. Rows of `p` without
/// entries leave their entity unchanged.
pub fn propagate_step(labels: &LabelVector, p: &SparseMatrix) -> LabelVector {
    let mut next = labels.clone();
    for i in 0..p.nrows() {
        let (cols, vals) = p.row(i);
        if !cols.is_empty() {
            next.values[i] = cols.iter().zip(vals).map(|(&j, &v)| v * labels.values[j]).sum();
        }
    }
    next.reset();
    next
}

#[derive(Clone, Debug, PartialEq)]
pub struct Propagated {
    pub labels: LabelVector,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates [`propagate_step`] until the estimated max-norm distance to the
/// fixed point drops below `tol`, or `max_iter` steps have run.
///
/// The estimate is `delta * q / (1 - q)`, where `delta` is the latest
/// change and `q` the ratio of the last two changes, an observed
/// contraction factor. Near `q = 1` a small change alone says little about
/// the remaining error.
pub fn propagate_to_convergence(l0: &LabelVector, p: &SparseMatrix, tol: f64, max_iter: usize) -> Propagated {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut labels = l0.clone();
    labels.reset();
    let mut prev_change = f64::INFINITY;
    for it in 1..=max_iter {
        let next = propagate_step(&labels, p);
        let change = next
            .values
            .iter()
            .zip(&labels.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        labels = next;
        let q = change / prev_change;
        let remaining = if q < 1.0 { change * q / (1.0 - q) } else { f64::INFINITY };
        if change == 0.0 || (change < tol && remaining < tol) {
            return Propagated {
                labels,
                iterations: it,
                converged: true,
            };
        }
        prev_change = change;
    }
    Propagated {
        labels,
        iterations: max_iter,
        converged: false,
    }
}

/// Blocks of a row-stochastic matrix with clamped entities ordered first.
#[derive(Clone, Debug)]
pub struct PartitionedTransition {
    pub clamped: Vec<usize>,
    pub free: Vec<usize>,
    pub p_cc: DMatrix<f64>,
    pub p_cf: DMatrix<f64>,
    pub p_fc: DMatrix<f64>,
    pub p_ff: DMatrix<f64>,
}

impl PartitionedTransition {
    pub fn new(p: &SparseMatrix, clamped_mask: &[bool]) -> Self {
        assert_eq!(p.nrows(), clamped_mask.len());
        let clamped: Vec<usize> = (0..p.nrows()).filter(|&i| clamped_mask[i]).collect();
        let free: Vec<usize> = (0..p.nrows()).filter(|&i| !clamped_mask[i]).collect();
        let mut pos = vec![0usize; p.nrows()];
        for (k, &i) in clamped.iter().enumerate() {
            pos[i] = k;
        }
        for (k, &i) in free.iter().enumerate() {
            pos[i] = k;
        }
        let (nc, nf) = (clamped.len(), free.len());
        let mut p_cc = DMatrix::zeros(nc, nc);
        let mut p_cf = DMatrix::zeros(nc, nf);
        let mut p_fc = DMatrix::zeros(nf, nc);
        let mut p_ff = DMatrix::zeros(nf, nf);
        for (i, j, v) in p.iter() {
            let (a, b) = (pos[i], pos[j]);
            match (clamped_mask[i], clamped_mask[j]) {
                (true, true) => p_cc[(a, b)] += v,
                (true, false) => p_cf[(a, b)] += v,
                (false, true) => p_fc[(a, b)] += v,
                (false, false) => p_ff[(a, b)] += v,
            }
        }
        Self {
            clamped,
            free,
            p_cc,
            p_cf,
            p_fc,
            p_ff,
        }
    }

    /// Largest row sum of the free-free block; the per-step contraction
    /// factor of propagation in the max norm.
    pub fn max_free_row_sum(&self) -> f64 {
        self.p_ff.row_iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max)
    }
}

/// Free entities that cannot reach any clamped entity through nonzero
/// entries of `p`.
fn unreachable_free(p: &SparseMatrix, clamped_mask: &[bool]) -> Vec<usize> {
    let n = p.nrows();
    // Reverse reachability: j is good if some P_jk > 0 with k good.
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, v) in p.iter() {
        if v != 0.0 {
            reverse[j].push(i);
        }
    }
    let mut good = clamped_mask.to_vec();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| clamped_mask[i]).collect();
    while let Some(k) = queue.pop_front() {
        for &j in &reverse[k] {
            if !good[j] {
                good[j] = true;
                queue.push_back(j);
            }
        }
    }
    (0..n).filter(|&i| !good[i]).collect()
}

/// Exact harmonic labels of the free entities, in `pt.free` order.
pub fn closed_form_labels(pt: &PartitionedTransition, y: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(y.len(), pt.clamped.len());
    let nf = pt.free.len();
    if nf == 0 {
        return Ok(Vec::new());
    }
    let system = DMatrix::identity(nf, nf) - &pt.p_ff;
    let rhs = &pt.p_fc * DVector::from_column_slice(y);
    let solved = system.lu().solve(&rhs).filter(|s| s.iter().all(|v| v.is_finite()));
    match solved {
        Some(s) => Ok(s.as_slice().to_vec()),
        None => Err(Error::Disconnected {
            entities: pt.free.clone(),
        }),
    }
}

/// The full harmonic labeling: clamped entries kept, free entries from the
/// closed form. Fails naming any free entity with no path to a clamped one.
pub fn harmonic_labels(p: &SparseMatrix, labels: &LabelVector) -> Result<LabelVector> {
    let mask = labels.clamped_mask();
    let bad = unreachable_free(p, &mask);
    if !bad.is_empty() {
        return Err(Error::Disconnected { entities: bad });
    }
    let pt = PartitionedTransition::new(p, &mask);
    let y: Vec<f64> = pt.clamped.iter().map(|&i| labels.clamp[i].unwrap()).collect();
    let free = closed_form_labels(&pt, &y)?;
    let mut out = labels.clone();
    out.reset();
    for (k, &i) in pt.free.iter().enumerate() {
        out.values[i] = free[k];
    }
    Ok(out)
}

/// Max over free entities of `|l_i - (1/D_ii) sum_j A_ij l_j|`.
pub fn verify_harmonic(labels: &[f64], clamped_mask: &[bool], adj: &UserAdjacency) -> f64 {
    let m = adj.matrix();
    (0..adj.len())
        .filter(|&i| !clamped_mask[i] && adj.degree()[i] > 0.0)
        .map(|i| {
            let (cols, vals) = m.row(i);
            let avg: f64 = cols.iter().zip(vals).map(|(&j, &a)| a * labels[j]).sum::<f64>() / adj.degree()[i];
            (labels[i] - avg).abs()
        })
        .fold(0.0, f64::max)
}

/// How a held-out label is reproduced.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Propagation {
    /// A fixed number of propagation steps from the current free values.
    Unrolled { steps: usize },
    /// Iterate to a fixed point.
    Converged { tol: f64, max_iter: usize },
    /// Solve the harmonic system directly.
    Exact,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct HeldOutLabel {
    pub label: f64,
    /// No clamped entity is reachable from the held-out one; `label` is
    /// the neutral prior.
    pub no_source: bool,
}

/// Removes the clamp on `held_out`, propagates from the remaining clamped
/// entities and returns the held-out entity's label.
pub fn leave_one_out_label(
    adj: &UserAdjacency,
    labels: &LabelVector,
    held_out: usize,
    mode: Propagation,
) -> Result<HeldOutLabel> {
    let mut work = labels.clone();
    work.clamp[held_out] = None;
    work.values[held_out] = NEUTRAL_PRIOR;
    let component = component_of(adj.matrix(), held_out);
    if !component.iter().any(|&i| work.is_clamped(i)) {
        return Ok(HeldOutLabel {
            label: NEUTRAL_PRIOR,
            no_source: true,
        });
    }
    let p = adj.transition_or_identity();
    let label = match mode {
        Propagation::Unrolled { steps } => {
            work.reset();
            for _ in 0..steps {
                work = propagate_step(&work, &p);
            }
            work.values[held_out]
        }
        Propagation::Converged { tol, max_iter } => {
            propagate_to_convergence(&work, &p, tol, max_iter).labels.values[held_out]
        }
        Propagation::Exact => {
            // Restrict to the held-out entity's component so unrelated
            // isolated pieces of the graph do not make the system singular.
            let mut local = vec![usize::MAX; adj.len()];
            for (k, &i) in component.iter().enumerate() {
                local[i] = k;
            }
            let trip: Vec<(usize, usize, f64)> = p
                .iter()
                .filter(|&(i, j, _)| local[i] != usize::MAX && local[j] != usize::MAX)
                .map(|(i, j, v)| (local[i], local[j], v))
                .collect();
            let sub = SparseMatrix::from_triplets(component.len(), component.len(), &trip);
            let sub_labels = LabelVector {
                values: component.iter().map(|&i| work.values[i]).collect(),
                clamp: component.iter().map(|&i| work.clamp[i]).collect(),
            };
            harmonic_labels(&sub, &sub_labels)?.values[local[held_out]]
        }
    };
    Ok(HeldOutLabel {
        label,
        no_source: false,
    })
}

fn component_of(m: &SparseMatrix, start: usize) -> Vec<usize> {
    let mut seen = vec![false; m.nrows()];
    let mut order = vec![start];
    seen[start] = true;
    let mut k = 0;
    while k < order.len() {
        let (cols, _) = m.row(order[k]);
        for &j in cols {
            if !seen[j] {
                seen[j] = true;
                order.push(j);
            }
        }
        k += 1;
    }
    order.sort_unstable();
    order
}

impl UserAdjacency {
    /// `D^{-1} A` with isolated entities mapped to themselves.
    pub(crate) fn transition_or_identity(&self) -> SparseMatrix {
        let mut trip: Vec<(usize, usize, f64)> = self
            .matrix()
            .iter()
            .map(|(i, j, a)| (i, j, a / self.degree()[i]))
            .collect();
        trip.extend(
            (0..self.len())
                .filter(|&i| self.degree()[i] <= 0.0)
                .map(|i| (i, i, 1.0)),
        );
        SparseMatrix::from_triplets(self.len(), self.len(), &trip)
    }
}

/// An undirected graph whose edge weights are supplied separately, so the
/// regularizer can differentiate with respect to them.
#[derive(Clone, Debug)]
pub struct EdgeGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    incident: Vec<Vec<(usize, usize)>>,
}

impl EdgeGraph {
    /// `edges` must be unique unordered pairs without self edges.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut incident = vec![Vec::new(); n];
        for (k, &(i, j)) in edges.iter().enumerate() {
            debug_assert_ne!(i, j);
            incident[i].push((j, k));
            incident[j].push((i, k));
        }
        Self { n, edges, incident }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn to_adjacency(&self, weights: &[f64]) -> UserAdjacency {
        let e: Vec<(usize, usize, f64)> = self.edges.iter().zip(weights).map(|(&(i, j), &w)| (i, j, w)).collect();
        UserAdjacency::from_edges(self.n, &e, false)
    }

    fn degrees(&self, weights: &[f64]) -> Vec<f64> {
        self.incident
            .iter()
            .map(|inc| inc.iter().map(|&(_, k)| weights[k]).sum())
            .collect()
    }
}

/// Leave-one-out terms and their gradient with respect to edge weights.
#[derive(Clone, Debug, PartialEq)]
pub struct LsTerm {
    /// Sum of cross-entropies over held-out entities.
    pub loss: f64,
    pub predictions: Vec<f64>,
    pub weight_grad: Vec<f64>,
}

/// Binary cross-entropy of a probability clamped to `[LABEL_EPS, 1 - LABEL_EPS]`,
/// and its derivative with respect to the unclamped probability.
pub fn clamped_cross_entropy(y: f64, p: f64) -> (f64, f64) {
    let q = p.clamp(LABEL_EPS, 1.0 - LABEL_EPS);
    let loss = -(y * q.ln() + (1.0 - y) * (1.0 - q).ln());
    let grad = if p <= LABEL_EPS || p >= 1.0 - LABEL_EPS {
        0.0
    } else {
        (q - y) / (q * (1.0 - q))
    };
    (loss, grad)
}

/// Unrolled leave-one-out prediction for every entity in `held_out`, summed
/// cross-entropy against its clamp target, and the exact gradient of that
/// sum with respect to `weights`.
///
/// Propagation uses `P = D^{-1} A` of the graph without self-loops; each
/// step replaces every unclamped value by its weighted neighbor mean, then
/// resets the clamped ones. Free entities start at [`NEUTRAL_PRIOR`].
pub fn ls_regularizer(
    graph: &EdgeGraph,
    weights: &[f64],
    clamp: &[Option<f64>],
    held_out: &[usize],
    steps: usize,
) -> LsTerm {
    assert_eq!(weights.len(), graph.edges.len());
    assert_eq!(clamp.len(), graph.n);
    let degree = graph.degrees(weights);
    let mut out = LsTerm {
        loss: 0.0,
        predictions: Vec::with_capacity(held_out.len()),
        weight_grad: vec![0.0; weights.len()],
    };
    let mut tape: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    for &h in held_out {
        let target = clamp[h].expect("held-out entity must carry a label");
        let is_free = |i: usize| i == h || clamp[i].is_none();

        tape.clear();
        tape.push(
            (0..graph.n)
                .map(|i| if is_free(i) { NEUTRAL_PRIOR } else { clamp[i].unwrap() })
                .collect(),
        );
        for _ in 0..steps {
            let prev = tape.last().unwrap();
            let next: Vec<f64> = (0..graph.n)
                .map(|i| {
                    if !is_free(i) {
                        clamp[i].unwrap()
                    } else if degree[i] > 0.0 {
                        graph.incident[i]
                            .iter()
                            .map(|&(j, k)| weights[k] * prev[j])
                            .sum::<f64>()
                            / degree[i]
                    } else {
                        prev[i]
                    }
                })
                .collect();
            tape.push(next);
        }

        let pred = tape[steps][h];
        let (loss, dpred) = clamped_cross_entropy(target, pred);
        out.loss += loss;
        out.predictions.push(pred);
        if dpred == 0.0 {
            continue;
        }

        let mut grad = vec![0.0; graph.n];
        grad[h] = dpred;
        for k in (1..=steps).rev() {
            let (prev, cur) = (&tape[k - 1], &tape[k]);
            let mut back = vec![0.0; graph.n];
            for i in 0..graph.n {
                let g = grad[i];
                if g == 0.0 || !is_free(i) {
                    continue;
                }
                if degree[i] > 0.0 {
                    for &(j, e) in &graph.incident[i] {
                        back[j] += g * weights[e] / degree[i];
                        out.weight_grad[e] += g * (prev[j] - cur[i]) / degree[i];
                    }
                } else {
                    back[i] += g;
                }
            }
            grad = back;
        }
    }
    out
}

/// Converged labels over the part of a knowledge graph that can see a
/// clamped entity.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphLabels {
    /// Entities in the connected components that contain a clamped entity,
    /// ascending.
    pub entities: Vec<EntityId>,
    pub labels: Vec<f64>,
    /// Max deviation of a free entity from its neighbor mean.
    pub residual: f64,
    /// Entities left out because no clamped entity is reachable.
    pub unreachable: usize,
    /// Propagation steps taken; 0 for the direct solve.
    pub iterations: usize,
}

/// Label propagation on `kg` with relation-type weights `weights`, from the
/// given clamped entities. `Exact` solves the harmonic system; the other
/// modes iterate from [`NEUTRAL_PRIOR`].
pub fn propagate_graph(
    kg: &KnowledgeGraph,
    weights: &[f64],
    clamps: &[(EntityId, f64)],
    mode: Propagation,
) -> Result<GraphLabels> {
    if weights.len() < kg.relation_count() {
        return Err(Error::Dimension {
            context: "propagate_graph weights",
            expected: kg.relation_count(),
            actual: weights.len(),
        });
    }
    if clamps.is_empty() {
        return Err(Error::Validation("no clamped entities".into()));
    }
    let n = kg.entity_count();
    let mut seen = vec![false; n];
    let mut queue: VecDeque<EntityId> = VecDeque::new();
    for &(e, _) in clamps {
        if !seen[e.index()] {
            seen[e.index()] = true;
            queue.push_back(e);
        }
    }
    while let Some(e) = queue.pop_front() {
        for &(t, _) in kg.neighbors(e) {
            if !seen[t.index()] {
                seen[t.index()] = true;
                queue.push_back(t);
            }
        }
    }
    let entities: Vec<EntityId> = (0..n).filter(|&i| seen[i]).map(EntityId::from_index).collect();
    let mut local = vec![usize::MAX; n];
    for (k, e) in entities.iter().enumerate() {
        local[e.index()] = k;
    }
    let edges: Vec<(usize, usize, f64)> = kg
        .edges()
        .filter(|t| seen[t.head.index()])
        .map(|t| {
            (
                local[t.head.index()],
                local[t.tail.index()],
                weights[t.relation.index()],
            )
        })
        .collect();
    let adj = UserAdjacency::from_edges(entities.len(), &edges, false);
    let p = adj.transition_or_identity();
    let clamped: Vec<(usize, f64)> = clamps.iter().map(|&(e, y)| (local[e.index()], y)).collect();
    let l0 = LabelVector::new(entities.len(), &clamped, NEUTRAL_PRIOR);
    let (labels, iterations) = match mode {
        Propagation::Exact => (harmonic_labels(&p, &l0)?, 0),
        Propagation::Converged { tol, max_iter } => {
            let r = propagate_to_convergence(&l0, &p, tol, max_iter);
            (r.labels, r.iterations)
        }
        Propagation::Unrolled { steps } => {
            let mut l = l0;
            for _ in 0..steps {
                l = propagate_step(&l, &p);
            }
            (l, steps)
        }
    };
    let residual = verify_harmonic(&labels.values, &labels.clamped_mask(), &adj);
    Ok(GraphLabels {
        unreachable: n - entities.len(),
        entities,
        labels: labels.values,
        residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path4() -> (UserAdjacency, LabelVector) {
        // v1(1) - e2 - e3 - v4(0), unit weights.
        let adj = UserAdjacency::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], false);
        let labels = LabelVector::new(4, &[(0, 1.0), (3, 0.0)], 0.0);
        (adj, labels)
    }

    #[test]
    fn energy_of_single_edge() {
        let adj = UserAdjacency::from_edges(2, &[(0, 1, 1.0)], false);
        assert_eq!(energy(&[1.0, 0.0], &adj), 1.0);
        assert_eq!(energy(&[0.3, 0.3], &adj), 0.0);
        let doubled = UserAdjacency::from_edges(2, &[(0, 1, 2.0)], false);
        assert_eq!(energy(&[1.0, 0.0], &doubled), 2.0);
    }

    #[test]
    fn hand_iteration_on_path() {
        let (adj, labels) = path4();
        let p = adj.transition().unwrap();
        let s1 = propagate_step(&labels, &p);
        assert_eq!(&s1.values, &[1.0, 0.5, 0.0, 0.0]);
        let s2 = propagate_step(&s1, &p);
        assert_eq!(&s2.values, &[1.0, 0.5, 0.25, 0.0]);
    }

    #[test]
    fn path_fixed_point() {
        let (adj, labels) = path4();
        let p = adj.transition().unwrap();
        let it = propagate_to_convergence(&labels, &p, 1e-12, 10_000);
        assert!(it.converged);
        assert!((it.labels.values[1] - 2.0 / 3.0).abs() < 1e-10);
        assert!((it.labels.values[2] - 1.0 / 3.0).abs() < 1e-10);

        let exact = harmonic_labels(&p, &labels).unwrap();
        assert!((exact.values[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((exact.values[2] - 1.0 / 3.0).abs() < 1e-15);
        assert!(verify_harmonic(&exact.values, &labels.clamped_mask(), &adj) < 1e-15);

        let again = propagate_step(&exact, &p);
        for (a, b) in again.values.iter().zip(&exact.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn star_leaves_follow_center() {
        let adj = UserAdjacency::from_edges(4, &[(0, 1, 1.0), (0, 2, 2.0), (0, 3, 0.5)], false);
        let labels = LabelVector::new(4, &[(0, 1.0)], 0.0);
        let out = harmonic_labels(&adj.transition().unwrap(), &labels).unwrap();
        assert_eq!(&out.values, &[1.0; 4]);
    }

    #[test]
    fn single_clamped_neighbor() {
        let adj = UserAdjacency::from_edges(2, &[(0, 1, 0.7)], false);
        let labels = LabelVector::new(2, &[(0, 1.0)], 0.0);
        let pt = PartitionedTransition::new(&adj.transition().unwrap(), &labels.clamped_mask());
        assert_eq!(closed_form_labels(&pt, &[1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn disconnected_free_entities_are_named() {
        let adj = UserAdjacency::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)], false);
        let labels = LabelVector::new(4, &[(0, 1.0)], 0.0);
        match harmonic_labels(&adj.transition().unwrap(), &labels) {
            Err(Error::Disconnected { entities }) => assert_eq!(entities, vec![2, 3]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn perturbation_is_detected() {
        let (adj, labels) = path4();
        let mut exact = harmonic_labels(&adj.transition().unwrap(), &labels).unwrap();
        exact.values[1] += 0.1;
        assert!(verify_harmonic(&exact.values, &labels.clamped_mask(), &adj) >= 0.1 * 0.5);
    }

    #[test]
    fn no_free_entities() {
        let adj = UserAdjacency::from_edges(2, &[(0, 1, 1.0)], false);
        assert_eq!(verify_harmonic(&[1.0, 0.0], &[true, true], &adj), 0.0);
    }

    #[test]
    fn monotone_rise_toward_one() {
        let adj = UserAdjacency::from_edges(5, &[(0, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 1, 1.0)], false);
        let mut labels = LabelVector::new(5, &[(0, 1.0), (1, 1.0)], 0.0);
        let p = adj.transition().unwrap();
        for _ in 0..50 {
            let next = propagate_step(&labels, &p);
            assert!(next.values.iter().zip(&labels.values).all(|(a, b)| a >= b));
            labels = next;
        }
        assert!(labels.values.iter().all(|&v| v > 0.99));
    }

    #[test]
    fn leave_one_out_examples() {
        // v1 - e - v2
        let adj = UserAdjacency::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0)], false);
        for y in [1.0, 0.0] {
            let labels = LabelVector::new(3, &[(0, 1.0), (2, y)], 0.5);
            let r = leave_one_out_label(&adj, &labels, 0, Propagation::Exact).unwrap();
            assert!((r.label - y).abs() < 1e-15);
            assert!(!r.no_source);
            let c = leave_one_out_label(
                &adj,
                &labels,
                0,
                Propagation::Converged {
                    tol: 1e-13,
                    max_iter: 10_000,
                },
            )
            .unwrap();
            assert!((c.label - y).abs() < 1e-10);
        }

        // v - e, e - a(1), e - b(0)
        let fork = UserAdjacency::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0)], false);
        let labels = LabelVector::new(4, &[(0, 1.0), (2, 1.0), (3, 0.0)], 0.5);
        let r = leave_one_out_label(&fork, &labels, 0, Propagation::Exact).unwrap();
        assert!((r.label - 0.5).abs() < 1e-15);
    }

    #[test]
    fn leave_one_out_without_sources() {
        let adj = UserAdjacency::from_edges(3, &[(0, 1, 1.0)], false);
        let labels = LabelVector::new(3, &[(0, 1.0), (2, 1.0)], 0.5);
        let r = leave_one_out_label(&adj, &labels, 0, Propagation::Exact).unwrap();
        assert!(r.no_source);
        assert_eq!(r.label, NEUTRAL_PRIOR);
    }

    #[test]
    fn cross_entropy_values() {
        let (l, _) = clamped_cross_entropy(1.0, 0.5);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let (l, g) = clamped_cross_entropy(1.0, 1.0);
        assert!((l - -(1.0 - LABEL_EPS).ln()).abs() < 1e-20);
        assert_eq!(g, 0.0);
    }

    #[test]
    fn unrolled_regularizer_matches_propagate_step() {
        let graph = EdgeGraph::new(5, vec![(0, 1), (1, 2), (2, 3), (1, 4), (3, 4)]);
        let weights = [0.3, 1.2, 0.8, 2.0, 0.5];
        let clamp = [Some(1.0), None, Some(0.0), None, Some(1.0)];
        let term = ls_regularizer(&graph, &weights, &clamp, &[0, 4], 4);

        let adj = graph.to_adjacency(&weights);
        for (k, &h) in [0usize, 4].iter().enumerate() {
            let mut labels = LabelVector {
                values: vec![0.5; 5],
                clamp: clamp.to_vec(),
            };
            labels.clamp[h] = None;
            labels.reset();
            let r = leave_one_out_label(&adj, &labels, h, Propagation::Unrolled { steps: 4 }).unwrap();
            assert!((r.label - term.predictions[k]).abs() < 1e-15);
        }
    }
}
