//! User-specific relation scoring and the weighted adjacency it induces.
//!
//! A user `u` scores relation `r` by the inner product `<u, r>`. Raw scores
//! can be negative, so edge weights pass them through softplus, which keeps
//! every weight strictly positive and every degree nonzero.

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::ids::EntityId;
use crate::kg::KnowledgeGraph;
use crate::sparse::SparseMatrix;

/// Weight of an added self-connection, before normalization.
pub const SELF_LOOP_WEIGHT: f64 = 1.0;

pub fn relation_score(user: ArrayView1<f64>, relation: ArrayView1<f64>) -> Result<f64> {
    if user.len() != relation.len() {
        return Err(Error::Dimension {
            context: "relation_score",
            expected: user.len(),
            actual: relation.len(),
        });
    }
    Ok(user.dot(&relation))
}

/// `ln(1 + exp(x))`, evaluated without overflow.
pub fn edge_weight(raw_score: f64) -> f64 {
    raw_score.max(0.0) + (-raw_score.abs()).exp().ln_1p()
}

/// Derivative of [`edge_weight`]: the logistic function.
pub fn edge_weight_grad(raw_score: f64) -> f64 {
    logistic(raw_score)
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softplus weight of every relation type for one user.
pub fn relation_weights(user: ArrayView1<f64>, relations: ArrayView2<f64>) -> Vec<f64> {
    relations
        .rows()
        .into_iter()
        .map(|r| edge_weight(user.dot(&r)))
        .collect()
}

/// A symmetric nonnegative adjacency over a working set of entities, with
/// its degree vector.
#[derive(Clone, Debug, PartialEq)]
pub struct UserAdjacency {
    matrix: SparseMatrix,
    degree: Vec<f64>,
    self_loops: bool,
}

impl UserAdjacency {
    /// Builds an adjacency from undirected weighted edges over `n` nodes.
    /// Each edge should be listed once; both directions are stored with the
    /// same weight.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)], add_self_loops: bool) -> Self {
        let mut triplets = Vec::with_capacity(edges.len() * 2 + n);
        for &(i, j, w) in edges {
            assert!(w >= 0.0, "edge weights must be nonnegative");
            assert_ne!(i, j, "self edges are added through add_self_loops");
            triplets.push((i, j, w));
            triplets.push((j, i, w));
        }
        if add_self_loops {
            triplets.extend((0..n).map(|i| (i, i, SELF_LOOP_WEIGHT)));
        }
        let matrix = SparseMatrix::from_triplets(n, n, &triplets);
        let degree = (0..n).map(|i| matrix.row_sum(i)).collect();
        Self {
            matrix,
            degree,
            self_loops: add_self_loops,
        }
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn has_self_loops(&self) -> bool {
        self.self_loops
    }

    /// The same graph with its self-loops removed or added.
    pub fn with_self_loops(&self, add_self_loops: bool) -> Self {
        let edges: Vec<(usize, usize, f64)> = self.matrix.iter().filter(|&(i, j, _)| i < j).collect();
        Self::from_edges(self.len(), &edges, add_self_loops)
    }

    fn check_degrees(&self) -> Result<()> {
        match self.degree.iter().position(|&d| d <= 0.0) {
            Some(entity) => Err(Error::ZeroDegree { entity }),
            None => Ok(()),
        }
    }

    /// `D^{-1/2} A D^{-1/2}`.
    pub fn normalize_symmetric(&self) -> Result<SparseMatrix> {
        self.check_degrees()?;
        let inv_sqrt: Vec<f64> = self.degree.iter().map(|d| 1.0 / d.sqrt()).collect();
        // The product of the two scales commutes exactly, keeping the result
        // bitwise symmetric.
        Ok(self.matrix.map_entries(|i, j, a| a * (inv_sqrt[i] * inv_sqrt[j])))
    }

    /// Row-stochastic `P = D^{-1} A`.
    pub fn transition(&self) -> Result<SparseMatrix> {
        self.check_degrees()?;
        Ok(self.matrix.map_entries(|i, _, a| a / self.degree[i]))
    }
}

/// The user adjacency over the whole graph: every stored edge weighted by
/// the softplus of the user's score for its relation, optionally plus the
/// identity.
pub fn build_user_adjacency(
    kg: &KnowledgeGraph,
    user: ArrayView1<f64>,
    relations: ArrayView2<f64>,
    add_self_loops: bool,
) -> Result<UserAdjacency> {
    if relations.nrows() < kg.relation_count() {
        return Err(Error::Dimension {
            context: "build_user_adjacency relations",
            expected: kg.relation_count(),
            actual: relations.nrows(),
        });
    }
    if relations.ncols() != user.len() {
        return Err(Error::Dimension {
            context: "build_user_adjacency embedding",
            expected: user.len(),
            actual: relations.ncols(),
        });
    }
    let weights = relation_weights(user, relations);
    let edges: Vec<(usize, usize, f64)> = kg
        .edges()
        .map(|t| (t.head.index(), t.tail.index(), weights[t.relation.index()]))
        .collect();
    Ok(UserAdjacency::from_edges(kg.entity_count(), &edges, add_self_loops))
}

/// Exact weighted degree of `e` under the given relation weights, computed
/// from the per-relation neighbor counts.
pub fn weighted_degree(kg: &KnowledgeGraph, e: EntityId, weights: &[f64], self_loop: bool) -> f64 {
    let base = if self_loop { SELF_LOOP_WEIGHT } else { 0.0 };
    kg.relation_histogram(e)
        .iter()
        .fold(base, |acc, &(r, c)| acc + c as f64 * weights[r.index()])
}
