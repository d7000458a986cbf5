//! Layer-wise feature propagation over a user-weighted knowledge graph,
//! evaluated on the sampled receptive field of a batch of items, with exact
//! reverse-mode gradients.
//!
//! Each layer computes `H_{l+1} = sigma(A_hat H_l W_l)` where
//! `A_hat = D^{-1/2} (A_u + I) D^{-1/2}`. For an entity `e` with sampled
//! neighbor list `N(e)` the row of `A_hat H` is
//!
//! ```text
//!   H[e] / D_e + (deg(e) / |N(e)|) * sum_{j in N(e)} w_{r(e,j)} H[j] / sqrt(D_e D_j)
//! ```
//!
//! Degrees `D` are exact: they come from per-relation neighbor counts, so no
//! sampling enters the normalization. When `|N(e)| = deg(e)` the row is the
//! full-graph row.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::ids::{EntityId, RelationId, UserId};
use crate::kg::{sample_neighbors, KnowledgeGraph};
use crate::scoring::{edge_weight, logistic, weighted_degree};

/// Logits are clamped to `[-LOGIT_CLAMP, LOGIT_CLAMP]` before the logistic.
pub const LOGIT_CLAMP: f64 = 15.0;

/// Embedding initialization range.
pub const EMBEDDING_INIT: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub users: Array2<f64>,
    pub relations: Array2<f64>,
    pub entities: Array2<f64>,
    /// `weights[l]` maps layer `l` to layer `l + 1`.
    pub weights: Vec<Array2<f64>>,
}

impl ModelParams {
    /// Embeddings uniform in `(-0.05, 0.05)`; layer weights uniform in
    /// `(-1, 1) / sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(
        users: usize,
        relations: usize,
        entities: usize,
        dim: usize,
        layers: usize,
        rng: &mut R,
    ) -> Self {
        let mut uniform =
            |rows: usize, cols: usize, a: f64| Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a));
        let users = uniform(users, dim, EMBEDDING_INIT);
        let relations = uniform(relations, dim, EMBEDDING_INIT);
        let entities = uniform(entities, dim, EMBEDDING_INIT);
        let scale = 1.0 / (dim as f64).sqrt();
        let weights = (0..layers).map(|_| uniform(dim, dim, scale)).collect();
        Self {
            users,
            relations,
            entities,
            weights,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            users: Array2::zeros(self.users.raw_dim()),
            relations: Array2::zeros(self.relations.raw_dim()),
            entities: Array2::zeros(self.entities.raw_dim()),
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.users.ncols()
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut v = vec![&self.users, &self.relations, &self.entities];
        v.extend(self.weights.iter());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = vec![&mut self.users, &mut self.relations, &mut self.entities];
        v.extend(self.weights.iter_mut());
        v
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut v = vec!["users".to_string(), "relations".to_string(), "entities".to_string()];
        v.extend((0..self.layers()).map(|l| format!("W{l}")));
        v
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, alpha: f64, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(alpha, b);
        }
    }

    /// Checks that every tensor has the shape implied by the given sizes.
    pub fn check_shapes(
        &self,
        users: usize,
        relations: usize,
        entities: usize,
        dim: usize,
        layers: usize,
    ) -> Result<()> {
        let expect = [
            ("users", self.users.dim(), (users, dim)),
            ("relations", self.relations.dim(), (relations, dim)),
            ("entities", self.entities.dim(), (entities, dim)),
        ];
        for (context, got, want) in expect {
            if got != want {
                return Err(Error::Validation(format!(
                    "{context} tensor is {got:?}, expected {want:?}"
                )));
            }
        }
        if self.layers() != layers {
            return Err(Error::Dimension {
                context: "layer count",
                expected: layers,
                actual: self.layers(),
            });
        }
        if let Some(w) = self.weights.iter().find(|w| w.dim() != (dim, dim)) {
            return Err(Error::Validation(format!(
                "layer weight is {:?}, expected ({dim}, {dim})",
                w.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `h`.
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
        }
    }
}

/// ReLU on every layer but the last, tanh on the last.
pub fn standard_activations(layers: usize) -> Vec<Activation> {
    (0..layers)
        .map(|l| {
            if l + 1 == layers {
                Activation::Tanh
            } else {
                Activation::Relu
            }
        })
        .collect()
}

/// Depth-`L` neighborhood of a set of seed entities.
///
/// Local indices are assigned in discovery order, so the entities within
/// `h` hops form the prefix `0..hop_sizes[h]`. Every entity within `L - 1`
/// hops carries its neighbor list, all of whose members lie within the next
/// hop.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceptiveField {
    entities: Vec<EntityId>,
    hop_sizes: Vec<usize>,
    neighbors: Vec<Vec<(usize, RelationId)>>,
    scale: Vec<f64>,
}

impl ReceptiveField {
    /// Samples the neighborhood. An entity with at most `sample_size`
    /// neighbors keeps all of them; a larger neighborhood is subsampled
    /// uniformly without replacement.
    pub fn build<R: Rng + ?Sized>(
        kg: &KnowledgeGraph,
        seeds: &[EntityId],
        depth: usize,
        sample_size: usize,
        rng: &mut R,
    ) -> Self {
        assert!(depth >= 1, "depth must be at least 1");
        assert!(sample_size >= 1, "sample size must be at least 1");
        let mut local: HashMap<EntityId, usize> =
            HashMap::with_capacity(seeds.len().saturating_mul(sample_size.min(64) + 1));
        let mut entities = Vec::new();
        for &e in seeds {
            let prev = local.insert(e, entities.len());
            assert!(prev.is_none(), "duplicate seed entity {e}");
            entities.push(e);
        }
        let mut hop_sizes = vec![entities.len()];
        let mut neighbors: Vec<Vec<(usize, RelationId)>> = Vec::new();
        let mut scale = Vec::new();
        let mut start = 0;
        for _ in 0..depth {
            let end = entities.len();
            for idx in start..end {
                let e = entities[idx];
                let deg = kg.degree(e);
                let picked: Vec<(EntityId, RelationId)> = if deg <= sample_size {
                    kg.neighbors(e).to_vec()
                } else {
                    sample_neighbors(kg, e, sample_size, rng)
                };
                scale.push(if picked.is_empty() {
                    0.0
                } else {
                    deg as f64 / picked.len() as f64
                });
                let list = picked
                    .into_iter()
                    .map(|(n, r)| {
                        let next = entities.len();
                        let k = *local.entry(n).or_insert_with(|| {
                            entities.push(n);
                            next
                        });
                        (k, r)
                    })
                    .collect();
                neighbors.push(list);
            }
            start = end;
            hop_sizes.push(entities.len());
        }
        Self {
            entities,
            hop_sizes,
            neighbors,
            scale,
        }
    }

    /// The full neighborhood with no sampling.
    pub fn exhaustive(kg: &KnowledgeGraph, seeds: &[EntityId], depth: usize) -> Self {
        let s = kg.max_degree().max(1);
        Self::build(kg, seeds, depth, s, &mut rand::rngs::mock::StepRng::new(0, 1))
    }

    pub fn depth(&self) -> usize {
        self.hop_sizes.len() - 1
    }

    pub fn seeds(&self) -> &[EntityId] {
        &self.entities[..self.hop_sizes[0]]
    }

    pub fn entities(&self) -> &[EntityId] {
        &self.entities
    }

    pub fn hop_sizes(&self) -> &[usize] {
        &self.hop_sizes
    }

    pub fn neighbors_of(&self, local: usize) -> &[(usize, RelationId)] {
        &self.neighbors[local]
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Distinct undirected local edges `(i, j, relation)` with `i < j`.
    pub fn local_edges(&self) -> Vec<(usize, usize, RelationId)> {
        let mut edges: Vec<(usize, usize, RelationId)> = self
            .neighbors
            .iter()
            .enumerate()
            .flat_map(|(e, list)| list.iter().map(move |&(j, r)| (e.min(j), e.max(j), r)))
            .filter(|&(i, j, _)| i != j)
            .collect();
        edges.sort_unstable();
        edges.dedup_by_key(|e| (e.0, e.1));
        edges
    }
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: Array2<f64>,
    mixed: Array2<f64>,
    pre: Array2<f64>,
    out: Array2<f64>,
}

/// Activations of one forward pass, kept for [`backward`].
#[derive(Clone, Debug)]
pub struct Forward {
    pub user: UserId,
    /// Raw score per relation type.
    pub scores: Vec<f64>,
    /// Softplus weight per relation type.
    pub relation_weights: Vec<f64>,
    /// Exact degree (with self-loop) per local entity.
    pub degree: Vec<f64>,
    layers: Vec<LayerCache>,
}

impl Forward {
    /// Final representation of every seed, in seed order.
    pub fn output(&self) -> &Array2<f64> {
        &self.layers.last().expect("at least one layer").out
    }
}

/// Runs the layers for `user` over `rf`.
pub fn forward(
    kg: &KnowledgeGraph,
    rf: &ReceptiveField,
    params: &ModelParams,
    user: UserId,
    activations: &[Activation],
) -> Result<Forward> {
    let layers = params.layers();
    if rf.depth() != layers || activations.len() != layers {
        return Err(Error::Dimension {
            context: "forward depth",
            expected: layers,
            actual: rf.depth(),
        });
    }
    let u = params.users.row(user.index());
    let scores: Vec<f64> = params.relations.rows().into_iter().map(|r| u.dot(&r)).collect();
    let relation_weights: Vec<f64> = scores.iter().map(|&s| edge_weight(s)).collect();
    let degree: Vec<f64> = rf
        .entities
        .iter()
        .map(|&e| weighted_degree(kg, e, &relation_weights, true))
        .collect();

    let dim = params.dim();
    let mut h = Array2::zeros((rf.len(), dim));
    for (k, &e) in rf.entities.iter().enumerate() {
        h.row_mut(k).assign(&params.entities.row(e.index()));
    }

    let mut caches = Vec::with_capacity(layers);
    for (l, (w, act)) in params.weights.iter().zip(activations).enumerate() {
        let n_out = rf.hop_sizes[layers - 1 - l];
        let mut mixed = Array2::zeros((n_out, dim));
        for e in 0..n_out {
            let mut row = mixed.row_mut(e);
            row.scaled_add(1.0 / degree[e], &h.row(e));
            let c = rf.scale[e] / degree[e].sqrt();
            for &(j, r) in &rf.neighbors[e] {
                row.scaled_add(c * relation_weights[r.index()] / degree[j].sqrt(), &h.row(j));
            }
        }
        let pre = mixed.dot(w);
        let out = pre.mapv(|z| act.apply(z));
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                term: format!("activation of layer {l}"),
            });
        }
        let input = std::mem::replace(&mut h, out.clone());
        caches.push(LayerCache { input, mixed, pre, out });
    }
    Ok(Forward {
        user,
        scores,
        relation_weights,
        degree,
        layers: caches,
    })
}

/// Clamped inner-product logit.
pub fn logit(user: ArrayView1<f64>, item: ArrayView1<f64>) -> f64 {
    user.dot(&item).clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
}

/// Click probability `logistic(<u, v>)` with the logit clamped.
pub fn predict(user: ArrayView1<f64>, item: ArrayView1<f64>) -> f64 {
    logistic(logit(user, item))
}

/// Prediction and its gradients with respect to the user embedding and
/// the item representation.
pub fn predict_with_grad(user: ArrayView1<f64>, item: ArrayView1<f64>) -> (f64, Array1<f64>, Array1<f64>) {
    let z = user.dot(&item);
    let y = logistic(z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP));
    let dz = if z.abs() > LOGIT_CLAMP { 0.0 } else { y * (1.0 - y) };
    (y, item.to_owned() * dz, user.to_owned() * dz)
}

/// Back-propagates `d_output` (one row per seed) through the layers.
///
/// Gradients for layer weights and entity features are added to `grads`.
/// The gradient with respect to each relation's softplus weight, including
/// the path through the degree normalization, is added to
/// `d_relation_weight`; [`relation_weight_backward`] maps it onto the
/// embeddings.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    kg: &KnowledgeGraph,
    rf: &ReceptiveField,
    params: &ModelParams,
    fwd: &Forward,
    activations: &[Activation],
    d_output: ArrayView2<f64>,
    grads: &mut ModelParams,
    d_relation_weight: &mut [f64],
) -> Result<()> {
    let layers = params.layers();
    if d_output.dim() != fwd.output().dim() {
        return Err(Error::Dimension {
            context: "backward upstream rows",
            expected: fwd.output().nrows(),
            actual: d_output.nrows(),
        });
    }
    let degree = &fwd.degree;
    let w_rel = &fwd.relation_weights;
    let mut d_degree = vec![0.0; rf.len()];
    let mut d_h = d_output.to_owned();
    for l in (0..layers).rev() {
        let cache = &fwd.layers[l];
        let act = activations[l];
        let mut d_pre = d_h;
        ndarray::Zip::from(&mut d_pre)
            .and(&cache.pre)
            .and(&cache.out)
            .for_each(|g, &z, &h| *g *= act.derivative(z, h));
        grads.weights[l] += &cache.mixed.t().dot(&d_pre);
        let d_mixed = d_pre.dot(&params.weights[l].t());

        let input = &cache.input;
        let mut d_input = Array2::zeros(input.raw_dim());
        for e in 0..d_mixed.nrows() {
            let dm = d_mixed.row(e);
            let inv_d = 1.0 / degree[e];
            d_input.row_mut(e).scaled_add(inv_d, &dm);
            d_degree[e] -= dm.dot(&input.row(e)) * inv_d * inv_d;

            let c = rf.scale[e] / degree[e].sqrt();
            for &(j, r) in &rf.neighbors[e] {
                let base = c / degree[j].sqrt();
                let a = base * w_rel[r.index()];
                d_input.row_mut(j).scaled_add(a, &dm);
                let g = dm.dot(&input.row(j));
                d_relation_weight[r.index()] += g * base;
                d_degree[e] -= 0.5 * g * a / degree[e];
                d_degree[j] -= 0.5 * g * a / degree[j];
            }
        }
        d_h = d_input;
    }

    for (k, &e) in rf.entities.iter().enumerate() {
        if k < d_h.nrows() {
            let mut row = grads.entities.row_mut(e.index());
            row += &d_h.row(k);
        }
        if d_degree[k] != 0.0 {
            for &(r, c) in kg.relation_histogram(e) {
                d_relation_weight[r.index()] += d_degree[k] * c as f64;
            }
        }
    }
    Ok(())
}

/// Chain rule from relation weights `softplus(<u, r>)` into the user and
/// relation embeddings.
pub fn relation_weight_backward(
    params: &ModelParams,
    user: UserId,
    scores: &[f64],
    d_relation_weight: &[f64],
    grads: &mut ModelParams,
) {
    let u = params.users.row(user.index()).to_owned();
    let mut du = Array1::zeros(params.dim());
    for (r, (&dw, &s)) in d_relation_weight.iter().zip(scores).enumerate() {
        if dw == 0.0 {
            continue;
        }
        let ds = dw * logistic(s);
        du.scaled_add(ds, &params.relations.row(r));
        grads.relations.row_mut(r).scaled_add(ds, &u);
    }
    let mut row = grads.users.row_mut(user.index());
    row += &du;
}

/// Item representations for `user` on an arbitrary set of distinct items.
pub fn item_representations<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    params: &ModelParams,
    user: UserId,
    items: &[EntityId],
    sample_size: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let rf = ReceptiveField::build(kg, items, params.layers(), sample_size, rng);
    let fwd = forward(kg, &rf, params, user, &standard_activations(params.layers()))?;
    Ok(fwd.output().clone())
}

/// Predicted click probabilities of `user` for distinct `items`.
pub fn score_items<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    params: &ModelParams,
    user: UserId,
    items: &[EntityId],
    sample_size: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let reps = item_representations(kg, params, user, items, sample_size, rng)?;
    let u = params.users.row(user.index());
    Ok(reps.axis_iter(Axis(0)).map(|v| predict(u, v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::KgBuilder;
    use crate::scoring::build_user_adjacency;
    use ndarray::{arr1, arr2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(i: usize) -> EntityId {
        EntityId::from_index(i)
    }

    #[test]
    fn identity_layer_hand_product() {
        // Two entities joined by one edge whose weight is exactly 1:
        // A_hat = [[.5,.5],[.5,.5]] needs w = 1 and D = 2.
        let mut b = KgBuilder::new(2, 1);
        b.add_edge(e(0), RelationId(0), e(1));
        let kg = b.build().unwrap();
        let w_target = 1.0f64;
        // softplus(s) = 1  <=>  s = ln(e - 1)
        let s = (std::f64::consts::E - 1.0).ln();
        let params = ModelParams {
            users: arr2(&[[s, 0.0]]),
            relations: arr2(&[[1.0, 0.0]]),
            entities: arr2(&[[2.0, 0.0], [0.0, 2.0]]),
            weights: vec![Array2::eye(2)],
        };
        assert!((edge_weight(s) - w_target).abs() < 1e-15);
        let rf = ReceptiveField::exhaustive(&kg, &[e(0), e(1)], 1);
        let fwd = forward(&kg, &rf, &params, UserId(0), &[Activation::Identity]).unwrap();
        for v in fwd.output().iter() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn isolated_entities_reduce_to_feature_product() {
        let kg = KgBuilder::new(3, 1).build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = ModelParams::init(1, 1, 3, 3, 2, &mut rng);
        let rf = ReceptiveField::exhaustive(&kg, &[e(0), e(2)], 2);
        let fwd = forward(&kg, &rf, &params, UserId(0), &[Activation::Identity; 2]).unwrap();
        let expected = params.entities.dot(&params.weights[0]).dot(&params.weights[1]);
        for (k, idx) in [0usize, 2].iter().enumerate() {
            for c in 0..3 {
                assert!((fwd.output()[(k, c)] - expected[(*idx, c)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tanh_output_is_bounded() {
        let mut b = KgBuilder::new(5, 2);
        b.add_edge(e(0), RelationId(0), e(1));
        b.add_edge(e(1), RelationId(1), e(2));
        b.add_edge(e(0), RelationId(1), e(3));
        let kg = b.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ModelParams::init(1, 2, 5, 4, 2, &mut rng);
        params.entities.mapv_inplace(|x| x * 400.0);
        let rf = ReceptiveField::build(&kg, &[e(0), e(4)], 2, 2, &mut rng);
        let fwd = forward(&kg, &rf, &params, UserId(0), &standard_activations(2)).unwrap();
        assert!(fwd.output().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn prediction_values() {
        assert_eq!(predict(arr1(&[0.0]).view(), arr1(&[3.0]).view()), 0.5);
        let top = predict(arr1(&[15.0]).view(), arr1(&[1.0]).view());
        assert!((top - 0.999_999_694_097_773_1).abs() < 1e-15);
        assert_eq!(predict(arr1(&[100.0]).view(), arr1(&[1.0]).view()), top);
        assert!(predict(arr1(&[1.0]).view(), arr1(&[0.2]).view()) < predict(arr1(&[1.0]).view(), arr1(&[0.3]).view()));
    }

    #[test]
    fn user_gradient_is_logistic_derivative_times_item() {
        let u = arr1(&[0.3, -0.7, 0.2]);
        let v = arr1(&[0.5, 0.1, -0.4]);
        let z: f64 = u.dot(&v);
        let sig = 1.0 / (1.0 + (-z).exp());
        let (_, du, _) = predict_with_grad(u.view(), v.view());
        for k in 0..3 {
            assert!((du[k] - sig * (1.0 - sig) * v[k]).abs() < 1e-16);
        }
    }

    #[test]
    fn receptive_field_nesting() {
        let mut b = KgBuilder::new(30, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..80 {
            let (x, y) = (rng.gen_range(0..30), rng.gen_range(0..30));
            b.add_edge(e(x), RelationId(rng.gen_range(0..3)), e(y));
        }
        let kg = b.build().unwrap();
        let rf = ReceptiveField::build(&kg, &[e(0), e(1), e(2)], 3, 2, &mut rng);
        let hs = rf.hop_sizes();
        assert!(hs.windows(2).all(|w| w[0] <= w[1]));
        for k in 0..hs[2] {
            let hop = hs.iter().position(|&n| k < n).unwrap();
            for &(j, r) in rf.neighbors_of(k) {
                assert!(j < hs[hop + 1]);
                assert_eq!(kg.relation_between(rf.entities()[k], rf.entities()[j]), Some(r));
            }
            assert!(rf.neighbors_of(k).len() <= 2);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut b = KgBuilder::new(6, 2);
        for (x, y, r) in [(0, 1, 0), (1, 2, 1), (2, 3, 0), (0, 4, 1), (4, 5, 0)] {
            b.add_edge(e(x), RelationId(r), e(y));
        }
        let kg = b.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = ModelParams::init(1, 2, 6, 3, 2, &mut rng);
        let rf = ReceptiveField::exhaustive(&kg, &[e(0), e(3)], 2);
        let acts = standard_activations(2);
        let fwd = forward(&kg, &rf, &params, UserId(0), &acts).unwrap();
        let mut grads = params.zeros_like();
        let mut dw = vec![0.0; 2];
        backward(
            &kg,
            &rf,
            &params,
            &fwd,
            &acts,
            Array2::zeros((2, 3)).view(),
            &mut grads,
            &mut dw,
        )
        .unwrap();
        relation_weight_backward(&params, UserId(0), &fwd.scores, &dw, &mut grads);
        assert_eq!(grads.squared_norm(), 0.0);
        assert!(dw.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn exhaustive_field_matches_full_graph_one_layer() {
        let mut b = KgBuilder::new(8, 2);
        for (x, y, r) in [
            (0, 1, 0),
            (1, 2, 1),
            (2, 3, 0),
            (0, 4, 1),
            (4, 5, 0),
            (6, 7, 1),
            (3, 6, 0),
        ] {
            b.add_edge(e(x), RelationId(r), e(y));
        }
        let kg = b.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = ModelParams::init(1, 2, 8, 3, 1, &mut rng);
        let rf = ReceptiveField::exhaustive(&kg, &[e(1), e(6)], 1);
        let fwd = forward(&kg, &rf, &params, UserId(0), &[Activation::Identity]).unwrap();

        let adj = build_user_adjacency(&kg, params.users.row(0), params.relations.view(), true).unwrap();
        let a_hat = adj.normalize_symmetric().unwrap().to_dense();
        let mut h0 = nalgebra::DMatrix::zeros(8, 3);
        for i in 0..8 {
            for c in 0..3 {
                h0[(i, c)] = params.entities[(i, c)];
            }
        }
        let w = nalgebra::DMatrix::from_fn(3, 3, |i, j| params.weights[0][(i, j)]);
        let full = a_hat * h0 * w;
        for (k, idx) in [1usize, 6].iter().enumerate() {
            for c in 0..3 {
                assert!((fwd.output()[(k, c)] - full[(*idx, c)]).abs() < 1e-14);
            }
        }
    }
}
