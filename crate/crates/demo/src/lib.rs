//! Label propagation on a toy knowledge graph, driven from a web page.
//!
//! [`Board`] holds the state and is plain Rust; [`Demo`] is the
//! JavaScript-facing wrapper.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use kgnn_ls::label_smoothness::{propagate_graph, Propagation};
use kgnn_ls::synthetic::{gen_synthetic, SyntheticData, SyntheticSpec};
use kgnn_ls::{EntityId, Error, Result, UserId};

pub fn demo_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        entities: 48,
        items: 16,
        relations: 3,
        users: 1,
        strength: 1.0,
        seed,
        positives_per_user: 4,
        attributes_per_relation: Some(3),
    }
}

/// Labels of every entity plus diagnostics. Entities not connected to any
/// clamp are `NaN`.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub labels: Vec<f64>,
    pub residual: f64,
    pub energy: f64,
    pub iterations: usize,
}

pub struct Board {
    data: SyntheticData,
    weights: Vec<f64>,
    clamps: Vec<Option<f64>>,
}

impl Board {
    /// A fresh graph whose single user's positives are clamped to 1 and an
    /// equal number of other items to 0. All relation weights start at 1.
    pub fn new(seed: u64) -> Result<Self> {
        let data = gen_synthetic(&demo_spec(seed))?;
        let raw = data.raw_ratings();
        let mut clamps = vec![None; data.kg.entity_count()];
        let mut liked = Vec::new();
        for &(u, v) in &raw.positives {
            if u == UserId(0) {
                let e = data.kg.item_entity(v);
                clamps[e.index()] = Some(1.0);
                liked.push(e);
            }
        }
        let mut others: Vec<EntityId> = data.kg.items().iter().copied().filter(|e| !liked.contains(e)).collect();
        others.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for e in others.into_iter().take(liked.len()) {
            clamps[e.index()] = Some(0.0);
        }
        let weights = vec![1.0; data.kg.relation_count()];
        Ok(Self { data, weights, clamps })
    }

    pub fn data(&self) -> &SyntheticData {
        &self.data
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn clamps(&self) -> &[Option<f64>] {
        &self.clamps
    }

    pub fn set_weight(&mut self, relation: usize, w: f64) -> Result<()> {
        if relation >= self.weights.len() {
            return Err(Error::Validation(format!("no relation {relation}")));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::Validation(format!("weight {w} must be positive")));
        }
        self.weights[relation] = w;
        Ok(())
    }

    /// Free, then 1, then 0, then free again.
    pub fn cycle_clamp(&mut self, entity: usize) -> Result<Option<f64>> {
        let c = self
            .clamps
            .get_mut(entity)
            .ok_or_else(|| Error::Validation(format!("no entity {entity}")))?;
        *c = match *c {
            None => Some(1.0),
            Some(1.0) => Some(0.0),
            Some(_) => None,
        };
        Ok(*c)
    }

    /// `steps` unrolled propagation steps from the neutral start, or the
    /// exact harmonic solution when `None`.
    pub fn snapshot(&self, steps: Option<usize>) -> Result<Snapshot> {
        let kg = &self.data.kg;
        let clamps: Vec<(EntityId, f64)> = self
            .clamps
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|y| (EntityId::from_index(i), y)))
            .collect();
        let mode = match steps {
            Some(steps) => Propagation::Unrolled { steps },
            None => Propagation::Exact,
        };
        let g = propagate_graph(kg, &self.weights, &clamps, mode)?;
        let mut labels = vec![f64::NAN; kg.entity_count()];
        for (e, &y) in g.entities.iter().zip(&g.labels) {
            labels[e.index()] = y;
        }
        let energy = kg
            .edges()
            .map(|t| {
                (
                    self.weights[t.relation.index()],
                    labels[t.head.index()] - labels[t.tail.index()],
                )
            })
            .filter(|(_, d)| !d.is_nan())
            .map(|(w, d)| w * d * d)
            .sum();
        Ok(Snapshot {
            labels,
            residual: g.residual,
            energy,
            iterations: g.iterations,
        })
    }
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    board: Board,
    last: Option<Snapshot>,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> std::result::Result<Demo, JsError> {
        Ok(Demo {
            board: Board::new(seed as u64).map_err(js)?,
            last: None,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.board.data.kg.entity_count()
    }

    pub fn relation_count(&self) -> usize {
        self.board.data.kg.relation_count()
    }

    /// Flat `head, tail, relation` triples.
    pub fn edges(&self) -> Vec<u32> {
        self.board
            .data
            .kg
            .edges()
            .flat_map(|t| [t.head.index() as u32, t.tail.index() as u32, t.relation.index() as u32])
            .collect()
    }

    pub fn items(&self) -> Vec<u32> {
        self.board.data.kg.items().iter().map(|e| e.index() as u32).collect()
    }

    /// The relation the user's taste was generated from.
    pub fn preferred_relation(&self) -> u32 {
        self.board.data.preferences[0].relation.index() as u32
    }

    pub fn set_weight(&mut self, relation: usize, w: f64) -> std::result::Result<(), JsError> {
        self.board.set_weight(relation, w).map_err(js)
    }

    /// The entity's new clamp, `NaN` when free.
    pub fn cycle_clamp(&mut self, entity: usize) -> std::result::Result<f64, JsError> {
        Ok(self.board.cycle_clamp(entity).map_err(js)?.unwrap_or(f64::NAN))
    }

    pub fn clamps(&self) -> Vec<f64> {
        self.board.clamps.iter().map(|c| c.unwrap_or(f64::NAN)).collect()
    }

    /// Labels after `steps` propagation steps, or the exact solution when
    /// `steps` is undefined.
    pub fn solve(&mut self, steps: Option<u32>) -> std::result::Result<Vec<f64>, JsError> {
        let s = self.board.snapshot(steps.map(|s| s as usize)).map_err(js)?;
        let labels = s.labels.clone();
        self.last = Some(s);
        Ok(labels)
    }

    pub fn residual(&self) -> f64 {
        self.last.as_ref().map_or(f64::NAN, |s| s.residual)
    }

    pub fn energy(&self) -> f64 {
        self.last.as_ref().map_or(f64::NAN, |s| s.energy)
    }
}
