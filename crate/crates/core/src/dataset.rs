//! Loading a knowledge graph and ratings into a train/validation/test split.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::interactions::{load_ratings, negative_sample, split, InteractionMatrix, RawRatings, Split};
use crate::kg::{load_kg, KnowledgeGraph};

/// Balanced negative sampling and the 60/20/20 split, both driven by one
/// seed.
pub fn prepare_split(raw: &RawRatings, item_count: usize, seed: u64) -> Result<(InteractionMatrix, Split)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = negative_sample(raw, item_count, &mut rng)?;
    let s = split(&matrix, &mut rng)?;
    Ok((matrix, s))
}

#[derive(Clone, Debug)]
pub struct DataPaths {
    pub triples: PathBuf,
    pub item_map: PathBuf,
    pub ratings: PathBuf,
    /// Ratings at or above are positives; every row is positive when unset.
    pub threshold: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub kg: KnowledgeGraph,
    pub raw: RawRatings,
    /// All labeled rows before splitting.
    pub matrix: InteractionMatrix,
    pub split: Split,
}

impl Dataset {
    pub fn from_parts(kg: KnowledgeGraph, raw: RawRatings, seed: u64) -> Result<Self> {
        let (matrix, split) = prepare_split(&raw, kg.item_count(), seed)?;
        Ok(Self { kg, raw, matrix, split })
    }

    pub fn load(paths: &DataPaths, seed: u64) -> Result<Self> {
        let kg = load_kg(&paths.triples, &paths.item_map)?;
        let raw = load_ratings(&paths.ratings, paths.threshold, &kg)?;
        Self::from_parts(kg, raw, seed)
    }
}
