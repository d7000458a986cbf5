//! Desk-scale synthetic datasets with planted, label-smooth preferences.
//!
//! Entities `0..items` are items. Each relation type owns a pool of
//! attribute entities and every item is linked to one attribute per
//! relation. The remaining entities are filler hung off random existing
//! entities. Each user prefers one relation and likes a couple of that
//! relation's attributes; with probability `strength` a positive is drawn
//! from items carrying a liked attribute, otherwise uniformly from the
//! catalog.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ids::{EntityId, ItemId, RelationId, UserId};
use crate::interactions::RawRatings;
use crate::kg::{KgBuilder, KnowledgeGraph};

/// Ratings at or above this value are positives.
pub const RATING_THRESHOLD: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub entities: usize,
    pub items: usize,
    pub relations: usize,
    pub users: usize,
    /// In `[0, 1]`; 0 makes labels independent of the graph.
    pub strength: f64,
    pub seed: u64,
    pub positives_per_user: usize,
    /// Attribute entities per relation; `items / 20` (at least 2) when unset.
    pub attributes_per_relation: Option<usize>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            entities: 2000,
            items: 300,
            relations: 4,
            users: 100,
            strength: 1.0,
            seed: 0,
            positives_per_user: 20,
            attributes_per_relation: None,
        }
    }
}

impl SyntheticSpec {
    fn attributes(&self) -> usize {
        self.attributes_per_relation.unwrap_or((self.items / 20).max(2))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Infeasible(m));
        if self.items < 2 {
            return bad("need at least two items".into());
        }
        if self.relations < 1 || self.users < 1 {
            return bad("need at least one relation and one user".into());
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return bad(format!("strength {} outside [0, 1]", self.strength));
        }
        if self.attributes() < 1 || self.attributes() > self.items {
            return bad(format!(
                "{} attributes per relation for {} items",
                self.attributes(),
                self.items
            ));
        }
        let needed = self.items + self.relations * self.attributes();
        if self.entities < needed {
            return bad(format!(
                "{} entities cannot hold {} items and {} attributes",
                self.entities,
                self.items,
                self.relations * self.attributes()
            ));
        }
        if self.positives_per_user < 2 || self.positives_per_user > self.items / 2 {
            return bad(format!(
                "positives per user must be in [2, {}], got {}",
                self.items / 2,
                self.positives_per_user
            ));
        }
        Ok(())
    }
}

/// A user's planted taste.
#[derive(Clone, Debug, PartialEq)]
pub struct Preference {
    pub relation: RelationId,
    pub liked: Vec<EntityId>,
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub kg: KnowledgeGraph,
    /// `(user token, item token, rating)` in generation order.
    pub ratings: Vec<(String, String, u8)>,
    pub preferences: Vec<Preference>,
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_attr = spec.attributes();
    let attr = |r: usize, k: usize| EntityId::from_index(spec.items + r * n_attr + k);
    let mut b = KgBuilder::new(spec.entities, spec.relations);
    for i in 0..spec.items {
        b.add_item(format!("i{i}"), EntityId::from_index(i));
    }

    // item_attr[r][v]: the attribute index item v carries for relation r.
    let mut item_attr = vec![vec![0usize; spec.items]; spec.relations];
    for (r, attrs) in item_attr.iter_mut().enumerate() {
        let mut order: Vec<usize> = (0..spec.items).collect();
        order.shuffle(&mut rng);
        for (pos, &v) in order.iter().enumerate() {
            attrs[v] = pos % n_attr;
            b.add_edge(
                EntityId::from_index(v),
                RelationId::from_index(r),
                attr(r, pos % n_attr),
            );
        }
    }
    let first_filler = spec.items + spec.relations * n_attr;
    for f in first_filler..spec.entities {
        let anchor = EntityId::from_index(rng.gen_range(0..f));
        let r = RelationId::from_index(rng.gen_range(0..spec.relations));
        b.add_edge(EntityId::from_index(f), r, anchor);
    }
    let kg = b.build()?;

    let mut ratings = Vec::new();
    let mut preferences = Vec::with_capacity(spec.users);
    let n_liked = 2.min(n_attr);
    for u in 0..spec.users {
        let r = rng.gen_range(0..spec.relations);
        let liked: Vec<usize> = index::sample(&mut rng, n_attr, n_liked).into_vec();
        let mut relevant: Vec<usize> = (0..spec.items).filter(|&v| liked.contains(&item_attr[r][v])).collect();
        relevant.shuffle(&mut rng);

        let mut chosen = vec![false; spec.items];
        let mut positives = Vec::with_capacity(spec.positives_per_user);
        while positives.len() < spec.positives_per_user {
            let from_relevant = rng.gen::<f64>() < spec.strength;
            let v = match relevant.iter().position(|&v| !chosen[v]) {
                Some(k) if from_relevant => relevant[k],
                _ => loop {
                    let v = rng.gen_range(0..spec.items);
                    if !chosen[v] {
                        break v;
                    }
                },
            };
            chosen[v] = true;
            positives.push(v);
        }
        let user = format!("u{u}");
        for &v in &positives {
            ratings.push((user.clone(), format!("i{v}"), rng.gen_range(4..=5)));
        }
        // A few low ratings: neither positives nor negative candidates.
        let mut low = 0;
        while low < spec.positives_per_user / 4 {
            let v = rng.gen_range(0..spec.items);
            if !chosen[v] {
                chosen[v] = true;
                ratings.push((user.clone(), format!("i{v}"), rng.gen_range(1..=3)));
                low += 1;
            }
        }
        preferences.push(Preference {
            relation: RelationId::from_index(r),
            liked: liked.iter().map(|&k| attr(r, k)).collect(),
        });
    }
    Ok(SyntheticData {
        kg,
        ratings,
        preferences,
    })
}

/// Paths of the files written by [`SyntheticData::write`].
#[derive(Clone, Debug)]
pub struct DatasetFiles {
    pub triples: PathBuf,
    pub item_map: PathBuf,
    pub ratings: PathBuf,
}

impl DatasetFiles {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            triples: d.join("triples.tsv"),
            item_map: d.join("item_map.tsv"),
            ratings: d.join("ratings.tsv"),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

impl SyntheticData {
    /// Writes `triples.tsv`, `item_map.tsv` and `ratings.tsv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<DatasetFiles> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = DatasetFiles::in_dir(dir);
        let mut t = create(&files.triples)?;
        let mut m = create(&files.item_map)?;
        self.kg
            .write_tsv(&mut t, &mut m)
            .and_then(|_| t.flush())
            .and_then(|_| m.flush())
            .map_err(|e| Error::io(dir, e))?;
        let mut r = create(&files.ratings)?;
        (|| -> std::io::Result<()> {
            for (u, v, y) in &self.ratings {
                writeln!(r, "{u}\t{v}\t{y}")?;
            }
            r.flush()
        })()
        .map_err(|e| Error::io(&files.ratings, e))?;
        Ok(files)
    }

    /// The ratings thresholded as a ratings file would be.
    pub fn raw_ratings(&self) -> RawRatings {
        let mut text = String::new();
        for (u, v, y) in &self.ratings {
            text.push_str(&format!("{u}\t{v}\t{y}\n"));
        }
        crate::interactions::read_ratings(text.as_bytes(), Some(RATING_THRESHOLD), &self.kg)
            .expect("generated ratings are well formed")
    }
}

/// A graph over the same entities and items with about `multiplier` times
/// as many edges: the original edges plus uniformly random new pairs with
/// random relations.
pub fn multiply_edges<R: Rng + ?Sized>(kg: &KnowledgeGraph, multiplier: usize, rng: &mut R) -> Result<KnowledgeGraph> {
    assert!(multiplier >= 1, "multiplier must be at least 1");
    let n = kg.entity_count();
    let target = kg.edge_count().saturating_mul(multiplier);
    let max_pairs = n.saturating_mul(n.saturating_sub(1)) / 2;
    if target > max_pairs {
        return Err(Error::Infeasible(format!("{target} edges do not fit on {n} entities")));
    }
    let mut b = kg.to_builder();
    let mut edges = kg.edge_count();
    while edges < target {
        let a = EntityId::from_index(rng.gen_range(0..n));
        let c = EntityId::from_index(rng.gen_range(0..n));
        let r = RelationId::from_index(rng.gen_range(0..kg.relation_count()));
        if a != c && !b.has_pair(a, c) {
            b.add_edge(a, r, c);
            edges += 1;
        }
    }
    b.build()
}

/// Fraction of a user's positives that carry a liked attribute.
pub fn relevant_fraction(data: &SyntheticData, user: UserId, items: &[ItemId]) -> f64 {
    let pref = &data.preferences[user.index()];
    let hits = items
        .iter()
        .filter(|&&v| {
            let e = data.kg.item_entity(v);
            pref.liked
                .iter()
                .any(|&a| data.kg.relation_between(e, a) == Some(pref.relation))
        })
        .count();
    hits as f64 / items.len().max(1) as f64
}
