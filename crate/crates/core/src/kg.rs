//! Knowledge-graph store: ingestion, neighbor queries, sampling and the
//! item-proximity study.
//!
//! The graph is undirected. For every unordered entity pair at most one
//! relation is stored; when a file contains both `(h, r1, t)` and
//! `(t, r2, h)` the first-seen relation is kept. Self-triples are dropped at
//! ingestion because self-connections are added later, when a user adjacency
//! is built.

use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ids::{EntityId, ItemId, RelationId, UserId};

/// Default hop cap used by [`proximity_study`].
pub const DEFAULT_DISTANCE_CAP: u32 = 8;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// Counts reported by ingestion.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub lines: usize,
    pub self_triples_dropped: usize,
    pub duplicate_pairs_dropped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeGraph {
    entity_tokens: Vec<String>,
    relation_tokens: Vec<String>,
    offsets: Vec<usize>,
    adjacency: Vec<(EntityId, RelationId)>,
    rel_offsets: Vec<usize>,
    rel_counts: Vec<(RelationId, u32)>,
    edge_count: usize,
    items: Vec<EntityId>,
    item_tokens: Vec<String>,
    item_index: HashMap<String, ItemId>,
    item_of_entity: Vec<Option<ItemId>>,
}

/// Incremental construction of a [`KnowledgeGraph`] from dense ids.
#[derive(Clone, Debug, Default)]
pub struct KgBuilder {
    entity_tokens: Vec<String>,
    relation_tokens: Vec<String>,
    edges: Vec<(EntityId, EntityId, RelationId)>,
    pair_index: HashMap<(EntityId, EntityId), RelationId>,
    items: Vec<(String, EntityId)>,
    stats: LoadStats,
}

impl KgBuilder {
    /// A builder with `entities` entities and `relations` relation types,
    /// named by their decimal index.
    pub fn new(entities: usize, relations: usize) -> Self {
        Self {
            entity_tokens: (0..entities).map(|i| i.to_string()).collect(),
            relation_tokens: (0..relations).map(|i| format!("r{i}")).collect(),
            ..Self::default()
        }
    }

    fn intern_entity(&mut self, index: &mut HashMap<String, EntityId>, token: &str) -> EntityId {
        if let Some(&id) = index.get(token) {
            return id;
        }
        let id = EntityId::from_index(self.entity_tokens.len());
        self.entity_tokens.push(token.to_string());
        index.insert(token.to_string(), id);
        id
    }

    fn intern_relation(&mut self, index: &mut HashMap<String, RelationId>, token: &str) -> RelationId {
        if let Some(&id) = index.get(token) {
            return id;
        }
        let id = RelationId::from_index(self.relation_tokens.len());
        self.relation_tokens.push(token.to_string());
        index.insert(token.to_string(), id);
        id
    }

    /// Adds an undirected edge. Returns `false` when the triple was dropped
    /// (self-triple or the pair already carries a relation).
    pub fn add_edge(&mut self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        assert!(head.index() < self.entity_tokens.len() && tail.index() < self.entity_tokens.len());
        assert!(relation.index() < self.relation_tokens.len());
        if head == tail {
            self.stats.self_triples_dropped += 1;
            return false;
        }
        let key = if head < tail { (head, tail) } else { (tail, head) };
        if self.pair_index.contains_key(&key) {
            self.stats.duplicate_pairs_dropped += 1;
            return false;
        }
        self.pair_index.insert(key, relation);
        self.edges.push((head, tail, relation));
        true
    }

    pub fn has_pair(&self, a: EntityId, b: EntityId) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.pair_index.contains_key(&key)
    }

    pub fn add_item(&mut self, token: impl Into<String>, entity: EntityId) {
        self.items.push((token.into(), entity));
    }

    /// Marks entities `0..n` as items `0..n`.
    pub fn with_leading_items(mut self, n: usize) -> Self {
        for i in 0..n {
            self.add_item(format!("item{i}"), EntityId::from_index(i));
        }
        self
    }

    pub fn stats(&self) -> &LoadStats {
        &self.stats
    }

    pub fn build(self) -> Result<KnowledgeGraph> {
        let n = self.entity_tokens.len();
        let mut lists: Vec<Vec<(EntityId, RelationId)>> = vec![Vec::new(); n];
        for &(h, t, r) in &self.edges {
            lists[h.index()].push((t, r));
            lists[t.index()].push((h, r));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut adjacency = Vec::with_capacity(self.edges.len() * 2);
        let mut rel_offsets = Vec::with_capacity(n + 1);
        let mut rel_counts = Vec::new();
        offsets.push(0);
        rel_offsets.push(0);
        for list in &mut lists {
            list.sort_unstable();
            adjacency.extend_from_slice(list);
            offsets.push(adjacency.len());

            let mut hist: Vec<(RelationId, u32)> = Vec::new();
            let mut rels: Vec<RelationId> = list.iter().map(|&(_, r)| r).collect();
            rels.sort_unstable();
            for r in rels {
                match hist.last_mut() {
                    Some((last, c)) if *last == r => *c += 1,
                    _ => hist.push((r, 1)),
                }
            }
            rel_counts.extend(hist);
            rel_offsets.push(rel_counts.len());
        }

        let mut item_of_entity = vec![None; n];
        let mut items = Vec::with_capacity(self.items.len());
        let mut item_tokens = Vec::with_capacity(self.items.len());
        let mut item_index: HashMap<String, ItemId> = HashMap::new();
        for (token, entity) in &self.items {
            if entity.index() >= n {
                return Err(Error::Validation(format!(
                    "item {token} maps to unknown entity {entity}"
                )));
            }
            if item_index.contains_key(token) {
                return Err(Error::Validation(format!("item {token} mapped twice")));
            }
            if item_of_entity[entity.index()].is_some() {
                return Err(Error::Validation(format!(
                    "entity {} is mapped by more than one item",
                    self.entity_tokens[entity.index()]
                )));
            }
            let id = ItemId::from_index(items.len());
            item_of_entity[entity.index()] = Some(id);
            item_index.insert(token.clone(), id);
            items.push(*entity);
            item_tokens.push(token.clone());
        }

        Ok(KnowledgeGraph {
            entity_tokens: self.entity_tokens,
            relation_tokens: self.relation_tokens,
            offsets,
            adjacency,
            rel_offsets,
            rel_counts,
            edge_count: self.edges.len(),
            items,
            item_tokens,
            item_index,
            item_of_entity,
        })
    }
}

fn split_tsv<'a>(line: &'a str, columns: usize, source: &str, lineno: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
    if fields.len() != columns || fields.iter().any(|f| f.is_empty()) {
        return Err(Error::parse(
            source,
            lineno,
            format!("expected {columns} tab-separated fields, got {:?}", line),
        ));
    }
    Ok(fields)
}

/// Reads a triples TSV and an item-map TSV into a graph.
///
/// Tokens are interned in first-seen order. Every entity named by the item
/// map must appear in the triples, except when the triples source contains
/// no triples at all; then the item map alone defines the (edgeless) entity
/// set.
pub fn read_kg(triples: impl BufRead, item_map: impl BufRead) -> Result<(KnowledgeGraph, LoadStats)> {
    let mut builder = KgBuilder::default();
    let mut entity_index = HashMap::new();
    let mut relation_index = HashMap::new();
    let mut parsed = Vec::new();
    for (i, line) in triples.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<triples>", e))?;
        builder.stats.lines += 1;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_tsv(&line, 3, "triples", i + 1)?;
        let h = builder.intern_entity(&mut entity_index, f[0]);
        let r = builder.intern_relation(&mut relation_index, f[1]);
        let t = builder.intern_entity(&mut entity_index, f[2]);
        parsed.push((h, r, t));
    }
    let open_entity_set = parsed.is_empty();
    for (h, r, t) in parsed {
        builder.add_edge(h, r, t);
    }

    for (i, line) in item_map.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<item map>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let f = split_tsv(&line, 2, "item map", i + 1)?;
        let entity = match entity_index.get(f[1]) {
            Some(&e) => e,
            None if open_entity_set => builder.intern_entity(&mut entity_index, f[1]),
            None => {
                return Err(Error::Validation(format!(
                    "item map line {}: item {} maps to unknown entity {}",
                    i + 1,
                    f[0],
                    f[1]
                )))
            }
        };
        builder.add_item(f[0], entity);
    }
    let stats = builder.stats.clone();
    Ok((builder.build()?, stats))
}

/// Loads the graph from a triples file and an item-map file.
pub fn load_kg(triples_path: impl AsRef<Path>, item_map_path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let tp = triples_path.as_ref();
    let ip = item_map_path.as_ref();
    let t = File::open(tp).map_err(|e| Error::io(tp, e))?;
    let i = File::open(ip).map_err(|e| Error::io(ip, e))?;
    read_kg(BufReader::new(t), BufReader::new(i)).map(|(kg, _)| kg)
}

impl KnowledgeGraph {
    pub fn entity_count(&self) -> usize {
        self.entity_tokens.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_tokens.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn neighbors(&self, e: EntityId) -> &[(EntityId, RelationId)] {
        &self.adjacency[self.offsets[e.index()]..self.offsets[e.index() + 1]]
    }

    pub fn degree(&self, e: EntityId) -> usize {
        self.offsets[e.index() + 1] - self.offsets[e.index()]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.entity_count())
            .map(|i| self.degree(EntityId::from_index(i)))
            .max()
            .unwrap_or(0)
    }

    /// Per-relation neighbor counts of `e`, sorted by relation.
    pub fn relation_histogram(&self, e: EntityId) -> &[(RelationId, u32)] {
        &self.rel_counts[self.rel_offsets[e.index()]..self.rel_offsets[e.index() + 1]]
    }

    pub fn relation_between(&self, a: EntityId, b: EntityId) -> Option<RelationId> {
        let list = self.neighbors(a);
        list.binary_search_by(|&(n, _)| n.cmp(&b)).ok().map(|k| list[k].1)
    }

    /// Each undirected edge once, with `head < tail`.
    pub fn edges(&self) -> impl Iterator<Item = Triple> + '_ {
        (0..self.entity_count()).flat_map(move |i| {
            let head = EntityId::from_index(i);
            self.neighbors(head)
                .iter()
                .filter(move |&&(t, _)| head < t)
                .map(move |&(tail, relation)| Triple { head, relation, tail })
        })
    }

    pub fn items(&self) -> &[EntityId] {
        &self.items
    }

    pub fn item_entity(&self, item: ItemId) -> EntityId {
        self.items[item.index()]
    }

    pub fn item_of(&self, e: EntityId) -> Option<ItemId> {
        self.item_of_entity[e.index()]
    }

    pub fn item_token(&self, item: ItemId) -> &str {
        &self.item_tokens[item.index()]
    }

    pub fn item_by_token(&self, token: &str) -> Option<ItemId> {
        self.item_index.get(token).copied()
    }

    pub fn entity_token(&self, e: EntityId) -> &str {
        &self.entity_tokens[e.index()]
    }

    pub fn relation_token(&self, r: RelationId) -> &str {
        if r.is_self() {
            "SELF"
        } else {
            &self.relation_tokens[r.index()]
        }
    }

    /// A builder pre-populated with this graph's entities, relations, edges
    /// and items, for extending it.
    pub fn to_builder(&self) -> KgBuilder {
        let mut b = KgBuilder {
            entity_tokens: self.entity_tokens.clone(),
            relation_tokens: self.relation_tokens.clone(),
            ..KgBuilder::default()
        };
        for t in self.edges() {
            b.add_edge(t.head, t.relation, t.tail);
        }
        for (i, &e) in self.items.iter().enumerate() {
            b.add_item(self.item_tokens[i].clone(), e);
        }
        b
    }

    /// Writes the graph back out in the ingestion formats.
    pub fn write_tsv(&self, mut triples: impl Write, mut item_map: impl Write) -> std::io::Result<()> {
        for t in self.edges() {
            writeln!(
                triples,
                "{}\t{}\t{}",
                self.entity_token(t.head),
                self.relation_token(t.relation),
                self.entity_token(t.tail)
            )?;
        }
        for (i, &e) in self.items.iter().enumerate() {
            writeln!(item_map, "{}\t{}", self.item_tokens[i], self.entity_token(e))?;
        }
        Ok(())
    }
}

/// Draws exactly `s` neighbors of `e`.
///
/// Sampling is uniform without replacement when the degree is at least `s`
/// and uniform with replacement otherwise. An isolated entity yields `s`
/// copies of `(e, RelationId::SELF)`.
pub fn sample_neighbors<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    e: EntityId,
    s: usize,
    rng: &mut R,
) -> Vec<(EntityId, RelationId)> {
    assert!(s >= 1, "sample size must be at least 1");
    let list = kg.neighbors(e);
    if list.is_empty() {
        return vec![(e, RelationId::SELF); s];
    }
    if list.len() >= s {
        index::sample(rng, list.len(), s).into_iter().map(|k| list[k]).collect()
    } else {
        (0..s).map(|_| list[rng.gen_range(0..list.len())]).collect()
    }
}

/// Hop distance between two entities.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Distance {
    Hops(u32),
    Unreachable,
}

impl Distance {
    /// Hop count, with unreachable pairs counted as `cap + 1`.
    pub fn capped_value(self, cap: u32) -> u32 {
        match self {
            Distance::Hops(h) => h,
            Distance::Unreachable => cap + 1,
        }
    }
}

/// Breadth-first hop count ignoring relation types; pairs farther apart
/// than `cap` hops are [`Distance::Unreachable`].
pub fn shortest_path_distance(kg: &KnowledgeGraph, a: EntityId, b: EntityId, cap: u32) -> Distance {
    assert!(cap >= 1, "cap must be at least 1");
    if a == b {
        return Distance::Hops(0);
    }
    let mut dist: HashMap<EntityId, u32> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(a, 0);
    queue.push_back(a);
    while let Some(x) = queue.pop_front() {
        let d = dist[&x];
        if d >= cap {
            break;
        }
        for &(y, _) in kg.neighbors(x) {
            if y == b {
                return Distance::Hops(d + 1);
            }
            if let std::collections::hash_map::Entry::Vacant(slot) = dist.entry(y) {
                slot.insert(d + 1);
                queue.push_back(y);
            }
        }
    }
    Distance::Unreachable
}

/// Distance histogram over `0..=cap` plus an unreachable bucket.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceHistogram {
    pub cap: u32,
    pub counts: Vec<usize>,
    pub unreachable: usize,
}

impl DistanceHistogram {
    pub fn new(cap: u32) -> Self {
        Self {
            cap,
            counts: vec![0; cap as usize + 1],
            unreachable: 0,
        }
    }

    pub fn record(&mut self, d: Distance) {
        match d {
            Distance::Hops(h) => self.counts[h as usize] += 1,
            Distance::Unreachable => self.unreachable += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.unreachable
    }

    pub fn probability(&self, hops: u32) -> f64 {
        self.counts[hops as usize] as f64 / self.total() as f64
    }

    pub fn cumulative(&self, hops: u32) -> f64 {
        (0..=hops.min(self.cap)).map(|h| self.probability(h)).sum()
    }

    /// Mean distance with unreachable pairs counted at `cap + 1`.
    pub fn mean(&self) -> f64 {
        let sum: usize = self.counts.iter().enumerate().map(|(h, &c)| h * c).sum::<usize>()
            + (self.cap as usize + 1) * self.unreachable;
        sum as f64 / self.total() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProximityReport {
    pub common_user: DistanceHistogram,
    pub no_common_user: DistanceHistogram,
}

impl ProximityReport {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "group,distance,probability")?;
        for (name, h) in [("common", &self.common_user), ("none", &self.no_common_user)] {
            let total = h.total() as f64;
            for (d, &c) in h.counts.iter().enumerate() {
                writeln!(out, "{name},{d},{}", c as f64 / total)?;
            }
            writeln!(out, "{name},unreachable,{}", h.unreachable as f64 / total)?;
        }
        Ok(())
    }
}

/// Samples `n_pairs` item pairs with at least one common user and
/// `n_pairs` pairs with none, and histograms their hop distances.
pub fn proximity_study<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    positives: &[(UserId, ItemId)],
    n_pairs: usize,
    cap: u32,
    rng: &mut R,
) -> Result<ProximityReport> {
    assert!(n_pairs >= 1, "n_pairs must be at least 1");
    let mut by_user: HashMap<UserId, Vec<ItemId>> = HashMap::new();
    let mut users_of_item: Vec<Vec<UserId>> = vec![Vec::new(); kg.item_count()];
    for &(u, v) in positives {
        by_user.entry(u).or_default().push(v);
        users_of_item[v.index()].push(u);
    }
    for list in by_user.values_mut() {
        list.sort_unstable();
        list.dedup();
    }
    for list in &mut users_of_item {
        list.sort_unstable();
        list.dedup();
    }
    let mut eligible: Vec<(&UserId, &Vec<ItemId>)> = by_user.iter().filter(|(_, l)| l.len() >= 2).collect();
    eligible.sort_by_key(|(u, _)| **u);
    if eligible.is_empty() {
        return Err(Error::Infeasible("no user has two or more positive items".into()));
    }
    if kg.item_count() < 2 {
        return Err(Error::Infeasible("fewer than two items".into()));
    }

    let mut common = DistanceHistogram::new(cap);
    while common.total() < n_pairs {
        let (_, items) = eligible[rng.gen_range(0..eligible.len())];
        let pick = index::sample(rng, items.len(), 2);
        let (a, b) = (items[pick.index(0)], items[pick.index(1)]);
        common.record(shortest_path_distance(kg, kg.item_entity(a), kg.item_entity(b), cap));
    }

    let share_user = |a: ItemId, b: ItemId| {
        let (x, y) = (&users_of_item[a.index()], &users_of_item[b.index()]);
        let (mut i, mut j) = (0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Equal => return true,
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        false
    };
    let mut none = DistanceHistogram::new(cap);
    let max_attempts = n_pairs.saturating_mul(1000);
    let mut attempts = 0;
    while none.total() < n_pairs {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Infeasible(
                "could not find item pairs without a common user".into(),
            ));
        }
        let pick = index::sample(rng, kg.item_count(), 2);
        let (a, b) = (ItemId::from_index(pick.index(0)), ItemId::from_index(pick.index(1)));
        if share_user(a, b) {
            continue;
        }
        none.record(shortest_path_distance(kg, kg.item_entity(a), kg.item_entity(b), cap));
    }
    Ok(ProximityReport {
        common_user: common,
        no_common_user: none,
    })
}
