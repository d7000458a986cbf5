//! Implicit-feedback interactions: thresholding explicit ratings, balanced
//! negative sampling and the 6:2:2 row split.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};
use crate::kg::KnowledgeGraph;

/// One labeled user-item row.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub label: u8,
}

/// Positive interactions extracted from a ratings file.
#[derive(Clone, Debug, Default)]
pub struct RawRatings {
    pub user_tokens: Vec<String>,
    pub positives: Vec<(UserId, ItemId)>,
    /// Rated below the threshold: neither positive nor a negative candidate.
    pub discarded: Vec<(UserId, ItemId)>,
    /// Lines whose item is not in the knowledge graph's item map.
    pub unmatched_lines: usize,
}

impl RawRatings {
    pub fn user_count(&self) -> usize {
        self.user_tokens.len()
    }

    pub fn user_index(&self) -> HashMap<&str, UserId> {
        self.user_tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), UserId::from_index(i)))
            .collect()
    }
}

/// Parses `user\titem\trating[\ttimestamp]` rows. With a threshold, ratings
/// at or above it are positive and the rest are discarded; without one,
/// every row is positive. Items outside the item map are skipped.
pub fn read_ratings(reader: impl BufRead, threshold: Option<f64>, kg: &KnowledgeGraph) -> Result<RawRatings> {
    let mut user_index: HashMap<String, UserId> = HashMap::new();
    let mut out = RawRatings::default();
    let mut positive = BTreeSet::new();
    let mut discarded = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<ratings>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if !(f.len() == 3 || f.len() == 4) || f[..3].iter().any(|s| s.is_empty()) {
            return Err(Error::parse(
                "ratings",
                i + 1,
                format!("expected user\\titem\\trating, got {line:?}"),
            ));
        }
        let rating: f64 = f[2]
            .parse()
            .map_err(|_| Error::parse("ratings", i + 1, format!("bad rating {:?}", f[2])))?;
        let Some(item) = kg.item_by_token(f[1]) else {
            out.unmatched_lines += 1;
            continue;
        };
        let next = UserId::from_index(user_index.len());
        let user = *user_index.entry(f[0].to_string()).or_insert_with(|| {
            out.user_tokens.push(f[0].to_string());
            next
        });
        if threshold.is_none_or(|t| rating >= t) {
            positive.insert((user, item));
        } else {
            discarded.insert((user, item));
        }
    }
    out.discarded = discarded.difference(&positive).copied().collect();
    out.positives = positive.into_iter().collect();
    Ok(out)
}

pub fn load_ratings(path: impl AsRef<Path>, threshold: Option<f64>, kg: &KnowledgeGraph) -> Result<RawRatings> {
    let p = path.as_ref();
    let f = File::open(p).map_err(|e| Error::io(p, e))?;
    read_ratings(BufReader::new(f), threshold, kg)
}

/// Per-user sorted `(item, label)` lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionMatrix {
    item_count: usize,
    rows: Vec<Vec<(ItemId, u8)>>,
}

impl InteractionMatrix {
    /// Builds a matrix from flat rows, rejecting duplicate `(user, item)`
    /// pairs and out-of-range ids.
    pub fn from_rows(user_count: usize, item_count: usize, rows: &[Interaction]) -> Result<Self> {
        let mut per_user: Vec<Vec<(ItemId, u8)>> = vec![Vec::new(); user_count];
        for r in rows {
            if r.user.index() >= user_count || r.item.index() >= item_count || r.label > 1 {
                return Err(Error::Validation(format!("row {r:?} out of range")));
            }
            per_user[r.user.index()].push((r.item, r.label));
        }
        for (u, list) in per_user.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Validation(format!("duplicate item for user {u}")));
            }
        }
        Ok(Self {
            item_count,
            rows: per_user,
        })
    }

    pub fn user_count(&self) -> usize {
        self.rows.len()
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn user_rows(&self, u: UserId) -> &[(ItemId, u8)] {
        &self.rows[u.index()]
    }

    pub fn len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows in `(user, item)` order.
    pub fn iter(&self) -> impl Iterator<Item = Interaction> + '_ {
        self.rows.iter().enumerate().flat_map(|(u, list)| {
            list.iter().map(move |&(item, label)| Interaction {
                user: UserId::from_index(u),
                item,
                label,
            })
        })
    }

    pub fn positives(&self) -> Vec<(UserId, ItemId)> {
        self.iter().filter(|r| r.label == 1).map(|r| (r.user, r.item)).collect()
    }

    pub fn write_tsv(&self, mut out: impl Write, user_tokens: &[String], kg: &KnowledgeGraph) -> std::io::Result<()> {
        for r in self.iter() {
            writeln!(
                out,
                "{}\t{}\t{}",
                user_tokens[r.user.index()],
                kg.item_token(r.item),
                r.label
            )?;
        }
        Ok(())
    }
}

/// Reads a `user\titem\tlabel` file written by [`InteractionMatrix::write_tsv`].
pub fn read_labeled_rows(
    reader: impl BufRead,
    users: &HashMap<&str, UserId>,
    kg: &KnowledgeGraph,
) -> Result<Vec<Interaction>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<rows>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != 3 {
            return Err(Error::parse("rows", i + 1, "expected user\\titem\\tlabel"));
        }
        let user = *users
            .get(f[0])
            .ok_or_else(|| Error::parse("rows", i + 1, format!("unknown user {}", f[0])))?;
        let item = kg
            .item_by_token(f[1])
            .ok_or_else(|| Error::parse("rows", i + 1, format!("unknown item {}", f[1])))?;
        let label = match f[2] {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::parse("rows", i + 1, format!("bad label {other}"))),
        };
        rows.push(Interaction { user, item, label });
    }
    Ok(rows)
}

/// Adds, for every user, as many label-0 rows as the user has positives,
/// drawn uniformly without replacement from items the user neither rated
/// positively nor had discarded. The count is truncated to the pool size.
pub fn negative_sample<R: Rng + ?Sized>(raw: &RawRatings, item_count: usize, rng: &mut R) -> Result<InteractionMatrix> {
    let users = raw.user_count();
    let mut excluded: Vec<Vec<ItemId>> = vec![Vec::new(); users];
    let mut pos_count = vec![0usize; users];
    for &(u, v) in &raw.positives {
        if v.index() >= item_count {
            return Err(Error::Validation(format!(
                "positive item {v} outside the item universe"
            )));
        }
        excluded[u.index()].push(v);
        pos_count[u.index()] += 1;
    }
    for &(u, v) in &raw.discarded {
        excluded[u.index()].push(v);
    }

    let mut rows: Vec<Interaction> = raw
        .positives
        .iter()
        .map(|&(user, item)| Interaction { user, item, label: 1 })
        .collect();
    let mut blocked = vec![false; item_count];
    for u in 0..users {
        if pos_count[u] == 0 {
            continue;
        }
        for v in &excluded[u] {
            blocked[v.index()] = true;
        }
        let pool: Vec<ItemId> = (0..item_count)
            .filter(|&i| !blocked[i])
            .map(ItemId::from_index)
            .collect();
        for v in &excluded[u] {
            blocked[v.index()] = false;
        }
        let take = pos_count[u].min(pool.len());
        for k in index::sample(rng, pool.len(), take) {
            rows.push(Interaction {
                user: UserId::from_index(u),
                item: pool[k],
                label: 0,
            });
        }
    }
    InteractionMatrix::from_rows(users, item_count, &rows)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: InteractionMatrix,
    pub validation: InteractionMatrix,
    pub test: InteractionMatrix,
}

/// Partition sizes for `n` rows: 20% validation and 20% test (floored),
/// remainder to training.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let val = n * 2 / 10;
    let test = n * 2 / 10;
    (n - val - test, val, test)
}

/// Shuffles rows and partitions them 60/20/20.
pub fn split<R: Rng + ?Sized>(matrix: &InteractionMatrix, rng: &mut R) -> Result<Split> {
    let mut rows: Vec<Interaction> = matrix.iter().collect();
    if rows.len() < 5 {
        return Err(Error::Infeasible(format!("cannot split {} rows", rows.len())));
    }
    rows.shuffle(rng);
    let (n_train, n_val, _) = split_sizes(rows.len());
    let (u, i) = (matrix.user_count(), matrix.item_count());
    Ok(Split {
        train: InteractionMatrix::from_rows(u, i, &rows[..n_train])?,
        validation: InteractionMatrix::from_rows(u, i, &rows[n_train..n_train + n_val])?,
        test: InteractionMatrix::from_rows(u, i, &rows[n_train + n_val..])?,
    })
}
