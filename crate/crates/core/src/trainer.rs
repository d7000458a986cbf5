//! Unified loss, Adam, minibatch training and checkpoints.
//!
//! The loss of a batch is
//!
//! ```text
//!   mean_rows J(y, y_hat) + lambda * mean_heldout J(y, l_hat) + gamma * |theta|^2
//! ```
//!
//! where `J` is binary cross-entropy, `y_hat` the network's click
//! probability and `l_hat` the leave-one-out label reproduced by unrolled
//! label propagation on the batch's receptive field.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::gnn::{
    backward, forward, logit, relation_weight_backward, standard_activations, ModelParams, ReceptiveField,
};
use crate::ids::{EntityId, UserId};
use crate::interactions::{Interaction, InteractionMatrix, Split};
use crate::kg::KnowledgeGraph;
use crate::label_smoothness::{ls_regularizer, EdgeGraph};
use crate::scoring::{edge_weight, logistic};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Neighbors sampled per entity (`S`).
    pub sample_size: usize,
    /// Hidden dimension (`d`), shared by every embedding and layer.
    pub dim: usize,
    /// Number of layers (`L`).
    pub layers: usize,
    /// Label-smoothness weight.
    pub lambda: f64,
    /// L2 weight.
    pub gamma: f64,
    /// Adam learning rate.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Unrolled propagation steps; `layers + 2` when unset.
    pub unroll_steps: Option<usize>,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            sample_size: 8,
            dim: 16,
            layers: 1,
            lambda: 0.5,
            gamma: 1e-5,
            learning_rate: 5e-3,
            batch_size: 64,
            epochs: 10,
            seed: 0,
            unroll_steps: None,
        }
    }
}

impl HyperParams {
    pub fn steps(&self) -> usize {
        self.unroll_steps.unwrap_or(self.layers + 2)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::HyperParam(m.to_string()));
        if self.sample_size < 1 {
            return bad("S must be at least 1");
        }
        if self.dim < 1 {
            return bad("d must be at least 1");
        }
        if !(1..=4).contains(&self.layers) {
            return bad("L must be between 1 and 4");
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return bad("lambda must be finite and nonnegative");
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return bad("gamma must be finite and nonnegative");
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad("eta must be finite and nonnegative");
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1");
        }
        Ok(())
    }

    /// Settings tuned for the four benchmark domains: `movie`, `book`,
    /// `music` and `restaurant`.
    pub fn preset(name: &str) -> Option<Self> {
        let (s, d, l, lambda, gamma, eta) = match name {
            "movie" => (16, 32, 1, 1.0, 1e-7, 2e-2),
            "book" => (8, 64, 2, 0.5, 2e-5, 2e-4),
            "music" => (8, 16, 1, 0.1, 1e-4, 5e-4),
            "restaurant" => (4, 8, 2, 0.5, 1e-7, 2e-2),
            _ => return None,
        };
        Some(Self {
            sample_size: s,
            dim: d,
            layers: l,
            lambda,
            gamma,
            learning_rate: eta,
            ..Self::default()
        })
    }

    /// Applies one `key=value` setting. Returns `Ok(false)` for keys that
    /// are not hyperparameters.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::HyperParam(format!("cannot parse {key}={value}")))
        }
        match key {
            "S" => self.sample_size = num(key, value)?,
            "d" => self.dim = num(key, value)?,
            "L" => self.layers = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "eta" => self.learning_rate = num(key, value)?,
            "batch_size" | "batch-size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "K" => self.unroll_steps = Some(num(key, value)?),
            "preset" => {
                let p = Self::preset(value).ok_or_else(|| Error::HyperParam(format!("unknown preset {value}")))?;
                *self = Self {
                    batch_size: self.batch_size,
                    epochs: self.epochs,
                    seed: self.seed,
                    unroll_steps: self.unroll_steps,
                    ..p
                };
            }
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse("config", i + 1, format!("expected key=value, got {raw:?}")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Known training labels per user, keyed by entity, for clamping.
#[derive(Clone, Debug, Default)]
pub struct UserLabels {
    per_user: Vec<HashMap<EntityId, f64>>,
}

impl UserLabels {
    pub fn from_matrix(kg: &KnowledgeGraph, m: &InteractionMatrix) -> Self {
        let per_user = (0..m.user_count())
            .map(|u| {
                m.user_rows(UserId::from_index(u))
                    .iter()
                    .map(|&(v, y)| (kg.item_entity(v), y as f64))
                    .collect()
            })
            .collect();
        Self { per_user }
    }

    pub fn get(&self, user: UserId, e: EntityId) -> Option<f64> {
        self.per_user.get(user.index()).and_then(|m| m.get(&e).copied())
    }
}

/// Loss value, its terms and the full gradient.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    pub prediction: f64,
    pub smoothness: f64,
    pub l2: f64,
    pub grads: ModelParams,
}

/// `softplus(z) - y z`: cross-entropy of `logistic(z)` against `y`.
fn logit_cross_entropy(y: f64, z: f64) -> f64 {
    edge_weight(z) - y * z
}

/// The unified loss of one batch and its gradient.
///
/// Rows are grouped by user; each group gets its own receptive field,
/// sampled from `rng`, and its own user-weighted graph. Every positive row
/// is held out once for the leave-one-out term while all other labeled
/// items in the field stay clamped.
pub fn unified_loss<R: rand::Rng + ?Sized>(
    kg: &KnowledgeGraph,
    labels: &UserLabels,
    batch: &[Interaction],
    params: &ModelParams,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let mut groups: BTreeMap<UserId, Vec<Interaction>> = BTreeMap::new();
    for r in batch {
        groups.entry(r.user).or_default().push(*r);
    }
    let n_rows = batch.len() as f64;
    let n_held = batch.iter().filter(|r| r.label == 1).count();
    let activations = standard_activations(hp.layers);
    let mut grads = params.zeros_like();
    let mut prediction = 0.0;
    let mut smoothness = 0.0;

    for (user, rows) in &groups {
        let mut seeds: Vec<EntityId> = Vec::with_capacity(rows.len());
        let mut seed_of_row = Vec::with_capacity(rows.len());
        for r in rows {
            let e = kg.item_entity(r.item);
            let k = match seeds.iter().position(|&s| s == e) {
                Some(k) => k,
                None => {
                    seeds.push(e);
                    seeds.len() - 1
                }
            };
            seed_of_row.push(k);
        }
        let rf = ReceptiveField::build(kg, &seeds, hp.layers, hp.sample_size, rng);
        let fwd = forward(kg, &rf, params, *user, &activations)?;
        let u = params.users.row(user.index());
        let out = fwd.output();

        let mut d_out = Array2::zeros(out.raw_dim());
        let mut d_user = ndarray::Array1::zeros(params.dim());
        for (r, &k) in rows.iter().zip(&seed_of_row) {
            let y = r.label as f64;
            let v = out.row(k);
            let raw = u.dot(&v);
            let z = logit(u, v);
            prediction += logit_cross_entropy(y, z);
            if raw.abs() <= crate::gnn::LOGIT_CLAMP {
                let g = (logistic(z) - y) / n_rows;
                d_out.row_mut(k).scaled_add(g, &u);
                d_user.scaled_add(g, &v);
            }
        }

        let mut d_rel_weight = vec![0.0; params.relations.nrows()];
        if hp.lambda > 0.0 && n_held > 0 {
            let local = rf.local_edges();
            let graph = EdgeGraph::new(rf.len(), local.iter().map(|&(i, j, _)| (i, j)).collect());
            let weights: Vec<f64> = local.iter().map(|&(_, _, r)| fwd.relation_weights[r.index()]).collect();
            let mut clamp: Vec<Option<f64>> = rf.entities().iter().map(|&e| labels.get(*user, e)).collect();
            for (r, &k) in rows.iter().zip(&seed_of_row) {
                clamp[k] = Some(r.label as f64);
            }
            let mut held: Vec<usize> = rows
                .iter()
                .zip(&seed_of_row)
                .filter(|(r, _)| r.label == 1)
                .map(|(_, &k)| k)
                .collect();
            held.dedup();
            let term = ls_regularizer(&graph, &weights, &clamp, &held, hp.steps());
            smoothness += term.loss;
            let scale = hp.lambda / n_held as f64;
            for (&(_, _, r), g) in local.iter().zip(&term.weight_grad) {
                d_rel_weight[r.index()] += scale * g;
            }
        }

        backward(
            kg,
            &rf,
            params,
            &fwd,
            &activations,
            d_out.view(),
            &mut grads,
            &mut d_rel_weight,
        )?;
        relation_weight_backward(params, *user, &fwd.scores, &d_rel_weight, &mut grads);
        let mut gu = grads.users.row_mut(user.index());
        gu += &d_user;
    }

    let prediction = prediction / n_rows;
    let smoothness = if n_held > 0 { smoothness / n_held as f64 } else { 0.0 };
    let l2 = params.squared_norm();
    if hp.gamma > 0.0 {
        grads.add_scaled(2.0 * hp.gamma, params);
    }
    for (term, value) in [("prediction", prediction), ("label smoothness", smoothness), ("l2", l2)] {
        if !value.is_finite() {
            return Err(Error::NonFinite { term: term.into() });
        }
    }
    Ok(LossOutput {
        loss: prediction + hp.lambda * smoothness + hp.gamma * l2,
        prediction,
        smoothness,
        l2,
        grads,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, learning_rate: f64) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut());
    for (((p, g), m), v) in tensors {
        ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub val_r10: f64,
}

pub fn write_metrics_csv(mut out: impl Write, log: &[EpochMetrics]) -> std::io::Result<()> {
    writeln!(out, "epoch,train_loss,val_auc,val_r10")?;
    for m in log {
        writeln!(out, "{},{},{},{}", m.epoch, m.train_loss, m.val_auc, m.val_r10)?;
    }
    Ok(())
}

/// Everything needed to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub hp: HyperParams,
    pub params: ModelParams,
    pub adam: AdamState,
    /// Epochs completed.
    pub epoch: usize,
    /// Best validation epoch so far: `(epoch, R@10, params)`.
    pub best: Option<(usize, f64, ModelParams)>,
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"KGNNLSCK";
const CHECKPOINT_VERSION: u32 = 1;

fn put_u64(w: &mut impl Write, x: u64) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn put_f64(w: &mut impl Write, x: f64) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn put_params(w: &mut impl Write, p: &ModelParams) -> std::io::Result<()> {
    for t in p.tensors() {
        for &x in t.iter() {
            put_f64(w, x)?;
        }
    }
    Ok(())
}

struct ByteReader<R> {
    inner: R,
}

impl<R: Read> ByteReader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("truncated file".into()),
            _ => Error::io("<checkpoint>", e),
        })?;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("size out of range".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn params(&mut self, shape: &ModelParams) -> Result<ModelParams> {
        let mut p = shape.zeros_like();
        for t in p.tensors_mut() {
            for x in t.iter_mut() {
                *x = self.f64()?;
            }
        }
        Ok(p)
    }
}

impl Checkpoint {
    pub fn write(&self, mut w: impl Write) -> Result<()> {
        let io = |e| Error::io("<checkpoint>", e);
        let hp = &self.hp;
        let p = &self.params;
        (|| -> std::io::Result<()> {
            w.write_all(CHECKPOINT_MAGIC)?;
            w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
            for x in [hp.sample_size, hp.dim, hp.layers] {
                put_u64(&mut w, x as u64)?;
            }
            for x in [hp.lambda, hp.gamma, hp.learning_rate] {
                put_f64(&mut w, x)?;
            }
            put_u64(&mut w, hp.batch_size as u64)?;
            put_u64(&mut w, hp.epochs as u64)?;
            put_u64(&mut w, hp.seed)?;
            put_u64(&mut w, hp.unroll_steps.map_or(0, |k| k as u64 + 1))?;
            for x in [
                p.users.nrows(),
                p.relations.nrows(),
                p.entities.nrows(),
                p.dim(),
                p.layers(),
            ] {
                put_u64(&mut w, x as u64)?;
            }
            put_u64(&mut w, self.epoch as u64)?;
            put_u64(&mut w, self.adam.step)?;
            put_params(&mut w, p)?;
            put_params(&mut w, &self.adam.m)?;
            put_params(&mut w, &self.adam.v)?;
            match &self.best {
                None => w.write_all(&[0])?,
                Some((epoch, r10, best)) => {
                    w.write_all(&[1])?;
                    put_u64(&mut w, *epoch as u64)?;
                    put_f64(&mut w, *r10)?;
                    put_params(&mut w, best)?;
                }
            }
            w.flush()
        })()
        .map_err(io)
    }

    pub fn read(r: impl Read) -> Result<Self> {
        let mut r = ByteReader { inner: r };
        if &r.bytes::<8>()? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic header".into()));
        }
        let version = u32::from_le_bytes(r.bytes()?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hp = HyperParams {
            sample_size: r.usize()?,
            dim: r.usize()?,
            layers: r.usize()?,
            lambda: r.f64()?,
            gamma: r.f64()?,
            learning_rate: r.f64()?,
            batch_size: r.usize()?,
            epochs: r.usize()?,
            seed: r.u64()?,
            unroll_steps: match r.usize()? {
                0 => None,
                k => Some(k - 1),
            },
        };
        let (users, relations, entities, dim, layers) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?);
        if dim != hp.dim || layers != hp.layers {
            return Err(Error::Checkpoint(
                "dimension block disagrees with hyperparameters".into(),
            ));
        }
        if [users, relations, entities, dim, layers]
            .iter()
            .any(|&x| x as u64 > 1u64 << 32)
        {
            return Err(Error::Checkpoint("implausible dimensions".into()));
        }
        let shape = ModelParams {
            users: Array2::zeros((users, dim)),
            relations: Array2::zeros((relations, dim)),
            entities: Array2::zeros((entities, dim)),
            weights: vec![Array2::zeros((dim, dim)); layers],
        };
        let epoch = r.usize()?;
        let step = r.u64()?;
        let params = r.params(&shape)?;
        let m = r.params(&shape)?;
        let v = r.params(&shape)?;
        let best = match r.bytes::<1>()?[0] {
            0 => None,
            1 => Some((r.usize()?, r.f64()?, r.params(&shape)?)),
            b => return Err(Error::Checkpoint(format!("bad best-epoch flag {b}"))),
        };
        let mut rest = Vec::new();
        r.inner
            .read_to_end(&mut rest)
            .map_err(|e| Error::io("<checkpoint>", e))?;
        if !rest.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        Ok(Self {
            hp,
            params,
            adam: AdamState { m, v, step },
            epoch,
            best,
        })
    }

    /// Checks the stored shapes against a configuration and data sizes.
    pub fn check_compatible(&self, hp: &HyperParams, users: usize, relations: usize, entities: usize) -> Result<()> {
        if hp.dim != self.hp.dim {
            return Err(Error::Dimension {
                context: "checkpoint d",
                expected: hp.dim,
                actual: self.hp.dim,
            });
        }
        if hp.layers != self.hp.layers {
            return Err(Error::Dimension {
                context: "checkpoint L",
                expected: hp.layers,
                actual: self.hp.layers,
            });
        }
        self.params.check_shapes(users, relations, entities, hp.dim, hp.layers)
    }
}

pub fn checkpoint_save(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let p = path.as_ref();
    let f = File::create(p).map_err(|e| Error::io(p, e))?;
    ckpt.write(BufWriter::new(f))
}

pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let p = path.as_ref();
    let f = File::open(p).map_err(|e| Error::io(p, e))?;
    Checkpoint::read(BufReader::new(f))
}

/// Mixes a seed with a stream index so every epoch gets an independent,
/// reproducible generator.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const EVAL_STREAM: u64 = u64::MAX;
const INIT_STREAM: u64 = u64::MAX - 1;

/// Training state over a fixed split.
pub struct Trainer<'a> {
    kg: &'a KnowledgeGraph,
    split: &'a Split,
    hp: HyperParams,
    labels: UserLabels,
    params: ModelParams,
    adam: AdamState,
    epoch: usize,
    best: Option<(usize, f64, ModelParams)>,
}

impl<'a> Trainer<'a> {
    pub fn new(kg: &'a KnowledgeGraph, split: &'a Split, hp: HyperParams) -> Result<Self> {
        hp.validate()?;
        let mut rng = stream_rng(hp.seed, INIT_STREAM);
        let params = ModelParams::init(
            split.train.user_count(),
            kg.relation_count(),
            kg.entity_count(),
            hp.dim,
            hp.layers,
            &mut rng,
        );
        Ok(Self::assemble(kg, split, hp, params, None, 0, None))
    }

    pub fn resume(kg: &'a KnowledgeGraph, split: &'a Split, ckpt: Checkpoint) -> Result<Self> {
        ckpt.hp.validate()?;
        ckpt.check_compatible(
            &ckpt.hp,
            split.train.user_count(),
            kg.relation_count(),
            kg.entity_count(),
        )?;
        Ok(Self::assemble(
            kg,
            split,
            ckpt.hp,
            ckpt.params,
            Some(ckpt.adam),
            ckpt.epoch,
            ckpt.best,
        ))
    }

    fn assemble(
        kg: &'a KnowledgeGraph,
        split: &'a Split,
        hp: HyperParams,
        params: ModelParams,
        adam: Option<AdamState>,
        epoch: usize,
        best: Option<(usize, f64, ModelParams)>,
    ) -> Self {
        let adam = adam.unwrap_or_else(|| AdamState::new(&params));
        Self {
            kg,
            split,
            labels: UserLabels::from_matrix(kg, &split.train),
            hp,
            params,
            adam,
            epoch,
            best,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn hp(&self) -> &HyperParams {
        &self.hp
    }

    pub fn hp_mut(&mut self) -> &mut HyperParams {
        &mut self.hp
    }

    pub fn epochs_completed(&self) -> usize {
        self.epoch
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            hp: self.hp.clone(),
            params: self.params.clone(),
            adam: self.adam.clone(),
            epoch: self.epoch,
            best: self.best.clone(),
        }
    }

    /// Single-user batches: each user's rows are shuffled and chunked, and
    /// the chunks are shuffled together.
    pub fn epoch_batches(&self, epoch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Interaction>> {
        let _ = epoch;
        let train = &self.split.train;
        let mut batches = Vec::new();
        for u in 0..train.user_count() {
            let user = UserId::from_index(u);
            let mut rows: Vec<Interaction> = train
                .user_rows(user)
                .iter()
                .map(|&(item, label)| Interaction { user, item, label })
                .collect();
            rows.shuffle(rng);
            batches.extend(rows.chunks(self.hp.batch_size).map(<[Interaction]>::to_vec));
        }
        batches.shuffle(rng);
        batches
    }

    /// Runs one epoch of Adam updates, optionally only the first
    /// `max_batches` batches. Returns the mean batch loss.
    pub fn run_epoch_limited(&mut self, max_batches: Option<usize>) -> Result<f64> {
        let epoch = self.epoch + 1;
        let mut rng = stream_rng(self.hp.seed, epoch as u64);
        let mut batches = self.epoch_batches(epoch, &mut rng);
        if let Some(n) = max_batches {
            batches.truncate(n);
        }
        let mut total = 0.0;
        for batch in &batches {
            let out = unified_loss(self.kg, &self.labels, batch, &self.params, &self.hp, &mut rng)?;
            adam_step(&mut self.params, &out.grads, &mut self.adam, self.hp.learning_rate);
            if !self.params.is_finite() {
                return Err(Error::NonFinite {
                    term: "parameters after update".into(),
                });
            }
            total += out.loss;
        }
        self.epoch = epoch;
        Ok(total / batches.len().max(1) as f64)
    }

    pub fn run_epoch(&mut self) -> Result<f64> {
        self.run_epoch_limited(None)
    }

    pub fn evaluate(&self, target: &InteractionMatrix, ks: &[usize]) -> Result<EvalReport> {
        let mut rng = stream_rng(self.hp.seed, EVAL_STREAM);
        evaluate(
            self.kg,
            &self.params,
            self.hp.sample_size,
            &self.split.train,
            target,
            ks,
            &mut rng,
        )
    }

    /// Runs the remaining epochs up to `hp.epochs`, evaluating on the
    /// validation rows after each one.
    pub fn train(mut self) -> Result<TrainOutcome> {
        let mut log = Vec::new();
        let mut last_good = self.checkpoint();
        while self.epoch < self.hp.epochs {
            let epoch = self.epoch + 1;
            let step = self.run_epoch().and_then(|loss| {
                if loss.is_finite() {
                    Ok(loss)
                } else {
                    Err(Error::NonFinite {
                        term: "train loss".into(),
                    })
                }
            });
            let train_loss = match step {
                Ok(l) => l,
                Err(e) => {
                    return Err(Error::Diverged {
                        epoch,
                        reason: e.to_string(),
                        last_good: Box::new(last_good),
                    })
                }
            };
            let report = self.evaluate(&self.split.validation, &[10])?;
            let r10 = report.recall(10);
            log.push(EpochMetrics {
                epoch,
                train_loss,
                val_auc: report.auc,
                val_r10: r10,
            });
            if self.best.as_ref().is_none_or(|b| r10 > b.1) {
                self.best = Some((epoch, r10, self.params.clone()));
            }
            last_good = self.checkpoint();
        }
        let (best_epoch, best_params) = match &self.best {
            Some((e, _, p)) => (*e, p.clone()),
            None => (self.epoch, self.params.clone()),
        };
        Ok(TrainOutcome {
            best_epoch,
            params: best_params,
            log,
            last: self.checkpoint(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub log: Vec<EpochMetrics>,
    /// State after the final epoch, for resuming.
    pub last: Checkpoint,
}

/// Trains from a fresh initialization.
pub fn train(kg: &KnowledgeGraph, split: &Split, hp: &HyperParams) -> Result<TrainOutcome> {
    Trainer::new(kg, split, hp.clone())?.train()
}
