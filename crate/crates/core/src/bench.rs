//! Wall-clock scaling of training against knowledge-graph size.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::interactions::Split;
use crate::kg::KnowledgeGraph;
use crate::synthetic::multiply_edges;
use crate::trainer::{HyperParams, Trainer};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub multipliers: Vec<usize>,
    /// Batches timed per epoch; the same batches for every graph size.
    pub batches: usize,
    /// Epochs timed per size; the fastest is reported.
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            multipliers: vec![1, 2, 3, 4, 5],
            batches: 50,
            repeats: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub multiplier: usize,
    pub edges: usize,
    pub seconds_per_epoch: f64,
}

/// Seconds to run `batches` training batches from a fresh model.
pub fn time_epoch(kg: &KnowledgeGraph, split: &Split, hp: &HyperParams, batches: usize) -> Result<f64> {
    let mut trainer = Trainer::new(kg, split, hp.clone())?;
    let start = Instant::now();
    trainer.run_epoch_limited(Some(batches))?;
    Ok(start.elapsed().as_secs_f64())
}

/// Times training on `base` with its edge set multiplied by each factor.
/// The split, hyperparameters and batch schedule stay fixed, so only the
/// graph changes between rows.
pub fn benchmark_scalability(
    base: &KnowledgeGraph,
    split: &Split,
    hp: &HyperParams,
    cfg: &BenchConfig,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(cfg.multipliers.len());
    for &m in &cfg.multipliers {
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed ^ m as u64);
        let kg = multiply_edges(base, m, &mut rng)?;
        // One untimed warm-up pass.
        time_epoch(&kg, split, hp, cfg.batches.min(5))?;
        let mut best = f64::INFINITY;
        for _ in 0..cfg.repeats.max(1) {
            best = best.min(time_epoch(&kg, split, hp, cfg.batches)?);
        }
        rows.push(BenchRow {
            multiplier: m,
            edges: kg.edge_count(),
            seconds_per_epoch: best,
        });
    }
    Ok(rows)
}

pub fn write_bench_csv(mut out: impl Write, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(out, "multiplier,seconds_per_epoch")?;
    for r in rows {
        writeln!(out, "{},{}", r.multiplier, r.seconds_per_epoch)?;
    }
    Ok(())
}
