use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kgnn_ls::bench::{benchmark_scalability, write_bench_csv, BenchConfig};
use kgnn_ls::dataset::{DataPaths, Dataset};
use kgnn_ls::eval::DEFAULT_KS;
use kgnn_ls::gradcheck::{grad_check, GradCheckConfig};
use kgnn_ls::kg::{load_kg, proximity_study, DEFAULT_DISTANCE_CAP};
use kgnn_ls::label_smoothness::{propagate_graph, Propagation};
use kgnn_ls::scoring::relation_weights;
use kgnn_ls::synthetic::{gen_synthetic, SyntheticSpec, RATING_THRESHOLD};
use kgnn_ls::trainer::{checkpoint_load, checkpoint_save, parse_config, write_metrics_csv, HyperParams, Trainer};
use kgnn_ls::{Error, Result, UserId};

#[derive(Parser)]
#[command(
    name = "kgnn-ls",
    version,
    about = "Knowledge-graph recommender with label-smoothness regularization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write metrics.csv plus checkpoints.
    Train(TrainArgs),
    /// Report AUC and Recall@K of a checkpoint on the test or validation rows.
    Evaluate(EvaluateArgs),
    /// Propagate one user's labels over the graph and print them as CSV.
    Propagate(PropagateArgs),
    /// Graph statistics and the item-pair distance study.
    AnalyzeKg(AnalyzeArgs),
    /// Write a synthetic dataset.
    GenSynthetic(GenArgs),
    /// Seconds per epoch as the graph's edge count is multiplied.
    Benchmark(BenchArgs),
    /// Compare analytic and finite-difference gradients.
    GradCheck(GradArgs),
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    #[arg(long)]
    triples: Option<PathBuf>,
    #[arg(long)]
    item_map: Option<PathBuf>,
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Ratings at or above are positive; omit when every row is positive.
    #[arg(long)]
    threshold: Option<f64>,
    /// Directory holding triples.tsv, item_map.tsv and ratings.tsv.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

impl DataArgs {
    fn merge_config(&mut self, key: &str, value: &str) -> Result<bool> {
        let path = || Some(PathBuf::from(value));
        match key {
            "triples" => self.triples = self.triples.take().or_else(path),
            "item_map" | "item-map" => self.item_map = self.item_map.take().or_else(path),
            "ratings" => self.ratings = self.ratings.take().or_else(path),
            "data_dir" | "data-dir" => self.data_dir = self.data_dir.take().or_else(path),
            "threshold" => {
                if self.threshold.is_none() {
                    let t = value
                        .parse()
                        .map_err(|_| Error::HyperParam(format!("cannot parse threshold={value}")))?;
                    self.threshold = Some(t);
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn paths(&self) -> Result<DataPaths> {
        let from_dir = |name: &str| self.data_dir.as_ref().map(|d| d.join(name));
        let need = |p: Option<PathBuf>, what: &str| {
            p.ok_or_else(|| Error::Validation(format!("missing --{what} (or --data-dir)")))
        };
        Ok(DataPaths {
            triples: need(self.triples.clone().or_else(|| from_dir("triples.tsv")), "triples")?,
            item_map: need(self.item_map.clone().or_else(|| from_dir("item_map.tsv")), "item-map")?,
            ratings: need(self.ratings.clone().or_else(|| from_dir("ratings.tsv")), "ratings")?,
            threshold: self.threshold,
        })
    }
}

#[derive(Args, Clone, Default)]
struct HpArgs {
    /// Named setting: movie, book, music or restaurant.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long = "S")]
    s: Option<usize>,
    #[arg(long = "d")]
    d: Option<usize>,
    #[arg(long = "L")]
    l: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "K")]
    k: Option<usize>,
}

impl HpArgs {
    fn apply(&self, hp: &mut HyperParams) -> Result<()> {
        if let Some(p) = &self.preset {
            hp.set("preset", p)?;
        }
        let overrides: [(&str, Option<String>); 10] = [
            ("S", self.s.map(|x| x.to_string())),
            ("d", self.d.map(|x| x.to_string())),
            ("L", self.l.map(|x| x.to_string())),
            ("lambda", self.lambda.map(|x| x.to_string())),
            ("gamma", self.gamma.map(|x| x.to_string())),
            ("eta", self.eta.map(|x| x.to_string())),
            ("epochs", self.epochs.map(|x| x.to_string())),
            ("batch_size", self.batch_size.map(|x| x.to_string())),
            ("seed", self.seed.map(|x| x.to_string())),
            ("K", self.k.map(|x| x.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                hp.set(key, &v)?;
            }
        }
        Ok(())
    }
}

#[derive(Args)]
struct TrainArgs {
    /// key=value file with hyperparameters and data paths; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hp: HpArgs,
    #[arg(long, default_value = "run")]
    out_dir: PathBuf,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Which rows to score: test or validation.
    #[arg(long, default_value = "test")]
    rows: String,
    /// Use the final parameters instead of the best validation epoch.
    #[arg(long)]
    last: bool,
}

#[derive(Args)]
struct PropagateArgs {
    /// User token from the ratings file, or a 0-based user index.
    #[arg(long)]
    user: String,
    #[command(flatten)]
    data: DataArgs,
    /// Relation weights come from this model; all weights are 1 without it.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Iterate to this tolerance instead of solving directly.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Seed of the negative sampling that supplies label-0 clamps.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    #[arg(long, default_value_t = DEFAULT_DISTANCE_CAP)]
    cap: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 2000)]
    entities: usize,
    #[arg(long, default_value_t = 300)]
    items: usize,
    #[arg(long, default_value_t = 4)]
    relations: usize,
    #[arg(long, default_value_t = 100)]
    users: usize,
    #[arg(long, default_value_t = 1.0)]
    strength: f64,
    #[arg(long, default_value_t = 20)]
    positives_per_user: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Dataset to scale; a default synthetic dataset when omitted.
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hp: HpArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    multipliers: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    batches: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let mut data = args.data.clone();
    let mut hp = HyperParams::default();
    if let Some(cfg) = &args.config {
        let text = std::fs::read_to_string(cfg).map_err(|e| io_err(cfg, e))?;
        for (k, v) in parse_config(&text)? {
            if !hp.set(&k, &v)? && !data.merge_config(&k, &v)? {
                return Err(Error::HyperParam(format!("unknown config key {k}")));
            }
        }
    }
    args.hp.apply(&mut hp)?;

    let resume = args.resume.as_ref().map(checkpoint_load).transpose()?;
    if let Some(ckpt) = &resume {
        ckpt.check_compatible(
            &hp,
            ckpt.params.users.nrows(),
            ckpt.params.relations.nrows(),
            ckpt.params.entities.nrows(),
        )?;
    }
    let ds = Dataset::load(&data.paths()?, hp.seed)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    let trainer = match resume {
        Some(mut ckpt) => {
            ckpt.hp.epochs = hp.epochs;
            Trainer::resume(&ds.kg, &ds.split, ckpt)?
        }
        None => Trainer::new(&ds.kg, &ds.split, hp)?,
    };
    eprintln!(
        "{} entities, {} edges, {} items, {} users, {} train rows",
        ds.kg.entity_count(),
        ds.kg.edge_count(),
        ds.kg.item_count(),
        ds.split.train.user_count(),
        ds.split.train.len()
    );
    let outcome = match trainer.train() {
        Ok(o) => o,
        Err(Error::Diverged {
            epoch,
            reason,
            last_good,
        }) => {
            let path = args.out_dir.join("last_good.ckpt");
            checkpoint_save(&path, &last_good)?;
            eprintln!("saved {}", path.display());
            return Err(Error::Diverged {
                epoch,
                reason,
                last_good,
            });
        }
        Err(e) => return Err(e),
    };
    let metrics = args.out_dir.join("metrics.csv");
    let f = File::create(&metrics).map_err(|e| io_err(&metrics, e))?;
    write_metrics_csv(BufWriter::new(f), &outcome.log).map_err(|e| io_err(&metrics, e))?;
    let ckpt = args.out_dir.join("model.ckpt");
    checkpoint_save(&ckpt, &outcome.last)?;
    println!("best epoch {}", outcome.best_epoch);
    println!("wrote {} and {}", metrics.display(), ckpt.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let ckpt = checkpoint_load(&args.checkpoint)?;
    let ds = Dataset::load(&args.data.paths()?, ckpt.hp.seed)?;
    ckpt.check_compatible(
        &ckpt.hp,
        ds.split.train.user_count(),
        ds.kg.relation_count(),
        ds.kg.entity_count(),
    )?;
    let target = match args.rows.as_str() {
        "test" => &ds.split.test,
        "validation" => &ds.split.validation,
        other => {
            return Err(Error::Validation(format!(
                "--rows must be test or validation, got {other}"
            )))
        }
    };
    let params = match (&ckpt.best, args.last) {
        (Some((_, _, best)), false) => best.clone(),
        _ => ckpt.params.clone(),
    };
    let hp = ckpt.hp.clone();
    let trainer = Trainer::resume(&ds.kg, &ds.split, kgnn_ls::trainer::Checkpoint { params, ..ckpt })?;
    let report = trainer.evaluate(target, &DEFAULT_KS)?;
    println!("metric,value");
    println!("auc,{}", report.auc);
    for (k, r) in &report.recall_at {
        println!("recall@{k},{r}");
    }
    eprintln!("{} users with positives, S={}", report.users_evaluated, hp.sample_size);
    Ok(())
}

fn propagate(args: PropagateArgs) -> Result<()> {
    let ds = Dataset::load(&args.data.paths()?, args.seed)?;
    let index = ds.raw.user_index();
    let user = match index.get(args.user.as_str()) {
        Some(&u) => u,
        None => match args.user.parse::<usize>() {
            Ok(i) if i < ds.raw.user_count() => UserId::from_index(i),
            _ => return Err(Error::Validation(format!("unknown user {}", args.user))),
        },
    };
    let weights = match &args.checkpoint {
        Some(p) => {
            let ckpt = checkpoint_load(p)?;
            ckpt.check_compatible(
                &ckpt.hp,
                ds.raw.user_count(),
                ds.kg.relation_count(),
                ds.kg.entity_count(),
            )?;
            relation_weights(ckpt.params.users.row(user.index()), ckpt.params.relations.view())
        }
        None => vec![1.0; ds.kg.relation_count()],
    };
    let clamps: Vec<_> = ds
        .matrix
        .user_rows(user)
        .iter()
        .map(|&(v, y)| (ds.kg.item_entity(v), y as f64))
        .collect();
    let mode = match args.tol {
        Some(tol) => Propagation::Converged {
            tol,
            max_iter: args.max_iter,
        },
        None => Propagation::Exact,
    };
    let result = propagate_graph(&ds.kg, &weights, &clamps, mode)?;
    let mut out = output(&args.out)?;
    let write = |out: &mut dyn Write| -> io::Result<()> {
        writeln!(out, "entity,label")?;
        for (e, l) in result.entities.iter().zip(&result.labels) {
            writeln!(out, "{},{}", ds.kg.entity_token(*e), l)?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| io_err(Path::new("<output>"), e))?;
    eprintln!("harmonic residual {:e}", result.residual);
    eprintln!(
        "{} clamped, {} labeled, {} unreachable, {} iterations",
        clamps.len(),
        result.entities.len(),
        result.unreachable,
        result.iterations
    );
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let paths = args.data.paths();
    let (kg, positives) = match paths {
        Ok(p) => {
            let ds = Dataset::load(&p, args.seed)?;
            (ds.kg, Some(ds.raw.positives))
        }
        Err(_) => {
            let d = &args.data;
            let from_dir = |name: &str| d.data_dir.as_ref().map(|x| x.join(name));
            let t = d.triples.clone().or_else(|| from_dir("triples.tsv"));
            let m = d.item_map.clone().or_else(|| from_dir("item_map.tsv"));
            match (t, m) {
                (Some(t), Some(m)) => (load_kg(t, m)?, None),
                _ => return Err(Error::Validation("missing --triples/--item-map (or --data-dir)".into())),
            }
        }
    };
    eprintln!(
        "{} entities, {} edges, {} relations, {} items, max degree {}",
        kg.entity_count(),
        kg.edge_count(),
        kg.relation_count(),
        kg.item_count(),
        kg.max_degree()
    );
    let Some(positives) = positives else {
        return Ok(());
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let report = proximity_study(&kg, &positives, args.pairs, args.cap, &mut rng)?;
    eprintln!(
        "mean distance: common user {:.3}, no common user {:.3}",
        report.common_user.mean(),
        report.no_common_user.mean()
    );
    let mut out = output(&args.out)?;
    report
        .write_csv(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| io_err(Path::new("<output>"), e))
}

fn gen(args: GenArgs) -> Result<()> {
    let spec = SyntheticSpec {
        entities: args.entities,
        items: args.items,
        relations: args.relations,
        users: args.users,
        strength: args.strength,
        seed: args.seed,
        positives_per_user: args.positives_per_user,
        attributes_per_relation: None,
    };
    let data = gen_synthetic(&spec)?;
    let files = data.write(&args.out_dir)?;
    println!(
        "wrote {}, {}, {} (positives are ratings >= {RATING_THRESHOLD})",
        files.triples.display(),
        files.item_map.display(),
        files.ratings.display()
    );
    Ok(())
}

fn benchmark(args: BenchArgs) -> Result<()> {
    let mut hp = HyperParams {
        learning_rate: 2e-2,
        batch_size: 16,
        ..HyperParams::default()
    };
    args.hp.apply(&mut hp)?;
    let ds = match args.data.paths() {
        Ok(p) => Dataset::load(&p, hp.seed)?,
        Err(_) => {
            let data = gen_synthetic(&SyntheticSpec {
                seed: hp.seed,
                ..SyntheticSpec::default()
            })?;
            let raw = data.raw_ratings();
            Dataset::from_parts(data.kg, raw, hp.seed)?
        }
    };
    let cfg = BenchConfig {
        multipliers: args.multipliers,
        batches: args.batches,
        repeats: args.repeats,
    };
    let rows = benchmark_scalability(&ds.kg, &ds.split, &hp, &cfg)?;
    let mut out = output(&args.out)?;
    write_bench_csv(&mut out, &rows)
        .and_then(|_| out.flush())
        .map_err(|e| io_err(Path::new("<output>"), e))?;
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        eprintln!("ratio {:.3}", last.seconds_per_epoch / first.seconds_per_epoch);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(a) => train(a)?,
        Command::Evaluate(a) => evaluate(a)?,
        Command::Propagate(a) => propagate(a)?,
        Command::AnalyzeKg(a) => analyze(a)?,
        Command::GenSynthetic(a) => gen(a)?,
        Command::Benchmark(a) => benchmark(a)?,
        Command::GradCheck(a) => {
            let r = grad_check(&GradCheckConfig {
                seed: a.seed,
                ..GradCheckConfig::default()
            })?;
            println!("max relative error {:e}", r.max_rel_error);
            eprintln!(
                "{} parameters checked; worst {}[{}]: analytic {:e}, numeric {:e}",
                r.checked, r.worst.0, r.worst.1, r.analytic, r.numeric
            );
            if r.max_rel_error >= a.tolerance {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
