use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgnn-ls"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn with_data() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "gen-synthetic",
            "--out-dir",
            "data",
            "--entities",
            "400",
            "--items",
            "80",
            "--users",
            "15",
            "--positives-per-user",
            "8",
            "--seed",
            "2",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

#[test]
fn train_then_evaluate() {
    let dir = with_data();
    let d = dir.path();
    std::fs::write(
        d.join("run.txt"),
        "# small run\ndata_dir = data\nthreshold = 4\nS = 4\nd = 8\nL = 1\neta = 0.02\nbatch_size = 8\nepochs = 2\n",
    )
    .unwrap();
    let o = run(d, &["train", "--config", "run.txt", "--out-dir", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = std::fs::read_to_string(d.join("out/metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_auc,val_r10");
    assert_eq!(lines.len(), 3);

    let o = run(
        d,
        &[
            "evaluate",
            "--checkpoint",
            "out/model.ckpt",
            "--data-dir",
            "data",
            "--threshold",
            "4",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.starts_with("metric,value"));
    assert!(table.lines().any(|l| l.starts_with("auc,")));
    assert!(table.lines().any(|l| l.starts_with("recall@10,")));

    // Resuming with a different width is rejected.
    let o = run(
        d,
        &[
            "train",
            "--config",
            "run.txt",
            "--out-dir",
            "out2",
            "--resume",
            "out/model.ckpt",
            "--d",
            "4",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn propagate_prints_labels_and_residual() {
    let dir = with_data();
    let o = run(
        dir.path(),
        &["propagate", "--data-dir", "data", "--threshold", "4", "--user", "0"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("entity,label"));
    for l in lines {
        let y: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&y));
    }
    assert!(stderr(&o).contains("residual"));
}

#[test]
fn analyze_kg_reports_distances() {
    let dir = with_data();
    let o = run(
        dir.path(),
        &["analyze-kg", "--data-dir", "data", "--threshold", "4", "--pairs", "200"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("group,distance,probability"));
}

#[test]
fn benchmark_writes_rows() {
    let dir = with_data();
    let o = run(
        dir.path(),
        &[
            "benchmark",
            "--data-dir",
            "data",
            "--threshold",
            "4",
            "--multipliers",
            "1,2",
            "--batches",
            "2",
            "--repeats",
            "1",
            "--out",
            "bench.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("multiplier,seconds_per_epoch"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn grad_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["grad-check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn usage_and_io_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["train", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));

    let o = run(dir.path(), &["train", "--data-dir", "missing"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stderr(&o).is_empty());

    let o = run(
        dir.path(),
        &["evaluate", "--checkpoint", "nope.ckpt", "--data-dir", "missing"],
    );
    assert_eq!(o.status.code(), Some(1));
}
