//! End-to-end runs of the `polylink` binary on a generated dataset.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn polylink(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polylink"))
        .current_dir(dir)
        .env("POLYLINK_THREADS", "1")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = polylink(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn csv_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(str::to_string)
        .collect()
}

/// Synthesize data into `dir/gen`, then train briefly into `dir/run`.
fn synth_and_train(dir: &Path) {
    ok(dir, &["synth", "--out", "gen"]);
    ok(dir, &["train", "--config", "gen/synth-config.json", "--out", "run", "--max-epochs", "3"]);
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_and_train(dir);
    for name in ["ppi.csv", "targets.csv", "combo.csv", "mono.csv"] {
        assert!(dir.join("gen/data").join(name).exists(), "{name}");
    }
    let run = dir.join("run");
    assert!(run.join("checkpoint.bin").exists());
    assert_eq!(csv_rows(&run.join("training_log.csv")).len(), 4);
    assert!(csv_rows(&run.join("split.csv"))[0].starts_with("relation_id"));

    let common = ["--config", "gen/synth-config.json", "--out", "run", "--max-epochs", "3"];
    let with = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd];
        args.extend_from_slice(&common);
        args.extend_from_slice(extra);
        ok(dir, &args)
    };
    let stdout = with("evaluate", &["--fold", "val"]);
    assert!(stdout.starts_with("seed "), "{stdout}");
    let eval = csv_rows(&run.join("eval_val.csv"));
    // Header, one row per side effect, macro row.
    assert_eq!(eval.len(), 1 + 12 + 1);

    with("predict", &["--top-k", "5"]);
    assert_eq!(csv_rows(&run.join("predictions.csv")).len(), 1 + 5);

    with("stats", &[]);
    for name in ["stats_jaccard.csv", "stats_ks.csv", "stats_cooccurrence.csv", "stats_cooccurrence_summary.csv"] {
        assert!(csv_rows(&run.join(name)).len() > 1, "{name}");
    }

    with("export-embeddings", &[]);
    // Nodes without any record never enter the graph, so only the width is fixed.
    let emb = csv_rows(&run.join("embeddings.csv"));
    let width = emb[0].split(',').count();
    assert!(emb.len() > 120);
    assert!(emb.iter().all(|row| row.split(',').count() == width));
    assert_eq!(csv_rows(&run.join("relation_vectors.csv")).len(), 1 + 12);

    with("ingest", &["--data-dir", "gen/data"]);
    assert!(run.join("ingest_report.csv").exists());
}

#[test]
fn evaluate_without_checkpoint_fails_with_code() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--out", "gen"]);
    let out = polylink(dir, &["evaluate", "--config", "gen/synth-config.json", "--out", "empty"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("E_NO_CHECKPOINT:"), "{err}");
}

#[test]
fn mismatched_config_is_rejected_by_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_and_train(dir);
    let out = polylink(
        dir,
        &["evaluate", "--config", "gen/synth-config.json", "--out", "run", "--max-epochs", "4"],
    );
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("E_CHECKPOINT:"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    // One directory: the synthesized config records an absolute data path.
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--out", "gen"]);
    let files = ["checkpoint.bin", "eval_test.csv", "predictions.csv", "split.csv"];
    let mut seen: Vec<Vec<Vec<u8>>> = Vec::new();
    for out in ["a", "b"] {
        for cmd in ["train", "evaluate", "predict"] {
            ok(dir, &[cmd, "--config", "gen/synth-config.json", "--out", out, "--max-epochs", "3"]);
        }
        seen.push(files.iter().map(|f| fs::read(dir.join(out).join(f)).unwrap()).collect());
    }
    for (k, name) in files.iter().enumerate() {
        assert!(seen[0][k] == seen[1][k], "{name} differs between runs");
    }
}

#[test]
fn unknown_config_keys_are_format_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("bad.json"), r#"{"learning_rate": 0.1}"#).unwrap();
    let out = polylink(dir, &["train", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("E_FORMAT:"));
}

#[test]
fn planted_run_recovers_structure() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--out", "gen"]);
    for cmd in ["train", "evaluate"] {
        ok(dir, &[cmd, "--config", "gen/synth-config.json", "--out", "run"]);
    }
    let rows = csv_rows(&dir.join("run/eval_test.csv"));
    let last: Vec<&str> = rows.last().unwrap().split(',').collect();
    assert_eq!(last[0], "macro");
    let auroc: f64 = last[3].parse().unwrap();
    assert!(auroc >= 0.95, "macro AUROC {auroc}");
}
