use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gee"))
        .args(args)
        .env("GEE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path, noise: &[&str]) {
    let mut args = vec![
        "synth", "--nodes", "80", "--blocks", "4", "--p-in", "0.25", "--p-out", "0.02", "--seed", "5", "--out-dir",
    ];
    args.push(dir.to_str().unwrap());
    for n in noise {
        args.extend(["--noise", n]);
    }
    let out = gee(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

#[test]
fn synth_then_evaluate_ranks_clean_first() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["0.05", "1.5"]);
    let out = gee(&[
        "evaluate",
        "-g",
        &path(dir.path(), "graph.txt"),
        "-c",
        &path(dir.path(), "communities.txt"),
        "-e",
        &path(dir.path(), "embedding_0.txt"),
        "-e",
        &path(dir.path(), "embedding_1.txt"),
        "--auc-samples",
        "2000",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["schema"], 1);
    assert_eq!(r["partition"]["source"], "input");
    assert_eq!(r["partition"]["communities"], 4);
    assert_eq!(r["winner"], path(dir.path(), "embedding_0.txt"));
    let combined = r["embeddings"][0]["combined"].as_f64().unwrap();
    assert_eq!(combined, 1.0);
}

#[test]
fn identical_files_score_identically() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["0.3"]);
    let copy = path(dir.path(), "copy.txt");
    std::fs::copy(dir.path().join("embedding_0.txt"), &copy).unwrap();
    let out = gee(&[
        "evaluate",
        "-g",
        &path(dir.path(), "graph.txt"),
        "-e",
        &path(dir.path(), "embedding_0.txt"),
        "-e",
        &copy,
        "--auc-samples",
        "1000",
    ]);
    assert!(out.status.success());
    let r = report(&out);
    let a = &r["embeddings"][0];
    let b = &r["embeddings"][1];
    assert_eq!(a["global"], b["global"]);
    assert_eq!(a["local"], b["local"]);
    assert_eq!(a["combined"], 1.0);
    assert_eq!(b["combined"], 1.0);
}

#[test]
fn bad_embedding_is_recorded_and_batch_continues() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["0.1"]);
    let csv = path(dir.path(), "scores.csv");
    let json = path(dir.path(), "report.json");
    let out = gee(&[
        "evaluate",
        "-g",
        &path(dir.path(), "graph.txt"),
        "-e",
        &path(dir.path(), "nope.txt"),
        "-e",
        &path(dir.path(), "embedding_0.txt"),
        "--auc-samples",
        "500",
        "--csv",
        &csv,
        "-o",
        &json,
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(r["embeddings"][0]["error"].is_string());
    assert!(r["embeddings"][1]["error"].is_null());
    assert_eq!(r["winner"], path(dir.path(), "embedding_0.txt"));

    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "name,global,local,combined");
    assert_eq!(lines.len(), 3);
}

#[test]
fn total_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["0.1"]);
    let out = gee(&[
        "evaluate",
        "-g",
        &path(dir.path(), "graph.txt"),
        "-e",
        &path(dir.path(), "nope.txt"),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = gee(&["evaluate", "-g", &path(dir.path(), "missing.txt"), "-e", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn landmark_flag_forces_landmark_mode_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["0.2"]);
    let args = [
        "evaluate",
        "-g",
        &path(dir.path(), "graph.txt"),
        "-c",
        &path(dir.path(), "communities.txt"),
        "-e",
        &path(dir.path(), "embedding_0.txt"),
        "--landmarks",
        "20",
        "--auc-samples",
        "1000",
        "--seed",
        "9",
    ];
    let first = gee(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let r = report(&first);
    let diag = &r["embeddings"][0]["diagnostics"];
    assert_eq!(diag["landmark_mode"], true);
    assert_eq!(diag["landmarks"], 20);
    assert_eq!(diag["seed"], 9);
    assert_eq!(first.stdout, gee(&args).stdout);

    let clash = gee(&[
        "evaluate", "-g", "g", "-e", "e", "--landmarks", "5", "--force-exact",
    ]);
    assert_eq!(clash.status.code(), Some(2));
}

#[test]
fn weighted_flag_and_clusterer_choice() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["0.1"]);
    let base = [
        "evaluate",
        "-g",
        &path(dir.path(), "graph.txt"),
        "-e",
        &path(dir.path(), "embedding_0.txt"),
        "--auc-samples",
        "500",
    ];
    let r = report(&gee(&base));
    assert_eq!(r["graph"]["weighted"], false);
    assert_eq!(r["partition"]["source"], "ecg");

    let mut weighted = base.to_vec();
    weighted.push("-w");
    let r = report(&gee(&weighted));
    assert_eq!(r["graph"]["weighted"], true);
    assert_eq!(r["partition"]["source"], "louvain");

    let mut louvain = base.to_vec();
    louvain.extend(["--clusterer", "louvain"]);
    let r = report(&gee(&louvain));
    assert_eq!(r["partition"]["source"], "louvain");
}
