use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn pim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pim")).current_dir(dir).args(args).output().expect("spawn pim")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pim(dir, args);
    assert!(out.status.success(), "pim {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = pim(dir, args);
    assert!(!out.status.success(), "pim {args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "one-line error expected, got {err:?}");
    assert!(err.starts_with("error: "), "{err}");
    err
}

fn read(dir: &Path, f: &str) -> Vec<u8> {
    fs::read(dir.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"))
}

const SYNTH: &[&str] = &["synth", "--grid", "4x4", "--paths", "30", "--seed", "7", "--out", "data"];

fn prepare(dir: &Path) {
    ok(dir, SYNTH);
    ok(dir, &["features", "--graph", "data/graph.csv", "--dim", "4", "--seed", "7", "--walks-per-node", "4", "--out", "data/f.txt"]);
}

#[test]
fn synth_writes_documented_files_and_manifest() {
    let t = TempDir::new().unwrap();
    ok(t.path(), SYNTH);
    for f in ["graph.csv", "paths.txt", "travel_times.csv", "rank_scores.csv", "manifest.json"] {
        assert!(t.path().join("data").join(f).is_file(), "{f} missing");
    }
    let m: serde_json::Value = serde_json::from_slice(&read(t.path(), "data/manifest.json")).unwrap();
    assert_eq!(m["subcommand"], "synth");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["grid"], "4x4");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 4);
    let paths = String::from_utf8(read(t.path(), "data/paths.txt")).unwrap();
    assert_eq!(paths.lines().count(), 30);
}

#[test]
fn pipeline_stages_are_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let stages: &[&[&str]] = &[
        SYNTH,
        &["features", "--graph", "data/graph.csv", "--dim", "4", "--seed", "7", "--walks-per-node", "4", "--out", "data/f.txt"],
        &["negatives", "--graph", "data/graph.csv", "--paths", "data/paths.txt", "--seed", "7", "--out", "data/n.txt"],
        &[
            "train", "--graph", "data/graph.csv", "--paths", "data/paths.txt", "--features", "data/f.txt", "--negatives",
            "data/n.txt", "--epochs", "3", "--hidden", "3", "--repr-dim", "3", "--out", "run",
        ],
        &["embed", "--graph", "data/graph.csv", "--features", "data/f.txt", "--paths", "data/paths.txt", "--checkpoint", "run", "--out", "e.txt"],
        &["eval", "--embeddings", "e.txt", "--labels", "data/travel_times.csv", "--predictions", "p.csv", "--out", "r.csv"],
        &[
            "finetune", "--graph", "data/graph.csv", "--features", "data/f.txt", "--paths", "data/paths.txt", "--labels",
            "data/travel_times.csv", "--checkpoint", "run", "--epochs", "2", "--out", "ft",
        ],
    ];
    for args in stages {
        ok(a.path(), args);
        ok(b.path(), args);
    }
    for f in [
        "data/graph.csv", "data/paths.txt", "data/travel_times.csv", "data/rank_scores.csv", "data/f.txt", "data/n.txt",
        "run/checkpoint.bin", "run/checkpoint.manifest", "run/loss.csv", "e.txt", "p.csv", "r.csv", "ft/predictions.csv",
    ] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs");
    }
}

#[test]
fn eval_identical_files_gives_zero_mae() {
    let t = TempDir::new().unwrap();
    ok(t.path(), SYNTH);
    ok(t.path(), &["eval", "--pred", "data/travel_times.csv", "--truth", "data/travel_times.csv", "--out", "r.csv"]);
    let report = String::from_utf8(read(t.path(), "r.csv")).unwrap();
    let mut lines = report.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mae = header.iter().position(|h| *h == "mae").unwrap();
    assert_eq!(row[mae].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn ranking_eval_reports_rank_correlations() {
    let t = TempDir::new().unwrap();
    ok(t.path(), SYNTH);
    let out = ok(t.path(), &["eval", "--task", "ranking", "--pred", "data/travel_times.csv", "--truth", "data/rank_scores.csv", "--out", "r.csv"]);
    // Higher travel time means a lower score, so the orderings are reversed.
    assert!(out.contains("tau"), "{out}");
    let report = String::from_utf8(read(t.path(), "r.csv")).unwrap();
    let row: Vec<f64> = report.lines().nth(1).unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[4], -1.0);
    assert_eq!(row[5], -1.0);
}

#[test]
fn flags_override_config_file_and_manifest_replays() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("c.cfg"), "grid=3x3\npaths=10\nseed=1\n").unwrap();
    ok(t.path(), &["synth", "--config", "c.cfg", "--paths", "12", "--out", "d"]);
    let m: serde_json::Value = serde_json::from_slice(&read(t.path(), "d/manifest.json")).unwrap();
    assert_eq!(m["config"]["paths"], "12");
    assert_eq!(m["config"]["grid"], "3x3");
    let first = read(t.path(), "d/paths.txt");
    assert_eq!(String::from_utf8(first.clone()).unwrap().lines().count(), 12);

    fs::rename(t.path().join("d/manifest.json"), t.path().join("m.json")).unwrap();
    fs::remove_dir_all(t.path().join("d")).unwrap();
    ok(t.path(), &["synth", "--config", "m.json"]);
    assert_eq!(read(t.path(), "d/paths.txt"), first);
}

#[test]
fn inputs_are_not_modified() {
    let t = TempDir::new().unwrap();
    prepare(t.path());
    let before: Vec<Vec<u8>> = ["data/graph.csv", "data/paths.txt", "data/f.txt"].iter().map(|f| read(t.path(), f)).collect();
    ok(t.path(), &["negatives", "--graph", "data/graph.csv", "--paths", "data/paths.txt", "--out", "n.txt"]);
    ok(t.path(), &[
        "train", "--graph", "data/graph.csv", "--paths", "data/paths.txt", "--features", "data/f.txt", "--epochs", "1",
        "--hidden", "2", "--repr-dim", "2", "--out", "run",
    ]);
    let after: Vec<Vec<u8>> = ["data/graph.csv", "data/paths.txt", "data/f.txt"].iter().map(|f| read(t.path(), f)).collect();
    assert_eq!(before, after);
}

#[test]
fn errors_are_one_line_with_nonzero_exit() {
    let t = TempDir::new().unwrap();
    assert!(fails(t.path(), &["synth", "--bogus", "1"]).contains("usage"));
    assert!(fails(t.path(), &["features", "--graph", "missing.csv", "--out", "f.txt"]).contains("missing.csv"));
    assert!(fails(t.path(), &["synth", "--paths", "5"]).contains("--out"));
    fs::write(t.path().join("bad.cfg"), "wat=1\n").unwrap();
    assert!(fails(t.path(), &["synth", "--config", "bad.cfg", "--out", "d"]).contains("wat"));
    assert!(fails(t.path(), &["synth", "--grid", "8by8", "--out", "d"]).contains("config"));

    ok(t.path(), SYNTH);
    let err = fails(t.path(), &[
        "negatives", "--graph", "data/graph.csv", "--paths", "data/paths.txt", "--k", "2", "--tau1", "0.6", "--tau2", "0.9",
        "--out", "n.txt",
    ]);
    assert!(err.starts_with("error: config:"), "{err}");
    assert!(fails(t.path(), &["train", "--graph", "data/graph.csv", "--paths", "data/paths.txt", "--features", "nope", "--out", "r"])
        .contains("nope"));
}

#[test]
fn help_documents_every_subcommand() {
    let t = TempDir::new().unwrap();
    let help = ok(t.path(), &["--help"]);
    for sub in ["synth", "features", "negatives", "train", "embed", "eval", "finetune", "ablate"] {
        assert!(help.contains(sub), "{sub} missing from help");
        ok(t.path(), &[sub, "--help"]);
    }
}

#[test]
fn ablate_mi_mode_emits_three_rows() {
    let t = TempDir::new().unwrap();
    let out = ok(t.path(), &[
        "ablate", "--axis", "mi-mode", "--grid", "4x4", "--paths", "30", "--seeds", "1", "--epochs", "2", "--dim", "4",
        "--hidden", "3", "--repr-dim", "3", "--out", "a.csv",
    ]);
    assert_eq!(out.lines().count(), 4, "{out}");
    let csv = String::from_utf8(read(t.path(), "a.csv")).unwrap();
    let labels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["global", "local", "joint"]);
    for l in csv.lines().skip(1) {
        let mae: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        assert!(mae.is_finite() && mae >= 0.0);
    }
    assert!(t.path().join("a.csv.manifest.json").is_file());
}

#[test]
fn thread_cap_does_not_change_results() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    prepare(a.path());
    prepare(b.path());
    let train = [
        "train", "--graph", "data/graph.csv", "--paths", "data/paths.txt", "--features", "data/f.txt", "--epochs", "2",
        "--hidden", "3", "--repr-dim", "3", "--out", "run",
    ];
    let one = Command::new(env!("CARGO_BIN_EXE_pim")).current_dir(a.path()).env("PIM_THREADS", "1").args(train).output().unwrap();
    assert!(one.status.success());
    ok(b.path(), &train);
    assert_eq!(read(a.path(), "run/checkpoint.bin"), read(b.path(), "run/checkpoint.bin"));
}
