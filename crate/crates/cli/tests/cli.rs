use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn driftlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftlab"))
        .current_dir(dir)
        .env_remove("DRIFTLAB_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = driftlab(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const TRAIN: &[&str] = &[
    "train", "--data", "data", "--dim", "8", "--layers", "3", "--max-len", "64", "--epochs1", "1", "--epochs2", "1",
];

/// Small wrong-binop corpus and datasets in a fresh directory.
fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(d, &["toy-corpus", "--out", "corpus", "--syn-repos", "2", "--real-repos", "4", "--syn-functions", "12", "--real-functions", "24", "--kinds", "wrong-binop"]);
    ok(d, &["build", "--corpus", "corpus", "--kind", "wrong-binop", "--out", "data", "--max-len", "64"]);
    dir
}

fn train(d: &Path, extra: &[&str]) -> String {
    let mut args = TRAIN.to_vec();
    args.extend_from_slice(extra);
    ok(d, &args)
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = workspace();
    let d = dir.path();
    for split in ["syn-train", "real-train", "real-val", "real-test"] {
        assert!(d.join("data").join(format!("{split}.jsonl")).is_file());
    }
    let log = train(d, &["--out", "m.ckpt"]);
    assert!(log.contains("[phase 1]") && log.contains("[phase 2]"));
    assert_eq!(fs::read_to_string(d.join("m.log")).unwrap(), log);
    assert!(log.lines().any(|l| l.starts_with("best_epoch=")));

    let report = ok(d, &["eval", "--checkpoint", "m.ckpt", "--data", "data", "--out", "r.json", "--plot", "pr.txt"]);
    for t in ["cls ", "cls-loc ", "cls-loc-rep "] {
        assert!(report.contains(t), "{report}");
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert!(json.get("targets").is_some());
    assert!(!fs::read_to_string(d.join("pr.txt")).unwrap().is_empty());

    let warnings = ok(d, &["scan", "--checkpoint", "m.ckpt", "--source", "corpus", "--threshold", "0"]);
    let scores: Vec<f64> = warnings
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["score"].as_f64().unwrap())
        .collect();
    assert!(!scores.is_empty());
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn phase_sections_follow_the_phase_flag() {
    let dir = workspace();
    let d = dir.path();
    let one = train(d, &["--out", "p1.ckpt", "--phase", "1"]);
    assert!(one.contains("[phase 1]") && !one.contains("[phase 2]"));
    let two = train(d, &["--out", "p2.ckpt", "--phase", "2", "--init", "p1.ckpt"]);
    assert!(!two.contains("[phase 1]") && two.contains("[phase 2]"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = workspace();
    let d = dir.path();
    ok(d, &["build", "--corpus", "corpus", "--kind", "wrong-binop", "--out", "data2", "--max-len", "64"]);
    for f in fs::read_dir(d.join("data")).unwrap() {
        let name = f.unwrap().file_name();
        assert_eq!(fs::read(d.join("data").join(&name)).unwrap(), fs::read(d.join("data2").join(&name)).unwrap());
    }
    train(d, &["--out", "a.ckpt"]);
    train(d, &["--out", "b.ckpt"]);
    assert_eq!(fs::read(d.join("a.ckpt")).unwrap(), fs::read(d.join("b.ckpt")).unwrap());
    assert_eq!(fs::read(d.join("a.log")).unwrap(), fs::read(d.join("b.log")).unwrap());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = workspace();
    let d = dir.path();
    fs::write(d.join("run.cfg"), "# training\nseed = 7\nepochs2=0\nlog-pointer-loss=true\n").unwrap();
    let mut args = vec!["--config", "run.cfg"];
    args.extend_from_slice(TRAIN);
    args.extend_from_slice(&["--out", "c.ckpt"]);
    let log = ok(d, &args);
    assert!(log.contains("seed=7"), "{log}");
    // epochs2=1 from TRAIN wins over the file.
    assert!(log.contains("[phase 2]"));
    args.extend_from_slice(&["--seed", "9"]);
    assert!(ok(d, &args).contains("seed=9"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = workspace();
    let d = dir.path();
    let mut args = TRAIN.to_vec();
    args.extend_from_slice(&["--out", "e.ckpt", "--phase", "1"]);
    let out = Command::new(env!("CARGO_BIN_EXE_driftlab")).current_dir(d).env("DRIFTLAB_SEED", "5").args(&args).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed=5"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = workspace();
    let d = dir.path();
    let mut args = TRAIN.to_vec();
    args.extend_from_slice(&["--out", "x.ckpt", "--order", "cls,cls,rep"]);
    assert_eq!(driftlab(d, &args).status.code(), Some(1));
    assert_eq!(driftlab(d, &["build", "--corpus", "corpus"]).status.code(), Some(1));
    assert_eq!(driftlab(d, &["frobnicate"]).status.code(), Some(1));
    let mut args = TRAIN.to_vec();
    args.extend_from_slice(&["--out", "x.ckpt", "--percent-syn", "0"]);
    assert_eq!(driftlab(d, &args).status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::create_dir_all(d.join("empty/repo")).unwrap();
    let out = driftlab(d, &["build", "--corpus", "empty", "--kind", "var-misuse", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no eligible functions"));
    let out = driftlab(d, &["eval", "--checkpoint", "missing.ckpt", "--data", "missing"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scan_handles_empty_dirs_duplicates_and_kind_checks() {
    let dir = workspace();
    let d = dir.path();
    train(d, &["--out", "m.ckpt", "--phase", "1"]);

    fs::create_dir(d.join("none")).unwrap();
    let out = driftlab(d, &["scan", "--checkpoint", "m.ckpt", "--source", "none"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());

    let f = "def total(xs, y):\n    s = 0\n    for x in xs:\n        s = s + x * y\n    return s\n";
    for repo in ["one", "two"] {
        fs::create_dir_all(d.join("dups").join(repo)).unwrap();
        fs::write(d.join("dups").join(repo).join("m.py"), f).unwrap();
    }
    fs::write(d.join("dups/two/broken.py"), "def f(:\n  'unterminated\n").unwrap();
    let out = ok(d, &["scan", "--checkpoint", "m.ckpt", "--source", "dups", "--threshold", "0"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1, "{out}");
    let w: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(w["repo"], "one");
    assert_eq!(w["function"], "total");
    assert_eq!(w["kind"], "wrong-binop");

    let out = driftlab(d, &["scan", "--checkpoint", "m.ckpt", "--source", "dups", "--kind", "var-misuse"]);
    assert_eq!(out.status.code(), Some(1));
}
