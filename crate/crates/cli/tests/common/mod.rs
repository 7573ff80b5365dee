//! Helpers shared by the integration test binaries; each uses a subset.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

pub fn spellscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spellscan")).args(args).output().expect("spawn spellscan")
}

/// Runs a command that must succeed and returns its stdout.
pub fn ok(args: &[&str]) -> String {
    let out = spellscan(args);
    assert!(
        out.status.success(),
        "spellscan {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Header and records of a JSONL artifact.
pub fn read_jsonl(p: &Path) -> (Option<serde_json::Value>, Vec<serde_json::Value>) {
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in std::fs::read_to_string(p).unwrap().lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        match v.get("header") {
            Some(h) if i == 0 => header = Some(h.clone()),
            _ => rows.push(v),
        }
    }
    (header, rows)
}

/// ingest, extend-vocab, build, train, predict and evaluate on the bundled
/// corpus. Every artifact lands in `dir`.
pub fn pipeline(dir: &Path, epochs: usize) {
    let p = |name: &str| dir.join(name);
    let lexicon = data("hp_spells.jsonl");
    ok(&["ingest", "--input", path(&data("synthetic")), "--out", path(&p("segments.jsonl"))]);
    ok(&[
        "extend-vocab",
        "--vocab",
        path(&data("desk_vocab.txt")),
        "--lexicon",
        path(&lexicon),
        "--out",
        path(&p("vocab.txt")),
    ]);
    ok(&[
        "build",
        "--segments",
        path(&p("segments.jsonl")),
        "--lexicon",
        path(&lexicon),
        "--out",
        path(&p("dataset")),
    ]);
    ok(&[
        "train",
        "--dataset",
        path(&p("dataset")),
        "--vocab",
        path(&p("vocab.txt")),
        "--epochs",
        &epochs.to_string(),
        "--out",
        path(&p("model.ckpt")),
    ]);
    ok(&[
        "predict",
        "--checkpoint",
        path(&p("model.ckpt")),
        "--segments",
        path(&p("dataset/eval.jsonl")),
        "--out",
        path(&p("predictions.jsonl")),
    ]);
    ok(&[
        "evaluate",
        "--predictions",
        path(&p("predictions.jsonl")),
        "--gold",
        path(&p("dataset/eval.jsonl")),
        "--task",
        "sequence",
        "--out",
        path(&p("report.json")),
    ]);
}
