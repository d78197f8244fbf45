use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn nbeats(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nbeats"))
        .args(args)
        .env_remove("NBEATS_WORKERS")
        .output()
        .expect("spawn nbeats")
}

fn ok(args: &[&str]) -> String {
    let out = nbeats(args);
    assert!(
        out.status.success(),
        "nbeats {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: [&str; 20] = [
    "--profile", "desk", "--iterations", "15", "--batch-size", "8", "--width", "16", "--blocks", "2",
    "--layers", "2", "--lookbacks", "2", "--losses", "smape,mase", "--repeats", "1", "--workers", "1",
];

struct Corpora {
    _dir: tempfile::TempDir,
    root: PathBuf,
    source: PathBuf,
    target: PathBuf,
}

fn corpora() -> Corpora {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let (src, tgt) = (root.join("src"), root.join("tgt"));
    ok(&["convert", "--synthetic", "source", "--count", "40", "--seed", "1", "--out", s(&src)]);
    ok(&["convert", "--synthetic", "target", "--count", "12", "--seed", "2", "--out", s(&tgt)]);
    Corpora {
        source: src.join("manifest.json"),
        target: tgt.join("manifest.json"),
        root,
        _dir: dir,
    }
}

fn train(c: &Corpora, target: &Path, out: &Path) {
    let mut args = vec!["train", "--source", s(&c.source), "--target", s(target), "--out", s(out)];
    args.extend(TINY);
    args.extend(["--share-weights", "true", "--seed", "5"]);
    ok(&args);
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Every regular file under `dir` except timing sidecars, in path order.
fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with(".timing.json") {
                let bytes = read(&p);
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

fn eval_json(dir: &Path) -> Value {
    let (_, bytes) = files(dir)
        .into_iter()
        .find(|(p, _)| {
            let n = p.to_string_lossy();
            n.starts_with("eval_") && n.ends_with(".json")
        })
        .expect("evaluation json written");
    serde_json::from_slice(&bytes).unwrap()
}

#[test]
fn full_pipeline_produces_every_output() {
    let c = corpora();
    let ck = c.root.join("ck");
    train(&c, &c.target, &ck);
    assert!(ck.join("checkpoints.json").is_file());

    let zs = c.root.join("zs");
    let line = ok(&["zeroshot", "--checkpoints", s(&ck), "--target", s(&c.target), "--out", s(&zs), "--workers", "1"]);
    assert!(line.contains("smape"), "{line}");
    let report = eval_json(&zs);
    assert_eq!(report["digest_before"], report["digest_after"]);
    assert_eq!(report["member_count"], 2);
    assert!(report["headline"].as_f64().unwrap().is_finite());

    let sw = c.root.join("sweep");
    let mut args = vec![
        "sweep", "--source", s(&c.source), "--target", s(&c.target), "--out", s(&sw),
        "--block-counts", "1,2", "--sharing", "both", "--resamples", "10",
    ];
    args.extend(TINY);
    ok(&args);

    let diag = c.root.join("diag").join("diagnostics.json");
    ok(&["diagnose", "--checkpoint", s(&ck), "--out", s(&diag), "--probes", "4", "--max-blocks", "3", "--workers", "1"]);
    let d: Value = serde_json::from_slice(&read(&diag)).unwrap();
    assert!(d["shift_recursion_error"].as_f64().unwrap() < 1e-9);

    let rep = c.root.join("report");
    ok(&["report", "--artifacts", s(&c.root), "--out", s(&rep)]);
    for f in ["table.csv", "sweep_plot.csv", "diagnostics.csv"] {
        let text = String::from_utf8(read(&rep.join(f))).unwrap();
        assert!(text.starts_with("# config_digests: "), "{f}: {text}");
    }

    // One sweep row per (block count, sharing) pair.
    let plot = String::from_utf8(read(&rep.join("sweep_plot.csv"))).unwrap();
    let mut keys: Vec<(String, String)> = plot
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("source,"))
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            (cols[4].to_string(), cols[5].to_string())
        })
        .collect();
    keys.sort();
    let want: Vec<(String, String)> = [("1", "shared"), ("1", "unique"), ("2", "shared"), ("2", "unique")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    assert_eq!(keys, want);
}

#[test]
fn reruns_are_byte_identical() {
    let c = corpora();
    let (a, b) = (c.root.join("a"), c.root.join("b"));
    for out in [&a, &b] {
        train(&c, &c.target, &out.join("ck"));
        ok(&["zeroshot", "--checkpoints", s(&out.join("ck")), "--target", s(&c.target), "--out", s(&out.join("zs"))]);
    }
    let (fa, fb) = (files(&a), files(&b));
    assert!(!fa.is_empty());
    let names = |f: &[(PathBuf, Vec<u8>)]| f.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>();
    assert_eq!(names(&fa), names(&fb));
    for ((p, x), (_, y)) in fa.iter().zip(&fb) {
        // The training log embeds the output directory, which differs by construction.
        if p.ends_with("training.json") {
            continue;
        }
        assert!(x == y, "{} differs between runs", p.display());
    }
}

#[test]
fn evaluating_on_the_training_corpus_leaves_weights_untouched() {
    let c = corpora();
    let ck = c.root.join("ck");
    train(&c, &c.source, &ck);
    let before = files(&ck);
    let zs = c.root.join("zs");
    ok(&["zeroshot", "--checkpoints", s(&ck), "--target", s(&c.source), "--out", s(&zs)]);
    assert_eq!(files(&ck), before);
    let report = eval_json(&zs);
    assert_eq!(report["digest_before"], report["digest_after"]);
}

#[test]
fn empty_input_fails_with_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("Monthly.csv");
    std::fs::write(&input, "").unwrap();
    let out = nbeats(&["convert", "--layout", "generic", "--input", s(&input), "--out", s(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let out = nbeats(&["report", "--artifacts", s(dir.path()), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_fields_are_rejected() {
    let c = corpora();
    let cfg = c.root.join("run.json");
    std::fs::write(&cfg, r#"{"profile": "desk", "train": {"iterashuns": 3}}"#).unwrap();
    let out = nbeats(&["train", "--config", s(&cfg), "--source", s(&c.source), "--out", s(&c.root.join("ck"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("iterashuns"));
}
