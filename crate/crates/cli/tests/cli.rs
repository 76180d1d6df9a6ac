use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nhdp_core::evalkit::{CURVE_CSV_HEADER, EVAL_CSV_HEADER};
use nhdp_core::training::ProgressRecord;

fn nhdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhdp")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nhdp(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &[&str] = &["--trunc", "3,2", "--batch", "32", "--max-epochs", "2"];

fn synth(dir: &Path) {
    ok(&["synth", "--vocab", "40", "--docs", "120", "--words", "20", "--trunc", "2,2", "--eta", "0.05", "--seed", "3", "--out", p(dir)]);
}

#[test]
fn seed_is_mandatory() {
    let dir = tempfile::tempdir().unwrap();
    let out = nhdp(&["synth", "--out", p(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn help_documents_csv_columns() {
    assert!(ok(&["eval", "--help"]).contains(EVAL_CSV_HEADER));
    assert!(ok(&["curve", "--help"]).contains(CURVE_CSV_HEADER));
    assert!(ok(&["sweep", "--help"]).contains("level<l>_mean"));
}

#[test]
fn synth_train_eval_context_export() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    assert!(d.join("truth.json").exists());
    let corpus = d.join("corpus.txt");
    let model = d.join("model.json");

    let mut args = vec!["train", "--corpus", p(&corpus), "--out", p(&model), "--seed", "5"];
    args.extend_from_slice(SMALL);
    let log = ok(&args);
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some(ProgressRecord::TSV_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    for row in &rows {
        let fields: Vec<&str> = row.split('\t').collect();
        assert_eq!(fields.len(), 6);
        assert!(fields.iter().all(|f| f.parse::<f64>().is_ok()), "{row}");
    }

    let csv = ok(&["eval", "--model", p(&model), "--corpus", p(&corpus), "--seed", "7"]);
    let mut csv_lines = csv.lines();
    assert_eq!(csv_lines.next(), Some(EVAL_CSV_HEADER));
    let values: Vec<f64> = csv_lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let (ll, ppl) = (values[6], values[7]);
    assert!(((-ll).exp() - ppl).abs() <= 1e-9 * ppl);

    // Training on the matching split side still evaluates cleanly.
    let held = d.join("held.json");
    let mut args = vec!["train", "--corpus", p(&corpus), "--out", p(&held), "--seed", "5", "--r-td", "0.9", "--split-seed", "7"];
    args.extend_from_slice(SMALL);
    ok(&args);
    let csv = ok(&["eval", "--model", p(&held), "--corpus", p(&corpus), "--seed", "7"]);
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(row[7].is_finite() && row[7] > 1.0);
    assert!(!nhdp(&["train", "--corpus", p(&corpus), "--out", p(&held), "--seed", "5", "--r-td", "0.9"]).status.success());

    let text = fs::read_to_string(&corpus).unwrap();
    let token = text.lines().nth(2).unwrap().split('\t').nth(1).unwrap().to_string();
    let ctx = ok(&["context", &token, "--model", p(&model), "--corpus", p(&corpus), "--top-k", "2"]);
    assert!(ctx.contains("#1 ") && ctx.contains("#2 "));
    let bad = nhdp(&["context", "w_not_there", "--model", p(&model), "--corpus", p(&corpus)]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown token"));

    let dot = ok(&["export", "--model", p(&model), "--corpus", p(&corpus), "--format", "dot", "--prune", "0.005"]);
    assert!(dot.starts_with("digraph"));
    let json = ok(&["export", "--model", p(&model), "--format", "json"]);
    let back = nhdp_core::export::import_json(&json).unwrap();
    let (_, original) = nhdp_core::model::ModelFile::load(&model, None).unwrap();
    assert_eq!(back, original);
}

#[test]
fn curve_and_sweep_emit_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let corpus = d.join("corpus.txt");
    let mut args = vec!["curve", "--corpus", p(&corpus), "--fractions", "0.3,0.9", "--runs", "2", "--seed", "1"];
    args.extend_from_slice(SMALL);
    let csv = ok(&args);
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with(CURVE_CSV_HEADER));

    let mut args = vec!["sweep", "--corpus", p(&corpus), "--param", "gamma1", "--grid", "0.5:1.0:0.5", "--subset", "60", "--seed", "1"];
    args.extend_from_slice(SMALL);
    let csv = ok(&args);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let f: Vec<f64> = row.split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert!((f[2] + f[3] - 2.0).abs() < 1e-12);
    }
    assert!(!nhdp(&["sweep", "--corpus", p(&corpus), "--param", "alpha", "--grid", "1", "--seed", "1"]).status.success());
}

#[test]
fn ingest_builds_a_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("trace.jsonl");
    let mut lines = String::new();
    for u in 0..3 {
        for i in 0..40u64 {
            let payload = if i == 5 {
                "System.NullReferenceException: boom\\n   at A.B.C() in X.cs:line 12".to_string()
            } else {
                format!("Cmd{}", (i / 10 + u as u64) % 4)
            };
            let kind = if i == 5 { "stack_trace" } else { "command" };
            lines.push_str(&format!("{{\"ts\":{},\"user\":\"u{u}\",\"kind\":\"{kind}\",\"payload\":\"{payload}\"}}\n", i * 10_000 + (i / 20) * 1_000_000));
        }
    }
    fs::write(&log, lines).unwrap();
    let out = dir.path().join("corpus.txt");
    ok(&["ingest", "--input", p(&log), "--window", "10", "--min-count", "2", "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("#nhdp-corpus v1"));
    assert!(text.contains("System.NullReferenceException@"));
}

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    fs::write(d.join("pipeline.toml"), "seed = 11\ncorpus = \"corpus.txt\"\n[model]\ntruncation = [3, 2]\n[train]\nbatch_size = 32\nmax_epochs = 2\n").unwrap();
    let config = d.join("pipeline.toml");
    ok(&["run", "--config", p(&config), "--out", p(&d.join("a"))]);
    ok(&["run", "--config", p(&config), "--out", p(&d.join("b"))]);
    for f in ["corpus.txt", "model.json", "eval.csv", "tree.dot", "provenance.json"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    fs::write(d.join("bad.toml"), "seed = 1\n").unwrap();
    let out = nhdp(&["run", "--config", p(&d.join("bad.toml"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("`corpus`"));
}
