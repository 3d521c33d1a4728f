use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tvprior(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvprior")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Parses the single JSON error line and returns (category, exit code).
fn failure(out: &Output) -> (String, i32) {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let v: Value = serde_json::from_str(stderr.trim()).unwrap_or_else(|_| panic!("not JSON: {stderr}"));
    assert!(v["message"].is_string());
    (v["error"].as_str().unwrap().to_string(), out.status.code().unwrap())
}

fn generate(dir: &Path, kind: &str, seed: &str) -> std::path::PathBuf {
    let data = dir.join(format!("{kind}.jsonl"));
    let out = tvprior(&["generate", "--kind", kind, "--seed", seed, "--out", p(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    data
}

#[test]
fn generate_evaluate_export() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.tsv");
    let data = dir.path().join("d.jsonl");
    let out = tvprior(&["generate", "--seed", "3", "--out", p(&data), "--truth", p(&truth)]);
    assert!(out.status.success());
    let truth_lines = fs::read_to_string(&truth).unwrap().lines().count();
    assert_eq!(truth_lines, 1 + 30 * 10);

    let run = dir.path().join("run");
    let out = tvprior(&[
        "evaluate", "--data", p(&data), "--model", "adaptive", "--dev", "6", "--test", "7,8", "--tau-grid", "1",
        "--out-dir", p(&run),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "model.json", "metrics.tsv", "manifest.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["steps"].as_array().unwrap().len(), 2);
    assert_eq!(report["feature_alpha"].as_array().unwrap().len(), 30);
    let metrics = fs::read_to_string(run.join("metrics.tsv")).unwrap();
    assert!(metrics.starts_with("timestep\ttrain_instances\ttest_instances\tmse\n"));
    assert!(metrics.lines().last().unwrap().starts_with("overall\t"));

    let exp = dir.path().join("exp");
    let out = tvprior(&[
        "export", "--report", p(&run.join("report.json")), "--model", p(&run.join("model.json")), "--features",
        "drifting_*", "--bins", "5", "--out-dir", p(&exp),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let hist = fs::read_to_string(exp.join("alpha_histogram.tsv")).unwrap();
    let total: usize = hist.lines().skip(1).map(|l| l.rsplit('\t').next().unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(total, 30);
    assert!(hist.lines().last().unwrap().split('\t').nth(1) == Some("0"));
    let traj = fs::read_to_string(exp.join("trajectories.tsv")).unwrap();
    // Model trained through timestep 7 for the last test step at 8.
    assert_eq!(traj.lines().count(), 1 + 10 * 7);
    assert!(traj.lines().skip(1).all(|l| l.starts_with("drifting_")));
    let sparsity = fs::read_to_string(exp.join("sparsity.tsv")).unwrap();
    assert_eq!(sparsity.lines().count(), 31);
}

#[test]
fn evaluate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "text", "5");
    let mut reports = Vec::new();
    for (k, threads) in ["1", "3"].iter().enumerate() {
        let run = dir.path().join(format!("run{k}"));
        let out = Command::new(env!("CARGO_BIN_EXE_tvprior"))
            .env("TVPRIOR_THREADS", threads)
            .args([
                "evaluate", "--data", p(&data), "--model", "lasso-one", "--dev", "4", "--test", "5", "--out-dir", p(&run),
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(fs::read(run.join("report.json")).unwrap());
        let metrics = fs::read_to_string(run.join("metrics.tsv")).unwrap();
        assert!(metrics.starts_with("timestep\ttrain_instances\ttest_instances\tnll\n"));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn train_writes_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "regression", "1");
    let model = dir.path().join("m.json");
    let out = tvprior(&[
        "train", "--data", p(&data), "--model", "ridge-ts", "--ts-alpha", "-0.3", "--through", "5", "--out", p(&model),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(v["model"], "ridge-ts");
    assert_eq!(v["hyper"]["ts_alpha"], -0.3);

    let (cat, code) = failure(&tvprior(&["train", "--data", p(&data), "--model", "lasso-one", "--through", "11", "--out", p(&model)]));
    assert_eq!((cat.as_str(), code), ("config", 2));
}

#[test]
fn errors_are_json_with_category_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "regression", "0");
    let out_dir = dir.path().join("o");

    let (cat, code) = failure(&tvprior(&["train", "--data", "/nonexistent/d.jsonl", "--model", "adaptive", "--out", "x"]));
    assert_eq!((cat.as_str(), code), ("io", 11));

    let (cat, code) = failure(&tvprior(&["train", "--data", p(&data), "--model", "bogus", "--out", "x"]));
    assert_eq!((cat.as_str(), code), ("config", 2));

    let (cat, code) = failure(&tvprior(&["train", "--no-such-flag"]));
    assert_eq!((cat.as_str(), code), ("usage", 64));

    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let (cat, code) = failure(&tvprior(&[
        "evaluate", "--data", p(&empty), "--model", "lasso-one", "--dev", "1", "--test", "2", "--out-dir", p(&out_dir),
    ]));
    assert_eq!((cat.as_str(), code), ("empty-dataset", 5));

    let garbled = dir.path().join("garbled.jsonl");
    fs::write(&garbled, "{not json\n").unwrap();
    let (cat, _) = failure(&tvprior(&[
        "evaluate", "--data", p(&garbled), "--model", "lasso-one", "--dev", "1", "--test", "2", "--out-dir", p(&out_dir),
    ]));
    assert!(cat == "parse" || cat == "json", "{cat}");

    let (cat, code) = failure(&tvprior(&["evaluate", "--data", p(&data), "--dev", "6", "--test", "7", "--out-dir", p(&out_dir)]));
    assert_eq!((cat.as_str(), code), ("config", 2));

    let out = Command::new(env!("CARGO_BIN_EXE_tvprior"))
        .env("TVPRIOR_THREADS", "0")
        .args(["train", "--data", p(&data), "--model", "lasso-one", "--out", p(&dir.path().join("m.json"))])
        .output()
        .unwrap();
    let (cat, code) = failure(&out);
    assert_eq!((cat.as_str(), code), ("config", 2));

    let (cat, code) = failure(&tvprior(&["export", "--out-dir", p(&out_dir)]));
    assert_eq!((cat.as_str(), code), ("config", 2));
}

#[test]
fn export_rejects_reports_without_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "regression", "4");
    let run = dir.path().join("run");
    let out = tvprior(&[
        "evaluate", "--data", p(&data), "--model", "ridge-one", "--dev", "6", "--test", "7", "--out-dir", p(&run),
    ]);
    assert!(out.status.success());
    let (cat, _) = failure(&tvprior(&["export", "--report", p(&run.join("report.json")), "--out-dir", p(&run)]));
    assert_eq!(cat, "config");
    let (cat, code) = failure(&tvprior(&[
        "export", "--model", p(&run.join("model.json")), "--indices", "3,99", "--out-dir", p(&run),
    ]));
    assert_eq!((cat.as_str(), code), ("lookup", 7));
}
