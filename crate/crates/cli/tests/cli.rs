use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_svdformer");

fn tiny_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/tiny-synthetic.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("SVDFORMER_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn train_into(dir: &Path) -> Output {
    let cfg = tiny_config();
    run(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()])
}

fn run_dirs(dir: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs
}

#[test]
fn train_writes_artifacts_with_ten_epoch_history() {
    let tmp = tempfile::tempdir().unwrap();
    let out = train_into(tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let dirs = run_dirs(tmp.path());
    assert_eq!(dirs.len(), 2);
    for d in &dirs {
        for f in ["checkpoint.json", "history.csv", "report.json"] {
            assert!(d.join(f).is_file(), "{} missing {f}", d.display());
        }
        let history = fs::read_to_string(d.join("history.csv")).unwrap();
        let epochs: Vec<usize> = history
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(epochs, vec![10, 20, 30, 40]);
    }
    let aggregate = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("-aggregate.json"))
        .expect("aggregate report");
    let text = fs::read_to_string(aggregate).unwrap();
    assert!(text.contains(" ± "), "{text}");
}

#[test]
fn reruns_reproduce_reports_bitwise() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(train_into(a.path()).status.success());
    assert!(train_into(b.path()).status.success());
    let (da, db) = (run_dirs(a.path()), run_dirs(b.path()));
    assert_eq!(da.len(), db.len());
    for (x, y) in da.iter().zip(&db) {
        for f in ["report.json", "history.csv", "checkpoint.json"] {
            assert_eq!(fs::read(x.join(f)).unwrap(), fs::read(y.join(f)).unwrap(), "{f} differs");
        }
    }
}

#[test]
fn output_dir_env_is_used_without_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    let out = Command::new(BIN)
        .args(["train", "--config", cfg.to_str().unwrap()])
        .env("SVDFORMER_OUTPUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(run_dirs(tmp.path()).len(), 2);
}

#[test]
fn odd_width_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(tiny_config()).unwrap().replace("\"hidden\": 8", "\"hidden\": 7");
    let cfg = tmp.path().join("odd.json");
    fs::write(&cfg, text).unwrap();
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("even"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(tiny_config()).unwrap().replacen('{', "{\"learning_rate\": 1, ", 1);
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, text).unwrap();
    let out = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_data_code() {
    let out = run(&["train", "--config", "/nonexistent/run.json"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["svd", "--edges", "/nonexistent/edges.tsv", "--num-nodes", "3", "--out", "/tmp"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn svd_of_identity_matrix_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("eye.csv");
    let rows: Vec<String> = (0..5)
        .map(|i| (0..5).map(|j| if i == j { "1" } else { "0" }).collect::<Vec<_>>().join(","))
        .collect();
    fs::write(&m, rows.join("\n") + "\n").unwrap();
    let out_dir = tmp.path().join("svd");
    let out = run(&["svd", "--matrix", m.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = stdout(&out);
    let residual: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("relative residual: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual <= 1e-12, "{report}");
    let sigma = fs::read_to_string(out_dir.join("sigma.csv")).unwrap();
    assert_eq!(sigma.lines().count(), 5);
    assert!(sigma.lines().all(|l| (l.parse::<f64>().unwrap() - 1.0).abs() < 1e-12));
    assert!(out_dir.join("U.csv").is_file() && out_dir.join("V.csv").is_file());
}

#[test]
fn gen_data_feeds_a_files_config_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let params = tmp.path().join("params.json");
    fs::write(
        &params,
        r#"{"num_nodes": 45, "num_classes": 3, "p_forward": 0.3, "p_backward": 0.0,
            "p_cross": 0.03, "feature_dim": 6, "feature_noise": 1.0, "seed": 3}"#,
    )
    .unwrap();
    let data = tmp.path().join("data");
    let out = run(&[
        "gen-data",
        "--params",
        params.to_str().unwrap(),
        "--per-class-train",
        "4",
        "--val-size",
        "9",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let cfg = tmp.path().join("files.json");
    fs::write(
        &cfg,
        r#"{"dataset": {"files": {"edges": "data/edges.tsv", "features": "data/features.csv",
              "labels": "data/labels.txt", "splits": "data/splits.json"}},
            "model": {"hidden": 8, "heads": 2, "layers": 1, "filters": 2},
            "train": {"max_epochs": 20, "seeds": [5]}}"#,
    )
    .unwrap();
    let runs = tmp.path().join("runs");
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--out", runs.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let seed_dir = run_dirs(&runs).pop().unwrap();

    let metrics = tmp.path().join("metrics.json");
    let out = run(&[
        "eval",
        "--checkpoint",
        seed_dir.join("checkpoint.json").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let evaluated: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(seed_dir.join("report.json")).unwrap()).unwrap();
    for split in ["train", "val", "test"] {
        assert_eq!(evaluated[split], report[split], "{split}");
    }
    assert_eq!(evaluated["train"]["total"], 12);
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(train_into(tmp.path()).status.success());
    let ckpt = run_dirs(tmp.path())[0].join("checkpoint.json");
    let text = fs::read_to_string(tiny_config())
        .unwrap()
        .replace("\"feature_dim\": 8", "\"feature_dim\": 5");
    let cfg = tmp.path().join("other.json");
    fs::write(&cfg, text).unwrap();
    let out = run(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn report_aggregates_seed_reports() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(train_into(tmp.path()).status.success());
    let reports: Vec<String> = run_dirs(tmp.path())
        .iter()
        .map(|d| d.join("report.json").to_string_lossy().into_owned())
        .collect();
    let summary = tmp.path().join("summary");
    let mut args = vec!["report", "--out", summary.to_str().unwrap()];
    args.extend(reports.iter().map(String::as_str));
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("(2 seeds)"));
    let csv = fs::read_to_string(summary.join("summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("config_hash,seeds,test_mean,test_std,summary"));
    let row = lines.next().unwrap();
    assert!(row.contains(" ± ") && row.split(',').nth(1) == Some("2"), "{row}");
    assert!(summary.join("summary.txt").is_file());
}

#[test]
fn gradcheck_passes_and_threshold_is_enforced() {
    let out = run(&["gradcheck"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("max relative error"));
    let out = run(&["gradcheck", "--threshold", "0"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn help_lists_defaults() {
    let out = run(&["svd", "--help"]);
    let text = stdout(&out);
    assert!(text.contains("[default: 10]") && text.contains("[default: 2]"), "{text}");
    let out = run(&["train", "--help"]);
    assert!(stdout(&out).contains("[default: 1]"));
}
