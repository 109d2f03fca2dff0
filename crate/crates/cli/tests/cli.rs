use std::path::Path;
use std::process::{Command, Output};

fn tmlc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmlc")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, method: &str) -> String {
    let path = dir.join("cfg.json");
    let text = format!(
        r#"{{
        "experiment_id": "run",
        "dataset": {{"kind": "blobs", "num_classes": 3, "per_class": 40, "test_per_class": 10}},
        "noise": {{"kind": "symmetric", "rate": 0.3}},
        "model": {{"epochs": 4, "batch_size": 32, "hidden_layers": [8],
                   "optimizer": {{"kind": "sgd_momentum", "learning_rate": 0.1}}}},
        "method": {{"kind": "{method}"}},
        "meta": {{"warmup_epochs": 1, "corrector": {{"hidden_size": 3}}}},
        "seeds": [0, 1],
        "output_dir": {:?}
    }}"#,
        dir.join("out")
    );
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn unknown_subcommand_prints_usage_and_exits_1() {
    let o = tmlc(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_flag_exits_1() {
    let o = tmlc(&["gradcheck", "--bogus"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn bad_mode_value_exits_1() {
    let o = tmlc(&["meta-train", "--config", "x.json", "--mode", "sideways"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn help_exits_0() {
    let o = tmlc(&["--help"]);
    assert_eq!(code(&o), 0);
    for sub in [
        "meta-train",
        "meta-test",
        "baseline",
        "ablate",
        "transfer",
        "gradcheck",
        "gen-data",
        "report",
    ] {
        assert!(stdout(&o).contains(sub), "{sub}");
    }
}

#[test]
fn missing_config_names_the_path() {
    let o = tmlc(&["baseline", "--config", "/nonexistent/exp.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/nonexistent/exp.json"), "{}", stderr(&o));
}

#[test]
fn invalid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"experiment_id": "x", "surprise": 1}"#).unwrap();
    let o = tmlc(&["baseline", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn gradcheck_reports_max_error() {
    let o = tmlc(&["gradcheck"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let last = out.lines().last().unwrap();
    assert!(last.starts_with("max rel. err"), "{last}");
    let value: f64 = last.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(value <= 1e-4);
}

#[test]
fn baseline_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ce");
    let o = tmlc(&["baseline", "--config", &cfg, "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = dir.path().join("out/run");
    assert!(run.join("seed7/log.csv").is_file());
    assert!(!run.join("seed0").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment_id"], "run");

    let out = dir.path().join("out");
    let o = tmlc(&["report", "--dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("run (1 runs)"));
    assert!(out.join("report.csv").is_file());
    assert!(out.join("report.txt").is_file());
}

#[test]
fn baseline_rejects_meta_methods() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tmlc");
    let o = tmlc(&["baseline", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    let o = tmlc(&["baseline", "--config", &cfg, "--method", "nope"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn meta_train_then_meta_test_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ce");
    let out = dir.path().join("elsewhere");
    let o = tmlc(&[
        "meta-train",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "agnostic",
        "--meta-supervision",
        "clean_meta",
        "--lookahead",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run/seed0/method.json")).unwrap()).unwrap();
    assert_eq!(meta["method"], "tmlc");
    let snaps = out.join("run/seed0/snapshots");
    assert!(snaps.is_dir());

    let o = tmlc(&[
        "meta-test",
        "--config",
        &cfg,
        "--snapshots",
        snaps.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("out/run/seed3/log.csv").is_file());
}

#[test]
fn meta_test_with_incompatible_snapshots_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tmlc");
    assert_eq!(code(&tmlc(&["meta-train", "--config", &cfg, "--seed", "0"])), 0);
    let snaps = dir.path().join("out/run/seed0/snapshots");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("\"num_classes\": 3", "\"num_classes\": 4");
    let other = dir.path().join("c4.json");
    std::fs::write(&other, text).unwrap();
    let o = tmlc(&[
        "meta-test",
        "--config",
        other.to_str().unwrap(),
        "--snapshots",
        snaps.to_str().unwrap(),
    ]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("error"), "{}", stderr(&o));
}

#[test]
fn ablate_runs_three_variants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tmlc");
    let o = tmlc(&["ablate", "--config", &cfg, "--seed", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for v in ["tmlc_wo_nnp", "tmlc_wo_tse", "tmlc_wo_sd"] {
        assert!(
            dir.path().join("out/run").join(v).join("seed1/log.csv").is_file(),
            "{v}"
        );
        assert!(stdout(&o).contains(v));
    }
}

#[test]
fn gen_data_writes_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ce");
    let o = tmlc(&["gen-data", "--config", &cfg, "--seed", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let train = std::fs::read_to_string(dir.path().join("out/run/seed2/train.jsonl")).unwrap();
    assert_eq!(train.lines().count(), 120);
    let test = std::fs::read_to_string(dir.path().join("out/run/seed2/test.jsonl")).unwrap();
    assert_eq!(test.lines().count(), 30);
}

#[test]
fn transfer_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let task = |name: &str, c: usize| {
        format!(
            r#"{{"name": "{name}", "dataset": {{"kind": "blobs", "num_classes": {c}, "per_class": 30, "test_per_class": 10}},
                "noise": {{"kind": "symmetric", "rate": 0.2}}}}"#
        )
    };
    let text = format!(
        r#"{{"experiment_id": "grid",
            "dataset": {{"kind": "blobs", "num_classes": 3, "per_class": 30}},
            "model": {{"epochs": 3, "optimizer": {{"kind": "sgd_momentum", "learning_rate": 0.1}}}},
            "method": {{"kind": "tmlc"}},
            "meta": {{"warmup_epochs": 1, "corrector": {{"hidden_size": 3}}}},
            "output_dir": {:?},
            "transfer": {{"sources": [{}], "targets": [{}, {}]}}}}"#,
        dir.path().join("out"),
        task("a", 3),
        task("b", 3),
        task("c", 4)
    );
    std::fs::write(&path, text).unwrap();
    let o = tmlc(&["transfer", "--config", path.to_str().unwrap(), "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/grid/transfer.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains("a,b,done"));
    assert!(csv.contains("a,c,skipped"));
}
