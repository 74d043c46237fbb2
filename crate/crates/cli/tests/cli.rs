//! End-to-end tests of the `fedsim` binary: exit codes, artifact layout,
//! digest stability, determinism, and sweep behavior.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fedsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// A tiny clean run: 4 clients, logistic regression on 4-class blobs.
fn tiny_overrides() -> Vec<String> {
    [
        "rounds=2",
        "n=4",
        "k=4",
        "attack.kind=none",
        "defense.kind=no-defense",
        "data.num_classes=4",
        "data.dim=6",
        "data.per_class=40",
        "model.kind=logistic-regression",
        "epochs.client=2",
        "pretrain.rounds=2",
        "pretrain.epochs=10",
        "gamma=0.1",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn with_overrides(mut base: Vec<String>, extra: &[&str]) -> Vec<String> {
    base.extend(extra.iter().map(|s| s.to_string()));
    base
}

fn run_args<'a>(out: &'a str, overrides: &'a [String]) -> Vec<&'a str> {
    let mut args = vec!["run", "--out", out];
    for o in overrides {
        args.push("--override");
        args.push(o);
    }
    args
}

fn read_manifest(dir: &Path) -> Value {
    let text = fs::read_to_string(dir.join("manifest.json")).expect("manifest exists");
    serde_json::from_str(&text).expect("manifest is JSON")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_required_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let overrides: Vec<String> = ["rounds=2", "n=4", "k=4", "attack.kind=none"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let result = fedsim(&run_args(out.to_str().unwrap(), &overrides));
    assert_eq!(result.status.code(), Some(2));
    assert!(
        stderr_of(&result).contains("defense.kind"),
        "stderr must name the missing key: {}",
        stderr_of(&result)
    );
}

#[test]
fn invalid_override_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let overrides = with_overrides(tiny_overrides(), &["rounds=ten"]);
    let result = fedsim(&run_args(out.to_str().unwrap(), &overrides));
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr_of(&result).contains("rounds"), "{}", stderr_of(&result));
}

#[test]
fn reordered_config_files_share_a_digest() {
    let dir = tempfile::tempdir().unwrap();
    let config_a = dir.path().join("a.json");
    let config_b = dir.path().join("b.json");
    fs::write(
        &config_a,
        r#"{"rounds":1,"n":4,"k":4,"attack.kind":"none","defense.kind":"no-defense",
            "data.num_classes":4,"data.dim":6,"data.per_class":40,
            "model.kind":"logistic-regression","gamma":0.1}"#,
    )
    .unwrap();
    fs::write(
        &config_b,
        r#"{"gamma":0.1,"model.kind":"logistic-regression",
            "data.per_class":40,"data.dim":6,"data.num_classes":4,
            "defense.kind":"no-defense","attack.kind":"none","k":4,"n":4,"rounds":1}"#,
    )
    .unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (config, out) in [(&config_a, &out_a), (&config_b, &out_b)] {
        let result = fedsim(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));
    }
    assert_eq!(
        read_manifest(&out_a)["config_digest"],
        read_manifest(&out_b)["config_digest"]
    );
}

#[test]
fn identical_runs_are_byte_identical_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let overrides = tiny_overrides();
    for out in [&out_a, &out_b] {
        let result = fedsim(&run_args(out.to_str().unwrap(), &overrides));
        assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));
        assert!(!out.join("INCOMPLETE").exists(), "sentinel must be gone");
    }
    for file in ["metrics.jsonl", "summary.csv", "model.ckpt", "config.json"] {
        assert_eq!(
            fs::read(out_a.join(file)).unwrap(),
            fs::read(out_b.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
}

#[test]
fn seed_flag_beats_override_which_beats_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let mut doc = String::from("{");
    doc.push_str(r#""seed":1,"rounds":1,"n":4,"k":4,"attack.kind":"none","#);
    doc.push_str(r#""defense.kind":"no-defense","data.num_classes":4,"data.dim":6,"#);
    doc.push_str(r#""data.per_class":40,"model.kind":"logistic-regression","gamma":0.1}"#);
    fs::write(&config, doc).unwrap();

    let out_override = dir.path().join("o");
    let result = fedsim(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_override.to_str().unwrap(),
        "--override",
        "seed=2",
    ]);
    assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));
    assert_eq!(read_manifest(&out_override)["master_seed"], Value::from(2));

    let out_flag = dir.path().join("f");
    let result = fedsim(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_flag.to_str().unwrap(),
        "--override",
        "seed=2",
        "--seed",
        "3",
    ]);
    assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));
    assert_eq!(read_manifest(&out_flag)["master_seed"], Value::from(3));
}

#[test]
fn no_attackers_reports_perfect_recall_by_convention() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let overrides = with_overrides(
        tiny_overrides(),
        &[
            "rounds=1",
            "xi=0",
            "data.scheme=iid",
            "defense.kind=brca",
        ],
    );
    let result = fedsim(&run_args(out.to_str().unwrap(), &overrides));
    assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));
    let line = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    let record: Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(record["recall"], Value::from(1.0));
    assert!(record["precision"].is_number());
}

#[test]
fn pretrain_writes_a_loadable_attack_agnostic_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let base = with_overrides(tiny_overrides(), &["defense.kind=brca", "xi=0.25"]);
    for (out, attack) in [(&out_a, "same-value"), (&out_b, "gaussian")] {
        let overrides = with_overrides(base.clone(), &[&format!("attack.kind={attack}")]);
        let mut args = vec!["pretrain", "--out", out.to_str().unwrap()];
        for o in &overrides {
            args.push("--override");
            args.push(o);
        }
        let result = fedsim(&args);
        assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));
    }
    // Pretraining never consults the attack, so the checkpoints match.
    let bytes_a = fs::read(out_a.join("detector.ckpt")).unwrap();
    assert_eq!(bytes_a, fs::read(out_b.join("detector.ckpt")).unwrap());

    let detector = fedsim_core::checkpoint::load_detector(&out_a.join("detector.ckpt")).unwrap();
    assert_eq!(detector.adapt_count(), 0);
    let dim = detector.probe_dim();
    let scores = detector
        .score_updates(&[0, 1], &[vec![0.1; dim], vec![-0.2; dim]])
        .unwrap();
    assert!(scores.scores.iter().all(|s| s.is_finite() && *s > 0.0));
}

#[test]
fn sweep_builds_the_grid_and_matches_standalone_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let overrides = tiny_overrides();
    let mut args = vec![
        "sweep",
        "--out",
        out.to_str().unwrap(),
        "--axis",
        "gamma",
        "--values",
        "0.1,0.2",
        "--seeds",
        "1,2",
        "--jobs",
        "2",
    ];
    for o in &overrides {
        args.push("--override");
        args.push(o);
    }
    let result = fedsim(&args);
    assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));

    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,seed,final_accuracy,final_loss");
    assert_eq!(lines.len(), 5, "header + 4 cells: {csv}");

    // A sweep cell is exactly the standalone run with the same config.
    let standalone = dir.path().join("standalone");
    let cell_overrides = with_overrides(tiny_overrides(), &["gamma=0.2", "seed=2"]);
    let result = fedsim(&run_args(standalone.to_str().unwrap(), &cell_overrides));
    assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));
    assert_eq!(
        fs::read(out.join("gamma=0.2").join("seed=2").join("metrics.jsonl")).unwrap(),
        fs::read(standalone.join("metrics.jsonl")).unwrap()
    );
}

#[test]
fn sweep_with_empty_values_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let overrides = tiny_overrides();
    let mut args = vec![
        "sweep",
        "--out",
        out.to_str().unwrap(),
        "--axis",
        "gamma",
        "--values",
        "",
    ];
    for o in &overrides {
        args.push("--override");
        args.push(o);
    }
    let result = fedsim(&args);
    assert_eq!(result.status.code(), Some(2), "{}", stderr_of(&result));
}

#[test]
fn sweep_records_failing_cells_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let overrides = tiny_overrides();
    let mut args = vec![
        "sweep",
        "--out",
        out.to_str().unwrap(),
        "--axis",
        "defense.kind",
        "--values",
        "no-defense,bogus",
        "--seeds",
        "1",
    ];
    for o in &overrides {
        args.push("--override");
        args.push(o);
    }
    let result = fedsim(&args);
    assert_eq!(result.status.code(), Some(2), "{}", stderr_of(&result));

    // The good cell completed and was recorded.
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    assert!(csv.lines().nth(1).unwrap().starts_with("no-defense,1,"));
    assert!(out
        .join("defense.kind=no-defense")
        .join("seed=1")
        .join("metrics.jsonl")
        .exists());
    // The bad cell is in the failure record.
    let failures = fs::read_to_string(out.join("failures.csv")).unwrap();
    assert!(failures.contains("bogus"), "{failures}");
}
