//! Command implementations: config resolution, artifact writing, sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use fedsim_core::checkpoint::{save_detector, save_model};
use fedsim_core::config::{flatten_document, parse_override, ExperimentConfig};
use fedsim_core::sim::Experiment;

use crate::{CommonArgs, SweepArgs};

const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_RUNTIME_ABORT: u8 = 3;

/// Marker dropped into the output directory while a run is in flight; its
/// presence after the process exits means the run did not complete.
const SENTINEL: &str = "INCOMPLETE";

/// A failure carrying the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_INVALID_CONFIG,
        message: message.into(),
    }
}

fn runtime(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_RUNTIME_ABORT,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, CliError>;

/// Provenance record written alongside every run's artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunManifest {
    /// SHA-256 of the canonical (sorted-key) resolved config.
    config_digest: String,
    master_seed: u64,
    output_dir: String,
    git_describe: String,
    started: String,
    finished: Option<String>,
}

/// Final-round figures a sweep collects from each cell.
#[derive(Debug, Clone, Copy)]
struct RunSummary {
    final_accuracy: f64,
    final_loss: f64,
}

fn now_iso() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|out| out.status.success())
        .and_then(|out| String::from_utf8(out.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

fn config_digest(config: &ExperimentConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config.canonical_json().as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Merge config file, `--override`s, caller-supplied entries, and `--seed`
/// (in that order, later wins) into a validated config.
fn resolve_config(args: &CommonArgs, extra: &[(String, Value)]) -> CliResult<ExperimentConfig> {
    let mut map: BTreeMap<String, Value> = BTreeMap::new();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| invalid(format!("config {} is not valid JSON: {e}", path.display())))?;
        let flat = flatten_document(&doc).map_err(|e| invalid(e.to_string()))?;
        map.extend(flat);
    }
    for entry in &args.overrides {
        let (key, value) = parse_override(entry).map_err(|e| invalid(e.to_string()))?;
        map.insert(key, value);
    }
    for (key, value) in extra {
        map.insert(key.clone(), value.clone());
    }
    if let Some(seed) = args.seed {
        map.insert("seed".into(), Value::from(seed));
    }
    ExperimentConfig::from_flat(&map).map_err(|e| invalid(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> CliResult<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| runtime(format!("manifest serialization failed: {e}")))?;
    write_file(&dir.join("manifest.json"), &format!("{text}\n"))
}

/// Create the output directory with an in-flight sentinel and a manifest,
/// run `body`, then finalize the manifest and remove the sentinel. On error
/// the sentinel stays behind to mark the run incomplete.
fn with_run_dir<T>(
    config: &ExperimentConfig,
    out: &Path,
    body: impl FnOnce(&mut RunManifest) -> CliResult<T>,
) -> CliResult<T> {
    fs::create_dir_all(out)
        .map_err(|e| runtime(format!("cannot create {}: {e}", out.display())))?;
    let sentinel = out.join(SENTINEL);
    write_file(&sentinel, "run started but not finished\n")?;
    let mut manifest = RunManifest {
        config_digest: config_digest(config),
        master_seed: config.seed,
        output_dir: out.display().to_string(),
        git_describe: git_describe(),
        started: now_iso(),
        finished: None,
    };
    write_manifest(out, &manifest)?;
    write_file(
        &out.join("config.json"),
        &format!("{}\n", config.canonical_json()),
    )?;
    let value = body(&mut manifest)?;
    manifest.finished = Some(now_iso());
    write_manifest(out, &manifest)?;
    fs::remove_file(&sentinel)
        .map_err(|e| runtime(format!("cannot remove {}: {e}", sentinel.display())))?;
    Ok(value)
}

/// Execute one fully resolved experiment into `out`.
fn run_one(config: &ExperimentConfig, out: &Path) -> CliResult<RunSummary> {
    with_run_dir(config, out, |_| {
        // Everything up to a prepared experiment is a property of the
        // config, so failures here are configuration errors.
        let experiment =
            Experiment::prepare(config.clone()).map_err(|e| invalid(e.to_string()))?;
        let detector = experiment
            .make_detector()
            .map_err(|e| runtime(e.to_string()))?;
        let output = experiment.run(detector).map_err(|e| runtime(e.to_string()))?;

        let mut jsonl = String::new();
        let mut csv = String::from("round,accuracy,loss\n");
        for m in &output.metrics {
            jsonl.push_str(&m.to_line());
            jsonl.push('\n');
            csv.push_str(&format!("{},{},{}\n", m.round, m.accuracy, m.loss));
        }
        write_file(&out.join("metrics.jsonl"), &jsonl)?;
        write_file(&out.join("summary.csv"), &csv)?;
        save_model(&out.join("model.ckpt"), experiment.model(), &output.model)
            .map_err(|e| runtime(e.to_string()))?;
        if let Some(detector) = &output.detector {
            save_detector(&out.join("detector.ckpt"), detector)
                .map_err(|e| runtime(e.to_string()))?;
        }

        let last = output
            .metrics
            .last()
            .expect("a validated config has >= 1 round");
        Ok(RunSummary {
            final_accuracy: last.accuracy,
            final_loss: last.loss,
        })
    })
}

pub fn cmd_run(args: &CommonArgs) -> CliResult<()> {
    let config = resolve_config(args, &[])?;
    run_one(&config, &args.out)?;
    Ok(())
}

pub fn cmd_pretrain(args: &CommonArgs) -> CliResult<()> {
    let config = resolve_config(args, &[])?;
    with_run_dir(&config, &args.out, |_| {
        let experiment =
            Experiment::prepare(config.clone()).map_err(|e| invalid(e.to_string()))?;
        let detector = experiment
            .pretrain_detector()
            .map_err(|e| runtime(e.to_string()))?;
        save_detector(&args.out.join("detector.ckpt"), &detector)
            .map_err(|e| runtime(e.to_string()))
    })
}

/// Directory-name-safe rendering of an axis value.
fn sanitize(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct SweepCell {
    value_text: String,
    seed: u64,
    dir: PathBuf,
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let values: Vec<String> = args
        .values
        .iter()
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(invalid("sweep needs at least one --values entry"));
    }
    if args.axis.trim().is_empty() {
        return Err(invalid("sweep needs a non-empty --axis key"));
    }

    let cell_config = |value_text: &str, seed: Option<u64>| -> CliResult<ExperimentConfig> {
        let (key, value) = parse_override(&format!("{}={}", args.axis, value_text))
            .map_err(|e| invalid(e.to_string()))?;
        let mut extra = vec![(key, value)];
        if let Some(seed) = seed {
            extra.push(("seed".into(), Value::from(seed)));
        }
        resolve_config(&args.common, &extra)
    };

    // Fail fast on an unusable axis key before launching any cell.
    let first = cell_config(&values[0], None)?;
    let seeds = if args.seeds.is_empty() {
        vec![first.seed]
    } else {
        args.seeds.clone()
    };

    let cells: Vec<SweepCell> = values
        .iter()
        .flat_map(|value| {
            let axis = sanitize(&args.axis);
            let out = &args.common.out;
            seeds.iter().map(move |&seed| SweepCell {
                value_text: value.clone(),
                seed,
                dir: out.join(format!("{axis}={}", sanitize(value))).join(format!("seed={seed}")),
            })
        })
        .collect();

    let jobs = args.jobs.max(1).min(cells.len());
    let next = Mutex::new(0usize);
    let results: Vec<Mutex<Option<CliResult<RunSummary>>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let index = {
                    let mut guard = next.lock().expect("scheduler lock");
                    let index = *guard;
                    *guard += 1;
                    index
                };
                if index >= cells.len() {
                    break;
                }
                let cell = &cells[index];
                let outcome = cell_config(&cell.value_text, Some(cell.seed))
                    .and_then(|config| run_one(&config, &cell.dir));
                *results[index].lock().expect("result lock") = Some(outcome);
            });
        }
    });

    let mut combined = String::from("value,seed,final_accuracy,final_loss\n");
    let mut failures = String::from("value,seed,error\n");
    let mut failed = 0usize;
    let mut worst_code = EXIT_INVALID_CONFIG;
    for (cell, slot) in cells.iter().zip(&results) {
        let outcome = slot
            .lock()
            .expect("result lock")
            .take()
            .expect("every cell was scheduled");
        match outcome {
            Ok(summary) => combined.push_str(&format!(
                "{},{},{},{}\n",
                cell.value_text, cell.seed, summary.final_accuracy, summary.final_loss
            )),
            Err(err) => {
                failed += 1;
                worst_code = worst_code.max(err.code);
                eprintln!(
                    "sweep cell {}={} seed={} failed: {}",
                    args.axis, cell.value_text, cell.seed, err.message
                );
                failures.push_str(&format!(
                    "{},{},{}\n",
                    cell.value_text,
                    cell.seed,
                    err.message.replace([',', '\n'], ";")
                ));
            }
        }
    }

    fs::create_dir_all(&args.common.out)
        .map_err(|e| runtime(format!("cannot create {}: {e}", args.common.out.display())))?;
    write_file(&args.common.out.join("sweep.csv"), &combined)?;
    if failed > 0 {
        write_file(&args.common.out.join("failures.csv"), &failures)?;
        return Err(CliError {
            code: worst_code,
            message: format!("{failed} of {} sweep cells failed", cells.len()),
        });
    }
    Ok(())
}
