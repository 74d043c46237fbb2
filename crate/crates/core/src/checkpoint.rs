//! Saving and loading models and detectors as JSON checkpoints.
//!
//! A checkpoint stores the spec plus the raw parameter values; the block
//! layout is rebuilt from the spec on load, and lengths are re-validated so
//! a truncated or hand-edited file cannot produce an inconsistent state.
//! JSON keeps the files diffable, and serde's float encoding round-trips
//! `f64` exactly, so save → load is bit-faithful.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::DetectorState;
use crate::model::ModelSpec;
use crate::params::ParamVector;
use crate::Result;

#[derive(Serialize, Deserialize)]
struct ModelCheckpoint {
    spec: ModelSpec,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DetectorCheckpoint {
    spec: ModelSpec,
    values: Vec<f64>,
    adapt_count: u64,
    lr: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer(&mut writer, value)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Save a task model (spec + parameters).
pub fn save_model(path: &Path, spec: &ModelSpec, params: &ParamVector) -> Result<()> {
    write_json(
        path,
        &ModelCheckpoint {
            spec: spec.clone(),
            values: params.values().to_vec(),
        },
    )
}

/// Load a task model, rebuilding the parameter layout from the spec.
pub fn load_model(path: &Path) -> Result<(ModelSpec, ParamVector)> {
    let ckpt: ModelCheckpoint = read_json(path)?;
    ckpt.spec.validate()?;
    let params = ParamVector::from_values(ckpt.spec.layout(), ckpt.values)?;
    Ok((ckpt.spec, params))
}

/// Save a detector (autoencoder spec, parameters, adaptation counter, lr).
pub fn save_detector(path: &Path, detector: &DetectorState) -> Result<()> {
    write_json(
        path,
        &DetectorCheckpoint {
            spec: detector.spec().clone(),
            values: detector.params().values().to_vec(),
            adapt_count: detector.adapt_count(),
            lr: detector.lr(),
        },
    )
}

/// Load a detector, re-validating every structural invariant.
pub fn load_detector(path: &Path) -> Result<DetectorState> {
    let ckpt: DetectorCheckpoint = read_json(path)?;
    let params = ParamVector::from_values(ckpt.spec.layout(), ckpt.values)?;
    DetectorState::from_parts(ckpt.spec, params, ckpt.adapt_count, ckpt.lr)
}
