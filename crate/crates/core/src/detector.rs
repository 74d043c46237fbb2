//! Adaptive autoencoder anomaly detection over parameter probes.
//!
//! The detector is an autoencoder (see [`ModelSpec::autoencoder_for`]) over
//! one named slice of each client update — the probe. A probe the detector
//! reconstructs poorly is anomalous: per-client reconstruction errors are
//! standardized within the round and mapped through `e = exp(-2·z)`, so low
//! error means a score above 1 and high error a score near 0. After each
//! round the detector takes one gradient step per surviving trusted client
//! (with the most- and least-credible fringes trimmed away), tracking how
//! honest probes drift as training progresses.

use serde::{Deserialize, Serialize};

use crate::model::{Batch, ModelKind, ModelSpec};
use crate::params::ParamVector;
use crate::seed::{self, purpose};
use crate::{ceil_frac, Error, Result};

/// Per-round anomaly scores for a set of probes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    pub client_ids: Vec<usize>,
    /// Reconstruction MSE per probe.
    pub raw_errors: Vec<f64>,
    /// exp(-2·z) of the standardized errors; ~1 means unremarkable.
    pub scores: Vec<f64>,
}

/// One trusted client offered to the adaptation step.
#[derive(Debug, Clone)]
pub struct AdaptionMember {
    pub client_id: usize,
    pub credibility: f64,
    pub probe: Vec<f64>,
}

/// What the adaptation step did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Adaption {
    /// One gradient step per kept client, in ascending client-id order.
    Applied { kept: Vec<usize> },
    /// Trimming left nobody to learn from; the detector is unchanged.
    SkippedEmpty,
}

/// The autoencoder, its training-step counter, and its learning rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorState {
    spec: ModelSpec,
    params: ParamVector,
    adapt_count: u64,
    lr: f64,
}

/// Map raw per-client values to anomaly scores: standardize (sample standard
/// deviation) and apply `exp(-2·z)`. Degenerate spread (< 1e-12) scores
/// everyone 1. Larger raw values always score lower.
pub fn standardized_scores(raw: &[f64]) -> Vec<f64> {
    let k = raw.len();
    let mean = raw.iter().sum::<f64>() / k as f64;
    let var = raw.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (k - 1).max(1) as f64;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![1.0; k];
    }
    raw.iter().map(|m| (-2.0 * (m - mean) / std).exp()).collect()
}

impl DetectorState {
    /// A freshly initialized detector for probes of the given width.
    pub fn new(probe_dim: usize, lr: f64, seed_value: u64) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::InvalidArgument(format!("detector lr {lr}")));
        }
        let spec = ModelSpec::autoencoder_for(probe_dim);
        spec.validate()?;
        let params = spec.init_params(seed::child_seed(seed_value, &[purpose::DETECTOR_INIT]));
        Ok(Self {
            spec,
            params,
            adapt_count: 0,
            lr,
        })
    }

    /// Rebuild from checkpoint parts.
    pub fn from_parts(
        spec: ModelSpec,
        params: ParamVector,
        adapt_count: u64,
        lr: f64,
    ) -> Result<Self> {
        if spec.kind != ModelKind::MlpAutoencoder {
            return Err(Error::InvalidArgument(
                "detector spec must be an autoencoder".into(),
            ));
        }
        spec.validate()?;
        if params.len() != spec.num_params() {
            return Err(Error::ShapeMismatch {
                what: "detector params",
                got: params.len(),
                expected: spec.num_params(),
            });
        }
        Ok(Self {
            spec,
            params,
            adapt_count,
            lr,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn adapt_count(&self) -> u64 {
        self.adapt_count
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn probe_dim(&self) -> usize {
        self.spec.input_dim
    }

    fn probe_batch(&self, probe: &[f64]) -> Result<Batch> {
        if probe.len() != self.probe_dim() {
            return Err(Error::ShapeMismatch {
                what: "probe",
                got: probe.len(),
                expected: self.probe_dim(),
            });
        }
        Batch::from_rows(vec![probe.to_vec()])
    }

    /// Reconstruction MSE of each probe under the current detector.
    pub fn reconstruction_errors(&self, probes: &[Vec<f64>]) -> Result<Vec<f64>> {
        probes
            .iter()
            .map(|p| self.spec.loss(&self.params, &self.probe_batch(p)?))
            .collect()
    }

    /// Mean reconstruction MSE over a probe set.
    pub fn mean_error(&self, probes: &[Vec<f64>]) -> Result<f64> {
        let errs = self.reconstruction_errors(probes)?;
        Ok(errs.iter().sum::<f64>() / errs.len() as f64)
    }

    /// Train on trusted probes (inputs = targets) for `epochs` full passes.
    pub fn pretrain(&mut self, probes: &[Vec<f64>], epochs: usize, seed_value: u64) -> Result<()> {
        if probes.is_empty() {
            return Err(Error::InvalidArgument("no pretraining probes".into()));
        }
        let rows: Result<Vec<Vec<f64>>> = probes
            .iter()
            .map(|p| {
                if p.len() != self.probe_dim() {
                    Err(Error::ShapeMismatch {
                        what: "probe",
                        got: p.len(),
                        expected: self.probe_dim(),
                    })
                } else {
                    Ok(p.clone())
                }
            })
            .collect();
        let batch = Batch::from_rows(rows?)?;
        for epoch in 0..epochs {
            self.params = self.spec.sgd_epoch(
                &self.params,
                &batch,
                self.lr,
                batch.len(),
                seed::child_seed(seed_value, &[purpose::PRETRAIN, epoch as u64]),
            )?;
        }
        Ok(())
    }

    /// Score one round's probes. Needs at least two clients (standardization
    /// is undefined for one).
    pub fn score_updates(&self, client_ids: &[usize], probes: &[Vec<f64>]) -> Result<ScoreVector> {
        if probes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 probes to score, got {}",
                probes.len()
            )));
        }
        if client_ids.len() != probes.len() {
            return Err(Error::ShapeMismatch {
                what: "probe client ids",
                got: client_ids.len(),
                expected: probes.len(),
            });
        }
        let raw_errors = self.reconstruction_errors(probes)?;
        let scores = standardized_scores(&raw_errors);
        Ok(ScoreVector {
            client_ids: client_ids.to_vec(),
            raw_errors,
            scores,
        })
    }

    /// Fine-tune on the trusted set: drop the ⌈d·|H|⌉ most and least
    /// credible members (ties break on client id), then take one gradient
    /// step per survivor in ascending client-id order.
    pub fn make_adaption(&mut self, members: &[AdaptionMember], d: f64) -> Result<Adaption> {
        if !(0.0..1.0).contains(&d) {
            return Err(Error::InvalidArgument(format!("trim fraction {d}")));
        }
        if members.iter().any(|m| !m.credibility.is_finite()) {
            return Err(Error::NonFinite("adaption credibility".into()));
        }
        let t = ceil_frac(d, members.len());
        if members.is_empty() || 2 * t >= members.len() {
            return Ok(Adaption::SkippedEmpty);
        }
        let mut order: Vec<&AdaptionMember> = members.iter().collect();
        order.sort_by(|a, b| {
            a.credibility
                .partial_cmp(&b.credibility)
                .expect("finite credibilities")
                .then(a.client_id.cmp(&b.client_id))
        });
        let mut kept: Vec<&AdaptionMember> = order[t..members.len() - t].to_vec();
        kept.sort_by_key(|m| m.client_id);

        for member in &kept {
            let batch = self.probe_batch(&member.probe)?;
            let (_, grad) = self.spec.loss_and_grad(&self.params, &batch)?;
            self.params.axpy(-self.lr, &grad);
        }
        self.adapt_count += 1;
        Ok(Adaption::Applied {
            kept: kept.iter().map(|m| m.client_id).collect(),
        })
    }
}
