//! Credibility-weighted robust aggregation.
//!
//! Each round the server grades every sampled client on two axes and blends
//! them into a credibility weight:
//!
//! 1. **Detection** — the anomaly detector reconstructs each update's probe
//!    slice; clients whose probes reconstruct badly score low.
//! 2. **Verification** — each update is evaluated on the small data shard its
//!    own client shared with the server; updates that can't even fit their
//!    owner's data score low.
//!
//! Both score vectors are normalized to sum 1 and mixed with weight `beta`.
//! Credibilities strictly below the mean are zeroed and the survivors are
//! renormalized; the surviving clients form the trusted set for this round.
//! Aggregation then blends the previous global model with the
//! credibility-weighted sum of updates, and an optional refinement pass
//! trains the aggregate directly on the trusted clients' shared shards.

use crate::detector::{standardized_scores, Adaption, AdaptionMember, DetectorState};
use crate::model::{Batch, ModelSpec};
use crate::params::ParamVector;
use crate::{Error, Result};

/// One client's contribution to a round: its locally trained parameters and
/// the probe slice the detector inspects.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub params: ParamVector,
    pub probe: Vec<f64>,
}

/// Everything the credibility assessment decided about one round.
#[derive(Debug, Clone)]
pub struct CredibilityReport {
    /// Sampled clients, in the order their updates arrived.
    pub client_ids: Vec<usize>,
    /// Detector scores exp(-2·z) per client, before normalization.
    pub detection_scores: Vec<f64>,
    /// Detection scores normalized to sum 1.
    pub detection: Vec<f64>,
    /// Verification scores normalized to sum 1 (absent in detection-only
    /// modes).
    pub verification: Option<Vec<f64>>,
    /// Raw per-client mean loss on the client's own shared shard.
    pub verification_losses: Option<Vec<f64>>,
    /// Final credibility weights: thresholded, renormalized, summing to 1.
    pub credibility: Vec<f64>,
    /// Clients with nonzero credibility, ascending.
    pub honest: Vec<usize>,
    /// Mix between detection (at 1.0) and verification (at 0.0).
    pub beta: f64,
    /// What the detector's adaptation step did, when one ran.
    pub adaption: Option<Adaption>,
}

impl CredibilityReport {
    /// Credibility of a given client this round, if it was sampled.
    pub fn credibility_of(&self, client_id: usize) -> Option<f64> {
        self.client_ids
            .iter()
            .position(|&id| id == client_id)
            .map(|i| self.credibility[i])
    }
}

/// Zero every weight strictly below the mean and renormalize the survivors
/// to sum 1. All-equal inputs pass through as a uniform vector.
pub fn apply_mean_threshold(weights: &[f64]) -> Vec<f64> {
    if weights.is_empty() {
        return Vec::new();
    }
    let k = weights.len();
    let mean = weights.iter().sum::<f64>() / k as f64;
    let kept: Vec<f64> = weights
        .iter()
        .map(|&r| if r < mean { 0.0 } else { r })
        .collect();
    let total: f64 = kept.iter().sum();
    if total <= f64::EPSILON {
        // Only reachable when every weight is (numerically) zero: nothing is
        // strictly below the mean, so everyone survives with equal standing.
        return vec![1.0 / k as f64; k];
    }
    kept.iter().map(|&r| r / total).collect()
}

fn normalized(scores: &[f64]) -> Vec<f64> {
    let total: f64 = scores.iter().sum();
    scores.iter().map(|&s| s / total).collect()
}

/// Mean loss of each update on its own client's shared shard, mapped through
/// the same standardization as detection: high loss scores low.
pub fn verification_scores(
    model: &ModelSpec,
    updates: &[ClientUpdate],
    shared: &[Batch],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let losses: Result<Vec<f64>> = updates
        .iter()
        .map(|u| {
            let shard = shared.get(u.client_id).ok_or(Error::ShapeMismatch {
                what: "shared shard for client",
                got: u.client_id,
                expected: shared.len(),
            })?;
            model.loss(&u.params, shard)
        })
        .collect();
    let losses = losses?;
    let scores = standardized_scores(&losses);
    Ok((losses, scores))
}

/// Grade one round of updates and adapt the detector on the trusted set.
///
/// `shared` is indexed by client id. `beta` mixes detection and verification;
/// `d` is the credibility-trim fraction for the detector's adaptation step.
pub fn assess(
    model: &ModelSpec,
    updates: &[ClientUpdate],
    shared: &[Batch],
    detector: &mut DetectorState,
    beta: f64,
    d: f64,
) -> Result<CredibilityReport> {
    if updates.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "credibility assessment needs at least 2 updates, got {}",
            updates.len()
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta {beta}")));
    }
    let client_ids: Vec<usize> = updates.iter().map(|u| u.client_id).collect();
    let probes: Vec<Vec<f64>> = updates.iter().map(|u| u.probe.clone()).collect();

    let detection_raw = detector.score_updates(&client_ids, &probes)?;
    let detection = normalized(&detection_raw.scores);
    let (losses, verification_raw) = verification_scores(model, updates, shared)?;
    let verification = normalized(&verification_raw);

    let combined: Vec<f64> = detection
        .iter()
        .zip(&verification)
        .map(|(&e, &f)| beta * e + (1.0 - beta) * f)
        .collect();
    let credibility = apply_mean_threshold(&combined);

    let mut honest: Vec<usize> = client_ids
        .iter()
        .zip(&credibility)
        .filter(|&(_, &r)| r > 0.0)
        .map(|(&id, _)| id)
        .collect();
    honest.sort_unstable();

    let members: Vec<AdaptionMember> = updates
        .iter()
        .zip(&credibility)
        .filter(|&(_, &r)| r > 0.0)
        .map(|(u, &r)| AdaptionMember {
            client_id: u.client_id,
            credibility: r,
            probe: u.probe.clone(),
        })
        .collect();
    let adaption = detector.make_adaption(&members, d)?;

    Ok(CredibilityReport {
        client_ids,
        detection_scores: detection_raw.scores,
        detection,
        verification: Some(verification),
        verification_losses: Some(losses),
        credibility,
        honest,
        beta,
        adaption: Some(adaption),
    })
}

/// Blend the previous global model with the credibility-weighted sum of
/// updates: `alpha·prev + (1-alpha)·Σ rᵢ·wᵢ`.
pub fn aggregate(
    prev_global: &ParamVector,
    updates: &[ClientUpdate],
    credibility: &[f64],
    alpha: f64,
) -> Result<ParamVector> {
    if updates.is_empty() {
        return Err(Error::EmptyUpdates);
    }
    if updates.len() != credibility.len() {
        return Err(Error::ShapeMismatch {
            what: "credibility weights",
            got: credibility.len(),
            expected: updates.len(),
        });
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha}")));
    }
    let mut next = prev_global.clone();
    next.scale(alpha);
    for (update, &r) in updates.iter().zip(credibility) {
        if !update.params.same_layout(prev_global) {
            return Err(Error::ShapeMismatch {
                what: "update params",
                got: update.params.len(),
                expected: prev_global.len(),
            });
        }
        next.axpy((1.0 - alpha) * r, &update.params);
    }
    Ok(next)
}

/// Refine the aggregate directly on the trusted clients' shared shards: for
/// each epoch, one full-batch gradient pass per shard in ascending client-id
/// order.
pub fn unified_update(
    model: &ModelSpec,
    global: &ParamVector,
    shards: &[(usize, &Batch)],
    epochs: usize,
    lr: f64,
) -> Result<ParamVector> {
    if shards.iter().any(|(_, b)| b.is_empty()) {
        return Err(Error::InvalidArgument("empty shared shard".into()));
    }
    let mut order: Vec<usize> = (0..shards.len()).collect();
    order.sort_by_key(|&i| shards[i].0);
    let mut params = global.clone();
    for _ in 0..epochs {
        for &i in &order {
            let batch = shards[i].1;
            params = model.sgd_epoch(&params, batch, lr, batch.len(), 0)?;
        }
    }
    Ok(params)
}
