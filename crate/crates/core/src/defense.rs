//! Baseline aggregation rules the credibility framework is compared against.
//!
//! All of them consume one round's parameter vectors and produce the next
//! global model: plain weighted averaging, single-update selection by
//! nearest-neighbour score (`krum`), the geometric median via Weiszfeld
//! iteration (`geomed`), the per-coordinate trimmed mean, and a
//! detection-only variant (`abnormal_aggregate`) that weights updates by a
//! static anomaly detector's scores without verification or adaptation.

use serde::{Deserialize, Serialize};

use crate::brca::{apply_mean_threshold, ClientUpdate, CredibilityReport};
use crate::detector::DetectorState;
use crate::params::ParamVector;
use crate::{ceil_frac, Error, Result};

/// Which aggregation rule the server runs each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefenseKind {
    /// Credibility assessment + momentum aggregation + shared-shard refinement.
    Brca,
    /// Plain weighted averaging of everything that arrives.
    NoDefense,
    /// Keep the single update closest to its nearest neighbours.
    Krum,
    /// Geometric median of the updates.
    Geomed,
    /// Per-coordinate mean after trimming extremes.
    TrimmedMean,
    /// Anomaly-detector weighting only; no verification, no adaptation.
    Abnormal,
}

impl DefenseKind {
    pub const ALL: [DefenseKind; 6] = [
        DefenseKind::Brca,
        DefenseKind::NoDefense,
        DefenseKind::Krum,
        DefenseKind::Geomed,
        DefenseKind::TrimmedMean,
        DefenseKind::Abnormal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DefenseKind::Brca => "brca",
            DefenseKind::NoDefense => "no-defense",
            DefenseKind::Krum => "krum",
            DefenseKind::Geomed => "geomed",
            DefenseKind::TrimmedMean => "trimmed-mean",
            DefenseKind::Abnormal => "abnormal",
        }
    }
}

fn check_nonempty_and_aligned(updates: &[ParamVector]) -> Result<()> {
    let first = updates.first().ok_or(Error::EmptyUpdates)?;
    for u in updates {
        if !u.same_layout(first) {
            return Err(Error::ShapeMismatch {
                what: "update layout",
                got: u.len(),
                expected: first.len(),
            });
        }
    }
    Ok(())
}

/// Weighted average of updates. Weights must be non-negative and sum to 1.
pub fn fedavg(updates: &[ParamVector], weights: &[f64]) -> Result<ParamVector> {
    check_nonempty_and_aligned(updates)?;
    if weights.len() != updates.len() {
        return Err(Error::ShapeMismatch {
            what: "fedavg weights",
            got: weights.len(),
            expected: updates.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument("fedavg weights must be >= 0".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "fedavg weights sum to {total}, expected 1"
        )));
    }
    let mut out = ParamVector::zeros(updates[0].layout().clone());
    for (u, &w) in updates.iter().zip(weights) {
        out.axpy(w, u);
    }
    Ok(out)
}

/// Index of the update whose summed squared distance to its `k - f - 2`
/// nearest peers is smallest (ties go to the lowest index). `f` is the
/// number of adversaries the rule is sized for; needs `k >= f + 3`.
pub fn krum_index(updates: &[ParamVector], f: usize) -> Result<usize> {
    check_nonempty_and_aligned(updates)?;
    let k = updates.len();
    if k < f + 3 {
        return Err(Error::InsufficientClients {
            defense: "krum",
            have: k,
            need: f + 3,
        });
    }
    let m = k - f - 2;
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..k {
        let mut dists: Vec<f64> = (0..k)
            .filter(|&j| j != i)
            .map(|j| {
                let d = updates[i].l2_distance(&updates[j]);
                d * d
            })
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let score: f64 = dists[..m].iter().sum();
        if score < best.0 {
            best = (score, i);
        }
    }
    Ok(best.1)
}

/// The update selected by [`krum_index`].
pub fn krum(updates: &[ParamVector], f: usize) -> Result<ParamVector> {
    Ok(updates[krum_index(updates, f)?].clone())
}

/// Geometric median of the updates by Weiszfeld iteration, also returning
/// the objective value (sum of distances) after the start and each step.
pub fn geomed_with_trace(
    updates: &[ParamVector],
    tol: f64,
    max_iters: usize,
) -> Result<(ParamVector, Vec<f64>)> {
    check_nonempty_and_aligned(updates)?;
    if !(tol.is_finite() && tol > 0.0) || max_iters == 0 {
        return Err(Error::InvalidArgument(format!(
            "weiszfeld tol {tol}, max iters {max_iters}"
        )));
    }
    let k = updates.len();
    let mut y = ParamVector::zeros(updates[0].layout().clone());
    for u in updates {
        y.axpy(1.0 / k as f64, u);
    }
    let objective = |p: &ParamVector| updates.iter().map(|u| p.l2_distance(u)).sum::<f64>();
    let mut trace = vec![objective(&y)];
    for _ in 0..max_iters {
        let inv_dists: Vec<f64> = updates
            .iter()
            .map(|u| 1.0 / y.l2_distance(u).max(1e-12))
            .collect();
        let total: f64 = inv_dists.iter().sum();
        let mut next = ParamVector::zeros(y.layout().clone());
        for (u, &w) in updates.iter().zip(&inv_dists) {
            next.axpy(w / total, u);
        }
        let step = next.l2_distance(&y);
        y = next;
        trace.push(objective(&y));
        if step <= tol {
            break;
        }
    }
    Ok((y, trace))
}

/// Geometric median of the updates.
pub fn geomed(updates: &[ParamVector], tol: f64, max_iters: usize) -> Result<ParamVector> {
    geomed_with_trace(updates, tol, max_iters).map(|(y, _)| y)
}

/// Per-coordinate mean after dropping the ⌈trim·k⌉ largest and smallest
/// values of every coordinate.
pub fn trimmed_mean(updates: &[ParamVector], trim: f64) -> Result<ParamVector> {
    check_nonempty_and_aligned(updates)?;
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::InvalidArgument(format!("trim fraction {trim}")));
    }
    let k = updates.len();
    let t = ceil_frac(trim, k);
    if 2 * t >= k {
        return Err(Error::InsufficientClients {
            defense: "trimmed-mean",
            have: k,
            need: 2 * t + 1,
        });
    }
    let mut out = ParamVector::zeros(updates[0].layout().clone());
    let mut column = vec![0.0; k];
    for j in 0..out.len() {
        for (c, u) in column.iter_mut().zip(updates) {
            *c = u.values()[j];
        }
        column.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        let kept = &column[t..k - t];
        out.values_mut()[j] = kept.iter().sum::<f64>() / kept.len() as f64;
    }
    Ok(out)
}

/// Detection-only robust aggregation: weight updates by a *static* anomaly
/// detector's normalized scores (mean-thresholded), then blend with the
/// previous global model. The detector is never adapted and nothing is
/// verified against shared data.
pub fn abnormal_aggregate(
    prev_global: &ParamVector,
    updates: &[ClientUpdate],
    detector: &DetectorState,
    alpha: f64,
) -> Result<(ParamVector, CredibilityReport)> {
    let client_ids: Vec<usize> = updates.iter().map(|u| u.client_id).collect();
    let probes: Vec<Vec<f64>> = updates.iter().map(|u| u.probe.clone()).collect();
    let scored = detector.score_updates(&client_ids, &probes)?;
    let total: f64 = scored.scores.iter().sum();
    let detection: Vec<f64> = scored.scores.iter().map(|&s| s / total).collect();
    let credibility = apply_mean_threshold(&detection);
    let mut honest: Vec<usize> = client_ids
        .iter()
        .zip(&credibility)
        .filter(|&(_, &r)| r > 0.0)
        .map(|(&id, _)| id)
        .collect();
    honest.sort_unstable();
    let next = crate::brca::aggregate(prev_global, updates, &credibility, alpha)?;
    let report = CredibilityReport {
        client_ids,
        detection_scores: scored.scores,
        detection,
        verification: None,
        verification_losses: None,
        credibility,
        honest,
        beta: 1.0,
        adaption: None,
    };
    Ok((next, report))
}
