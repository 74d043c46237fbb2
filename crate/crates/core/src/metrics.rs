//! Per-round evaluation records and detector-quality metrics.
//!
//! Every round emits one [`RoundMetrics`] value, serialized as a single JSON
//! line. Fields that only exist when the defense produces credibility
//! verdicts (detector cross-entropy, verdict precision/recall, the
//! credibility vector, the trusted set) are `null` on other rounds so the
//! line schema never changes shape. Wall-clock timing is deliberately kept
//! out of the serialized form: identical runs must produce byte-identical
//! streams.

use serde::{Deserialize, Serialize};

/// One round's observable outcomes.
///
/// `credibilities` holds `(client_id, weight)` pairs in ascending client-id
/// order over the round's sampled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub bce: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub credibilities: Option<Vec<(usize, f64)>>,
    pub honest_set: Option<Vec<usize>>,
    /// Round duration; diagnostic only, never serialized.
    #[serde(skip)]
    pub wall_time_ms: u64,
}

impl RoundMetrics {
    /// The JSONL form: one compact JSON object, no trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("round metrics serialize")
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Binary cross-entropy of the detector's raw scores against the true
/// honest/Byzantine split: `p_i = sigmoid(e_i - mean(e))`, probabilities
/// clamped to `[1e-7, 1 - 1e-7]`, target 1 for honest clients and 0 for
/// Byzantine ones. Undefined (`None`) when the round has no honest or no
/// Byzantine member to compare.
pub fn detector_bce(client_ids: &[usize], scores: &[f64], byzantine: &[usize]) -> Option<f64> {
    debug_assert_eq!(client_ids.len(), scores.len());
    let is_byz: Vec<bool> = client_ids.iter().map(|id| byzantine.contains(id)).collect();
    let byz_count = is_byz.iter().filter(|&&b| b).count();
    if byz_count == 0 || byz_count == client_ids.len() {
        return None;
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let total: f64 = scores
        .iter()
        .zip(&is_byz)
        .map(|(&e, &byz)| {
            let p = sigmoid(e - mean).clamp(1e-7, 1.0 - 1e-7);
            if byz {
                -(1.0 - p).ln()
            } else {
                -p.ln()
            }
        })
        .sum();
    Some(total / scores.len() as f64)
}

/// Precision and recall of the "credibility zeroed ⇒ Byzantine" verdict.
/// Nothing flagged means precision 1; no Byzantine present means recall 1.
pub fn detection_prf(
    client_ids: &[usize],
    credibility: &[f64],
    byzantine: &[usize],
) -> (f64, f64) {
    debug_assert_eq!(client_ids.len(), credibility.len());
    let mut flagged = 0usize;
    let mut true_positive = 0usize;
    let mut byz_present = 0usize;
    for (id, &r) in client_ids.iter().zip(credibility) {
        let is_byz = byzantine.contains(id);
        byz_present += usize::from(is_byz);
        if r == 0.0 {
            flagged += 1;
            true_positive += usize::from(is_byz);
        }
    }
    let precision = if flagged == 0 {
        1.0
    } else {
        true_positive as f64 / flagged as f64
    };
    let recall = if byz_present == 0 {
        1.0
    } else {
        true_positive as f64 / byz_present as f64
    };
    (precision, recall)
}
