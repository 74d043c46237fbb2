//! Independent oracles shared by the integration and acceptance suites.
//!
//! Everything here is deliberately written from first principles — numerical
//! differentiation, exhaustive subset search, golden-section minimization,
//! naive summation — so the library implementations are checked against code
//! that shares none of their structure.

#![allow(dead_code)]

use fedsim_core::model::{Batch, ModelKind, ModelSpec};
use fedsim_core::params::ParamVector;

/// Central finite-difference gradient of the model loss.
pub fn fd_gradient(spec: &ModelSpec, params: &ParamVector, batch: &Batch, eps: f64) -> ParamVector {
    let mut grad = ParamVector::zeros(params.layout().clone());
    for j in 0..params.len() {
        let mut plus = params.clone();
        plus.values_mut()[j] += eps;
        let mut minus = params.clone();
        minus.values_mut()[j] -= eps;
        let lp = spec.loss(&plus, batch).expect("loss at +eps");
        let lm = spec.loss(&minus, batch).expect("loss at -eps");
        grad.values_mut()[j] = (lp - lm) / (2.0 * eps);
    }
    grad
}

/// Worst relative disagreement between two gradients, with near-zero pairs
/// (both below `abs_floor`) treated as agreeing.
pub fn max_rel_error(a: &ParamVector, b: &ParamVector, abs_floor: f64) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| {
            if x.abs() <= abs_floor && y.abs() <= abs_floor {
                0.0
            } else {
                (x - y).abs() / x.abs().max(y.abs())
            }
        })
        .fold(0.0, f64::max)
}

/// Exhaustive Krum score: for each candidate, the minimum over all
/// (k - f - 2)-subsets of the other updates of the summed squared distances.
/// Returns the winning index (ties to the lowest index).
pub fn krum_bruteforce(updates: &[ParamVector], f: usize) -> usize {
    let k = updates.len();
    let m = k - f - 2; // closest set size
    let mut best = (f64::INFINITY, 0usize);
    for i in 0..k {
        let others: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        let mut min_sum = f64::INFINITY;
        // Enumerate all m-subsets of the others by bitmask (k <= 7 here).
        for mask in 0u32..(1 << others.len()) {
            if mask.count_ones() as usize != m {
                continue;
            }
            let sum: f64 = others
                .iter()
                .enumerate()
                .filter(|(bit, _)| mask & (1 << bit) != 0)
                .map(|(_, &j)| {
                    let d = updates[i].l2_distance(&updates[j]);
                    d * d
                })
                .sum();
            min_sum = min_sum.min(sum);
        }
        if min_sum < best.0 {
            best = (min_sum, i);
        }
    }
    best.1
}

/// Naive per-coordinate trimmed mean: sort, slice, average.
pub fn trimmed_mean_naive(updates: &[ParamVector], trim: f64) -> Vec<f64> {
    let k = updates.len();
    let t = (trim * k as f64).ceil() as usize;
    let dim = updates[0].len();
    let mut out = vec![0.0; dim];
    for (j, o) in out.iter_mut().enumerate() {
        let mut col: Vec<f64> = updates.iter().map(|u| u.values()[j]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let kept = &col[t..k - t];
        *o = kept.iter().sum::<f64>() / kept.len() as f64;
    }
    out
}

/// Direct-summation weighted mean.
pub fn weighted_mean_naive(updates: &[ParamVector], weights: &[f64]) -> Vec<f64> {
    let dim = updates[0].len();
    let mut out = vec![0.0; dim];
    for (u, &w) in updates.iter().zip(weights) {
        for (o, &v) in out.iter_mut().zip(u.values()) {
            *o += w * v;
        }
    }
    out
}

/// Sum of Euclidean distances from `y` to each point (the geometric-median
/// objective).
pub fn median_objective(points: &[ParamVector], y: &[f64]) -> f64 {
    points
        .iter()
        .map(|p| {
            p.values()
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// Golden-section search for the minimum of a unimodal 1-D function.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}

/// A labelled test batch with gaussian features, for gradient checks.
pub fn random_batch(
    rng: &mut impl rand::Rng,
    n: usize,
    dim: usize,
    classes: usize,
    labelled: bool,
) -> Batch {
    use rand_distr::{Distribution, StandardNormal};
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let labels = if labelled {
        (0..n).map(|_| rng.gen_range(0..classes)).collect()
    } else {
        Vec::new()
    };
    Batch::new(
        fedsim_core::linalg::Matrix::from_rows(rows).unwrap(),
        labels,
    )
    .unwrap()
}

/// A random model spec of the given kind with small dims, plus perturbed
/// parameters off the init manifold.
pub fn random_model_instance(
    rng: &mut impl rand::Rng,
    kind: ModelKind,
) -> (ModelSpec, ParamVector, Batch) {
    use rand_distr::{Distribution, Normal};
    let dim = rng.gen_range(2..=6);
    let classes = rng.gen_range(2..=5);
    let hidden = rng.gen_range(2..=6);
    let spec = match kind {
        ModelKind::LogisticRegression => ModelSpec::logistic_regression(dim, classes),
        ModelKind::MlpClassifier => ModelSpec::mlp_classifier(dim, vec![hidden], classes),
        ModelKind::MlpAutoencoder => ModelSpec {
            kind: ModelKind::MlpAutoencoder,
            input_dim: dim,
            hidden_dims: vec![hidden],
            output_dim: dim,
            probe_block: "w0".into(),
        },
    };
    let mut params = spec.init_params(rng.gen());
    let noise = Normal::new(0.0, 0.3).unwrap();
    for v in params.values_mut() {
        *v += noise.sample(rng);
    }
    let n = rng.gen_range(1..=8);
    let batch = random_batch(rng, n, dim, classes, kind != ModelKind::MlpAutoencoder);
    (spec, params, batch)
}
