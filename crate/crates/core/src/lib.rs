//! Deterministic simulator for Byzantine-robust federated learning.
//!
//! The crate provides the building blocks for running small, fully
//! reproducible federated experiments on synthetic data:
//!
//! - [`model`]: from-scratch differentiable models (logistic regression,
//!   MLP classifier, MLP autoencoder) over flat parameter vectors, with
//!   analytic gradients and seeded SGD.
//! - [`data`]: synthetic Gaussian-blob datasets, label-skewed client
//!   partitions, and per-client shared/private splits.
//! - [`attack`]: Byzantine client behaviours (same-value, sign-flipping,
//!   additive Gaussian noise) and per-round participation plans.
//! - [`defense`]: classic robust aggregators (FedAvg, Krum, geometric
//!   median, trimmed mean) plus a detection-only baseline.
//! - [`detector`]: an adaptive autoencoder that scores parameter-slice
//!   anomalies and fine-tunes itself on trusted clients each round.
//! - [`brca`]: credibility assessment combining detection scores with
//!   data-verification scores, momentum aggregation, and a server-side
//!   unified update on client-shared data.
//! - [`sim`]: the round loop tying everything together, plus detection
//!   quality metrics.
//! - [`config`]: experiment configuration with flat dotted keys and
//!   validation.
//!
//! Every stochastic choice derives from one master seed through the
//! documented scheme in [`seed`], so repeated runs produce byte-identical
//! metric streams.

pub mod attack;
pub mod brca;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod defense;
pub mod detector;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod params;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};

/// `⌈frac·n⌉` computed robustly against float noise in the product (an exact
/// integer product never rounds up to the next count).
pub fn ceil_frac(frac: f64, n: usize) -> usize {
    ((frac * n as f64) - 1e-9).ceil().max(0.0) as usize
}

#[cfg(test)]
mod lib_tests {
    use super::ceil_frac;

    #[test]
    fn ceil_frac_handles_exact_and_fractional_products() {
        assert_eq!(ceil_frac(0.2, 10), 2); // exact product stays put
        assert_eq!(ceil_frac(0.2, 11), 3); // 2.2 rounds up
        assert_eq!(ceil_frac(0.1, 8), 1); // 0.8 rounds up
        assert_eq!(ceil_frac(0.0, 10), 0);
        assert_eq!(ceil_frac(0.3, 10), 3); // 3.0000000000000004 stays at 3
    }
}
