//! Randomized cross-checks of the aggregation rules against independent
//! brute-force / naive-summation oracles.

mod common;

use std::sync::Arc;

use fedsim_core::defense::{fedavg, geomed_with_trace, krum_index, trimmed_mean};
use fedsim_core::params::{ParamLayout, ParamVector};
use fedsim_core::seed;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_updates(rng: &mut impl Rng, k: usize, dim: usize) -> Vec<ParamVector> {
    let layout = Arc::new(ParamLayout::new(&[("w", dim)]));
    (0..k)
        .map(|_| {
            let values: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            ParamVector::from_values(layout.clone(), values).unwrap()
        })
        .collect()
}

#[test]
fn krum_matches_exhaustive_subset_search() {
    let mut rng = seed::rng(101);
    for trial in 0..200 {
        let k = rng.gen_range(4..=7);
        let f = rng.gen_range(0..=k - 3);
        let dim = rng.gen_range(1..=4);
        let updates = random_updates(&mut rng, k, dim);
        let fast = krum_index(&updates, f).unwrap();
        let brute = common::krum_bruteforce(&updates, f);
        assert_eq!(fast, brute, "trial {trial}: k={k} f={f}");
    }
}

#[test]
fn trimmed_mean_matches_naive_sorting() {
    let mut rng = seed::rng(102);
    for trial in 0..200 {
        let k = rng.gen_range(3..=10);
        let dim = rng.gen_range(1..=5);
        // Keep 2*ceil(trim*k) < k.
        let max_trim = (k as f64 / 2.0 - 1.0) / k as f64;
        let trim = rng.gen_range(0.0..max_trim.max(1e-6));
        let updates = random_updates(&mut rng, k, dim);
        let fast = trimmed_mean(&updates, trim).unwrap();
        let naive = common::trimmed_mean_naive(&updates, trim);
        for (a, b) in fast.values().iter().zip(&naive) {
            assert!((a - b).abs() < 1e-12, "trial {trial}: k={k} trim={trim}");
        }
    }
}

#[test]
fn fedavg_matches_direct_summation() {
    let mut rng = seed::rng(103);
    for _ in 0..100 {
        let k = rng.gen_range(2..=8);
        let dim = rng.gen_range(1..=5);
        let updates = random_updates(&mut rng, k, dim);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let fast = fedavg(&updates, &weights).unwrap();
        let naive = common::weighted_mean_naive(&updates, &weights);
        for (a, b) in fast.values().iter().zip(&naive) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn geomed_on_a_line_matches_golden_section_search() {
    // Collinear points reduce the geometric median to a 1-D problem a
    // golden-section search can solve independently.
    let layout = Arc::new(ParamLayout::new(&[("w", 2)]));
    let xs = [0.0, 1.0, 100.0];
    let updates: Vec<ParamVector> = xs
        .iter()
        .map(|&x| ParamVector::from_values(layout.clone(), vec![x, 0.0]).unwrap())
        .collect();
    let (y, trace) = geomed_with_trace(&updates, 1e-10, 500).unwrap();
    for w in trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "objective rose: {trace:?}");
    }
    let points = updates.clone();
    let objective_1d =
        |x: f64| common::median_objective(&points, &[x, 0.0]);
    let best_x = common::golden_section_min(objective_1d, -1.0, 101.0, 1e-10);
    let ours = common::median_objective(&updates, y.values());
    let ref_val = objective_1d(best_x);
    assert!(
        ours <= ref_val + 1e-6,
        "weiszfeld objective {ours} vs golden-section {ref_val}"
    );
    assert!(y.values()[1].abs() < 1e-9, "median left the line: {:?}", y.values());
}

#[test]
fn rules_are_equivariant_under_client_permutation() {
    let mut rng = seed::rng(104);
    for _ in 0..50 {
        let k = rng.gen_range(4..=7);
        let dim = rng.gen_range(1..=4);
        let updates = random_updates(&mut rng, k, dim);
        let mut shuffled = updates.clone();
        shuffled.shuffle(&mut rng);

        // The krum *score* of the winner is permutation-invariant (the winner
        // itself can differ when the closest pair ties exactly and the index
        // tie-break kicks in).
        let krum_score = |ups: &[ParamVector], i: usize, f: usize| -> f64 {
            let mut dists: Vec<f64> = ups
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, u)| {
                    let d = ups[i].l2_distance(u);
                    d * d
                })
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            dists[..ups.len() - f - 2].iter().sum()
        };
        let f = rng.gen_range(0..=k - 3);
        let a = krum_index(&updates, f).unwrap();
        let b = krum_index(&shuffled, f).unwrap();
        assert_eq!(
            krum_score(&updates, a, f),
            krum_score(&shuffled, b, f),
            "krum winning score changed under relabeling"
        );

        let t1 = trimmed_mean(&updates, 0.2).unwrap();
        let t2 = trimmed_mean(&shuffled, 0.2).unwrap();
        for (x, y) in t1.values().iter().zip(t2.values()) {
            assert!((x - y).abs() < 1e-12);
        }

        let uniform = vec![1.0 / k as f64; k];
        let m1 = fedavg(&updates, &uniform).unwrap();
        let m2 = fedavg(&shuffled, &uniform).unwrap();
        for (x, y) in m1.values().iter().zip(m2.values()) {
            assert!((x - y).abs() < 1e-12);
        }

        let (g1, _) = geomed_with_trace(&updates, 1e-10, 200).unwrap();
        let (g2, _) = geomed_with_trace(&shuffled, 1e-10, 200).unwrap();
        for (x, y) in g1.values().iter().zip(g2.values()) {
            assert!((x - y).abs() < 1e-7);
        }
    }
}
