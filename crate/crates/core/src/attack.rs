//! Byzantine client behaviours and per-round participation plans.
//!
//! Attacks transform the update a Byzantine client would have sent honestly:
//! `same-value` replaces every coordinate with a constant, `sign-flipping`
//! rescales by a negative multiplier, and `gaussian` adds seeded i.i.d.
//! noise. Which clients are Byzantine is fixed once per experiment (a seeded
//! subset of the population); each round intersects that subset with the
//! round's uniformly sampled participants.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::params::ParamVector;
use crate::seed::{self, purpose};
use crate::{ceil_frac, Error, Result};

/// The Byzantine perturbation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// Send the update untouched (no attack).
    None,
    /// Send the constant vector c·1.
    SameValue,
    /// Send a·update with a < 0.
    SignFlipping,
    /// Send update + N(0, g²) noise per coordinate.
    Gaussian,
}

/// Attack family plus its parameters and noise seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// same-value constant.
    pub c: f64,
    /// sign-flipping multiplier; must be negative.
    pub a: f64,
    /// gaussian noise standard deviation; must be positive.
    pub g: f64,
    pub seed: u64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            c: 5.0,
            a: -5.0,
            g: 0.3,
            seed: 0,
        }
    }
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.a.is_finite() && self.g.is_finite()) {
            return Err(Error::InvalidArgument("non-finite attack parameter".into()));
        }
        if self.kind == AttackKind::SignFlipping && self.a >= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sign-flipping multiplier must be negative, got {}",
                self.a
            )));
        }
        if self.kind == AttackKind::Gaussian && self.g <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gaussian noise std-dev must be positive, got {}",
                self.g
            )));
        }
        Ok(())
    }

    /// This spec with the noise stream rebased for one (round, client) cell.
    pub fn seeded_for(&self, master: u64, round: u64, client_id: usize) -> AttackSpec {
        AttackSpec {
            seed: seed::child_seed(master, &[purpose::ATTACK, round, client_id as u64]),
            ..*self
        }
    }
}

/// Apply the Byzantine perturbation to an honestly computed update.
pub fn apply_attack(update: &ParamVector, spec: &AttackSpec) -> ParamVector {
    spec.validate().expect("attack spec validated upstream");
    let mut out = update.clone();
    match spec.kind {
        AttackKind::None => {}
        AttackKind::SameValue => out.values_mut().fill(spec.c),
        AttackKind::SignFlipping => out.scale(spec.a),
        AttackKind::Gaussian => {
            let noise = Normal::new(0.0, spec.g).expect("validated std-dev");
            let mut rng = seed::rng(spec.seed);
            for v in out.values_mut() {
                *v += noise.sample(&mut rng);
            }
        }
    }
    debug_assert!(out.is_finite(), "attack produced non-finite update");
    out
}

/// One round's participation: the sampled set S and its Byzantine subset B.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundPlan {
    pub round: u64,
    /// Sampled participants, ascending.
    pub selected: Vec<usize>,
    /// Byzantine participants (fixed subset ∩ selected), ascending.
    pub byzantine: Vec<usize>,
}

impl RoundPlan {
    /// Selected clients that are not Byzantine, ascending.
    pub fn honest(&self) -> Vec<usize> {
        self.selected
            .iter()
            .copied()
            .filter(|id| !self.byzantine.contains(id))
            .collect()
    }

    pub fn is_byzantine(&self, client_id: usize) -> bool {
        self.byzantine.contains(&client_id)
    }
}

/// The experiment-level Byzantine subset: ⌈xi·n⌉ ids sampled once per seed.
pub fn byzantine_subset(all_clients: usize, xi: f64, seed_value: u64) -> Vec<usize> {
    let count = ceil_frac(xi, all_clients);
    let mut rng = seed::rng(seed::child_seed(seed_value, &[purpose::BYZANTINE_SET]));
    let mut ids = rand::seq::index::sample(&mut rng, all_clients, count).into_vec();
    ids.sort_unstable();
    ids
}

/// Sample round participants uniformly without replacement and mark which of
/// them belong to the experiment's fixed Byzantine subset.
pub fn plan_round(
    all_clients: usize,
    k: usize,
    xi: f64,
    round: u64,
    seed_value: u64,
) -> Result<RoundPlan> {
    if !(0.0..0.5).contains(&xi) {
        return Err(Error::InvalidArgument(format!(
            "attack rate xi={xi} outside [0, 0.5)"
        )));
    }
    if k == 0 || k > all_clients {
        return Err(Error::InvalidArgument(format!(
            "cannot select {k} of {all_clients} clients"
        )));
    }
    let byz = byzantine_subset(all_clients, xi, seed_value);
    let mut rng = seed::rng(seed::child_seed(seed_value, &[purpose::SELECT, round]));
    let mut selected = rand::seq::index::sample(&mut rng, all_clients, k).into_vec();
    selected.sort_unstable();
    let byzantine: Vec<usize> = selected
        .iter()
        .copied()
        .filter(|id| byz.binary_search(id).is_ok())
        .collect();
    Ok(RoundPlan {
        round,
        selected,
        byzantine,
    })
}
