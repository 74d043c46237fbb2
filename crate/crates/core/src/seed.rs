//! Deterministic seed derivation.
//!
//! Every random decision in an experiment draws from its own ChaCha8 stream,
//! whose seed is derived from the master seed with [`child_seed`]. The
//! derivation absorbs a list of tags — a purpose constant followed by indices
//! such as round and client id — through a splitmix64-style mixer:
//!
//! ```text
//! h = mix(master ^ GOLDEN)
//! for tag in tags: h = mix(h ^ mix(tag + GOLDEN))
//! ```
//!
//! Each call site uses a fixed purpose constant and a fixed tag arity, so
//! distinct decisions never share a stream and re-running with the same
//! master seed reproduces every stream bit-for-bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags separating the seed streams of unrelated decisions.
pub mod purpose {
    /// Target-domain dataset synthesis.
    pub const DATA: u64 = 1;
    /// Source-domain dataset synthesis (detector pretraining).
    pub const SOURCE: u64 = 2;
    /// Client partition assignment.
    pub const PARTITION: u64 = 3;
    /// Shared-shard extraction.
    pub const SHARED: u64 = 4;
    /// Global model initialization.
    pub const MODEL_INIT: u64 = 5;
    /// Detector initialization.
    pub const DETECTOR_INIT: u64 = 6;
    /// Per-round client selection.
    pub const SELECT: u64 = 7;
    /// Experiment-level Byzantine subset choice.
    pub const BYZANTINE_SET: u64 = 8;
    /// Per-round, per-client local training (mini-batch order).
    pub const CLIENT_TRAIN: u64 = 9;
    /// Per-round, per-client attack noise.
    pub const ATTACK: u64 = 10;
    /// Server-side unified update passes.
    pub const UNIFIED: u64 = 11;
    /// Detector pretraining passes.
    pub const PRETRAIN: u64 = 12;
    /// Clean warm-up rounds that harvest pretraining probes.
    pub const WARMUP: u64 = 13;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer: a cheap, well-mixed u64 -> u64 bijection.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a tag path (purpose, indices...).
pub fn child_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = mix(master ^ GOLDEN);
    for &tag in tags {
        h = mix(h ^ mix(tag.wrapping_add(GOLDEN)));
    }
    h
}

/// The RNG used everywhere: ChaCha8, whose stream is stable across platforms.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
