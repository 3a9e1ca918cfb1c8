//! Keyed random streams. Every draw is addressed by `(seed, purpose, unit, node)`, so
//! results do not depend on thread scheduling and interventions only change draws that
//! are structurally downstream of the intervened node.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::panel::Var;

/// Named derivations from the top-level seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Structural-model simulation; units are subjects.
    Simulation = 1,
    /// Monte Carlo rollout; units are rollout indices.
    Rollout = 2,
    /// Baseline selection for a rollout.
    Baseline = 3,
    /// Bootstrap resampling; units are replicate indices.
    Bootstrap = 4,
    /// Seeds handed to the pipeline inside a bootstrap replicate.
    Replicate = 5,
}

/// Stream code of `var` at time `k`.
pub fn node_code(var: Var, k: usize) -> u64 {
    let v = match var {
        Var::Censor => 0,
        Var::Compete => 1,
        Var::Covariate(i) => 2 + i as u64,
        Var::Dose => u32::MAX as u64 - 1,
        Var::Treatment => u32::MAX as u64,
    };
    ((k as u64) << 32) | v
}

pub fn stream(seed: u64, purpose: Purpose, unit: u64, code: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(&unit.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(code);
    rng
}

/// A seed derived from `seed` for the given purpose and unit, e.g. the seed of one
/// bootstrap replicate.
pub fn derive_seed(seed: u64, purpose: Purpose, unit: u64) -> u64 {
    stream(seed, purpose, unit, 0).random()
}

/// Draws of one node: a uniform for the Bernoulli/positivity part, then a standard
/// normal for the continuous part, always in this order.
pub struct NodeDraws {
    rng: ChaCha8Rng,
}

impl NodeDraws {
    pub fn new(seed: u64, purpose: Purpose, unit: u64, var: Var, k: usize) -> Self {
        Self { rng: stream(seed, purpose, unit, node_code(var, k)) }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}
