//! Seeded random distributions and reward tables for property sweeps.

use crate::dist::FiniteDist;
use crate::error::Result;
use crate::rewards::RewardModel;
use crate::rng::Rng;

/// Random law on ids `0..n`; each atom is zero with probability `zero_prob`
/// (at least one atom stays positive).
pub fn dist(rng: &mut Rng, n: usize, zero_prob: f64) -> Result<FiniteDist> {
    let keep = rng.below(n);
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let u = rng.uniform();
            if i != keep && rng.uniform() < zero_prob {
                0.0
            } else {
                // heavy-ish tail so some ratios get large
                -(1.0 - u).ln() + 1e-3
            }
        })
        .collect();
    FiniteDist::from_weights((0..n as u64).collect(), w)
}

/// Random law absolutely continuous w.r.t. `base`.
pub fn dominated(rng: &mut Rng, base: &FiniteDist) -> Result<FiniteDist> {
    let w: Vec<f64> = base
        .probs()
        .iter()
        .map(|&p| if p > 0.0 { -(1.0 - rng.uniform()).ln() + 1e-3 } else { 0.0 })
        .collect();
    FiniteDist::from_weights(base.outcomes().to_vec(), w)
}

/// Reward table on ids `0..n` with values from `levels` equally spaced
/// points in `[0, 1]`; few levels produce ties.
pub fn reward(rng: &mut Rng, n: usize, levels: usize) -> Result<RewardModel> {
    let l = levels.max(2);
    RewardModel::from_pairs((0..n as u64).map(|i| (i, rng.below(l) as f64 / (l - 1) as f64)), 1.0)
}
