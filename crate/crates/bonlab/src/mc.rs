//! Monte-Carlo estimates with distribution-free (Hoeffding) intervals.

use crate::dist::fsum;
use crate::error::{Error, Result};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub trials: u64,
    pub seed: u64,
    pub confidence: f64,
}

impl McEstimate {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.half_width
    }
}

/// Two-sided Hoeffding half-width for the mean of `trials` values in [0, 1].
pub fn hoeffding_half_width(trials: u64, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * trials as f64)).sqrt()
}

pub(crate) fn check_mc_args(trials: u64, confidence: f64) -> Result<()> {
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::param("confidence", format!("must lie in (0, 1), got {confidence}")));
    }
    Ok(())
}

/// Mean of `f` over `trials` independent trials; trial `i` gets `rng.derive(i)`.
/// Values must lie in [0, 1] for the interval to be valid.
pub fn estimate_mean(
    trials: u64,
    rng: &Rng,
    confidence: f64,
    mut f: impl FnMut(&mut Rng) -> Result<f64>,
) -> Result<McEstimate> {
    check_mc_args(trials, confidence)?;
    let mut vals = Vec::with_capacity(trials as usize);
    for i in 0..trials {
        let mut r = rng.derive(i);
        vals.push(f(&mut r)?);
    }
    Ok(McEstimate {
        mean: fsum(vals) / trials as f64,
        half_width: hoeffding_half_width(trials, confidence),
        trials,
        seed: rng.seed(),
        confidence,
    })
}

/// Empirical frequencies of `draw` over `trials` derived streams, aligned with `outcomes`.
pub fn empirical_law(
    outcomes: &[u64],
    trials: u64,
    rng: &Rng,
    mut draw: impl FnMut(&mut Rng) -> Result<u64>,
) -> Result<Vec<f64>> {
    let mut counts = vec![0u64; outcomes.len()];
    for i in 0..trials {
        let mut r = rng.derive(i);
        let y = draw(&mut r)?;
        let k = outcomes.binary_search(&y).map_err(|_| Error::UnknownOutcome(y))?;
        counts[k] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / trials as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_width_arithmetic() {
        // 10^6 trials at 95%: sqrt(ln 40 / 2e6) ≈ 0.001358
        let h = hoeffding_half_width(1_000_000, 0.95);
        assert!(h < 0.002 && (h - 0.001358).abs() < 1e-5);
    }

    #[test]
    fn estimate_is_order_independent() {
        let rng = Rng::new(11, 3);
        let a = estimate_mean(1000, &rng, 0.9, |r| Ok(r.uniform())).unwrap();
        let b = estimate_mean(1000, &rng, 0.9, |r| Ok(r.uniform())).unwrap();
        assert_eq!(a, b);
        assert!(a.contains(0.5));
    }

    #[test]
    fn bad_args() {
        let rng = Rng::new(0, 0);
        assert!(estimate_mean(0, &rng, 0.9, |_| Ok(0.0)).is_err());
        assert!(estimate_mean(5, &rng, 1.0, |_| Ok(0.0)).is_err());
    }
}
