//! Finite probability mass functions over integer outcome ids.

use crate::error::{Error, Result};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

/// Sums within this distance of 1 are accepted untouched; up to
/// [`RENORMALIZE_TOL`] they are rescaled; beyond that they are rejected.
pub const SUM_TOL: f64 = 1e-12;
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// Compensated (Neumaier) summation in iteration order.
pub fn fsum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDist")]
pub struct FiniteDist {
    outcomes: Vec<u64>,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDist {
    outcomes: Vec<u64>,
    probs: Vec<f64>,
}

impl TryFrom<RawDist> for FiniteDist {
    type Error = Error;
    fn try_from(raw: RawDist) -> Result<Self> {
        FiniteDist::new(raw.outcomes, raw.probs)
    }
}

impl FiniteDist {
    pub fn new(outcomes: Vec<u64>, mut probs: Vec<f64>) -> Result<Self> {
        if outcomes.len() != probs.len() {
            return Err(Error::InvalidDist(format!(
                "{} outcomes but {} probabilities",
                outcomes.len(),
                probs.len()
            )));
        }
        if outcomes.is_empty() {
            return Err(Error::InvalidDist("empty support".into()));
        }
        if let Some(w) = outcomes.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDist(format!(
                "outcome ids must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        for (&id, &p) in outcomes.iter().zip(&probs) {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidDist(format!("outcome {id} has probability {p}")));
            }
        }
        let total = fsum(probs.iter().copied());
        let dev = (total - 1.0).abs();
        if dev > RENORMALIZE_TOL {
            return Err(Error::InvalidDist(format!("probabilities sum to {total}")));
        }
        if dev > SUM_TOL {
            for p in &mut probs {
                *p /= total;
            }
        }
        for p in &mut probs {
            // keep -0.0 out of serialized output
            if *p == 0.0 {
                *p = 0.0;
            }
        }
        Ok(FiniteDist { outcomes, probs })
    }

    /// Builds from unordered `(id, prob)` pairs; duplicate ids are an error.
    pub fn from_pairs<I: IntoIterator<Item = (u64, f64)>>(pairs: I) -> Result<Self> {
        let mut v: Vec<(u64, f64)> = pairs.into_iter().collect();
        v.sort_by_key(|p| p.0);
        let (o, p) = v.into_iter().unzip();
        FiniteDist::new(o, p)
    }

    /// Unnormalized nonnegative weights, rescaled to sum to one.
    pub fn from_weights(outcomes: Vec<u64>, weights: Vec<f64>) -> Result<Self> {
        let total = fsum(weights.iter().copied());
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDist(format!("weights sum to {total}")));
        }
        let probs = weights.iter().map(|w| w / total).collect();
        FiniteDist::new(outcomes, probs)
    }

    pub fn point(id: u64) -> Self {
        FiniteDist { outcomes: vec![id], probs: vec![1.0] }
    }

    /// Uniform over ids `0..n`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDist("empty support".into()));
        }
        let p = 1.0 / n as f64;
        FiniteDist::new((0..n as u64).collect(), vec![p; n])
    }

    pub fn outcomes(&self) -> &[u64] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.outcomes.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.outcomes.binary_search(&id).ok()
    }

    /// Mass at `id`; zero for ids outside the listed outcomes.
    pub fn prob(&self, id: u64) -> f64 {
        self.index_of(id).map_or(0.0, |i| self.probs[i])
    }

    pub fn mass_of<I: IntoIterator<Item = u64>>(&self, ids: I) -> f64 {
        fsum(ids.into_iter().map(|id| self.prob(id)))
    }

    /// Same law re-expressed on a (super)set of outcome ids.
    pub fn extend_to(&self, outcomes: &[u64]) -> Result<FiniteDist> {
        for &id in &self.outcomes {
            if outcomes.binary_search(&id).is_err() && self.prob(id) > 0.0 {
                return Err(Error::UnknownOutcome(id));
            }
        }
        let probs = outcomes.iter().map(|&id| self.prob(id)).collect();
        FiniteDist::new(outcomes.to_vec(), probs)
    }

    /// Total variation distance (half L1), over the union of supports.
    pub fn tv(&self, other: &FiniteDist) -> f64 {
        let mut diffs = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.len() || j < other.len() {
            let a = self.outcomes.get(i).copied().unwrap_or(u64::MAX);
            let b = other.outcomes.get(j).copied().unwrap_or(u64::MAX);
            if j >= other.len() || (i < self.len() && a < b) {
                diffs.push(self.probs[i]);
                i += 1;
            } else if i >= self.len() || b < a {
                diffs.push(other.probs[j]);
                j += 1;
            } else {
                diffs.push((self.probs[i] - other.probs[j]).abs());
                i += 1;
                j += 1;
            }
        }
        0.5 * fsum(diffs)
    }

    /// Restriction to `keep`, renormalized.
    pub fn conditional(&self, keep: &[u64]) -> Result<FiniteDist> {
        let mut keep: Vec<u64> = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let mut o = Vec::new();
        let mut w = Vec::new();
        for (id, p) in self.iter() {
            if keep.binary_search(&id).is_ok() && p > 0.0 {
                o.push(id);
                w.push(p);
            }
        }
        if o.is_empty() {
            return Err(Error::EmptyConditioning);
        }
        FiniteDist::from_weights(o, w)
    }

    pub fn sampler(&self) -> Sampler {
        let mut cdf = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for &p in &self.probs {
            acc += p;
            cdf.push(acc);
        }
        Sampler { cdf, outcomes: self.outcomes.clone() }
    }

    /// `n` i.i.d. draws.
    pub fn sample(&self, rng: &mut Rng, n: usize) -> Result<Vec<u64>> {
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        let s = self.sampler();
        Ok((0..n).map(|_| s.draw(rng)).collect())
    }
}

/// Inverse-CDF sampler; draws an index into the owning distribution.
#[derive(Clone, Debug)]
pub struct Sampler {
    cdf: Vec<f64>,
    outcomes: Vec<u64>,
}

impl Sampler {
    pub fn draw_index(&self, rng: &mut Rng) -> usize {
        let total = *self.cdf.last().unwrap();
        let u = rng.uniform() * total;
        let i = self.cdf.partition_point(|&c| c <= u);
        // zero-mass trailing entries can never be selected
        let mut i = i.min(self.cdf.len() - 1);
        while i > 0 && self.cdf[i] == self.cdf[i - 1] && u >= self.cdf[i - 1] {
            i -= 1;
        }
        i
    }

    pub fn draw(&self, rng: &mut Rng) -> u64 {
        self.outcomes[self.draw_index(rng)]
    }
}

/// Pointwise ratio `target / base`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityRatio {
    base: FiniteDist,
    target: FiniteDist,
    ratios: Vec<f64>,
}

impl DensityRatio {
    pub fn new(target: &FiniteDist, base: &FiniteDist) -> Result<Self> {
        for (id, p) in target.iter() {
            if p > 0.0 && base.prob(id) == 0.0 {
                return Err(Error::Domination { id, mass: p });
            }
        }
        let ratios = base
            .iter()
            .map(|(id, b)| if b > 0.0 { target.prob(id) / b } else { 0.0 })
            .collect();
        Ok(DensityRatio { base: base.clone(), target: target.clone(), ratios })
    }

    pub fn base(&self) -> &FiniteDist {
        &self.base
    }

    pub fn target(&self) -> &FiniteDist {
        &self.target
    }

    /// Ratios aligned with `base().outcomes()`.
    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn ratio(&self, id: u64) -> Result<f64> {
        self.base.index_of(id).map(|i| self.ratios[i]).ok_or(Error::UnknownOutcome(id))
    }

    pub fn max(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    /// Target masses aligned with the base outcomes (zero where target has none).
    pub fn target_masses(&self) -> Vec<f64> {
        self.base.outcomes().iter().map(|&id| self.target.prob(id)).collect()
    }
}

pub fn density_ratio(target: &FiniteDist, base: &FiniteDist) -> Result<DensityRatio> {
    DensityRatio::new(target, base)
}
