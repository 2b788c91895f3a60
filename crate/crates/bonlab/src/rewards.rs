//! Reward tables, pairwise comparisons, win-rates and reward-model error.

use std::collections::BTreeMap;

use crate::dist::{fsum, FiniteDist};
use crate::error::{Error, Result};
use crate::mc::McEstimate;
use serde::{Deserialize, Serialize};

/// Above this many support points the exact win-rate switches from the
/// double sum to the sorted mid-CDF evaluator.
pub const DOUBLE_SUM_LIMIT: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawReward")]
pub struct RewardModel {
    r_max: f64,
    values: BTreeMap<u64, f64>,
}

#[derive(Deserialize)]
struct RawReward {
    r_max: f64,
    values: BTreeMap<u64, f64>,
}

impl TryFrom<RawReward> for RewardModel {
    type Error = Error;
    fn try_from(raw: RawReward) -> Result<Self> {
        RewardModel::new(raw.values, raw.r_max)
    }
}

impl RewardModel {
    pub fn new(mut values: BTreeMap<u64, f64>, r_max: f64) -> Result<Self> {
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::InvalidReward(format!("r_max must be positive and finite, got {r_max}")));
        }
        for (id, v) in values.iter_mut() {
            if !v.is_finite() || *v < 0.0 || *v > r_max {
                return Err(Error::InvalidReward(format!(
                    "reward {v} for outcome {id} outside [0, {r_max}]"
                )));
            }
            // -0.0 and 0.0 must tie
            if *v == 0.0 {
                *v = 0.0;
            }
        }
        Ok(RewardModel { r_max, values })
    }

    pub fn from_pairs<I: IntoIterator<Item = (u64, f64)>>(pairs: I, r_max: f64) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (id, v) in pairs {
            if values.insert(id, v).is_some() {
                return Err(Error::InvalidReward(format!("duplicate outcome {id}")));
            }
        }
        RewardModel::new(values, r_max)
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn values(&self) -> &BTreeMap<u64, f64> {
        &self.values
    }

    pub fn get(&self, id: u64) -> Result<f64> {
        self.values.get(&id).copied().ok_or(Error::UnknownOutcome(id))
    }

    /// Rewards aligned with `dist.outcomes()`.
    pub fn values_on(&self, dist: &FiniteDist) -> Result<Vec<f64>> {
        dist.outcomes().iter().map(|&id| self.get(id)).collect()
    }

    /// Applies `f` to every value; `f` must map into `[0, r_max]`.
    pub fn map(&self, r_max: f64, f: impl Fn(f64) -> f64) -> Result<RewardModel> {
        RewardModel::new(self.values.iter().map(|(&k, &v)| (k, f(v))).collect(), r_max)
    }

    pub fn expectation(&self, dist: &FiniteDist) -> Result<f64> {
        let v = self.values_on(dist)?;
        Ok(fsum(v.iter().zip(dist.probs()).map(|(r, p)| r * p)))
    }

    pub fn variance(&self, dist: &FiniteDist) -> Result<f64> {
        let mean = self.expectation(dist)?;
        let v = self.values_on(dist)?;
        Ok(fsum(v.iter().zip(dist.probs()).map(|(r, p)| p * (r - mean) * (r - mean))))
    }
}

fn phi(a: f64, b: f64) -> f64 {
    if a.to_bits() == b.to_bits() {
        0.5
    } else if a > b {
        1.0
    } else {
        0.0
    }
}

/// 1 if `r(y) > r(y2)`, 0.5 on a tie, 0 otherwise.
pub fn pairwise_outcome(reward: &RewardModel, y: u64, y2: u64) -> Result<f64> {
    Ok(phi(reward.get(y)?, reward.get(y2)?))
}

/// One block of outcomes sharing a reward value, in ascending reward order.
#[derive(Clone, Debug, PartialEq)]
pub struct TieClass {
    pub value: f64,
    /// Mass strictly below `value`.
    pub below: f64,
    pub mass: f64,
    /// Indices into the distribution's outcome list.
    pub members: Vec<usize>,
}

/// Tie classes of `reward` under `dist`, ascending. Zero-mass outcomes are
/// kept as members so induced policies stay on the full support.
#[derive(Clone, Debug)]
pub struct RankTable {
    classes: Vec<TieClass>,
    class_of: Vec<usize>,
}

impl RankTable {
    pub fn new(dist: &FiniteDist, reward: &RewardModel) -> Result<Self> {
        let vals = reward.values_on(dist)?;
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        let mut classes: Vec<TieClass> = Vec::new();
        let mut class_of = vec![0; vals.len()];
        for &i in &order {
            match classes.last_mut() {
                Some(c) if c.value.to_bits() == vals[i].to_bits() => c.members.push(i),
                _ => classes.push(TieClass { value: vals[i], below: 0.0, mass: 0.0, members: vec![i] }),
            }
            class_of[i] = classes.len() - 1;
        }
        let probs = dist.probs();
        let mut below = 0.0f64;
        let mut comp = 0.0;
        for c in classes.iter_mut() {
            c.mass = fsum(c.members.iter().map(|&i| probs[i]));
            c.below = (below + comp).min(1.0);
            // running Neumaier sum of class masses
            let t = below + c.mass;
            if below.abs() >= c.mass.abs() {
                comp += (below - t) + c.mass;
            } else {
                comp += (c.mass - t) + below;
            }
            below = t;
        }
        Ok(RankTable { classes, class_of })
    }

    pub fn classes(&self) -> &[TieClass] {
        &self.classes
    }

    pub fn class_of(&self, index: usize) -> &TieClass {
        &self.classes[self.class_of[index]]
    }

    /// `(F(t-), F(t))` at reward value `t`; `t` need not be in the table.
    pub fn cdf_at(&self, t: f64) -> (f64, f64) {
        let k = self.classes.partition_point(|c| c.value < t);
        match self.classes.get(k) {
            Some(c) if c.value.to_bits() == t.to_bits() => (c.below, (c.below + c.mass).min(1.0)),
            Some(c) => (c.below, c.below),
            None => (1.0, 1.0),
        }
    }

    /// `½(F(t-) + F(t))`.
    pub fn mid_cdf(&self, t: f64) -> f64 {
        let (lo, hi) = self.cdf_at(t);
        0.5 * (lo + hi)
    }
}

/// Randomized probability-integral transform `F(r(y)-) + v·(F(r(y)) − F(r(y)-))`
/// under `dist`. With `y ~ dist` and `v ~ Unif[0,1]` the output is uniform.
pub fn randomized_rank(dist: &FiniteDist, reward: &RewardModel, y: u64, v: f64) -> Result<f64> {
    if dist.index_of(y).is_none() {
        return Err(Error::UnknownOutcome(y));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param("v", format!("must lie in [0, 1], got {v}")));
    }
    let (lo, hi) = RankTable::new(dist, reward)?.cdf_at(reward.get(y)?);
    Ok((lo + v * (hi - lo)).clamp(0.0, 1.0))
}

/// Which reward a win-rate or regret is measured under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardChoice {
    RHat,
    RStar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WinRateReport {
    pub value: f64,
    pub comparator: FiniteDist,
    pub method: Method,
    pub estimate: Option<McEstimate>,
}

impl WinRateReport {
    pub const CSV_HEADER: &'static str = "method,value,half_width,trials,seed";

    pub fn csv_row(&self) -> String {
        match &self.estimate {
            Some(e) => format!("monte-carlo,{},{},{},{}", self.value, e.half_width, e.trials, e.seed),
            None => format!("exact,{},0,0,", self.value),
        }
    }
}

/// Exact `Σ π(y) q(y') φ_r(y, y')` by the double sum.
pub fn win_rate_double_sum(policy: &FiniteDist, reward: &RewardModel, comparator: &FiniteDist) -> Result<f64> {
    let a = reward.values_on(policy)?;
    let b = reward.values_on(comparator)?;
    let qs = comparator.probs();
    let rows = a.iter().zip(policy.probs()).map(|(&ra, &p)| {
        if p == 0.0 {
            0.0
        } else {
            p * fsum(b.iter().zip(qs).map(|(&rb, &q)| q * phi(ra, rb)))
        }
    });
    Ok(fsum(rows).clamp(0.0, 1.0))
}

/// Exact win-rate as `E_π[F̃_q(r(y))]` with the comparator's mid-CDF.
pub fn win_rate_mid_cdf(policy: &FiniteDist, reward: &RewardModel, comparator: &FiniteDist) -> Result<f64> {
    let table = RankTable::new(comparator, reward)?;
    let a = reward.values_on(policy)?;
    Ok(fsum(a.iter().zip(policy.probs()).map(|(&r, &p)| p * table.mid_cdf(r))).clamp(0.0, 1.0))
}

pub fn win_rate_exact(policy: &FiniteDist, reward: &RewardModel, comparator: &FiniteDist) -> Result<WinRateReport> {
    let value = if policy.len().max(comparator.len()) < DOUBLE_SUM_LIMIT {
        win_rate_double_sum(policy, reward, comparator)?
    } else {
        win_rate_mid_cdf(policy, reward, comparator)?
    };
    Ok(WinRateReport { value, comparator: comparator.clone(), method: Method::Exact, estimate: None })
}

/// Shorthand for the exact win-rate value.
pub fn win_rate(policy: &FiniteDist, reward: &RewardModel, comparator: &FiniteDist) -> Result<f64> {
    win_rate_exact(policy, reward, comparator).map(|r| r.value)
}

/// `E_{y,y'~ref} |φ_r̂(y,y') − φ_r*(y,y')|`.
pub fn pairwise_error_exact(r_hat: &RewardModel, r_star: &RewardModel, reference: &FiniteDist) -> Result<f64> {
    let a = r_hat.values_on(reference)?;
    let b = r_star.values_on(reference)?;
    let p = reference.probs();
    let n = p.len();
    let rows = (0..n).map(|i| {
        if p[i] == 0.0 {
            return 0.0;
        }
        p[i] * fsum((0..n).map(|j| p[j] * (phi(a[i], a[j]) - phi(b[i], b[j])).abs()))
    });
    Ok(fsum(rows))
}

/// `E_ref[(r̂ − r*)²]`.
pub fn mse_error(r_hat: &RewardModel, r_star: &RewardModel, reference: &FiniteDist) -> Result<f64> {
    let a = r_hat.values_on(reference)?;
    let b = r_star.values_on(reference)?;
    Ok(fsum(reference.probs().iter().zip(a.iter().zip(&b)).map(|(p, (x, y))| p * (x - y) * (x - y))))
}
