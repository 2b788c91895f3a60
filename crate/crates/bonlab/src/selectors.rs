//! Selection rules of the sample-and-evaluate model: samplers and exact
//! induced policies.
//!
//! Ties in `r̂` are always broken by an auxiliary uniform `V` drawn with each
//! sample (lexicographic order on `(r̂, V)`), never by index order.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::dist::{fsum, DensityRatio, FiniteDist, Sampler};
use crate::error::{Error, Result};
use crate::rewards::{RankTable, RewardModel};
use crate::rng::Rng;
use crate::special::{top_k_rank_cdf, BETA_TOL};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SelectorSpec {
    Bon { n: u64 },
    EmBon { m: f64, n: u64 },
    ChiBon { beta: f64 },
    Rejection { m: f64, n: u64 },
    TopQuantile { m: f64 },
}

/// `⌈n/m⌉`, clamped to `1..=n`.
pub fn em_k(m: f64, n: u64) -> u64 {
    let k = (n as f64 / m).ceil();
    if k < 1.0 {
        1
    } else {
        (k as u64).min(n)
    }
}

fn parse_count(field: &str, s: &str) -> Result<u64> {
    match s.trim().parse::<i64>() {
        Ok(v) if v >= 1 => Ok(v as u64),
        _ => Err(Error::param(field, format!("must be a positive integer, got `{s}`"))),
    }
}

fn parse_real(field: &str, s: &str, min: f64, inclusive: bool) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::param(field, format!("must be a number, got `{s}`")))?;
    let ok = v.is_finite() && if inclusive { v >= min } else { v > min };
    if !ok {
        let op = if inclusive { "≥" } else { ">" };
        return Err(Error::param(field, format!("must be {op} {min}, got {v}")));
    }
    Ok(v)
}

impl FromStr for SelectorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params: Vec<(&str, &str)> = Vec::new();
        for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::param(part.trim(), "expected `name=value`"))?;
            params.push((k.trim(), v.trim()));
        }
        let allowed: &[&str] = match kind.trim() {
            "bon" => &["n"],
            "em_bon" => &["m", "n"],
            "chi_bon" => &["beta"],
            "rejection" => &["m", "n"],
            "top_quantile" => &["m"],
            other => return Err(Error::param("kind", format!("unknown selector `{other}`"))),
        };
        for (k, _) in &params {
            if !allowed.contains(k) {
                return Err(Error::param(k, format!("not a parameter of `{}`", kind.trim())));
            }
        }
        let get = |name: &str| -> Result<&str> {
            params
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::param(name, "missing"))
        };
        Ok(match kind.trim() {
            "bon" => SelectorSpec::Bon { n: parse_count("n", get("n")?)? },
            "em_bon" => SelectorSpec::EmBon {
                m: parse_real("m", get("m")?, 1.0, true)?,
                n: parse_count("n", get("n")?)?,
            },
            "chi_bon" => SelectorSpec::ChiBon { beta: parse_real("beta", get("beta")?, 0.0, false)? },
            "rejection" => SelectorSpec::Rejection {
                m: parse_real("m", get("m")?, 1.0, true)?,
                n: parse_count("n", get("n")?)?,
            },
            _ => SelectorSpec::TopQuantile { m: parse_real("m", get("m")?, 1.0, true)? },
        })
    }
}

impl fmt::Display for SelectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectorSpec::Bon { n } => write!(f, "bon:n={n}"),
            SelectorSpec::EmBon { m, n } => write!(f, "em_bon:m={m},n={n}"),
            SelectorSpec::ChiBon { beta } => write!(f, "chi_bon:beta={beta}"),
            SelectorSpec::Rejection { m, n } => write!(f, "rejection:m={m},n={n}"),
            SelectorSpec::TopQuantile { m } => write!(f, "top_quantile:m={m}"),
        }
    }
}

impl TryFrom<String> for SelectorSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SelectorSpec> for String {
    fn from(s: SelectorSpec) -> String {
        s.to_string()
    }
}

impl SelectorSpec {
    /// Whether the selector draws reference samples (as opposed to being a
    /// population-level policy).
    pub fn is_sampling(&self) -> bool {
        matches!(self, SelectorSpec::Bon { .. } | SelectorSpec::EmBon { .. } | SelectorSpec::Rejection { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InducedPolicy {
    pub dist: FiniteDist,
    /// Certified bound on `dπ/dπ_ref`, when the selector has one.
    pub ratio_cap_claim: Option<f64>,
}

impl InducedPolicy {
    /// Largest ratio against `reference` and whether it respects the claim.
    pub fn check_cap(&self, reference: &FiniteDist) -> Result<(f64, bool)> {
        let r = DensityRatio::new(&self.dist, reference)?.max();
        Ok((r, self.ratio_cap_claim.is_none_or(|c| r <= c + 1e-12)))
    }
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    Ok(())
}

fn check_m(m: f64) -> Result<()> {
    if !(m >= 1.0) || !m.is_finite() {
        return Err(Error::param("m", format!("must be ≥ 1, got {m}")));
    }
    Ok(())
}

/// Descending `(r̂, V)` order.
fn by_score_desc(a: &(f64, f64, usize), b: &(f64, f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1))
}

/// Reference sampler paired with the reward values of each outcome.
#[derive(Clone, Debug)]
pub struct ScoredSampler {
    sampler: Sampler,
    outcomes: Vec<u64>,
    scores: Vec<f64>,
}

impl ScoredSampler {
    pub fn new(reference: &FiniteDist, r_hat: &RewardModel) -> Result<Self> {
        Ok(ScoredSampler {
            sampler: reference.sampler(),
            outcomes: reference.outcomes().to_vec(),
            scores: r_hat.values_on(reference)?,
        })
    }

    /// `n` draws as `(r̂, V, index)`.
    fn batch(&self, n: u64, rng: &mut Rng, buf: &mut Vec<(f64, f64, usize)>) {
        buf.clear();
        for _ in 0..n {
            let i = self.sampler.draw_index(rng);
            let v = rng.uniform();
            buf.push((self.scores[i], v, i));
        }
    }

    pub fn bon(&self, n: u64, rng: &mut Rng) -> u64 {
        let mut buf = Vec::with_capacity(n as usize);
        self.batch(n, rng, &mut buf);
        let best = buf.iter().min_by(|a, b| by_score_desc(a, b)).unwrap();
        self.outcomes[best.2]
    }

    pub fn em_bon(&self, m: f64, n: u64, rng: &mut Rng, buf: &mut Vec<(f64, f64, usize)>) -> u64 {
        let k = em_k(m, n) as usize;
        self.batch(n, rng, buf);
        if k < buf.len() {
            buf.select_nth_unstable_by(k - 1, by_score_desc);
        }
        let pick = rng.below(k);
        // the first k entries are the top-k, in unspecified order; sort them
        // so the uniform pick does not depend on the selection algorithm
        let top = &mut buf[..k];
        top.sort_unstable_by(by_score_desc);
        self.outcomes[top[pick].2]
    }
}

/// Best of `n` reference draws under `r̂`, ties broken uniformly.
pub fn bon_select(reference: &FiniteDist, r_hat: &RewardModel, n: u64, rng: &mut Rng) -> Result<u64> {
    check_n(n)?;
    Ok(ScoredSampler::new(reference, r_hat)?.bon(n, rng))
}

/// `P(y) = (p_y/T_v)·[(A_v+T_v)^n − A_v^n]` per tie class.
pub fn bon_induced_exact(reference: &FiniteDist, r_hat: &RewardModel, n: u64) -> Result<InducedPolicy> {
    check_n(n)?;
    let table = RankTable::new(reference, r_hat)?;
    let probs = reference.probs();
    let mut out = vec![0.0; probs.len()];
    let nn = n as i32;
    let classes = table.classes();
    for (ci, c) in classes.iter().enumerate() {
        if c.mass == 0.0 {
            continue;
        }
        let lo = c.below;
        let hi = classes.get(ci + 1).map_or(1.0, |next| next.below);
        let class_mass = if n == 1 { c.mass } else { hi.powi(nn) - lo.powi(nn) };
        for &i in &c.members {
            out[i] = probs[i] / c.mass * class_mass;
        }
    }
    Ok(InducedPolicy {
        dist: FiniteDist::new(reference.outcomes().to_vec(), out)?,
        ratio_cap_claim: Some(n as f64),
    })
}

/// Uniform pick among the top `⌈n/m⌉` of `n` draws under `(r̂, V)`.
pub fn em_bon_select(reference: &FiniteDist, r_hat: &RewardModel, m: f64, n: u64, rng: &mut Rng) -> Result<u64> {
    check_m(m)?;
    check_n(n)?;
    let mut buf = Vec::with_capacity(n as usize);
    Ok(ScoredSampler::new(reference, r_hat)?.em_bon(m, n, rng, &mut buf))
}

pub fn em_bon_induced_exact(reference: &FiniteDist, r_hat: &RewardModel, m: f64, n: u64) -> Result<InducedPolicy> {
    em_bon_induced_exact_tol(reference, r_hat, m, n, BETA_TOL)
}

/// Exact law of [`em_bon_select`]: the output's randomized rank follows the
/// average of the top-`k` order-statistic Beta laws; each tie class gets the
/// mass of its CDF interval, split within the class in proportion to `ref`.
pub fn em_bon_induced_exact_tol(
    reference: &FiniteDist,
    r_hat: &RewardModel,
    m: f64,
    n: u64,
    tol: f64,
) -> Result<InducedPolicy> {
    check_m(m)?;
    check_n(n)?;
    let k = em_k(m, n);
    let table = RankTable::new(reference, r_hat)?;
    let probs = reference.probs();
    let mut out = vec![0.0; probs.len()];
    let classes = table.classes();
    let mut g_lo = 0.0;
    for (ci, c) in classes.iter().enumerate() {
        let hi = classes.get(ci + 1).map_or(1.0, |next| next.below);
        let g_hi = if ci + 1 == classes.len() {
            1.0
        } else {
            top_k_rank_cdf(n, k, hi, tol).map_err(|e| {
                Error::Numeric(format!("em_bon m={m} n={n}: {e}"))
            })?
        };
        let class_mass = (g_hi - g_lo).max(0.0);
        if c.mass > 0.0 {
            for &i in &c.members {
                out[i] = probs[i] / c.mass * class_mass;
            }
        }
        g_lo = g_hi;
    }
    Ok(InducedPolicy {
        dist: FiniteDist::new(reference.outcomes().to_vec(), out)?,
        ratio_cap_claim: Some(n as f64 / k as f64),
    })
}

/// Tail masses at or above each tie class boundary within this distance of
/// `1/m` count as hitting `1/m` exactly.
const BOUNDARY_TOL: f64 = 1e-12;

/// Population policy with ratio `m` on the top `1/m` of `r̂`; the boundary
/// tie class is included with the probability that makes the mass exact.
pub fn top_quantile_policy(reference: &FiniteDist, r_hat: &RewardModel, m: f64) -> Result<InducedPolicy> {
    check_m(m)?;
    let table = RankTable::new(reference, r_hat)?;
    let probs = reference.probs();
    let mut out = vec![0.0; probs.len()];
    let mut remaining = 1.0 / m;
    for c in table.classes().iter().rev() {
        if remaining <= BOUNDARY_TOL {
            break;
        }
        if c.mass == 0.0 {
            continue;
        }
        let frac = if c.mass <= remaining + BOUNDARY_TOL { 1.0 } else { remaining / c.mass };
        for &i in &c.members {
            out[i] = m * frac * probs[i];
        }
        remaining -= c.mass * frac;
    }
    Ok(InducedPolicy {
        dist: FiniteDist::new(reference.outcomes().to_vec(), out)?,
        ratio_cap_claim: Some(m),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChiSolution {
    pub policy: InducedPolicy,
    pub lambda: f64,
    pub residual: f64,
}

/// Solves `E_ref[(r̂ − λ)_+] = β` by bisection on `[μ − β, R_max]`, then
/// re-solves the linear piece of the identified active set exactly.
pub fn chi_bon_solve(reference: &FiniteDist, r_hat: &RewardModel, beta: f64) -> Result<ChiSolution> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", format!("must be > 0, got {beta}")));
    }
    let vals = r_hat.values_on(reference)?;
    let probs = reference.probs();
    let excess = |lam: f64| fsum(vals.iter().zip(probs).map(|(&r, &p)| p * (r - lam).max(0.0)));
    let mu = fsum(vals.iter().zip(probs).map(|(&r, &p)| p * r));
    // excess(μ − β) ≥ β exactly; pad it so rounding cannot flip the sign
    let (mut lo, mut hi) = (mu - beta - 1e-9 * (1.0 + beta), r_hat.r_max());
    if !(excess(lo) >= beta && excess(hi) <= beta) {
        return Err(Error::Numeric(format!("chi_bon: bracket [{lo}, {hi}] does not contain the root for beta={beta}")));
    }
    for _ in 0..4000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) >= beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lam = if (excess(lo) - beta).abs() <= (excess(hi) - beta).abs() { lo } else { hi };
    // exact solve on the linear piece with active set {r̂ > λ}
    let active: Vec<usize> = (0..vals.len()).filter(|&i| probs[i] > 0.0 && vals[i] > lam).collect();
    if !active.is_empty() {
        let pa = fsum(active.iter().map(|&i| probs[i]));
        let pr = fsum(active.iter().map(|&i| probs[i] * vals[i]));
        let cand = (pr - beta) / pa;
        let min_active = active.iter().map(|&i| vals[i]).fold(f64::INFINITY, f64::min);
        let max_inactive = (0..vals.len())
            .filter(|&i| probs[i] > 0.0 && vals[i] <= lam)
            .map(|i| vals[i])
            .fold(f64::NEG_INFINITY, f64::max);
        if cand < min_active && cand >= max_inactive && (excess(cand) - beta).abs() <= (excess(lam) - beta).abs() {
            lam = cand;
        }
    }
    let residual = excess(lam) - beta;
    if residual.abs() > 1e-12 {
        return Err(Error::Numeric(format!("chi_bon: residual {residual} after bisection (beta={beta})")));
    }
    let weights: Vec<f64> = vals.iter().zip(probs).map(|(&r, &p)| p * (r - lam).max(0.0)).collect();
    let dist = FiniteDist::from_weights(reference.outcomes().to_vec(), weights)?;
    Ok(ChiSolution { policy: InducedPolicy { dist, ratio_cap_claim: None }, lambda: lam, residual })
}

pub fn chi_bon_policy(reference: &FiniteDist, r_hat: &RewardModel, beta: f64) -> Result<InducedPolicy> {
    chi_bon_solve(reference, r_hat, beta).map(|s| s.policy)
}

/// Acceptance probabilities `min(w/m, 1)` aligned with the reference outcomes.
fn acceptance(reference: &FiniteDist, target: &FiniteDist, m: f64) -> Result<Vec<f64>> {
    let ratio = DensityRatio::new(target, reference)?;
    Ok(ratio.ratios().iter().map(|w| (w / m).min(1.0)).collect())
}

/// Approximate rejection sampling: the first of `n` proposals accepted with
/// probability `min(w/m, 1)`, or the first proposal if none is accepted.
pub fn rejection_select(
    reference: &FiniteDist,
    target: &FiniteDist,
    m: f64,
    n: u64,
    rng: &mut Rng,
) -> Result<u64> {
    check_m(m)?;
    check_n(n)?;
    let acc = acceptance(reference, target, m)?;
    let sampler = reference.sampler();
    Ok(reference.outcomes()[rejection_draw(&sampler, &acc, n, rng)])
}

fn rejection_draw(sampler: &Sampler, acc: &[f64], n: u64, rng: &mut Rng) -> usize {
    let mut first = None;
    for _ in 0..n {
        let i = sampler.draw_index(rng);
        let u = rng.uniform();
        if u < acc[i] {
            return i;
        }
        first.get_or_insert(i);
    }
    first.unwrap()
}

/// Law of [`rejection_select`]. With `a = E_ref[acc]`:
/// `P(y) = (1−(1−a)^n)·ref(y)·acc(y)/a + (1−a)^(n−1)·ref(y)·(1−acc(y))`.
/// The second term is the first proposal conditioned on every proposal
/// being rejected.
pub fn rejection_induced_exact(reference: &FiniteDist, target: &FiniteDist, m: f64, n: u64) -> Result<InducedPolicy> {
    check_m(m)?;
    check_n(n)?;
    let acc = acceptance(reference, target, m)?;
    let probs = reference.probs();
    let a = fsum(probs.iter().zip(&acc).map(|(p, q)| p * q));
    if !(a > 0.0) {
        return Err(Error::Numeric("rejection: acceptance probability is zero".into()));
    }
    let miss_all = (1.0 - a).powi(n as i32);
    let miss_rest = (1.0 - a).powi(n as i32 - 1);
    let out = probs
        .iter()
        .zip(&acc)
        .map(|(&p, &q)| (1.0 - miss_all) * p * q / a + miss_rest * p * (1.0 - q))
        .collect();
    Ok(InducedPolicy { dist: FiniteDist::new(reference.outcomes().to_vec(), out)?, ratio_cap_claim: None })
}

/// A selector bound to one problem, ready for repeated draws.
pub struct Prepared {
    spec: SelectorSpec,
    scored: ScoredSampler,
    acc: Option<Vec<f64>>,
    /// Sampler over the exact law, for population policies.
    population: Option<(Sampler, FiniteDist)>,
}

impl Prepared {
    /// `target` is the rejection sampler's target; other selectors ignore it.
    pub fn new(
        spec: SelectorSpec,
        reference: &FiniteDist,
        r_hat: &RewardModel,
        target: Option<&FiniteDist>,
    ) -> Result<Self> {
        let scored = ScoredSampler::new(reference, r_hat)?;
        let mut acc = None;
        let mut population = None;
        match spec {
            SelectorSpec::Bon { n } => check_n(n)?,
            SelectorSpec::EmBon { m, n } => {
                check_m(m)?;
                check_n(n)?;
            }
            SelectorSpec::Rejection { m, n } => {
                check_m(m)?;
                check_n(n)?;
                let t = target.ok_or_else(|| Error::Config("rejection selector needs a target policy".into()))?;
                acc = Some(acceptance(reference, t, m)?);
            }
            SelectorSpec::ChiBon { .. } | SelectorSpec::TopQuantile { .. } => {
                let d = induced_exact(spec, reference, r_hat, target)?.dist;
                population = Some((d.sampler(), d));
            }
        }
        Ok(Prepared { spec, scored, acc, population })
    }

    pub fn draw(&self, rng: &mut Rng) -> u64 {
        let mut buf = Vec::new();
        self.draw_with(rng, &mut buf)
    }

    /// As [`Prepared::draw`], reusing a scratch buffer.
    pub fn draw_with(&self, rng: &mut Rng, buf: &mut Vec<(f64, f64, usize)>) -> u64 {
        match self.spec {
            SelectorSpec::Bon { n } => self.scored.bon(n, rng),
            SelectorSpec::EmBon { m, n } => self.scored.em_bon(m, n, rng, buf),
            SelectorSpec::Rejection { n, .. } => {
                let acc = self.acc.as_ref().unwrap();
                self.scored.outcomes[rejection_draw(&self.scored.sampler, acc, n, rng)]
            }
            _ => {
                let (s, d) = self.population.as_ref().unwrap();
                d.outcomes()[s.draw_index(rng)]
            }
        }
    }
}

/// Exact induced policy of any selector.
pub fn induced_exact(
    spec: SelectorSpec,
    reference: &FiniteDist,
    r_hat: &RewardModel,
    target: Option<&FiniteDist>,
) -> Result<InducedPolicy> {
    match spec {
        SelectorSpec::Bon { n } => bon_induced_exact(reference, r_hat, n),
        SelectorSpec::EmBon { m, n } => em_bon_induced_exact(reference, r_hat, m, n),
        SelectorSpec::ChiBon { beta } => chi_bon_policy(reference, r_hat, beta),
        SelectorSpec::TopQuantile { m } => top_quantile_policy(reference, r_hat, m),
        SelectorSpec::Rejection { m, n } => {
            let t = target.ok_or_else(|| Error::Config("rejection selector needs a target policy".into()))?;
            rejection_induced_exact(reference, t, m, n)
        }
    }
}
