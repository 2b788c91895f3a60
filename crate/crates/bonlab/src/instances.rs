//! Hard instances with their closed-form truth values attached.
//!
//! Non-atomic constructions live on uniform grids whose atom count makes
//! every required set mass exact; incompatible `(mass, grid)` pairs are
//! rejected instead of rounded.

use std::collections::BTreeMap;

use crate::analysis;
use crate::dist::{DensityRatio, FiniteDist};
use crate::divergences::{coverage, em_divergence};
use crate::error::{Error, Result};
use crate::rewards::{mse_error, pairwise_error_exact, win_rate, RankTable, RewardChoice, RewardModel};
use crate::selectors::{induced_exact, SelectorSpec};
use serde::{Deserialize, Serialize};

/// Tolerance for exact truths in [`self_check`].
pub const TRUTH_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyRef {
    Comparator,
    Reference,
    Selector(SelectorSpec),
    Policy(FiniteDist),
}

/// A quantity the generic evaluators can compute on an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quantity {
    PairwiseError,
    Mse,
    /// Variance of `r*` under `ref`.
    RewardVariance,
    /// `E_M(π*‖ref)`.
    EmDivergence { m: f64 },
    /// `P_π*(w ≥ M)`.
    Coverage { m: f64 },
    /// Mass a policy puts on a set of outcomes.
    Mass { policy: PolicyRef, outcomes: Vec<u64> },
    /// Win-rate against `ref`.
    WinRate { policy: PolicyRef, reward: RewardChoice },
    /// `R^{r*}(π*) − R^{r*}(policy)`, comparator `ref`.
    Regret { policy: PolicyRef },
    RegretRatio { numerator: PolicyRef, denominator: PolicyRef },
    /// `E_π*[r*] − E_policy[r*]`.
    ExpectedRewardGap { policy: PolicyRef },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// evaluated = value
    Eq,
    /// evaluated ≥ value
    Ge,
    /// evaluated ≤ value
    Le,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub quantity: Quantity,
    pub relation: Relation,
    pub value: f64,
}

impl Truth {
    pub fn eq(quantity: Quantity, value: f64) -> Self {
        Truth { quantity, relation: Relation::Eq, value }
    }
    pub fn ge(quantity: Quantity, value: f64) -> Self {
        Truth { quantity, relation: Relation::Ge, value }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(rename = "ref")]
    pub reference: FiniteDist,
    pub r_hat: RewardModel,
    pub r_star: RewardModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_star: Option<FiniteDist>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<FiniteDist>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<u64, String>,
    #[serde(default)]
    pub truths: BTreeMap<String, Truth>,
}

impl Instance {
    pub fn new(name: &str, reference: FiniteDist, r_hat: RewardModel, r_star: RewardModel) -> Result<Self> {
        r_hat.values_on(&reference)?;
        r_star.values_on(&reference)?;
        Ok(Instance {
            name: name.to_string(),
            params: BTreeMap::new(),
            reference,
            r_hat,
            r_star,
            pi_star: None,
            q: None,
            l_bound: None,
            labels: BTreeMap::new(),
            truths: BTreeMap::new(),
        })
    }

    /// Checks cross-field consistency after deserialization.
    pub fn validate(&self) -> Result<()> {
        self.r_hat.values_on(&self.reference)?;
        self.r_star.values_on(&self.reference)?;
        if let Some(p) = &self.pi_star {
            DensityRatio::new(p, &self.reference)?;
        }
        if let Some(q) = &self.q {
            let l = DensityRatio::new(q, &self.reference)?.max();
            match self.l_bound {
                Some(b) if l <= b + 1e-12 => {}
                Some(b) => {
                    return Err(Error::Config(format!("q has density ratio {l} above its stated bound {b}")))
                }
                None => return Err(Error::Config("q given without l_bound".into())),
            }
        }
        Ok(())
    }

    fn param(mut self, k: &str, v: f64) -> Self {
        self.params.insert(k.to_string(), v);
        self
    }

    fn truth(mut self, name: &str, t: Truth) -> Self {
        self.truths.insert(name.to_string(), t);
        self
    }

    pub fn comparator(&self) -> Result<&FiniteDist> {
        self.pi_star
            .as_ref()
            .ok_or_else(|| Error::Config(format!("instance `{}` has no comparator policy", self.name)))
    }

    /// Attaches a comparison measure `q` and certifies `L = max dq/dref`.
    pub fn with_q(mut self, q: FiniteDist) -> Result<Self> {
        let l = DensityRatio::new(&q, &self.reference)?.max();
        self.q = Some(q);
        self.l_bound = Some(l);
        Ok(self)
    }

    pub fn get_param(&self, k: &str) -> Result<f64> {
        self.params
            .get(k)
            .copied()
            .ok_or_else(|| Error::Config(format!("instance `{}` lacks parameter `{k}`", self.name)))
    }
}

fn grid_count(field: &str, mass: f64, grid: u64) -> Result<u64> {
    let x = mass * grid as f64;
    let r = x.round();
    if (x - r).abs() > 1e-9 * grid as f64 || r < 1.0 {
        return Err(Error::param(
            field,
            format!("mass {mass} is not a positive multiple of 1/{grid} on a {grid}-atom grid"),
        ));
    }
    Ok(r as u64)
}

fn indicator(grid: u64, set: impl Fn(u64) -> bool, r_max: f64) -> Result<RewardModel> {
    RewardModel::from_pairs((0..grid).map(|i| (i, if set(i) { r_max } else { 0.0 })), r_max)
}

fn uniform_on(grid: u64, ids: impl Iterator<Item = u64>) -> Result<FiniteDist> {
    FiniteDist::uniform(grid as usize)?.conditional(&ids.collect::<Vec<_>>())
}

/// Three outcomes `B, C, P` (ids 0, 1, 2) with masses `(1−α, α−ε, ε)`,
/// `α = k√ε`. The learned reward ranks the poisoned outcome `P` first.
pub fn make_separation(c: f64, k: f64, delta: f64, epsilon: f64) -> Result<Instance> {
    if !(c > 1.0) {
        return Err(Error::param("c", format!("must exceed 1, got {c}")));
    }
    if !(k >= (2.0 * c).sqrt()) {
        return Err(Error::param("k", format!("violates k ≥ √(2c) = {}", (2.0 * c).sqrt())));
    }
    if !(delta >= 1.0 - 1.0 / (2.0 * c)) || !(delta < 1.0) {
        return Err(Error::param("delta", format!("violates 1 − 1/(2c) ≤ δ < 1 with δ = {delta}")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0 / (4.0 * k * k)) {
        return Err(Error::param("epsilon", format!("violates 0 < ε ≤ 1/(4k²) = {}", 1.0 / (4.0 * k * k))));
    }
    let alpha = k * epsilon.sqrt();
    let mu = alpha * (1.0 - delta) + epsilon * delta;
    let reference = FiniteDist::new(vec![0, 1, 2], vec![1.0 - alpha, alpha - epsilon, epsilon])?;
    let r_hat = RewardModel::from_pairs([(0, 0.0), (1, 1.0 - delta), (2, 1.0)], 1.0)?;
    let r_star = RewardModel::from_pairs([(0, 0.5), (1, 1.0), (2, 0.0)], 1.0)?;
    let mut inst = Instance::new("separation", reference, r_hat, r_star)?;
    inst.pi_star = Some(FiniteDist::point(1));
    inst.labels = [(0, "B"), (1, "C"), (2, "P")].into_iter().map(|(i, s)| (i, s.to_string())).collect();
    let em = SelectorSpec::TopQuantile { m: 1.0 / alpha };
    let chi_mu = SelectorSpec::ChiBon { beta: mu };
    let beta_mid = 0.5 * (epsilon * delta + mu);
    let reg2 = (1.0 - alpha / 2.0) * (epsilon / alpha + (epsilon * delta / beta_mid) * (1.0 - epsilon / alpha));
    Ok(inst
        .param("c", c)
        .param("k", k)
        .param("delta", delta)
        .param("epsilon", epsilon)
        .param("alpha", alpha)
        .param("mu", mu)
        .truth("eps_pw", Truth::eq(Quantity::PairwiseError, 2.0 * epsilon * (1.0 - epsilon)))
        .truth(
            "v_c",
            Truth::eq(
                Quantity::WinRate { policy: PolicyRef::Comparator, reward: RewardChoice::RStar },
                1.0 - (alpha - epsilon) / 2.0,
            ),
        )
        .truth("reg_em", Truth::eq(Quantity::Regret { policy: PolicyRef::Selector(em) }, (1.0 - alpha / 2.0) * epsilon / alpha))
        .truth("reg_ref", Truth::eq(Quantity::Regret { policy: PolicyRef::Reference }, (1.0 - alpha + epsilon) / 2.0))
        .truth(
            "reg_chi_regime1",
            Truth::eq(
                Quantity::Regret { policy: PolicyRef::Selector(SelectorSpec::ChiBon { beta: 0.5 * epsilon * delta }) },
                1.0 - alpha / 2.0,
            ),
        )
        .truth(
            "reg_chi_regime2",
            Truth::eq(Quantity::Regret { policy: PolicyRef::Selector(SelectorSpec::ChiBon { beta: beta_mid }) }, reg2),
        )
        .truth(
            "reg_chi_at_mu",
            Truth::eq(Quantity::Regret { policy: PolicyRef::Selector(chi_mu) }, (1.0 - alpha / 2.0) * epsilon / mu),
        )
        .truth(
            "ratio_at_mu",
            Truth::eq(
                Quantity::RegretRatio { numerator: PolicyRef::Selector(chi_mu), denominator: PolicyRef::Selector(em) },
                alpha / mu,
            ),
        ))
}

/// Uniform grid with a top set `I` of mass `1/m`; `r̂ = r* = 1_I`.
pub fn make_computational_lb(m: f64, grid: u64) -> Result<Instance> {
    if !(m >= 2.0) {
        return Err(Error::param("m", format!("must be ≥ 2, got {m}")));
    }
    if (grid as f64) < 2.0 * m {
        return Err(Error::param("grid", format!("needs at least 2m = {} atoms", 2.0 * m)));
    }
    let top = grid_count("m", 1.0 / m, grid)?;
    let start = grid - top;
    let reference = FiniteDist::uniform(grid as usize)?;
    let r = indicator(grid, |i| i >= start, 1.0)?;
    let mut inst = Instance::new("computational_lb", reference, r.clone(), r)?;
    inst.pi_star = Some(uniform_on(grid, start..grid)?);
    let set: Vec<u64> = (start..grid).collect();
    let mut inst = inst
        .param("m", m)
        .param("grid", grid as f64)
        .truth(
            "comparator_winrate",
            Truth::eq(
                Quantity::WinRate { policy: PolicyRef::Comparator, reward: RewardChoice::RStar },
                1.0 - 1.0 / (2.0 * m),
            ),
        )
        .truth("em_at_m", Truth::eq(Quantity::EmDivergence { m }, 0.0))
        .truth(
            "bon20_hit",
            Truth::eq(
                Quantity::Mass { policy: PolicyRef::Selector(SelectorSpec::Bon { n: 20 }), outcomes: set },
                1.0 - (1.0 - 1.0 / m).powi(20),
            ),
        );
    for n in [1u64, 5, 20] {
        inst = inst.truth(
            &format!("bon_regret_n{n}"),
            Truth::eq(
                Quantity::Regret { policy: PolicyRef::Selector(SelectorSpec::Bon { n }) },
                0.5 * (1.0 - 1.0 / m).powi(n as i32),
            ),
        );
    }
    Ok(inst)
}

fn skyline_core(m_star: f64, epsilon: f64, grid: u64, a_set: Vec<u64>, name: &str) -> Result<Instance> {
    let eps1 = epsilon.min(1.0 / m_star);
    let c = (1.0 - m_star * eps1) / (1.0 - eps1);
    let in_a = |i: u64| a_set.binary_search(&i).is_ok();
    let reference = FiniteDist::uniform(grid as usize)?;
    let r_star = indicator(grid, in_a, 1.0)?;
    let r_hat = indicator(grid, |_| false, 1.0)?;
    let g = grid as f64;
    let pi = FiniteDist::from_weights(
        (0..grid).collect(),
        (0..grid).map(|i| if in_a(i) { m_star / g } else { c / g }).collect(),
    )?;
    let mut inst = Instance::new(name, reference, r_hat, r_star)?;
    inst.pi_star = Some(pi);
    let mut inst = inst
        .param("m_star", m_star)
        .param("epsilon", epsilon)
        .param("epsilon_prime", eps1)
        .param("c", c)
        .param("grid", g)
        .truth("eps_pw", Truth::eq(Quantity::PairwiseError, eps1 * (1.0 - eps1)))
        .truth(
            "comparator_mass_a",
            Truth::eq(Quantity::Mass { policy: PolicyRef::Comparator, outcomes: a_set.clone() }, m_star * eps1),
        )
        .truth("coverage_2", Truth::eq(Quantity::Coverage { m: 2.0 }, m_star * eps1))
        .truth("reg_ref", Truth::eq(Quantity::Regret { policy: PolicyRef::Reference }, 0.5 * (m_star * eps1 - eps1)))
        .truth(
            "reg_bon16",
            Truth::eq(
                Quantity::Regret { policy: PolicyRef::Selector(SelectorSpec::Bon { n: 16 }) },
                0.5 * (m_star * eps1 - eps1),
            ),
        );
    for m in [1.0, 2.0, m_star / 2.0, m_star] {
        if m >= c && m <= m_star {
            inst = inst.truth(&format!("em_{m}"), Truth::eq(Quantity::EmDivergence { m }, (m_star - m) * eps1));
        }
    }
    Ok(inst)
}

fn check_skyline(m_star: f64, epsilon: f64) -> Result<()> {
    if !(m_star >= 4.0) {
        return Err(Error::param("m_star", format!("must be ≥ 4, got {m_star}")));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::param("epsilon", format!("must lie in (0, 1/2), got {epsilon}")));
    }
    Ok(())
}

/// Uniform grid; `A` is the first `ε′·grid` atoms, `ε′ = min(ε, 1/M*)`.
/// `r* = 1_A`, `r̂ ≡ 0`, and `π*` puts ratio `M*` on `A`.
pub fn make_skyline(m_star: f64, epsilon: f64, grid: u64) -> Result<Instance> {
    check_skyline(m_star, epsilon)?;
    let a = grid_count("epsilon", epsilon.min(1.0 / m_star), grid)?;
    skyline_core(m_star, epsilon, grid, (0..a).collect(), "skyline")
}

/// Skyline instance aimed at a given policy on the same grid: `A` is taken
/// from the policy's low-ratio region `{w ≤ 2}`, lowest ratios first.
pub fn make_skyline_against(m_star: f64, epsilon: f64, policy: &FiniteDist) -> Result<Instance> {
    check_skyline(m_star, epsilon)?;
    let grid = policy.len() as u64;
    if policy.outcomes().iter().enumerate().any(|(i, &id)| id != i as u64) {
        return Err(Error::param("policy", "must live on the grid ids 0..n"));
    }
    let a = grid_count("epsilon", epsilon.min(1.0 / m_star), grid)?;
    let g = grid as f64;
    let mut low: Vec<(f64, u64)> = policy.iter().map(|(id, p)| (p * g, id)).filter(|&(w, _)| w <= 2.0).collect();
    low.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    if (low.len() as u64) < a {
        return Err(Error::param("policy", "low-ratio region too small for the required set"));
    }
    let mut set: Vec<u64> = low[..a as usize].iter().map(|&(_, id)| id).collect();
    set.sort_unstable();
    let eps1 = epsilon.min(1.0 / m_star);
    let pa = policy.mass_of(set.iter().copied());
    let inst = skyline_core(m_star, epsilon, grid, set, "skyline_against")?;
    Ok(inst
        .truth(
            "reg_policy",
            Truth::eq(Quantity::Regret { policy: PolicyRef::Policy(policy.clone()) }, 0.5 * (m_star * eps1 - pa)),
        )
        .truth(
            "reg_policy_floor",
            Truth::ge(Quantity::Regret { policy: PolicyRef::Policy(policy.clone()) }, 0.5 * (m_star - 2.0) * eps1),
        ))
}

/// `S` = top `1/m` of a uniform grid with learned reward `R_max = 1`; the
/// poisoned part `P ⊂ S` (mass `ε`) has true reward 0 and `C = S∖P` has
/// true reward `γ/(εm)`.
pub fn make_impossibility(m: f64, epsilon: f64, gamma: f64, grid: u64) -> Result<Instance> {
    if !(m >= 2.0) {
        return Err(Error::param("m", format!("must be ≥ 2, got {m}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0 / m) {
        return Err(Error::param("epsilon", format!("violates 0 < ε < 1/M = {}", 1.0 / m)));
    }
    if !(gamma > 0.0) {
        return Err(Error::param("gamma", format!("must be positive, got {gamma}")));
    }
    let s = grid_count("m", 1.0 / m, grid)?;
    let p = grid_count("epsilon", epsilon, grid)?;
    let s_start = grid - s;
    let c_start = s_start + p;
    let high = gamma / (epsilon * m);
    let reference = FiniteDist::uniform(grid as usize)?;
    let r_hat = indicator(grid, |i| i >= s_start, 1.0)?;
    let r_star = RewardModel::from_pairs((0..grid).map(|i| (i, if i >= c_start { high } else { 0.0 })), high.max(1.0))?;
    let mut inst = Instance::new("impossibility", reference, r_hat, r_star)?;
    inst.pi_star = Some(uniform_on(grid, c_start..grid)?);
    let mut inst = inst
        .param("m", m)
        .param("epsilon", epsilon)
        .param("gamma", gamma)
        .param("grid", grid as f64)
        .truth("em_at_m", Truth::eq(Quantity::EmDivergence { m }, epsilon * m))
        .truth("eps_pw", Truth::eq(Quantity::PairwiseError, epsilon * (1.0 - epsilon)));
    for sel in [SelectorSpec::Bon { n: 8 }, SelectorSpec::EmBon { m, n: 64 }, SelectorSpec::TopQuantile { m }] {
        inst = inst.truth(
            &format!("reward_gap_{}", sel.to_string().replace([':', ',', '='], "_")),
            Truth::ge(Quantity::ExpectedRewardGap { policy: PolicyRef::Selector(sel) }, gamma),
        );
    }
    Ok(inst)
}

/// `r̂ = c·r*`: identical ordering, arbitrarily large squared error.
pub fn make_scale_gap(c: f64, base: FiniteDist, r_star: RewardModel) -> Result<Instance> {
    if !(c > 0.0) {
        return Err(Error::param("c", format!("must be positive, got {c}")));
    }
    let r_hat = r_star.map(c * r_star.r_max(), |v| c * v)?;
    let second = {
        let v = r_star.values_on(&base)?;
        crate::dist::fsum(v.iter().zip(base.probs()).map(|(r, p)| p * r * r))
    };
    let inst = Instance::new("scale_gap", base, r_hat, r_star)?;
    Ok(inst
        .param("c", c)
        .truth("eps_pw", Truth::eq(Quantity::PairwiseError, 0.0))
        .truth("mse", Truth::eq(Quantity::Mse, (c - 1.0) * (c - 1.0) * second)))
}

/// Default base for [`make_scale_gap`]: uniform on `{0, 1}` with `r* = (0, 1)`.
pub fn scale_gap_default(c: f64) -> Result<Instance> {
    let base = FiniteDist::uniform(2)?;
    let r = RewardModel::from_pairs([(0, 0.0), (1, 1.0)], 1.0)?;
    make_scale_gap(c, base, r)
}

/// High outcome `H` (mass `p`, reward `R_max`) plus a `grid`-point
/// discretization of `Unif[0, ε/2]`. The learned reward adds an
/// independent `±ε`; each outcome is split into a `−ε` half and a `+ε`
/// half. Both tables are shifted up by `ε` so every value is nonnegative;
/// neither error metric nor the variance depends on the shift.
pub fn make_mse_small_pw_large(p: f64, r_max: f64, epsilon: f64, grid: u64) -> Result<Instance> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param("p", format!("must lie in (0, 1), got {p}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", format!("must be positive, got {epsilon}")));
    }
    if !(r_max > 2.5 * epsilon) {
        return Err(Error::param("r_max", format!("must exceed 2.5ε = {}", 2.5 * epsilon)));
    }
    if grid == 0 {
        return Err(Error::param("grid", "must be at least 1"));
    }
    let top = r_max + 2.0 * epsilon;
    let mut ids = vec![0u64, 1];
    let mut probs = vec![p / 2.0, p / 2.0];
    let mut star = vec![r_max + epsilon, r_max + epsilon];
    let mut hat = vec![r_max, r_max + 2.0 * epsilon];
    let g = grid as f64;
    for i in 0..grid {
        let u = (i as f64 + 0.5) / g * epsilon / 2.0;
        for (j, sign) in [(0u64, -1.0), (1, 1.0)] {
            ids.push(2 + 2 * i + j);
            probs.push((1.0 - p) / (2.0 * g));
            star.push(u + epsilon);
            hat.push(u + epsilon + sign * epsilon);
        }
    }
    let reference = FiniteDist::new(ids.clone(), probs)?;
    let r_star = RewardModel::from_pairs(ids.iter().copied().zip(star), top)?;
    let r_hat = RewardModel::from_pairs(ids.iter().copied().zip(hat), top)?;
    let inst = Instance::new("mse_small_pw_large", reference, r_hat, r_star)?;
    let q = 1.0 - p;
    Ok(inst
        .param("p", p)
        .param("r_max", r_max)
        .param("epsilon", epsilon)
        .param("grid", g)
        .truth("mse", Truth::eq(Quantity::Mse, epsilon * epsilon))
        .truth("eps_pw_floor", Truth::ge(Quantity::PairwiseError, q * q / 4.0))
        .truth("eps_pw", Truth::eq(Quantity::PairwiseError, (q * q + p * p) / 4.0))
        .truth(
            "variance_floor",
            Truth::ge(Quantity::RewardVariance, p * q * (r_max - epsilon / 4.0) * (r_max - epsilon / 4.0)),
        ))
}

/// Reward-hacking instance: a uniform grid with true reward increasing in
/// the id, and a spike of mass `ε` at the very bottom of `r*` that the
/// learned reward ranks above everything else. `π*` is the top `1/M*` of
/// `r*`.
pub fn make_corrupted_skyline(m_star: f64, epsilon: f64, grid: u64) -> Result<Instance> {
    if !(m_star >= 2.0) {
        return Err(Error::param("m_star", format!("must be ≥ 2, got {m_star}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0 / m_star) {
        return Err(Error::param("epsilon", format!("violates 0 < ε < 1/M* = {}", 1.0 / m_star)));
    }
    let spike = grid_count("epsilon", epsilon, grid)?;
    let top = grid_count("m_star", 1.0 / m_star, grid)?;
    if spike + top > grid {
        return Err(Error::param("grid", "spike and comparator set overlap"));
    }
    let g = grid as f64;
    let reference = FiniteDist::uniform(grid as usize)?;
    let r_star = RewardModel::from_pairs((0..grid).map(|i| (i, (i as f64 + 1.0) / g)), 1.0)?;
    let r_hat = RewardModel::from_pairs(
        (0..grid).map(|i| {
            let base = (i as f64 + 1.0) / (2.0 * g);
            (i, if i < spike { 0.5 + base } else { base })
        }),
        1.0,
    )?;
    let mut inst = Instance::new("corrupted_skyline", reference, r_hat, r_star)?;
    inst.pi_star = Some(uniform_on(grid, (grid - top)..grid)?);
    Ok(inst
        .param("m_star", m_star)
        .param("epsilon", epsilon)
        .param("grid", g)
        .truth("eps_pw", Truth::eq(Quantity::PairwiseError, 2.0 * epsilon * (1.0 - epsilon)))
        .truth("em_at_m_star", Truth::eq(Quantity::EmDivergence { m: m_star }, 0.0))
        .truth("em_at_1", Truth::eq(Quantity::EmDivergence { m: 1.0 }, 1.0 - 1.0 / m_star))
        .truth(
            "comparator_winrate",
            Truth::eq(
                Quantity::WinRate { policy: PolicyRef::Comparator, reward: RewardChoice::RStar },
                1.0 - 1.0 / (2.0 * m_star),
            ),
        ))
}

/// Comparison measure mixing `ref` half-and-half with `ref` restricted to
/// the `r̂`-ranks in `[1 − 1/m − width/2, 1 − 1/m + width/2]`, i.e. a band
/// around the top-`1/m` cutoff.
pub fn cutoff_band_q(inst: &Instance, m: f64, width: f64) -> Result<FiniteDist> {
    let table = RankTable::new(&inst.reference, &inst.r_hat)?;
    let cut = 1.0 - 1.0 / m;
    let (lo, hi) = (cut - width / 2.0, cut + width / 2.0);
    let keep: Vec<u64> = inst
        .reference
        .outcomes()
        .iter()
        .enumerate()
        .filter(|&(i, _)| {
            let c = table.class_of(i);
            c.below < hi && c.below + c.mass > lo
        })
        .map(|(_, &id)| id)
        .collect();
    let band = inst.reference.conditional(&keep)?;
    FiniteDist::from_weights(
        inst.reference.outcomes().to_vec(),
        inst.reference.iter().map(|(id, p)| 0.5 * p + 0.5 * band.prob(id)).collect(),
    )
}

/// Uniform grid with `r̂ = r*` strictly increasing, `π*` the top `1/m`,
/// and `q` from [`cutoff_band_q`]. Used for the general-`q` checks.
pub fn make_cutoff_band(m: f64, grid: u64, width: f64) -> Result<Instance> {
    if !(m >= 1.0) {
        return Err(Error::param("m", format!("must be ≥ 1, got {m}")));
    }
    if !(width > 0.0 && width < 1.0) {
        return Err(Error::param("width", format!("must lie in (0, 1), got {width}")));
    }
    let top = grid_count("m", 1.0 / m, grid)?;
    let g = grid as f64;
    let reference = FiniteDist::uniform(grid as usize)?;
    let r = RewardModel::from_pairs((0..grid).map(|i| (i, (i as f64 + 1.0) / g)), 1.0)?;
    let mut inst = Instance::new("cutoff_band", reference, r.clone(), r)?;
    inst.pi_star = Some(uniform_on(grid, (grid - top)..grid)?);
    let q = cutoff_band_q(&inst, m, width)?;
    Ok(inst
        .with_q(q)?
        .param("m", m)
        .param("grid", g)
        .param("width", width)
        .truth("eps_pw", Truth::eq(Quantity::PairwiseError, 0.0))
        .truth("em_at_m", Truth::eq(Quantity::EmDivergence { m }, 0.0)))
}

pub const FAMILIES: [&str; 7] = [
    "separation",
    "computational_lb",
    "skyline",
    "impossibility",
    "scale_gap",
    "mse_small_pw_large",
    "corrupted_skyline",
];

/// Builds a family member from named parameters; missing ones take the
/// catalog defaults.
pub fn generate(name: &str, params: &BTreeMap<String, f64>) -> Result<Instance> {
    let known: &[(&str, f64)] = match name {
        "separation" => &[("c", 2.0), ("k", 2.0), ("delta", 0.75), ("epsilon", 0.01)],
        "computational_lb" => &[("m", 10.0), ("grid", 100.0)],
        "skyline" => &[("m_star", 8.0), ("epsilon", 0.05), ("grid", 100.0)],
        "impossibility" => &[("m", 4.0), ("epsilon", 0.05), ("gamma", 1.0), ("grid", 100.0)],
        "scale_gap" => &[("c", 3.0)],
        "mse_small_pw_large" => &[("p", 0.5), ("r_max", 1.0), ("epsilon", 0.1), ("grid", 50.0)],
        "corrupted_skyline" => &[("m_star", 8.0), ("epsilon", 0.01), ("grid", 200.0)],
        other => {
            return Err(Error::param("name", format!("unknown instance family `{other}` (known: {})", FAMILIES.join(", "))))
        }
    };
    for k in params.keys() {
        if !known.iter().any(|(n, _)| n == k) {
            return Err(Error::param(k, format!("not a parameter of `{name}`")));
        }
    }
    let get = |k: &str| params.get(k).copied().unwrap_or_else(|| known.iter().find(|(n, _)| *n == k).unwrap().1);
    let count = |k: &str| -> Result<u64> {
        let v = get(k);
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as u64)
        } else {
            Err(Error::param(k, format!("must be a positive integer, got {v}")))
        }
    };
    match name {
        "separation" => make_separation(get("c"), get("k"), get("delta"), get("epsilon")),
        "computational_lb" => make_computational_lb(get("m"), count("grid")?),
        "skyline" => make_skyline(get("m_star"), get("epsilon"), count("grid")?),
        "impossibility" => make_impossibility(get("m"), get("epsilon"), get("gamma"), count("grid")?),
        "scale_gap" => scale_gap_default(get("c")),
        "mse_small_pw_large" => make_mse_small_pw_large(get("p"), get("r_max"), get("epsilon"), count("grid")?),
        _ => make_corrupted_skyline(get("m_star"), get("epsilon"), count("grid")?),
    }
}

/// One instance per family at default parameters, plus the second
/// separation parameter set.
pub fn catalog() -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for name in FAMILIES {
        out.push(generate(name, &BTreeMap::new())?);
    }
    out.insert(1, make_separation(4.0, 3.0, 0.875, 0.005)?);
    Ok(out)
}

fn policy_of(inst: &Instance, p: &PolicyRef) -> Result<FiniteDist> {
    match p {
        PolicyRef::Comparator => inst.comparator().cloned(),
        PolicyRef::Reference => Ok(inst.reference.clone()),
        PolicyRef::Selector(s) => Ok(induced_exact(*s, &inst.reference, &inst.r_hat, inst.pi_star.as_ref())?.dist),
        PolicyRef::Policy(d) => Ok(d.clone()),
    }
}

/// Evaluates a quantity with the generic evaluators.
pub fn evaluate(inst: &Instance, q: &Quantity) -> Result<f64> {
    let refd = &inst.reference;
    match q {
        Quantity::PairwiseError => pairwise_error_exact(&inst.r_hat, &inst.r_star, refd),
        Quantity::Mse => mse_error(&inst.r_hat, &inst.r_star, refd),
        Quantity::RewardVariance => inst.r_star.variance(refd),
        Quantity::EmDivergence { m } => em_divergence(inst.comparator()?, refd, *m),
        Quantity::Coverage { m } => coverage(inst.comparator()?, refd, *m),
        Quantity::Mass { policy, outcomes } => Ok(policy_of(inst, policy)?.mass_of(outcomes.iter().copied())),
        Quantity::WinRate { policy, reward } => {
            let r = match reward {
                RewardChoice::RHat => &inst.r_hat,
                RewardChoice::RStar => &inst.r_star,
            };
            win_rate(&policy_of(inst, policy)?, r, refd)
        }
        Quantity::Regret { policy } => analysis::regret_of_policy(inst, &policy_of(inst, policy)?),
        Quantity::RegretRatio { numerator, denominator } => {
            let a = analysis::regret_of_policy(inst, &policy_of(inst, numerator)?)?;
            let b = analysis::regret_of_policy(inst, &policy_of(inst, denominator)?)?;
            Ok(a / b)
        }
        Quantity::ExpectedRewardGap { policy } => {
            Ok(inst.r_star.expectation(inst.comparator()?)? - inst.r_star.expectation(&policy_of(inst, policy)?)?)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruthRow {
    pub name: String,
    pub relation: Relation,
    pub expected: f64,
    pub actual: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfCheckReport {
    pub instance: String,
    pub rows: Vec<TruthRow>,
    /// Largest deviation over the equality truths.
    pub max_deviation: f64,
    pub pass: bool,
}

impl SelfCheckReport {
    pub fn failures(&self) -> Vec<&str> {
        self.rows.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect()
    }
}

/// Re-evaluates every attached truth.
pub fn self_check(inst: &Instance) -> Result<SelfCheckReport> {
    inst.validate()?;
    let mut rows = Vec::new();
    let mut max_dev: f64 = 0.0;
    for (name, t) in &inst.truths {
        let actual = evaluate(inst, &t.quantity)?;
        let pass = match t.relation {
            Relation::Eq => {
                max_dev = max_dev.max((actual - t.value).abs());
                (actual - t.value).abs() <= TRUTH_TOL
            }
            Relation::Ge => actual >= t.value - TRUTH_TOL,
            Relation::Le => actual <= t.value + TRUTH_TOL,
        };
        rows.push(TruthRow { name: name.clone(), relation: t.relation, expected: t.value, actual, pass });
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(SelfCheckReport { instance: inst.name.clone(), rows, max_deviation: max_dev, pass })
}
