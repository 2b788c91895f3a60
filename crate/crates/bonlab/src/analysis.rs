//! Regret, its three-term decomposition, bound certification and sweeps.

use std::collections::BTreeMap;

use crate::dist::FiniteDist;
use crate::divergences::{em_divergence, tv_projection};
use crate::error::{Error, Result};
use crate::instances::Instance;
use crate::mc::{estimate_mean, McEstimate};
use crate::rewards::{pairwise_error_exact, win_rate, Method, RewardChoice, WinRateReport};
use crate::rng::Rng;
use crate::selectors::{induced_exact, InducedPolicy, Prepared, SelectorSpec};

/// Default constant multiplying the bound brackets.
pub const DEFAULT_CONSTANT: f64 = 8.0;
/// Slack in `holds = lhs ≤ rhs + BOUND_SLACK`.
pub const BOUND_SLACK: f64 = 1e-9;

fn reward_of(inst: &Instance, choice: RewardChoice) -> &crate::rewards::RewardModel {
    match choice {
        RewardChoice::RHat => &inst.r_hat,
        RewardChoice::RStar => &inst.r_star,
    }
}

/// `R^{r*}(π*) − R^{r*}(policy)` with `ref` as the comparison measure.
pub fn regret_of_policy(inst: &Instance, policy: &FiniteDist) -> Result<f64> {
    regret_of_policy_against(inst, policy, &inst.reference)
}

/// Same with an arbitrary comparison measure `q`.
pub fn regret_of_policy_against(inst: &Instance, policy: &FiniteDist, q: &FiniteDist) -> Result<f64> {
    let pi = inst.comparator()?;
    Ok(win_rate(pi, &inst.r_star, q)? - win_rate(policy, &inst.r_star, q)?)
}

pub fn induced(inst: &Instance, selector: SelectorSpec) -> Result<InducedPolicy> {
    induced_exact(selector, &inst.reference, &inst.r_hat, inst.pi_star.as_ref())
}

#[derive(Clone, Debug, PartialEq)]
pub enum EvalMethod {
    Exact,
    MonteCarlo { trials: u64, seed: u64, stream: u64, confidence: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decomposition {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.t1 + self.t2 + self.t3
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegretReport {
    pub regret: f64,
    pub comparator_winrate: f64,
    pub policy_winrate: f64,
    pub method: Method,
    pub decomposition: Option<Decomposition>,
    pub estimate: Option<McEstimate>,
}

/// Monte-Carlo win-rate of a selector: each trial draws the selector's
/// output and an independent comparator sample and scores the pair.
pub fn win_rate_mc(
    selector: SelectorSpec,
    inst: &Instance,
    reward: RewardChoice,
    comparator: &FiniteDist,
    trials: u64,
    rng: &Rng,
    confidence: f64,
) -> Result<WinRateReport> {
    let prepared = Prepared::new(selector, &inst.reference, &inst.r_hat, inst.pi_star.as_ref())?;
    let r = reward_of(inst, reward);
    r.values_on(comparator)?;
    let cmp = comparator.sampler();
    let values: BTreeMap<u64, f64> = r.values().clone();
    let mut buf = Vec::new();
    let est = estimate_mean(trials, rng, confidence, |g| {
        let y = prepared.draw_with(g, &mut buf);
        let y2 = cmp.draw(g);
        let (a, b) = (values[&y], values[&y2]);
        Ok(if a.to_bits() == b.to_bits() {
            0.5
        } else if a > b {
            1.0
        } else {
            0.0
        })
    })?;
    Ok(WinRateReport { value: est.mean, comparator: comparator.clone(), method: Method::MonteCarlo, estimate: Some(est) })
}

/// Regret of a selector under `r*` against `ref`.
pub fn regret(inst: &Instance, selector: SelectorSpec, method: &EvalMethod) -> Result<RegretReport> {
    let pi = inst.comparator()?;
    let comparator_winrate = win_rate(pi, &inst.r_star, &inst.reference)?;
    match method {
        EvalMethod::Exact => {
            let policy = induced(inst, selector)?.dist;
            let policy_winrate = win_rate(&policy, &inst.r_star, &inst.reference)?;
            Ok(RegretReport {
                regret: comparator_winrate - policy_winrate,
                comparator_winrate,
                policy_winrate,
                method: Method::Exact,
                decomposition: None,
                estimate: None,
            })
        }
        EvalMethod::MonteCarlo { trials, seed, stream, confidence } => {
            let rng = Rng::new(*seed, *stream);
            let rep = win_rate_mc(selector, inst, RewardChoice::RStar, &inst.reference, *trials, &rng, *confidence)?;
            Ok(RegretReport {
                regret: comparator_winrate - rep.value,
                comparator_winrate,
                policy_winrate: rep.value,
                method: Method::MonteCarlo,
                decomposition: None,
                estimate: rep.estimate,
            })
        }
    }
}

/// `t1 = R*(π*) − R̂(π*_M)`, `t2 = R̂(π*_M) − R̂(π̂)`, `t3 = R̂(π̂) − R*(π̂)`,
/// with `π*_M` the TV projection of `π*` under cap `m`.
pub fn regret_decomposition(inst: &Instance, selector: SelectorSpec, m: f64) -> Result<Decomposition> {
    let pi = inst.comparator()?;
    let refd = &inst.reference;
    let pi_m = tv_projection(pi, refd, m)?.projected;
    let hat = induced(inst, selector)?.dist;
    let a = win_rate(pi, &inst.r_star, refd)?;
    let b = win_rate(&pi_m, &inst.r_hat, refd)?;
    let c = win_rate(&hat, &inst.r_hat, refd)?;
    let d = win_rate(&hat, &inst.r_star, refd)?;
    Ok(Decomposition { t1: a - b, t2: b - c, t3: c - d })
}

/// Exact regret with its decomposition attached.
pub fn regret_with_decomposition(inst: &Instance, selector: SelectorSpec, m: f64) -> Result<RegretReport> {
    let mut rep = regret(inst, selector, &EvalMethod::Exact)?;
    rep.decomposition = Some(regret_decomposition(inst, selector, m)?);
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    /// `constant × bracket`.
    pub rhs: f64,
    pub holds: bool,
    pub constant: f64,
    /// The bound's right-hand side without the constant.
    pub bracket: f64,
    pub params: BTreeMap<String, f64>,
}

impl BoundCheck {
    fn new(name: &str, lhs: f64, bracket: f64, constant: f64, params: &[(&str, f64)]) -> Self {
        let rhs = constant * bracket;
        BoundCheck {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs <= rhs + BOUND_SLACK,
            constant,
            bracket,
            params: params.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }

    /// Smallest constant for which this single check holds.
    pub fn required_constant(&self) -> f64 {
        if self.lhs <= BOUND_SLACK {
            0.0
        } else if self.bracket > 0.0 {
            self.lhs / self.bracket
        } else {
            f64::INFINITY
        }
    }
}

/// Smallest constant making every check hold.
pub fn minimal_constant(checks: &[BoundCheck]) -> f64 {
    checks.iter().map(BoundCheck::required_constant).fold(0.0, f64::max)
}

/// `N·ε·log(1/ε) + E_{N/log(1/ε)}`, scaled by `l` in the first term.
///
/// At `ε = 0` the tuning `M = N/log(1/ε)` collapses to `E_0 = 1`. We use
/// what the regret decomposition gives with no reward error instead:
/// `min_M E_M + ½·exp(−N(1 − E_M)/M)`, the rejection-sampling failure
/// term kept explicit. `E_N` alone is not an upper bound: on the
/// hit-the-top-set instance it is 0 while the regret is `½(1 − 1/M)^N`.
fn bon_bracket(inst: &Instance, n: u64, eps: f64, l: f64) -> Result<f64> {
    let pi = inst.comparator()?;
    let nf = n as f64;
    if eps <= 0.0 {
        let mut caps = log_grid(1.0, nf.max(2.0), 64);
        caps.extend(crate::dist::density_ratio(pi, &inst.reference)?.ratios().iter().filter(|&&w| w >= 1.0));
        let mut best = f64::INFINITY;
        for m in caps {
            let e = em_divergence(pi, &inst.reference, m)?;
            best = best.min(e + 0.5 * (-nf * (1.0 - e) / m).exp());
        }
        return Ok(l * best);
    }
    let lg = (1.0 / eps).ln();
    let cap = if lg > 0.0 { nf / lg } else { f64::INFINITY };
    let e = if cap.is_finite() { em_divergence(pi, &inst.reference, cap)? } else { 0.0 };
    Ok(l * nf * eps * lg.max(0.0) + e)
}

pub fn check_bon_bound(inst: &Instance, n: u64, constant: f64) -> Result<BoundCheck> {
    let eps = pairwise_error_exact(&inst.r_hat, &inst.r_star, &inst.reference)?;
    let lhs = regret(inst, SelectorSpec::Bon { n }, &EvalMethod::Exact)?.regret;
    let bracket = bon_bracket(inst, n, eps, 1.0)?;
    Ok(BoundCheck::new("bon", lhs, bracket, constant, &[("n", n as f64), ("eps_pw", eps)]))
}

pub fn check_em_bon_bound(inst: &Instance, m: f64, n: u64, constant: f64) -> Result<BoundCheck> {
    let eps = pairwise_error_exact(&inst.r_hat, &inst.r_star, &inst.reference)?;
    let lhs = regret(inst, SelectorSpec::EmBon { m, n }, &EvalMethod::Exact)?.regret;
    let bracket = em_divergence(inst.comparator()?, &inst.reference, m)? + m * eps + 1.0 / n as f64;
    Ok(BoundCheck::new("em_bon", lhs, bracket, constant, &[("m", m), ("n", n as f64), ("eps_pw", eps)]))
}

/// Regret against `q` for BoN (with `L·N·ε·log(1/ε) + E_{N/log(1/ε)}`) or
/// em_bon (with `L·E_M + L·M·ε + √(M/N)`).
pub fn check_general_q(inst: &Instance, selector: SelectorSpec, constant: f64) -> Result<BoundCheck> {
    let q = inst.q.as_ref().ok_or_else(|| Error::Config(format!("instance `{}` has no q", inst.name)))?;
    let l = inst.l_bound.ok_or_else(|| Error::Config("q given without l_bound".into()))?;
    let eps = pairwise_error_exact(&inst.r_hat, &inst.r_star, &inst.reference)?;
    let policy = induced(inst, selector)?.dist;
    let lhs = regret_of_policy_against(inst, &policy, q)?;
    match selector {
        SelectorSpec::Bon { n } => {
            let bracket = bon_bracket(inst, n, eps, l)?;
            Ok(BoundCheck::new("general_q_bon", lhs, bracket, constant, &[("n", n as f64), ("l", l), ("eps_pw", eps)]))
        }
        SelectorSpec::EmBon { m, n } => {
            let e = em_divergence(inst.comparator()?, &inst.reference, m)?;
            let bracket = l * e + l * m * eps + (m / n as f64).sqrt();
            Ok(BoundCheck::new(
                "general_q_em_bon",
                lhs,
                bracket,
                constant,
                &[("m", m), ("n", n as f64), ("l", l), ("eps_pw", eps)],
            ))
        }
        other => Err(Error::Config(format!("no general-q bound for selector `{other}`"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HackingRow {
    pub n: u64,
    pub bon_regret: f64,
    pub em_bon_regret: f64,
}

pub fn reward_hacking_curve(inst: &Instance, n_grid: &[u64], m: f64) -> Result<Vec<HackingRow>> {
    n_grid
        .iter()
        .map(|&n| {
            Ok(HackingRow {
                n,
                bon_regret: regret(inst, SelectorSpec::Bon { n }, &EvalMethod::Exact)?.regret,
                em_bon_regret: regret(inst, SelectorSpec::EmBon { m, n }, &EvalMethod::Exact)?.regret,
            })
        })
        .collect()
}

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == points {
                hi
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

/// Closed-form χ²-BoN policy on the three-outcome separation instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparationFormula {
    pub regime: u8,
    /// Masses on `(B, C, P)`.
    pub masses: [f64; 3],
    pub winrate: f64,
    pub regret: f64,
}

pub fn separation_formula(alpha: f64, epsilon: f64, delta: f64, beta: f64) -> SeparationFormula {
    let mu = alpha * (1.0 - delta) + epsilon * delta;
    let vc = 1.0 - (alpha - epsilon) / 2.0;
    let vb = epsilon + (1.0 - alpha) / 2.0;
    let vp = epsilon / 2.0;
    let (regime, masses, winrate) = if beta <= epsilon * delta {
        (1, [0.0, 0.0, 1.0], vp)
    } else if beta <= mu {
        let c = (alpha - epsilon) * (beta - epsilon * delta) / (alpha * beta);
        let p = epsilon * (alpha - mu + beta) / (alpha * beta);
        (2, [0.0, c, p], vp + (1.0 - alpha / 2.0) * c)
    } else {
        let b = (1.0 - alpha) * (1.0 - mu / beta);
        let c = (alpha - epsilon) * (1.0 + ((1.0 - delta) - mu) / beta);
        let p = epsilon * (1.0 + (1.0 - mu) / beta);
        (3, [b, c, p], c * vc + b * vb + p * vp)
    };
    SeparationFormula { regime, masses, winrate, regret: vc - winrate }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationRow {
    /// `f64::INFINITY` marks the `β → ∞` limit (the reference policy).
    pub beta: f64,
    pub regime: u8,
    pub chi_regret: f64,
    pub formula_regret: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport {
    pub rows: Vec<SeparationRow>,
    pub min_chi_regret: f64,
    pub em_regret: f64,
    pub ratio: f64,
    pub c: f64,
    /// Largest deviation between solver and closed form, policy masses and regret.
    pub max_formula_deviation: f64,
}

impl SeparationReport {
    pub fn separated(&self) -> bool {
        self.ratio >= self.c
    }
}

pub fn separation_sweep(inst: &Instance, beta_grid: &[f64], include_endpoints: bool) -> Result<SeparationReport> {
    let (alpha, epsilon, delta, mu, c) = (
        inst.get_param("alpha")?,
        inst.get_param("epsilon")?,
        inst.get_param("delta")?,
        inst.get_param("mu")?,
        inst.get_param("c")?,
    );
    let mut betas: Vec<f64> = beta_grid.to_vec();
    if include_endpoints {
        betas.push(epsilon * delta);
        betas.push(mu);
    }
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let em_regret = regret(inst, SelectorSpec::TopQuantile { m: 1.0 / alpha }, &EvalMethod::Exact)?.regret;
    let mut rows = Vec::new();
    let mut dev: f64 = 0.0;
    for &beta in &betas {
        let policy = induced(inst, SelectorSpec::ChiBon { beta })?.dist;
        let chi_regret = regret_of_policy(inst, &policy)?;
        let f = separation_formula(alpha, epsilon, delta, beta);
        for (i, want) in f.masses.iter().enumerate() {
            dev = dev.max((policy.prob(i as u64) - want).abs());
        }
        dev = dev.max((chi_regret - f.regret).abs());
        rows.push(SeparationRow { beta, regime: f.regime, chi_regret, formula_regret: f.regret });
    }
    let limit = regret_of_policy(inst, &inst.reference)?;
    rows.push(SeparationRow {
        beta: f64::INFINITY,
        regime: 3,
        chi_regret: limit,
        formula_regret: (1.0 - alpha + epsilon) / 2.0,
    });
    dev = dev.max((limit - (1.0 - alpha + epsilon) / 2.0).abs());
    let min_chi = rows.iter().map(|r| r.chi_regret).fold(f64::INFINITY, f64::min);
    Ok(SeparationReport {
        rows,
        min_chi_regret: min_chi,
        em_regret,
        ratio: min_chi / em_regret,
        c,
        max_formula_deviation: dev,
    })
}

/// The default β grid: 50 log-spaced points inside each regime.
pub fn separation_beta_grid(inst: &Instance, per_regime: usize) -> Result<Vec<f64>> {
    let (epsilon, delta, mu) = (inst.get_param("epsilon")?, inst.get_param("delta")?, inst.get_param("mu")?);
    let ed = epsilon * delta;
    let mut g = log_grid(ed * 1e-3, ed, per_regime);
    g.extend(log_grid(ed, mu, per_regime + 1).into_iter().skip(1));
    g.extend(log_grid(mu, mu * 1e4, per_regime + 1).into_iter().skip(1));
    Ok(g)
}
