//! The built-in verification suite run by `bonlab verify`.

use std::collections::BTreeMap;

use bonlab::analysis::{
    check_general_q, check_bon_bound, check_em_bon_bound, minimal_constant, regret, reward_hacking_curve,
    separation_beta_grid, separation_sweep, EvalMethod, DEFAULT_CONSTANT,
};
use bonlab::instances::{catalog, make_cutoff_band, self_check, Instance, FAMILIES};
use bonlab::rewards::{win_rate, RankTable};
use bonlab::selectors::{em_bon_induced_exact, em_k, top_quantile_policy, SelectorSpec};
use bonlab::{FiniteDist, RewardModel};

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyRow {
    pub check: String,
    pub subject: String,
    pub cases: usize,
    pub detail: String,
    pub pass: bool,
}

fn row(check: &str, subject: &str, cases: usize, detail: String, pass: bool) -> VerifyRow {
    VerifyRow { check: check.into(), subject: subject.into(), cases, detail, pass }
}

fn failed(check: &str, subject: &str, e: bonlab::Error) -> VerifyRow {
    row(check, subject, 0, format!("error: {e}"), false)
}

macro_rules! attempt {
    ($rows:expr, $check:expr, $subject:expr, $body:expr) => {
        #[allow(clippy::redundant_closure_call)]
        let r = (|| -> bonlab::Result<VerifyRow> { $body })();
        match r {
            Ok(r) => $rows.push(r),
            Err(e) => $rows.push(failed($check, $subject, e)),
        }
    };
}

const EM_BON_M: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
const POW2_N: [u64; 9] = [1, 2, 4, 8, 16, 32, 64, 128, 256];

pub fn run_suite() -> Vec<VerifyRow> {
    let mut rows = Vec::new();
    let cat = match catalog() {
        Ok(c) => c,
        Err(e) => return vec![failed("catalog", "all", e)],
    };
    let names: Vec<&str> = cat.iter().map(|i| i.name.as_str()).collect();
    let missing: Vec<&str> = FAMILIES.iter().copied().filter(|f| !names.contains(f)).collect();
    rows.push(row(
        "inventory",
        "catalog",
        cat.len(),
        if missing.is_empty() { format!("{} families", FAMILIES.len()) } else { format!("missing {missing:?}") },
        missing.is_empty(),
    ));

    for inst in &cat {
        attempt!(rows, "self_check", &inst.name, {
            let rep = self_check(inst)?;
            let detail = match rep.failures().as_slice() {
                [] => format!("max dev {:.1e}", rep.max_deviation),
                f => format!("failed {f:?}"),
            };
            Ok(row("self_check", &inst.name, rep.rows.len(), detail, rep.pass))
        });
    }

    for inst in cat.iter().filter(|i| i.pi_star.is_some()) {
        attempt!(rows, "bon_bound", &inst.name, {
            let checks = (1..=256).map(|n| check_bon_bound(inst, n, DEFAULT_CONSTANT)).collect::<bonlab::Result<Vec<_>>>()?;
            let c = minimal_constant(&checks);
            Ok(row("bon_bound", &inst.name, checks.len(), format!("min C {c:.3}"), checks.iter().all(|b| b.holds)))
        });
        attempt!(rows, "em_bon_bound", &inst.name, {
            let mut checks = Vec::new();
            for m in EM_BON_M {
                for n in POW2_N {
                    checks.push(check_em_bon_bound(inst, m, n, DEFAULT_CONSTANT)?);
                }
            }
            let c = minimal_constant(&checks);
            Ok(row("em_bon_bound", &inst.name, checks.len(), format!("min C {c:.3}"), checks.iter().all(|b| b.holds)))
        });
    }

    let mut q_instances: Vec<Instance> = cat.iter().filter(|i| i.q.is_some() && i.pi_star.is_some()).cloned().collect();
    match make_cutoff_band(4.0, 1000, 0.1) {
        Ok(b) => q_instances.push(b),
        Err(e) => rows.push(failed("general_q_bound", "cutoff_band", e)),
    }
    for inst in &q_instances {
        attempt!(rows, "general_q_bound", &inst.name, {
            let mut checks = Vec::new();
            for n in POW2_N {
                checks.push(check_general_q(inst, SelectorSpec::Bon { n }, DEFAULT_CONSTANT)?);
                for m in [2.0, 4.0] {
                    checks.push(check_general_q(inst, SelectorSpec::EmBon { m, n }, DEFAULT_CONSTANT)?);
                }
            }
            let c = minimal_constant(&checks);
            Ok(row("general_q_bound", &inst.name, checks.len(), format!("min C {c:.3}"), checks.iter().all(|b| b.holds)))
        });
    }

    for inst in cat.iter().filter(|i| i.name == "separation") {
        let subject = format!("separation c={}", inst.params.get("c").copied().unwrap_or(f64::NAN));
        attempt!(rows, "separation", &subject, {
            let grid = separation_beta_grid(inst, 50)?;
            let rep = separation_sweep(inst, &grid, true)?;
            let ok = rep.separated() && rep.max_formula_deviation <= 1e-9;
            Ok(row(
                "separation",
                &subject,
                rep.rows.len(),
                format!("ratio {:.3} vs c {}, formula dev {:.1e}", rep.ratio, rep.c, rep.max_formula_deviation),
                ok,
            ))
        });
    }

    match order_statistics() {
        Ok(r) => rows.push(r),
        Err(e) => rows.push(failed("order_statistics", "grid 2^12", e)),
    }

    for inst in &cat {
        match top_quantile_levels(inst) {
            Ok(r) => rows.push(r),
            Err(e) => rows.push(failed("top_quantile", &inst.name, e)),
        }
    }

    attempt!(rows, "lower_bound", "computational_lb", {
        let inst = cat.iter().find(|i| i.name == "computational_lb").expect("in catalog");
        let m = inst.get_param("m")?;
        let mut worst: f64 = 0.0;
        for n in 1..=200u64 {
            let reg = regret(inst, SelectorSpec::Bon { n }, &EvalMethod::Exact)?.regret;
            worst = worst.max((reg - 0.5 * (1.0 - 1.0 / m).powi(n as i32)).abs());
        }
        Ok(row("lower_bound", "computational_lb", 200, format!("max dev {worst:.1e}"), worst <= 1e-9))
    });

    attempt!(rows, "reward_hacking", "corrupted_skyline", {
        let inst = cat.iter().find(|i| i.name == "corrupted_skyline").expect("in catalog");
        let m = inst.get_param("m_star")?;
        let ns: Vec<u64> = (1..=256).collect();
        let curve = reward_hacking_curve(inst, &ns, m)?;
        let rising = curve.windows(2).any(|w| w[1].bon_regret > w[0].bon_regret + 1e-12);
        let along: Vec<f64> = curve.iter().filter(|r| r.n as f64 % m == 0.0).map(|r| r.em_bon_regret).collect();
        let monotone = along.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        Ok(row(
            "reward_hacking",
            "corrupted_skyline",
            curve.len(),
            format!("bon rises: {rising}, em_bon monotone: {monotone}"),
            rising && monotone,
        ))
    });

    rows
}

/// em_bon's `r̂`-win-rate against the order-statistics value on a fine grid.
fn order_statistics() -> bonlab::Result<VerifyRow> {
    let g = 1u64 << 12;
    let x = FiniteDist::uniform(g as usize)?;
    let rh = RewardModel::from_pairs((0..g).map(|i| (i, i as f64 / g as f64)), 1.0)?;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for m in [2.0, 4.0, 8.0, 16.0] {
        for n in [4u64, 8, 16, 32, 64, 128, 256] {
            let k = em_k(m, n) as f64;
            let want = 1.0 - (k + 1.0) / (2.0 * (n as f64 + 1.0));
            let p = em_bon_induced_exact(&x, &rh, m, n)?.dist;
            // atoms shift the value by about (N/k)/(12 g²)
            let atoms = (n as f64 / k) / (12.0 * (g * g) as f64);
            worst = worst.max((win_rate(&p, &rh, &x)? - want).abs() - 2.0 * atoms);
            cases += 1;
        }
    }
    Ok(row("order_statistics", "grid 2^12", cases, format!("excess dev {worst:.1e}"), worst <= 1e-9))
}

/// `top_quantile(M)` at `M = 1/p` for every `r̂` level-set tail mass `p`.
fn top_quantile_levels(inst: &Instance) -> bonlab::Result<VerifyRow> {
    let table = RankTable::new(&inst.reference, &inst.r_hat)?;
    let mut tails: BTreeMap<u64, f64> = BTreeMap::new();
    for c in table.classes() {
        let p = 1.0 - c.below;
        if p > 1e-12 {
            tails.insert(p.to_bits(), p);
        }
    }
    let mut worst: f64 = 0.0;
    for &p in tails.values() {
        let m = 1.0 / p;
        let pol = top_quantile_policy(&inst.reference, &inst.r_hat, m)?.dist;
        worst = worst.max((win_rate(&pol, &inst.r_hat, &inst.reference)? - (1.0 - 1.0 / (2.0 * m))).abs());
    }
    Ok(row("top_quantile", &inst.name, tails.len(), format!("max dev {worst:.1e}"), worst <= 1e-12))
}

pub fn render(rows: &[VerifyRow]) -> String {
    let w0 = rows.iter().map(|r| r.check.len()).max().unwrap_or(5).max(5);
    let w1 = rows.iter().map(|r| r.subject.chars().count()).max().unwrap_or(7).max(7);
    let mut s = format!("{:<w0$}  {:<w1$}  {:>5}  {:<4}  detail\n", "check", "subject", "cases", "ok");
    for r in rows {
        s += &format!(
            "{:<w0$}  {:<w1$}  {:>5}  {:<4}  {}\n",
            r.check,
            r.subject,
            r.cases,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    s += &format!("{} checks, {} failed\n", rows.len(), failed);
    s
}
