//! Job execution. Every job turns into one fixed-schema table.

use bonlab::analysis::{
    check_general_q, check_bon_bound, check_em_bon_bound, minimal_constant, regret, regret_with_decomposition,
    reward_hacking_curve, separation_beta_grid, separation_sweep, win_rate_mc, BoundCheck, EvalMethod,
};
use bonlab::instances::self_check;
use bonlab::rewards::{win_rate_exact, WinRateReport};
use bonlab::selectors::{induced_exact, SelectorSpec};
use bonlab::{Instance, RewardChoice, Rng};
use serde_json::{json, Value};

use crate::config::{Evaluator, ExperimentConfig, JobSpec, Theorem};
use crate::plot::Plot;

#[derive(Clone, Debug)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub summary: Value,
    pub plot: Option<Plot>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new(), summary: Value::Null, plot: None }
    }

    /// The preamble line, then RFC 4180 rows (selector names contain commas).
    pub fn to_csv(&self, preamble: &str) -> String {
        let mut w = csv::Writer::from_writer(preamble.as_bytes().to_vec());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn reward_name(r: RewardChoice) -> &'static str {
    match r {
        RewardChoice::RHat => "r_hat",
        RewardChoice::RStar => "r_star",
    }
}

/// Generator for selector `s` of job `job`.
fn job_rng(cfg: &ExperimentConfig, job: usize, s: usize) -> Rng {
    Rng::new(cfg.seed, 0).derive(job as u64).derive(s as u64)
}

pub fn run_job(cfg: &ExperimentConfig, inst: &Instance, job_index: usize, job: &JobSpec) -> bonlab::Result<Table> {
    match job {
        JobSpec::WinRate { selectors, evaluator, reward } => {
            let mut t = Table::new(&["selector", "reward", "method", "value", "half_width", "trials", "seed"]);
            let r = match reward {
                RewardChoice::RHat => &inst.r_hat,
                RewardChoice::RStar => &inst.r_star,
            };
            for (s, sel) in selectors.iter().enumerate() {
                let rep: WinRateReport = match evaluator {
                    Evaluator::Exact => {
                        let p = induced_exact(*sel, &inst.reference, &inst.r_hat, inst.pi_star.as_ref())?;
                        win_rate_exact(&p.dist, r, &inst.reference)?
                    }
                    Evaluator::MonteCarlo => {
                        let rng = job_rng(cfg, job_index, s);
                        win_rate_mc(*sel, inst, *reward, &inst.reference, cfg.trials, &rng, cfg.confidence)?
                    }
                };
                let mut row = vec![sel.to_string(), reward_name(*reward).to_string()];
                row.extend(rep.csv_row().split(',').map(str::to_string));
                t.rows.push(row);
            }
            Ok(t)
        }
        JobSpec::Regret { selectors, evaluator, decompose_m } => {
            let mut t = Table::new(&[
                "selector",
                "method",
                "regret",
                "comparator_winrate",
                "policy_winrate",
                "half_width",
                "t1",
                "t2",
                "t3",
            ]);
            for (s, sel) in selectors.iter().enumerate() {
                let rep = match (evaluator, decompose_m) {
                    (Evaluator::Exact, Some(m)) => regret_with_decomposition(inst, *sel, *m)?,
                    (Evaluator::Exact, None) => regret(inst, *sel, &EvalMethod::Exact)?,
                    (Evaluator::MonteCarlo, _) => {
                        let rng = job_rng(cfg, job_index, s);
                        let method = EvalMethod::MonteCarlo {
                            trials: cfg.trials,
                            seed: rng.seed(),
                            stream: rng.stream(),
                            confidence: cfg.confidence,
                        };
                        regret(inst, *sel, &method)?
                    }
                };
                let hw = rep.estimate.as_ref().map_or(0.0, |e| e.half_width);
                let (t1, t2, t3) = match rep.decomposition {
                    Some(d) => (f(d.t1), f(d.t2), f(d.t3)),
                    None => (String::new(), String::new(), String::new()),
                };
                let method = match evaluator {
                    Evaluator::Exact => "exact",
                    Evaluator::MonteCarlo => "monte-carlo",
                };
                t.rows.push(vec![
                    sel.to_string(),
                    method.into(),
                    f(rep.regret),
                    f(rep.comparator_winrate),
                    f(rep.policy_winrate),
                    f(hw),
                    t1,
                    t2,
                    t3,
                ]);
            }
            Ok(t)
        }
        JobSpec::Hacking { n_grid, m } => {
            let rows = reward_hacking_curve(inst, n_grid, *m)?;
            let mut t = Table::new(&["n", "bon_regret", "em_bon_regret"]);
            for r in &rows {
                t.rows.push(vec![r.n.to_string(), f(r.bon_regret), f(r.em_bon_regret)]);
            }
            t.plot = Some(Plot {
                title: format!("{}: regret against N", inst.name),
                x_label: "N".into(),
                y_label: "regret".into(),
                log_x: true,
                series: vec![
                    ("BoN".into(), rows.iter().map(|r| (r.n as f64, r.bon_regret)).collect()),
                    (format!("em_bon M={m}"), rows.iter().map(|r| (r.n as f64, r.em_bon_regret)).collect()),
                ],
            });
            Ok(t)
        }
        JobSpec::Separation { per_regime } => {
            let grid = separation_beta_grid(inst, *per_regime)?;
            let rep = separation_sweep(inst, &grid, true)?;
            let mut t = Table::new(&["beta", "regime", "chi_regret", "formula_regret", "em_regret", "ratio"]);
            for r in &rep.rows {
                t.rows.push(vec![
                    f(r.beta),
                    r.regime.to_string(),
                    f(r.chi_regret),
                    f(r.formula_regret),
                    f(rep.em_regret),
                    f(r.chi_regret / rep.em_regret),
                ]);
            }
            t.summary = json!({
                "min_chi_regret": rep.min_chi_regret,
                "em_regret": rep.em_regret,
                "ratio": rep.ratio,
                "c": rep.c,
                "separated": rep.separated(),
                "max_formula_deviation": rep.max_formula_deviation,
            });
            let finite: Vec<_> = rep.rows.iter().filter(|r| r.beta.is_finite() && r.beta > 0.0).collect();
            t.plot = Some(Plot {
                title: format!("{}: regret against beta", inst.name),
                x_label: "beta".into(),
                y_label: "regret".into(),
                log_x: true,
                series: vec![
                    ("chi_bon".into(), finite.iter().map(|r| (r.beta, r.chi_regret)).collect()),
                    ("em (population)".into(), finite.iter().map(|r| (r.beta, rep.em_regret)).collect()),
                ],
            });
            Ok(t)
        }
        JobSpec::Bounds { theorem, n_grid, m_grid, constant } => {
            let mut checks: Vec<(SelectorSpec, BoundCheck)> = Vec::new();
            for &n in n_grid {
                match theorem {
                    Theorem::Bon => checks.push((SelectorSpec::Bon { n }, check_bon_bound(inst, n, *constant)?)),
                    Theorem::EmBon => {
                        for &m in m_grid {
                            checks.push((SelectorSpec::EmBon { m, n }, check_em_bon_bound(inst, m, n, *constant)?));
                        }
                    }
                    Theorem::GeneralQ => {
                        let s = SelectorSpec::Bon { n };
                        checks.push((s, check_general_q(inst, s, *constant)?));
                        for &m in m_grid {
                            let s = SelectorSpec::EmBon { m, n };
                            checks.push((s, check_general_q(inst, s, *constant)?));
                        }
                    }
                }
            }
            let mut t = Table::new(&[
                "check",
                "selector",
                "eps_pw",
                "lhs",
                "bracket",
                "constant",
                "rhs",
                "holds",
                "required_constant",
            ]);
            for (s, b) in &checks {
                t.rows.push(vec![
                    b.name.clone(),
                    s.to_string(),
                    f(b.params.get("eps_pw").copied().unwrap_or(f64::NAN)),
                    f(b.lhs),
                    f(b.bracket),
                    f(b.constant),
                    f(b.rhs),
                    b.holds.to_string(),
                    f(b.required_constant()),
                ]);
            }
            let only: Vec<BoundCheck> = checks.into_iter().map(|(_, b)| b).collect();
            t.summary = json!({
                "all_hold": only.iter().all(|b| b.holds),
                "minimal_constant": minimal_constant(&only),
            });
            Ok(t)
        }
        JobSpec::SelfCheck => {
            let rep = self_check(inst)?;
            let mut t = Table::new(&["truth", "relation", "expected", "actual", "pass"]);
            for r in &rep.rows {
                t.rows.push(vec![
                    r.name.clone(),
                    format!("{:?}", r.relation).to_lowercase(),
                    f(r.expected),
                    f(r.actual),
                    r.pass.to_string(),
                ]);
            }
            t.summary = json!({ "pass": rep.pass, "max_deviation": rep.max_deviation });
            Ok(t)
        }
    }
}
