//! One line per acceptance criterion; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;

use bonlab::analysis::{
    reward_hacking_curve, separation_beta_grid, separation_sweep, win_rate_mc, EvalMethod,
};
use bonlab::divergences::{coverage, em_divergence, em_fdiv_bound_check, tv_projection, FDivSpec};
use bonlab::instances::{catalog, make_computational_lb, make_corrupted_skyline, make_separation, generate};
use bonlab::rewards::{pairwise_error_exact, win_rate, RankTable};
use bonlab::selectors::{bon_induced_exact, em_bon_induced_exact, em_k, top_quantile_policy, SelectorSpec};
use bonlab::{density_ratio, random, FiniteDist, Instance, RewardChoice, RewardModel, Rng};
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

const MS: [f64; 4] = [2.0, 4.0, 8.0, 16.0];

fn grid(g: u64) -> (FiniteDist, RewardModel) {
    let x = FiniteDist::uniform(g as usize).unwrap();
    let rh = RewardModel::from_pairs((0..g).map(|i| (i, i as f64 / g as f64)), 1.0).unwrap();
    (x, rh)
}

fn order_stat_value(m: f64, n: u64) -> f64 {
    let k = em_k(m, n) as f64;
    1.0 - (k + 1.0) / (2.0 * (n as f64 + 1.0))
}

fn criterion_1() -> Outcome {
    // 2^17 atoms keep the discreteness error (N/k)/(12 g²) below 1e-10
    let (x, rh) = grid(1 << 17);
    let cases: Vec<(f64, u64)> = MS.iter().flat_map(|&m| (1..=64).map(move |j| (m, 4 * j))).collect();
    let worst = cases
        .par_iter()
        .map(|&(m, n)| -> Result<f64, String> {
            let p = e(em_bon_induced_exact(&x, &rh, m, n))?.dist;
            Ok((e(win_rate(&p, &rh, &x))? - order_stat_value(m, n)).abs())
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    ensure(worst <= 1e-9, || format!("exact deviation {worst:.2e}"))?;
    let inst = e(Instance::new("grid", x.clone(), rh.clone(), rh.clone()))?;
    let mc_cases = [(2.0, 4u64), (4.0, 64), (8.0, 100), (16.0, 256)];
    let mut misses = Vec::new();
    for (i, &(m, n)) in mc_cases.iter().enumerate() {
        let rng = Rng::new(1001, i as u64);
        let rep = e(win_rate_mc(SelectorSpec::EmBon { m, n }, &inst, RewardChoice::RHat, &x, 1_000_000, &rng, 0.99))?;
        let est = rep.estimate.unwrap();
        if !est.contains(order_stat_value(m, n)) {
            misses.push(format!("(M={m}, N={n}) {:.5}±{:.5}", est.mean, est.half_width));
        }
    }
    ensure(misses.is_empty(), || format!("Monte Carlo outside interval: {misses:?}"))?;
    Ok(format!("{} exact cases, max dev {worst:.1e}; {} MC cases at 10^6 trials inside 99% intervals", cases.len(), mc_cases.len()))
}

fn criterion_2() -> Outcome {
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for inst in e(catalog())? {
        let table = e(RankTable::new(&inst.reference, &inst.r_hat))?;
        let mut tails = BTreeMap::new();
        for c in table.classes() {
            let p = 1.0 - c.below;
            if p > 1e-12 {
                tails.insert(p.to_bits(), p);
            }
        }
        for &p in tails.values() {
            let m = 1.0 / p;
            let pol = e(top_quantile_policy(&inst.reference, &inst.r_hat, m))?.dist;
            let w = e(win_rate(&pol, &inst.r_hat, &inst.reference))?;
            worst = worst.max((w - (1.0 - 1.0 / (2.0 * m))).abs());
            cases += 1;
        }
    }
    ensure(worst <= 1e-12, || format!("max dev {worst:.2e}"))?;
    Ok(format!("{cases} (instance, level set) cases, max dev {worst:.1e}"))
}

fn criterion_3() -> Outcome {
    let mut out = Vec::new();
    for (c, k, delta, eps) in [(2.0, 2.0, 0.75, 0.01), (4.0, 3.0, 0.875, 0.005)] {
        let inst = e(make_separation(c, k, delta, eps))?;
        let alpha = inst.params["alpha"];
        let grid = e(separation_beta_grid(&inst, 50))?;
        let rep = e(separation_sweep(&inst, &grid, true))?;
        let want = (1.0 - alpha / 2.0) * eps / alpha;
        ensure((rep.em_regret - want).abs() <= 1e-9, || format!("c={c}: em regret {} vs {want}", rep.em_regret))?;
        ensure(rep.min_chi_regret >= c * rep.em_regret, || format!("c={c}: ratio {}", rep.ratio))?;
        ensure(rep.max_formula_deviation <= 1e-9, || format!("c={c}: formula dev {}", rep.max_formula_deviation))?;
        for regime in 1..=3u8 {
            let n = rep.rows.iter().filter(|r| r.regime == regime && r.beta.is_finite()).count();
            ensure(n >= 50, || format!("c={c}: regime {regime} has {n} points"))?;
        }
        out.push(format!("c={c} ratio {:.3}", rep.ratio));
    }
    Ok(out.join(", "))
}

fn criterion_4() -> Outcome {
    let m = 10.0;
    let inst = e(make_computational_lb(m, 100))?;
    let miss = e(inst.reference.conditional(&(0..90).collect::<Vec<_>>()))?;
    let pi = inst.pi_star.clone().unwrap();
    let gap = e(win_rate(&pi, &inst.r_star, &inst.reference))? - e(win_rate(&miss, &inst.r_star, &inst.reference))?;
    let mut worst: f64 = 0.0;
    let mut threshold = None;
    for n in 1..=200u64 {
        let reg = e(bonlab::analysis::regret(&inst, SelectorSpec::Bon { n }, &EvalMethod::Exact))?.regret;
        worst = worst.max((reg - (1.0 - 1.0 / m).powi(n as i32) * gap).abs());
        if threshold.is_none() && reg <= 0.1 {
            threshold = Some(n);
        }
    }
    ensure(worst <= 1e-9, || format!("max dev {worst:.2e}"))?;
    let t = threshold.ok_or("regret never reached 0.1")? as f64;
    let scale = m * (1.0 / (2.0 * 0.1f64)).ln();
    ensure(t <= 2.0 * scale && t >= scale / 2.0, || format!("threshold {t} vs {scale:.2}"))?;
    Ok(format!("max dev {worst:.1e}, threshold N={t} vs M·log(1/2δ)={scale:.2}"))
}

fn criterion_5() -> Outcome {
    let mut parts = Vec::new();
    for (name, params) in [("separation", vec![]), ("skyline", vec![]), ("scale_gap", vec![])] {
        let params: BTreeMap<String, f64> = params.into_iter().collect();
        let inst = e(generate(name, &params))?;
        let want = match name {
            "separation" => {
                let eps = inst.params["epsilon"];
                2.0 * eps * (1.0 - eps)
            }
            "skyline" => {
                let e1 = inst.params["epsilon_prime"];
                e1 * (1.0 - e1)
            }
            _ => 0.0,
        };
        let got = e(pairwise_error_exact(&inst.r_hat, &inst.r_star, &inst.reference))?;
        ensure((got - want).abs() <= 1e-12, || format!("{name}: {got} vs {want}"))?;
        parts.push(format!("{name} {got:.6}"));
    }
    let sep2 = e(make_separation(4.0, 3.0, 0.875, 0.005))?;
    let got = e(pairwise_error_exact(&sep2.r_hat, &sep2.r_star, &sep2.reference))?;
    ensure((got - 2.0 * 0.005 * 0.995).abs() <= 1e-12, || format!("separation c=4: {got}"))?;
    Ok(parts.join(", "))
}

fn criterion_6() -> Outcome {
    let mut g = Rng::new(606, 0);
    let kinds = [FDivSpec::ChiSquare, FDivSpec::Kl, FDivSpec::Tv];
    let ms = [1.0, 1.5, 2.0, 3.0, 5.0, 8.0];
    for draw in 0..1000 {
        let n = 2 + g.below(8);
        let x = e(random::dist(&mut g, n, 0.0))?;
        let p = e(random::dominated(&mut g, &x))?;
        let ev: Vec<f64> = ms.iter().map(|&m| em_divergence(&p, &x, m).unwrap()).collect();
        for i in 0..ms.len() {
            ensure(ev[i] <= e(coverage(&p, &x, ms[i]))? + 1e-12, || format!("draw {draw}: E_M > coverage at M={}", ms[i]))?;
            if i + 1 < ms.len() {
                ensure(ev[i + 1] <= ev[i] + 1e-12, || format!("draw {draw}: E_M not monotone"))?;
            }
            if i + 2 < ms.len() {
                // convexity on a nonuniform grid
                let (a, b, c) = (ms[i], ms[i + 1], ms[i + 2]);
                let t = (b - a) / (c - a);
                ensure(ev[i + 1] <= (1.0 - t) * ev[i] + t * ev[i + 2] + 1e-12, || format!("draw {draw}: E_M not convex"))?;
            }
            if ms[i] > 1.0 {
                for kind in &kinds {
                    let b = e(em_fdiv_bound_check(&p, &x, kind, ms[i]))?;
                    ensure(b.holds, || format!("draw {draw}: {} bound fails at M={}", kind.name(), ms[i]))?;
                }
            }
            let proj = e(tv_projection(&p, &x, ms[i]))?;
            ensure((proj.tv_to_target - ev[i]).abs() <= 1e-12, || format!("draw {draw}: TV {} vs E_M {}", proj.tv_to_target, ev[i]))?;
            let cap = e(density_ratio(&proj.projected, &x))?.max();
            ensure(cap <= ms[i] * (1.0 + 1e-12), || format!("draw {draw}: ratio {cap} above {}", ms[i]))?;
        }
    }
    Ok("1000 randomized instances".into())
}

/// Law of BoN by enumerating every batch; ties in the batch split evenly.
fn bon_enumerated(p: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    let mut law = vec![0.0; p.len()];
    let total = p.len().pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let mut batch = Vec::with_capacity(n);
        let mut w = 1.0;
        for _ in 0..n {
            batch.push(c % p.len());
            w *= p[c % p.len()];
            c /= p.len();
        }
        let best = batch.iter().map(|&i| v[i]).fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<usize> = batch.iter().copied().filter(|&i| v[i] == best).collect();
        for &i in &winners {
            law[i] += w / winners.len() as f64;
        }
    }
    law
}

fn criterion_7() -> Outcome {
    let mut g = Rng::new(707, 0);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..250 {
        let size = 1 + g.below(5);
        let x = e(random::dist(&mut g, size, 0.2))?;
        let levels = 1 + g.below(size + 1);
        let rh = e(random::reward(&mut g, size, levels.max(2)))?;
        let v: Vec<f64> = e(rh.values_on(&x))?;
        for n in 1..=4u64 {
            let law = bon_enumerated(x.probs(), &v, n as usize);
            let got = e(bon_induced_exact(&x, &rh, n))?.dist;
            for (a, b) in got.probs().iter().zip(&law) {
                worst = worst.max((a - b).abs());
            }
            cases += 1;
        }
    }
    ensure(worst <= 1e-12, || format!("max dev {worst:.2e}"))?;
    Ok(format!("{cases} (instance, N) cases, max dev {worst:.1e}"))
}

fn criterion_8() -> Outcome {
    let mut g = Rng::new(808, 0);
    for draw in 0..1000 {
        let n = 2 + g.below(8);
        let x = e(random::dist(&mut g, n, 0.15))?;
        let p = e(random::dominated(&mut g, &x))?;
        let q = e(random::dominated(&mut g, &x))?;
        let l = e(density_ratio(&q, &x))?.max();
        let (la, lb) = (2 + g.below(5), 2 + g.below(5));
        let rh = e(random::reward(&mut g, n, la))?;
        let rs = e(random::reward(&mut g, n, lb))?;
        let m = 1.0 + 9.0 * g.uniform();
        let eps = e(pairwise_error_exact(&rh, &rs, &x))?;
        let em = e(em_divergence(&p, &x, m))?;
        let base = (e(win_rate(&p, &rs, &x))? - e(win_rate(&p, &rh, &x))?).abs();
        ensure(base <= m * eps + em + 1e-12, || format!("draw {draw}: base transfer {base} > {}", m * eps + em))?;
        let gen = (e(win_rate(&p, &rs, &q))? - e(win_rate(&p, &rh, &q))?).abs();
        ensure(gen <= l * (m * eps + em) + 1e-12, || format!("draw {draw}: q transfer {gen} > {}", l * (m * eps + em)))?;
    }
    Ok("1000 draws each".into())
}

fn criterion_9() -> Outcome {
    let m = 8.0;
    let inst = e(make_corrupted_skyline(m, 0.01, 200))?;
    let ns: Vec<u64> = (1..=256).collect();
    let rows = e(reward_hacking_curve(&inst, &ns, m))?;
    let best = rows.iter().enumerate().min_by(|a, b| a.1.bon_regret.total_cmp(&b.1.bon_regret)).unwrap().0;
    let tail_rises = rows[best..].windows(2).all(|w| w[1].bon_regret > w[0].bon_regret);
    ensure(best + 1 < rows.len() && tail_rises, || format!("BoN minimum at N={} with no rising tail", rows[best].n))?;
    let along: Vec<_> = rows.iter().filter(|r| r.n % 8 == 0).collect();
    for w in along.windows(2) {
        ensure(w[1].em_bon_regret <= w[0].em_bon_regret + 1e-12, || format!("em_bon rises at N={}", w[1].n))?;
    }
    Ok(format!(
        "BoN min {:.4} at N={}, {:.4} at N=256; em_bon {:.4} at N=8, {:.4} at N=256",
        rows[best].bon_regret,
        rows[best].n,
        rows[255].bon_regret,
        rows[7].em_bon_regret,
        rows[255].em_bon_regret
    ))
}

fn read_all(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|f| f.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn criterion_10() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_bonlab");
    let tmp = e(tempfile::tempdir())?;
    let mut outs = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        let st = e(Command::new(bin).args(["run", "separation-default"]).env("BONLAB_OUT", &dir).output())?;
        ensure(st.status.success(), || format!("run {run} failed: {}", String::from_utf8_lossy(&st.stderr)))?;
        outs.push(read_all(&dir));
    }
    let csvs = outs[0].keys().filter(|k| k.ends_with(".csv")).count();
    ensure(csvs > 0, || "no CSVs written".into())?;
    ensure(outs[0] == outs[1], || "outputs differ between runs".into())?;
    let v = e(Command::new(bin).arg("verify").output())?;
    ensure(v.status.code() == Some(0), || format!("verify exited {:?}", v.status.code()))?;
    Ok(format!("{} files byte-identical across runs ({csvs} CSVs); verify exit 0", outs[0].len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("order-statistics win-rate", criterion_1),
        ("population quantile policy", criterion_2),
        ("separation", criterion_3),
        ("computational lower bound", criterion_4),
        ("pairwise-error closed forms", criterion_5),
        ("divergence suite", criterion_6),
        ("BoN closed form vs brute force", criterion_7),
        ("transfer inequalities", criterion_8),
        ("reward-hacking shape", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match res {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
