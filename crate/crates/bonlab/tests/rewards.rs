use bonlab::divergences::em_divergence;
use bonlab::instances::{make_mse_small_pw_large, make_separation, scale_gap_default};
use bonlab::rewards::*;
use bonlab::selectors::{top_quantile_policy, SelectorSpec};
use bonlab::{analysis, density_ratio, random, FiniteDist, RewardModel, Rng};
use proptest::prelude::*;

fn d(p: &[f64]) -> FiniteDist {
    FiniteDist::new((0..p.len() as u64).collect(), p.to_vec()).unwrap()
}

fn r(v: &[f64]) -> RewardModel {
    RewardModel::from_pairs(v.iter().enumerate().map(|(i, &x)| (i as u64, x)), 1.0).unwrap()
}

#[test]
fn pairwise_outcome_examples() {
    let rv = r(&[0.2, 0.7, 0.7]);
    assert_eq!(pairwise_outcome(&rv, 1, 1).unwrap(), 0.5);
    assert_eq!(pairwise_outcome(&rv, 1, 2).unwrap(), 0.5);
    assert_eq!(pairwise_outcome(&rv, 1, 0).unwrap(), 1.0);
    assert_eq!(pairwise_outcome(&rv, 0, 2).unwrap(), 0.0);
    assert!(pairwise_outcome(&rv, 0, 3).is_err());
}

#[test]
fn reward_table_validation() {
    assert!(RewardModel::from_pairs([(0, 1.5)], 1.0).is_err());
    assert!(RewardModel::from_pairs([(0, -0.1)], 1.0).is_err());
    assert!(RewardModel::from_pairs([(0, 0.1)], 0.0).is_err());
    let json = r#"{"r_max": 2.0, "values": {"0": 0.5, "7": 2.0}}"#;
    let m: RewardModel = serde_json::from_str(json).unwrap();
    assert_eq!(m.get(7).unwrap(), 2.0);
    let back: RewardModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn win_rate_examples() {
    let sep = make_separation(2.0, 2.0, 0.75, 0.01).unwrap();
    // δ_C under r* against ref: 1 − (α − ε)/2 with α = 0.2
    let v = win_rate(&FiniteDist::point(1), &sep.r_star, &sep.reference).unwrap();
    assert!((v - 0.905).abs() < 1e-12);
    assert!((win_rate(&sep.reference, &sep.r_star, &sep.reference).unwrap() - 0.5).abs() < 1e-15);
    // top-quantile policy with tail mass p → 1 − p/2
    let x = d(&[0.1, 0.2, 0.3, 0.15, 0.25]);
    let rv = r(&[0.1, 0.2, 0.3, 0.4, 0.5]);
    for (m, p) in [(4.0, 0.25), (2.5, 0.4), (1.0, 1.0)] {
        let pol = top_quantile_policy(&x, &rv, m).unwrap().dist;
        assert!((win_rate(&pol, &rv, &x).unwrap() - (1.0 - p / 2.0)).abs() < 1e-12);
    }
    let bad = FiniteDist::point(99);
    assert!(win_rate(&bad, &rv, &x).is_err());
}

#[test]
fn exact_report_shape() {
    let x = d(&[0.5, 0.5]);
    let rep = win_rate_exact(&x, &r(&[0.0, 1.0]), &x).unwrap();
    assert_eq!(rep.method, Method::Exact);
    assert!(rep.estimate.is_none());
    assert_eq!(WinRateReport::CSV_HEADER, "method,value,half_width,trials,seed");
    assert!(rep.csv_row().starts_with("exact,0.5,"));
}

#[test]
fn evaluators_agree_on_large_support() {
    let mut g = Rng::new(8, 8);
    let n = 5000;
    let x = random::dist(&mut g, n, 0.1).unwrap();
    let p = random::dominated(&mut g, &x).unwrap();
    let rv = random::reward(&mut g, n, 700).unwrap();
    let a = win_rate_double_sum(&p, &rv, &x).unwrap();
    let b = win_rate_mid_cdf(&p, &rv, &x).unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    assert_eq!(win_rate(&p, &rv, &x).unwrap(), b);
}

#[test]
fn win_rate_mc_examples() {
    let g = 1u64 << 12;
    let x = FiniteDist::uniform(g as usize).unwrap();
    let rv = RewardModel::from_pairs((0..g).map(|i| (i, i as f64 / g as f64)), 1.0).unwrap();
    let inst = bonlab::Instance::new("grid", x.clone(), rv.clone(), rv).unwrap();
    let rng = Rng::new(12, 0);
    let one = analysis::win_rate_mc(SelectorSpec::Bon { n: 1 }, &inst, RewardChoice::RHat, &x, 1_000_000, &rng, 0.95)
        .unwrap();
    let est = one.estimate.clone().unwrap();
    assert_eq!(one.method, Method::MonteCarlo);
    assert_eq!(one.value, est.mean);
    assert!(est.half_width < 0.002);
    assert!(est.contains(0.5), "{est:?}");
    let em = analysis::win_rate_mc(
        SelectorSpec::EmBon { m: 4.0, n: 8 },
        &inst,
        RewardChoice::RHat,
        &x,
        1_000_000,
        &rng.derive(1),
        0.95,
    )
    .unwrap();
    assert!(em.estimate.as_ref().unwrap().contains(1.0 - 3.0 / 18.0));
    assert!(em.csv_row().starts_with("monte-carlo,"));
    let err = analysis::win_rate_mc(SelectorSpec::Bon { n: 1 }, &inst, RewardChoice::RHat, &x, 0, &rng, 0.95);
    assert!(err.is_err());
    let no_target = analysis::win_rate_mc(
        SelectorSpec::Rejection { m: 2.0, n: 3 },
        &inst,
        RewardChoice::RHat,
        &x,
        10,
        &rng,
        0.95,
    );
    assert!(matches!(no_target, Err(bonlab::Error::Config(_))));
}

#[test]
fn pairwise_error_examples() {
    let sep = make_separation(2.0, 2.0, 0.75, 0.01).unwrap();
    let e = pairwise_error_exact(&sep.r_hat, &sep.r_star, &sep.reference).unwrap();
    assert!((e - 0.0198).abs() < 1e-12);
    assert_eq!(pairwise_error_exact(&sep.r_star, &sep.r_star, &sep.reference).unwrap(), 0.0);
    let s = scale_gap_default(3.0).unwrap();
    assert_eq!(pairwise_error_exact(&s.r_hat, &s.r_star, &s.reference).unwrap(), 0.0);
}

#[test]
fn mse_examples() {
    let s = scale_gap_default(3.0).unwrap();
    assert!((mse_error(&s.r_hat, &s.r_star, &s.reference).unwrap() - 2.0).abs() < 1e-15);
    assert_eq!(mse_error(&s.r_star, &s.r_star, &s.reference).unwrap(), 0.0);
    let a2 = make_mse_small_pw_large(0.5, 1.0, 0.1, 50).unwrap();
    assert!((mse_error(&a2.r_hat, &a2.r_star, &a2.reference).unwrap() - 0.01).abs() < 1e-15);
}

fn transform(rv: &RewardModel) -> RewardModel {
    rv.map(60.0, |x| (4.0 * x).exp() + x).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn win_rate_properties(seed in any::<u64>(), n in 1usize..10, levels in 2usize..6) {
        let mut g = Rng::new(seed, 0);
        let x = random::dist(&mut g, n, 0.2).unwrap();
        let p = random::dist(&mut g, n, 0.2).unwrap();
        let rv = random::reward(&mut g, n, levels).unwrap();
        let w = win_rate(&p, &rv, &x).unwrap();
        prop_assert!((0.0..=1.0).contains(&w));
        prop_assert!((win_rate(&p, &rv, &p).unwrap() - 0.5).abs() < 1e-15);
        prop_assert!((win_rate(&p, &transform(&rv), &x).unwrap() - w).abs() < 1e-15);
        // mid-CDF identity
        prop_assert!((win_rate_mid_cdf(&p, &rv, &x).unwrap() - win_rate_double_sum(&p, &rv, &x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn pairwise_error_properties(seed in any::<u64>(), n in 1usize..10, levels in 2usize..5) {
        let mut g = Rng::new(seed, 1);
        let x = random::dist(&mut g, n, 0.2).unwrap();
        let a = random::reward(&mut g, n, levels).unwrap();
        let b = random::reward(&mut g, n, levels).unwrap();
        let e = pairwise_error_exact(&a, &b, &x).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        prop_assert_eq!(e.to_bits(), pairwise_error_exact(&b, &a, &x).unwrap().to_bits());
        prop_assert!((pairwise_error_exact(&transform(&a), &b, &x).unwrap() - e).abs() < 1e-15);
        // zero iff identical weak orders on the support
        let supp: Vec<u64> = x.iter().filter(|&(_, p)| p > 0.0).map(|(i, _)| i).collect();
        let same = supp.iter().all(|&i| supp.iter().all(|&j| {
            pairwise_outcome(&a, i, j).unwrap() == pairwise_outcome(&b, i, j).unwrap()
        }));
        prop_assert_eq!(e == 0.0, same);
    }
}

/// `|R^{r*}(π) − R^{r̂}(π)| ≤ M·ε_pw + E_M(π‖ref)` on 1000 random draws.
#[test]
fn transfer_against_ref() {
    let mut g = Rng::new(2718, 0);
    for i in 0..1000 {
        let n = 2 + g.below(8);
        let x = random::dist(&mut g, n, 0.15).unwrap();
        let p = random::dominated(&mut g, &x).unwrap();
        let (la, lb) = (2 + g.below(5), 2 + g.below(5));
        let rh = random::reward(&mut g, n, la).unwrap();
        let rs = random::reward(&mut g, n, lb).unwrap();
        let m = 1.0 + 9.0 * g.uniform();
        let lhs = (win_rate(&p, &rs, &x).unwrap() - win_rate(&p, &rh, &x).unwrap()).abs();
        let rhs = m * pairwise_error_exact(&rh, &rs, &x).unwrap() + em_divergence(&p, &x, m).unwrap();
        assert!(lhs <= rhs + 1e-12, "draw {i}: {lhs} > {rhs}");
    }
}

/// `|R_q^{r*}(π) − R_q^{r̂}(π)| ≤ L·(M·ε_pw + E_M(π‖ref))` with `L = max dq/dref`.
#[test]
fn transfer_against_q() {
    let mut g = Rng::new(3141, 0);
    for i in 0..1000 {
        let n = 2 + g.below(8);
        let x = random::dist(&mut g, n, 0.15).unwrap();
        let p = random::dominated(&mut g, &x).unwrap();
        let q = random::dominated(&mut g, &x).unwrap();
        let l = density_ratio(&q, &x).unwrap().max();
        let (la, lb) = (2 + g.below(5), 2 + g.below(5));
        let rh = random::reward(&mut g, n, la).unwrap();
        let rs = random::reward(&mut g, n, lb).unwrap();
        let m = 1.0 + 9.0 * g.uniform();
        let lhs = (win_rate(&p, &rs, &q).unwrap() - win_rate(&p, &rh, &q).unwrap()).abs();
        let rhs = l * (m * pairwise_error_exact(&rh, &rs, &x).unwrap() + em_divergence(&p, &x, m).unwrap());
        assert!(lhs <= rhs + 1e-12, "draw {i}: {lhs} > {rhs}");
    }
}
