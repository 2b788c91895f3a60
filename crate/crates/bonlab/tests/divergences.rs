use std::sync::Arc;

use bonlab::divergences::*;
use bonlab::instances::{make_impossibility, make_skyline};
use bonlab::{density_ratio, random, FiniteDist, Rng};

fn d(p: &[f64]) -> FiniteDist {
    FiniteDist::new((0..p.len() as u64).collect(), p.to_vec()).unwrap()
}

fn kinds() -> Vec<FDivSpec> {
    vec![FDivSpec::ChiSquare, FDivSpec::Kl, FDivSpec::Tv]
}

#[test]
fn em_examples() {
    let x = d(&[0.2, 0.3, 0.5]);
    for m in [1.0, 2.0, 10.0] {
        assert_eq!(em_divergence(&x, &x, m).unwrap(), 0.0);
    }
    let sky = make_skyline(8.0, 0.05, 100).unwrap();
    let pi = sky.pi_star.as_ref().unwrap();
    assert!((em_divergence(pi, &sky.reference, 2.0).unwrap() - 0.3).abs() < 1e-12);
    let imp = make_impossibility(4.0, 0.05, 1.0, 100).unwrap();
    let v = em_divergence(imp.pi_star.as_ref().unwrap(), &imp.reference, 4.0).unwrap();
    assert!((v - 0.2).abs() < 1e-12);
    assert!(em_divergence(&d(&[0.0, 1.0]), &d(&[1.0, 0.0]), 2.0).is_err());
}

#[test]
fn coverage_examples() {
    let x = d(&[0.2, 0.3, 0.5]);
    assert_eq!(coverage(&x, &x, 2.0).unwrap(), 0.0);
    let sky = make_skyline(8.0, 0.05, 100).unwrap();
    let pi = sky.pi_star.as_ref().unwrap();
    for m in [1.0, 2.0, 5.0, 8.0] {
        assert!((coverage(pi, &sky.reference, m).unwrap() - 0.4).abs() < 1e-12, "m={m}");
    }
}

#[test]
fn f_divergence_examples() {
    let a = d(&[0.75, 0.25]);
    let b = d(&[0.5, 0.5]);
    assert!((f_divergence(&a, &b, &FDivSpec::ChiSquare).unwrap() - 0.25).abs() < 1e-15);
    assert!((chi_square(&a, &b).unwrap() - 0.25).abs() < 1e-15);
    let kl = 0.75 * (1.5f64).ln() + 0.25 * (0.5f64).ln();
    assert!((f_divergence(&a, &b, &FDivSpec::Kl).unwrap() - kl).abs() < 1e-15);
    for s in kinds() {
        assert!(f_divergence(&b, &b, &s).unwrap().abs() < 1e-15);
    }
    assert!(f_divergence(&d(&[1.0, 0.0]), &b, &FDivSpec::Kl).is_err());
    let mut g = Rng::new(4, 4);
    for _ in 0..200 {
        let x = random::dist(&mut g, 6, 0.2).unwrap();
        let y = random::dominated(&mut g, &x).unwrap();
        let l1: f64 = x.probs().iter().zip(y.probs()).map(|(p, q)| (p - q).abs()).sum();
        assert!((f_divergence(&y, &x, &FDivSpec::Tv).unwrap() - 0.5 * l1).abs() < 1e-12);
        assert!((total_variation(&x, &y) - 0.5 * l1).abs() < 1e-12);
    }
}

struct Hellinger;
impl Generator for Hellinger {
    fn value(&self, t: f64) -> f64 {
        (t.sqrt() - 1.0).powi(2)
    }
    fn right_derivative(&self, t: f64) -> f64 {
        1.0 - 1.0 / t.sqrt()
    }
}

struct Concave;
impl Generator for Concave {
    fn value(&self, t: f64) -> f64 {
        -(t - 1.0) * (t - 1.0)
    }
    fn right_derivative(&self, t: f64) -> f64 {
        -2.0 * (t - 1.0)
    }
}

struct Shifted;
impl Generator for Shifted {
    fn value(&self, t: f64) -> f64 {
        (t - 1.0) * (t - 1.0) + 0.1
    }
    fn right_derivative(&self, t: f64) -> f64 {
        2.0 * (t - 1.0)
    }
}

#[test]
fn custom_generators_are_screened() {
    let h = FDivSpec::custom(Arc::new(Hellinger)).unwrap();
    assert_eq!(h.name(), "custom");
    let sky = make_skyline(8.0, 0.05, 100).unwrap();
    let rep = em_fdiv_bound_check(sky.pi_star.as_ref().unwrap(), &sky.reference, &h, 4.0).unwrap();
    assert!(rep.holds);
    assert!(FDivSpec::custom(Arc::new(Concave)).is_err());
    assert!(FDivSpec::custom(Arc::new(Shifted)).is_err());
}

#[test]
fn bound_check_examples() {
    let x = d(&[0.2, 0.3, 0.5]);
    let rep = em_fdiv_bound_check(&x, &x, &FDivSpec::ChiSquare, 2.0).unwrap();
    assert_eq!((rep.lhs, rep.rhs, rep.holds), (0.0, 0.0, true));
    let sky = make_skyline(8.0, 0.05, 100).unwrap();
    let rep = em_fdiv_bound_check(sky.pi_star.as_ref().unwrap(), &sky.reference, &FDivSpec::ChiSquare, 2.0).unwrap();
    assert!(rep.holds && rep.lhs < rep.rhs, "{rep:?}");
    assert!(em_fdiv_bound_check(&x, &x, &FDivSpec::ChiSquare, 1.0).is_err());
}

#[test]
fn projection_examples() {
    let x = d(&[0.2, 0.3, 0.5]);
    let t = d(&[0.3, 0.3, 0.4]);
    let p = tv_projection(&t, &x, 2.0).unwrap();
    assert_eq!(p.projected, t);
    assert_eq!(p.tv_to_target, 0.0);
    let sky = make_skyline(8.0, 0.05, 100).unwrap();
    let p = tv_projection(sky.pi_star.as_ref().unwrap(), &sky.reference, 2.0).unwrap();
    assert!((p.tv_to_target - 0.3).abs() < 1e-12);
    // cap 1: the base itself, at distance E_1
    let y = d(&[0.6, 0.3, 0.1]);
    let p = tv_projection(&y, &x, 1.0).unwrap();
    assert!(p.projected.tv(&x) < 1e-15);
    assert!((p.tv_to_target - em_divergence(&y, &x, 1.0).unwrap()).abs() < 1e-15);
    assert!(tv_projection(&y, &x, 0.5).is_err());
}

/// E_M monotone and convex on a grid, coverage above it, the f-divergence
/// bound and projection postconditions, over 1000 random pairs.
#[test]
fn randomized_divergence_suite() {
    let mut g = Rng::new(1618, 0);
    let grid: Vec<f64> = (0..=80).map(|i| i as f64 * 0.25).collect();
    for draw in 0..1000 {
        let n = 2 + g.below(10);
        let base = random::dist(&mut g, n, 0.2).unwrap();
        let target = random::dominated(&mut g, &base).unwrap();
        let e: Vec<f64> = grid.iter().map(|&m| em_divergence(&target, &base, m).unwrap()).collect();
        assert!((e[0] - 1.0).abs() < 1e-15);
        for w in e.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "draw {draw}: not nonincreasing");
        }
        for w in e.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-12, "draw {draw}: not convex");
        }
        for (&m, &em) in grid.iter().zip(&e) {
            assert!(em <= coverage(&target, &base, m).unwrap() + 1e-12);
        }
        let m = 1.0 + 15.0 * g.uniform();
        for s in kinds() {
            let rep = em_fdiv_bound_check(&target, &base, &s, m).unwrap();
            assert!(rep.holds, "draw {draw} {}: {rep:?}", s.name());
        }
        let p = tv_projection(&target, &base, m).unwrap();
        assert!((p.tv_to_target - em_divergence(&target, &base, m).unwrap()).abs() < 1e-12);
        assert!(density_ratio(&p.projected, &base).unwrap().max() <= m + 1e-12);
    }
}

/// Any policy with ratio ≤ M is at least E_M away from the target.
#[test]
fn capped_policies_are_far_from_target() {
    let mut g = Rng::new(99, 0);
    for draw in 0..1000 {
        let n = 2 + g.below(10);
        let base = random::dist(&mut g, n, 0.1).unwrap();
        let target = random::dominated(&mut g, &base).unwrap();
        let m = 1.0 + 5.0 * g.uniform();
        // random policy under the cap: mix base with a random capped shape
        let raw = random::dominated(&mut g, &base).unwrap();
        let w = density_ratio(&raw, &base).unwrap();
        let shrink = (m - 1.0) / (w.max() - 1.0).max(m - 1.0);
        let pol = FiniteDist::from_weights(
            base.outcomes().to_vec(),
            base.probs().iter().zip(raw.probs()).map(|(b, r)| b + shrink * (r - b)).collect(),
        )
        .unwrap();
        assert!(density_ratio(&pol, &base).unwrap().max() <= m + 1e-12);
        let em = em_divergence(&target, &base, m).unwrap();
        assert!(pol.tv(&target) >= em - 1e-12, "draw {draw}");
    }
}
