//! E_M-divergence, coverage, f-divergences and the M-capped TV projection.

use std::fmt;
use std::sync::Arc;

use crate::dist::{fsum, DensityRatio, FiniteDist};
use crate::error::{Error, Result};

/// A convex generator `f` with `f(1) = 0`.
pub trait Generator: Send + Sync {
    fn value(&self, t: f64) -> f64;
    fn right_derivative(&self, t: f64) -> f64;
}

#[derive(Clone)]
pub enum FDivSpec {
    /// `f(t) = (t-1)²`
    ChiSquare,
    /// `f(t) = t ln t − t + 1`, natural log, `0 ln 0 = 0`.
    Kl,
    /// `f(t) = |t − 1| / 2`
    Tv,
    Custom(Arc<dyn Generator>),
}

impl fmt::Debug for FDivSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FDivSpec::ChiSquare => "ChiSquare",
            FDivSpec::Kl => "Kl",
            FDivSpec::Tv => "Tv",
            FDivSpec::Custom(_) => "Custom",
        })
    }
}

const SCREEN_POINTS: usize = 64;

impl FDivSpec {
    /// Wraps a user generator after checking `f(1) = 0` and screening
    /// midpoint convexity and the tangent at 1 on a fixed 64-point grid.
    pub fn custom(g: Arc<dyn Generator>) -> Result<Self> {
        let f1 = g.value(1.0);
        if f1.abs() > 1e-12 {
            return Err(Error::param("generator", format!("f(1) = {f1}, expected 0")));
        }
        let grid: Vec<f64> = (0..SCREEN_POINTS)
            .map(|i| 64f64.powf(2.0 * i as f64 / (SCREEN_POINTS - 1) as f64 - 1.0))
            .collect();
        let d1 = g.right_derivative(1.0);
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb, fm) = (g.value(a), g.value(b), g.value(0.5 * (a + b)));
            let slack = 1e-12 * (1.0 + fa.abs() + fb.abs());
            if fm > 0.5 * (fa + fb) + slack {
                return Err(Error::param("generator", format!("midpoint convexity fails on [{a}, {b}]")));
            }
        }
        for &t in &grid {
            if g.value(t) < d1 * (t - 1.0) - 1e-12 * (1.0 + t) {
                return Err(Error::param("generator", format!("lies below its tangent at 1 at t={t}")));
            }
        }
        Ok(FDivSpec::Custom(g))
    }

    pub fn f(&self, t: f64) -> f64 {
        match self {
            FDivSpec::ChiSquare => (t - 1.0) * (t - 1.0),
            FDivSpec::Kl => {
                if t == 0.0 {
                    1.0
                } else {
                    t * t.ln() - t + 1.0
                }
            }
            FDivSpec::Tv => 0.5 * (t - 1.0).abs(),
            FDivSpec::Custom(g) => g.value(t),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FDivSpec::ChiSquare => "chi2",
            FDivSpec::Kl => "kl",
            FDivSpec::Tv => "tv",
            FDivSpec::Custom(_) => "custom",
        }
    }
}

/// Aligned `(base mass, target mass)` pairs over the base support.
fn aligned(target: &FiniteDist, base: &FiniteDist) -> Result<Vec<(f64, f64)>> {
    let ratio = DensityRatio::new(target, base)?;
    Ok(base.probs().iter().copied().zip(ratio.target_masses()).collect())
}

/// `E_base[(w − M)_+]`, evaluated as `Σ (target − M·base)_+`.
pub fn em_divergence(target: &FiniteDist, base: &FiniteDist, m: f64) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(Error::param("m", format!("must be nonnegative, got {m}")));
    }
    let pairs = aligned(target, base)?;
    Ok(fsum(pairs.iter().map(|&(b, t)| (t - m * b).max(0.0))))
}

/// Relative slack when deciding `w ≥ M`; ratios are computed, not authored.
const COVERAGE_SLACK: f64 = 1e-12;

/// `P_target(w ≥ M)`.
pub fn coverage(target: &FiniteDist, base: &FiniteDist, m: f64) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(Error::param("m", format!("must be nonnegative, got {m}")));
    }
    let pairs = aligned(target, base)?;
    let thresh = m * (1.0 - COVERAGE_SLACK);
    Ok(fsum(pairs.iter().filter(|&&(b, t)| b > 0.0 && t / b >= thresh).map(|&(_, t)| t)).min(1.0))
}

/// `E_base[f(w)]`.
pub fn f_divergence(target: &FiniteDist, base: &FiniteDist, spec: &FDivSpec) -> Result<f64> {
    let pairs = aligned(target, base)?;
    if let FDivSpec::Kl = spec {
        if let Some(i) = pairs.iter().position(|&(b, t)| b > 0.0 && t == 0.0) {
            return Err(Error::param(
                "target",
                format!("KL needs the target to cover the base support; outcome {} has no mass", base.outcomes()[i]),
            ));
        }
    }
    let v = fsum(pairs.iter().filter(|&&(b, _)| b > 0.0).map(|&(b, t)| b * spec.f(t / b)));
    Ok(v.max(0.0))
}

pub fn chi_square(target: &FiniteDist, base: &FiniteDist) -> Result<f64> {
    f_divergence(target, base, &FDivSpec::ChiSquare)
}

pub fn total_variation(a: &FiniteDist, b: &FiniteDist) -> f64 {
    a.tv(b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `E_M ≤ M · D_f / f(M)`.
pub fn em_fdiv_bound_check(target: &FiniteDist, base: &FiniteDist, spec: &FDivSpec, m: f64) -> Result<BoundReport> {
    if !(m > 1.0) {
        return Err(Error::param("m", format!("must exceed 1, got {m}")));
    }
    let fm = spec.f(m);
    if !(fm > 0.0) {
        return Err(Error::param("m", format!("bound undefined: f({m}) = {fm}")));
    }
    let lhs = em_divergence(target, base, m)?;
    let rhs = m * f_divergence(target, base, spec)? / fm;
    Ok(BoundReport { lhs, rhs, holds: lhs <= rhs + 1e-12 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionResult {
    pub projected: FiniteDist,
    pub tv_to_target: f64,
    pub cap: f64,
}

/// Clips the ratio at `M` and spreads the clipped excess `E_M` over the
/// slack `(M − w)_+`, proportionally. The result is on the base support.
pub fn tv_projection(target: &FiniteDist, base: &FiniteDist, m: f64) -> Result<ProjectionResult> {
    if !(m >= 1.0) {
        return Err(Error::param("m", format!("cap {m} is below 1; no distribution fits under it")));
    }
    let pairs = aligned(target, base)?;
    let excess = fsum(pairs.iter().map(|&(b, t)| (t - m * b).max(0.0)));
    let slack = fsum(pairs.iter().map(|&(b, t)| (m * b - t).max(0.0)));
    let probs: Vec<f64> = pairs
        .iter()
        .map(|&(b, t)| {
            let clipped = t.min(m * b);
            if excess > 0.0 && slack > 0.0 {
                clipped + excess * (m * b - t).max(0.0) / slack
            } else {
                clipped
            }
        })
        .collect();
    let projected = FiniteDist::new(base.outcomes().to_vec(), probs)?;
    let tv_to_target = projected.tv(target);
    Ok(ProjectionResult { projected, tv_to_target, cap: m })
}
