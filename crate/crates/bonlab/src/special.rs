//! Log-gamma and the regularized incomplete beta function.

use crate::error::{Error, Result};

/// Default convergence tolerance of the continued fraction.
pub const BETA_TOL: f64 = 1e-13;
const MAX_ITER: usize = 2000;
const TINY: f64 = 1e-300;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64, tol: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < tol {
            return Ok(h);
        }
    }
    Err(Error::Numeric(format!(
        "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x}, tol={tol})"
    )))
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_inc(a: f64, b: f64, x: f64) -> Result<f64> {
    beta_inc_tol(a, b, x, BETA_TOL)
}

pub fn beta_inc_tol(a: f64, b: f64, x: f64, tol: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || x.is_nan() {
        return Err(Error::Numeric(format!("incomplete beta undefined for a={a}, b={b}, x={x}")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x >= 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    let front = ln_front.exp();
    let v = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x, tol)? / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x, tol)? / b
    };
    Ok(v.clamp(0.0, 1.0))
}

/// CDF at `x` of a uniform pick among the top `k` of `n` i.i.d. uniforms,
/// i.e. of the equal mixture of `Beta(j, n-j+1)` for `j = n-k+1..=n`.
///
/// Uses `Σ_j P(Bin(n,x) ≥ j) = n·x·I_x(n-k, k) − (n-k)·I_x(n-k+1, k)`,
/// which needs two incomplete-beta calls instead of `k`.
pub fn top_k_rank_cdf(n: u64, k: u64, x: f64, tol: f64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::Numeric(format!("top-k rank law needs 1 ≤ k ≤ n (k={k}, n={n})")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x >= 1.0 {
        return Ok(1.0);
    }
    if k == n {
        return Ok(x);
    }
    if k == 1 {
        return Ok(x.powi(n as i32));
    }
    let (nf, kf) = (n as f64, k as f64);
    let m = nf - kf;
    let s = nf * x * beta_inc_tol(m, kf, x, tol)? - m * beta_inc_tol(m + 1.0, kf, x, tol)?;
    Ok((s / kf).clamp(0.0, 1.0))
}

/// Same law as [`top_k_rank_cdf`], summed term by term over the `k`
/// order statistics. Kept as a cross-check.
pub fn top_k_rank_cdf_direct(n: u64, k: u64, x: f64, tol: f64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::Numeric(format!("top-k rank law needs 1 ≤ k ≤ n (k={k}, n={n})")));
    }
    let mut s = 0.0;
    for j in (n - k + 1)..=n {
        s += beta_inc_tol(j as f64, (n - j + 1) as f64, x, tol)?;
    }
    Ok(s / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_factorials() {
        let mut f = 1.0f64;
        for n in 1..30u32 {
            // Γ(n+1) = n!
            f *= n as f64;
            assert!((ln_gamma(n as f64 + 1.0) - f.ln()).abs() < 1e-12 * f.ln().max(1.0), "n={n}");
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn beta_inc_closed_forms() {
        // I_x(1,1) = x ; I_x(a,1) = x^a ; I_x(1,b) = 1-(1-x)^b
        for &x in &[0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((beta_inc(1.0, 1.0, x).unwrap() - x).abs() < 1e-14);
            assert!((beta_inc(5.0, 1.0, x).unwrap() - x.powi(5)).abs() < 1e-14);
            assert!((beta_inc(1.0, 7.0, x).unwrap() - (1.0 - (1.0 - x).powi(7))).abs() < 1e-14);
        }
        assert!((beta_inc(3.0, 3.0, 0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn beta_inc_is_binomial_tail() {
        // I_x(j, n-j+1) = P(Bin(n,x) >= j)
        let n = 40u64;
        let x: f64 = 0.37;
        let mut pmf = vec![0.0; n as usize + 1];
        let mut c = 1.0f64;
        for i in 0..=n {
            if i > 0 {
                c = c * (n - i + 1) as f64 / i as f64;
            }
            pmf[i as usize] = c * x.powi(i as i32) * (1.0 - x).powi((n - i) as i32);
        }
        for j in 1..=n {
            let tail: f64 = pmf[j as usize..].iter().sum();
            let v = beta_inc(j as f64, (n - j + 1) as f64, x).unwrap();
            assert!((v - tail).abs() < 1e-13, "j={j}: {v} vs {tail}");
        }
    }

    #[test]
    fn top_k_forms_agree() {
        for &(n, k) in &[(8u64, 2u64), (64, 16), (256, 128), (256, 16), (17, 17), (5, 1)] {
            for i in 0..=50 {
                let x = i as f64 / 50.0;
                let a = top_k_rank_cdf(n, k, x, BETA_TOL).unwrap();
                let b = top_k_rank_cdf_direct(n, k, x, BETA_TOL).unwrap();
                // the two-term form cancels terms of size n·x/k
                let scale = (n as f64 * x / k as f64).max(1.0);
                assert!((a - b).abs() < 1e-13 * scale, "n={n} k={k} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn top_1_is_max_law() {
        for &x in &[0.2, 0.9, 0.999] {
            let v = top_k_rank_cdf(10, 1, x, BETA_TOL).unwrap();
            assert!((v - x.powi(10)).abs() < 1e-14);
        }
    }
}
