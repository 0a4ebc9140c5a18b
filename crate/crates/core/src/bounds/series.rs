use serde::Serialize;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::moments::ols;
use crate::moments::SeriesValue;
use crate::quad;

const REL_SLACK: f64 = 1e-10;

fn check_simplex(n: usize, zeta: f64, a: f64, b: f64) -> Result<()> {
    if !(zeta > -1.0) {
        return Err(Error::Domain(format!("iterated integral diverges for zeta={zeta} <= -1")));
    }
    if n < 1 || !(a >= 0.0 && b > a) {
        return Err(Error::Domain(format!("need n >= 1 and b > a >= 0, got n={n}, a={a}, b={b}")));
    }
    Ok(())
}

/// `int_{a<r_1<...<r_n<b} [(r_2-r_1)...(b-r_n)]^zeta dr`
/// `= Gamma(1+zeta)^n (b-a)^{n(1+zeta)} / Gamma(n(1+zeta)+1)`.
pub fn simplex_integral(n: usize, zeta: f64, a: f64, b: f64) -> Result<f64> {
    check_simplex(n, zeta, a, b)?;
    let nf = n as f64;
    let z = 1.0 + zeta;
    Ok((nf * ln_gamma(z) + nf * z * (b - a).ln() - ln_gamma(nf * z + 1.0)).exp())
}

/// The same iterated integral by nested quadrature (`n <= 3`).
///
/// `F_k(s) = int_0^{s-a} u^zeta F_{k-1}(s-u) du` with `F_0 = 1`, so the
/// singular end of each factor sits at `u = 0`.
pub fn simplex_integral_oracle(n: usize, zeta: f64, a: f64, b: f64) -> Result<f64> {
    check_simplex(n, zeta, a, b)?;
    if n > 3 {
        return Err(Error::Config(format!("the quadrature oracle covers n <= 3, got {n}")));
    }
    let g = (-zeta).max(0.0);
    fn level(k: usize, s: f64, a: f64, zeta: f64, g: f64, tol: f64) -> Result<f64> {
        if k == 0 {
            return Ok(1.0);
        }
        let inner = |u: f64| {
            let rest = level(k - 1, s - u, a, zeta, g, tol).unwrap_or(f64::NAN);
            u.powf(zeta) * rest
        };
        quad::integrate_singular(inner, 0.0, s - a, g, 0.0, tol)
    }
    level(n, b, a, zeta, g, 1e-12)
}

/// `sum_{k >= from_k} x^k / (k!)^nu`, summed in log space until the tail
/// bound `T_{k+1} / (1 - r)` is below `1e-12` of the partial sum.
pub fn ml_series(x: f64, nu: f64, from_k: usize, terms: usize) -> Result<SeriesValue> {
    if !(x > 0.0 && nu > 0.0) {
        return Err(Error::Domain(format!("need x > 0 and nu > 0, got x={x}, nu={nu}")));
    }
    let lx = x.ln();
    let log_term = |k: f64| k * lx - nu * ln_gamma(k + 1.0);
    let mut peak = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut k = from_k;
    let mut used = 0;
    loop {
        let lt = log_term(k as f64);
        if lt > peak {
            sum = sum * (peak - lt).exp() + 1.0;
            peak = lt;
        } else {
            sum += (lt - peak).exp();
        }
        used += 1;
        let next = log_term(k as f64 + 1.0);
        let ratio = (next - lt).exp();
        if ratio < 1.0 && next - (-ratio).ln_1p() - peak - sum.ln() < (1e-12f64).ln() {
            break;
        }
        if used >= terms {
            return Err(Error::NeedMoreTerms { terms: used });
        }
        k += 1;
    }
    let log_value = peak + sum.ln();
    Ok(SeriesValue { value: log_value.exp(), log_value, terms: used })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlBoundsReport {
    pub nu: f64,
    pub from_k: usize,
    /// Upper bound `upper_scale * exp(upper_rate * x^{1/nu})`.
    pub upper_scale: f64,
    pub upper_rate: f64,
    /// Lower bound `lower_scale * exp(lower_rate * x^{1/nu})`.
    pub lower_scale: f64,
    pub lower_rate: f64,
    pub points: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

/// Fit exponential sandwiches in `x^{1/nu}` around the series on `x_grid`
/// and recount violations there.
///
/// The common rate is the least-squares slope of the log series against
/// `x^{1/nu}`; the scales are the extreme residuals.
pub fn ml_bounds_check(x_grid: &[f64], nu: f64, from_k: usize) -> Result<MlBoundsReport> {
    if x_grid.len() < 2 {
        return Err(Error::Fit("need at least two abscissae".into()));
    }
    let logs = |xs: &[f64]| -> Result<Vec<f64>> {
        xs.iter().map(|&x| Ok(ml_series(x, nu, from_k, 1_000_000)?.log_value)).collect()
    };
    let feat: Vec<f64> = x_grid.iter().map(|x| x.powf(1.0 / nu)).collect();
    let ls = logs(x_grid)?;
    let fit = ols(&feat, &ls)?;
    let rate = fit.slope;
    let resid: Vec<f64> = feat.iter().zip(&ls).map(|(q, l)| l - rate * q).collect();
    let lo = resid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = resid.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for r in &resid {
        if *r < lo - REL_SLACK || *r > hi + REL_SLACK {
            violations += 1;
        }
        worst = worst.min(r - lo).min(hi - r);
    }
    Ok(MlBoundsReport {
        nu,
        from_k,
        upper_scale: hi.exp(),
        upper_rate: rate,
        lower_scale: lo.exp(),
        lower_rate: rate,
        points: x_grid.len(),
        violations,
        worst_margin: worst,
    })
}

/// `Gamma(n tau + 1) / (n!)^tau`.
pub fn stirling_ratio(n: usize, tau: f64) -> f64 {
    let nf = n as f64;
    (ln_gamma(nf * tau + 1.0) - tau * ln_gamma(nf + 1.0)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StirlingReport {
    pub tau: f64,
    pub n_max: usize,
    /// Smallest `lambda` with `lambda^{-n} <= C_n <= lambda^n` for `n <= n_max`.
    pub lambda: f64,
    pub worst_n: usize,
    pub violations: usize,
}

pub fn stirling_lambda(tau: f64, n_max: usize) -> Result<StirlingReport> {
    if !(tau > 0.0) || n_max < 1 {
        return Err(Error::Domain(format!("need tau > 0 and n_max >= 1, got {tau}, {n_max}")));
    }
    let logs: Vec<f64> = (1..=n_max).map(|n| stirling_ratio(n, tau).ln()).collect();
    let (worst_n, log_lambda) = logs
        .iter()
        .enumerate()
        .map(|(i, l)| (i + 1, l.abs() / (i + 1) as f64))
        .fold((0, 0.0f64), |acc, v| if v.1 > acc.1 { v } else { acc });
    if !log_lambda.is_finite() {
        return Err(Error::Fit("log ratio is not finite".into()));
    }
    let violations = logs
        .iter()
        .enumerate()
        .filter(|(i, l)| l.abs() > log_lambda * (i + 1) as f64 * (1.0 + REL_SLACK))
        .count();
    Ok(StirlingReport { tau, n_max, lambda: log_lambda.exp().max(1.0), worst_n, violations })
}

/// `c2 exp(c3 (Gamma(rho) kappa)^{1/rho} t)`.
pub fn gronwall_curve(c2: f64, c3: f64, kappa: f64, rho: f64, t: f64) -> f64 {
    c2 * (c3 * (gamma(rho) * kappa).powf(1.0 / rho) * t).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallFit {
    pub c2: f64,
    pub c3: f64,
    pub rate: f64,
    pub points: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

/// Fit `c2`, `c3` so the exponential bound dominates the sampled curve: the
/// rate is the least-squares slope of `log f` (floored at zero), `c2` the
/// largest residual.
pub fn verify_on(times: &[f64], values: &[f64], kappa: f64, rho: f64) -> Result<GronwallFit> {
    if !(rho > 0.0 && kappa > 0.0) {
        return Err(Error::Domain(format!("need rho > 0 and kappa > 0, got {rho}, {kappa}")));
    }
    if times.len() != values.len() || values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("need matching positive samples".into()));
    }
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let rate = ols(times, &logs)?.slope.max(0.0);
    let c2 = times.iter().zip(&logs).map(|(t, l)| l - rate * t).fold(f64::NEG_INFINITY, f64::max).exp();
    let c3 = rate / (gamma(rho) * kappa).powf(1.0 / rho);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for (&t, &v) in times.iter().zip(values) {
        let bound = gronwall_curve(c2, c3, kappa, rho, t);
        if v > bound * (1.0 + REL_SLACK) {
            violations += 1;
        }
        worst = worst.min(1.0 - v / bound);
    }
    Ok(GronwallFit { c2, c3, rate, points: times.len(), violations, worst_margin: worst })
}
