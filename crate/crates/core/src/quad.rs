//! Thin wrappers around double-exponential quadrature.
//!
//! The underlying rule copes with integrable endpoint singularities, so
//! callers split their range at interior singular points and hand the pieces
//! over here.

use crate::error::{Error, Result};

/// Integrate `f` over `[a, b]`, failing when the reported error estimate
/// exceeds `abs_tol`.
pub fn integrate<F>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    let out = quadrature::double_exponential::integrate(&f, a, b, abs_tol);
    if !out.integral.is_finite() || out.error_estimate > abs_tol.max(1e-300) * 64.0 {
        return Err(Error::Quadrature(format!(
            "[{a}, {b}]: estimate {} with error {:e} (target {:e})",
            out.integral, out.error_estimate, abs_tol
        )));
    }
    Ok(out.integral)
}

/// Same as [`integrate`] but never fails; returns the raw estimate. Used in
/// nested integrals where the inner error is controlled by the outer level.
pub fn integrate_unchecked<F>(f: F, a: f64, b: f64, abs_tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return 0.0;
    }
    quadrature::double_exponential::integrate(f, a, b, abs_tol).integral
}

/// Integrate `f` with algebraic endpoint singularities `(x-a)^{-gamma_a}` and
/// `(b-x)^{-gamma_b}` (exponents in `[0, 1)`; a log singularity is handled
/// well by any exponent near one half).
///
/// Singular points should sit at zero (or be expressed through a distance
/// variable) so that `x - a` is not lost to cancellation.
///
/// Each half interval is mapped through `x = a + (m-a) u^p` with
/// `p = 1/(1-gamma)`, which leaves a bounded integrand for the rule.
pub fn integrate_singular<F>(f: F, a: f64, b: f64, gamma_a: f64, gamma_b: f64, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(0.0..1.0).contains(&gamma_a) || !(0.0..1.0).contains(&gamma_b) {
        return Err(Error::Domain(format!(
            "endpoint exponents must lie in [0, 1), got {gamma_a} and {gamma_b}"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let pa = 1.0 / (1.0 - gamma_a);
    let pb = 1.0 / (1.0 - gamma_b);
    let left = integrate(
        |u: f64| pa * u.powf(pa - 1.0) * (m - a) * f(a + (m - a) * u.powf(pa)),
        0.0,
        1.0,
        abs_tol / 2.0,
    )?;
    let right = integrate(
        |u: f64| pb * u.powf(pb - 1.0) * (b - m) * f(b - (b - m) * u.powf(pb)),
        0.0,
        1.0,
        abs_tol / 2.0,
    )?;
    Ok(left + right)
}

/// Integrate over `[a, b]` split at interior breakpoints where the integrand
/// may blow up like `|x - p|^{-gamma}`.
pub fn integrate_split<F>(f: F, a: f64, b: f64, breaks: &[f64], gamma: f64, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&p| p > a && p < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let pieces = (pts.len() - 1).max(1) as f64;
    let mut total = 0.0;
    for w in pts.windows(2) {
        let ga = if w[0] > a { gamma } else { 0.0 };
        let gb = if w[1] < b { gamma } else { 0.0 };
        total += integrate_singular(&f, w[0], w[1], ga, gb, abs_tol / pieces)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_singularity() {
        let v = integrate_singular(|r: f64| r.powf(-0.5), 0.0, 1.0, 0.5, 0.0, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn strong_singularity() {
        let v = integrate_singular(|x: f64| x.powf(-0.9), 0.0, 1.0, 0.9, 0.0, 1e-10).unwrap();
        assert!((v - 10.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn split_at_interior_kink() {
        let v = integrate_split(|x: f64| x.abs().powf(-0.5), -1.0, 4.0, &[0.0], 0.5, 1e-12).unwrap();
        assert!((v - 6.0).abs() < 1e-9, "{v}");
    }
}
