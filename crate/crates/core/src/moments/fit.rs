use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_se: f64,
    pub points: usize,
}

impl LinearFit {
    /// Half-width of the 95% interval on the slope.
    pub fn slope_ci(&self) -> f64 {
        if self.points < 3 {
            return f64::NAN;
        }
        student_t_quantile(0.975, (self.points - 2) as f64) * self.slope_se
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub ci: f64,
    pub r2: f64,
}

pub fn student_t_quantile(p: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof).map(|d| d.inverse_cdf(p)).unwrap_or(f64::NAN)
}

pub(crate) fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Err(Error::Fit(format!("need at least two paired points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_se = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(LinearFit { slope, intercept, r2, slope_se, points: n })
}

/// Least squares of `log m(t)` against `t` over `window`.
pub fn lyapunov_fit(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<LinearFit> {
    let logs: Vec<f64> = values.iter().map(|v| if *v > 0.0 { v.ln() } else { f64::NAN }).collect();
    lyapunov_fit_logs(times, &logs, window)
}

/// As [`lyapunov_fit`] for moments already given as logarithms.
pub fn lyapunov_fit_logs(times: &[f64], logs: &[f64], window: (f64, f64)) -> Result<LinearFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (&t, &l) in times.iter().zip(logs) {
        if t >= window.0 && t <= window.1 {
            if !l.is_finite() {
                return Err(Error::Fit(format!("nonpositive or unbounded moment at t={t}")));
            }
            x.push(t);
            y.push(l);
        }
    }
    if x.len() < 4 {
        return Err(Error::Fit(format!("only {} points in the window", x.len())));
    }
    ols(&x, &y)
}

/// Least squares of `log v` against `log t`.
pub fn power_law_fit(times: &[f64], values: &[f64]) -> Result<PowerFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if !(t > 0.0 && v > 0.0) {
            return Err(Error::Fit(format!("power law needs positive data, got ({t}, {v})")));
        }
        x.push(t.ln());
        y.push(v.ln());
    }
    if x.len() < 3 {
        return Err(Error::Fit("power law needs at least three points".into()));
    }
    let f = ols(&x, &y)?;
    Ok(PowerFit { exponent: f.slope, ci: f.slope_ci(), r2: f.r2 })
}

/// Exponent of `log m(t)` as a power of `t`.
pub fn rho_fit(times: &[f64], moments: &[f64]) -> Result<PowerFit> {
    let logs: Vec<f64> = moments
        .iter()
        .map(|m| if *m > 0.0 { m.ln() } else { f64::NAN })
        .collect();
    if logs.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Fit("rho fit needs moments above one".into()));
    }
    power_law_fit(times, &logs)
}
