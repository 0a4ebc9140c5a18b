use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub log_value: f64,
    pub terms: usize,
}

/// `c e^{-2 mu1 t} sum_{n>=1} (C xi l)^{2n} (t^n / n!)^{(alpha-beta)/alpha}`,
/// summed in log space. Past the peak the term ratio `r` decreases, so the
/// tail is at most `T_{n+1} / (1 - r)`; summation stops once that bound is
/// below `1e-12` of the partial sum.
#[allow(clippy::too_many_arguments)]
pub fn picard_lower_series(
    t: f64,
    xi: f64,
    l_sigma: f64,
    big_c: f64,
    small_c: f64,
    mu1: f64,
    alpha: f64,
    beta: f64,
    n_max: usize,
) -> Result<SeriesValue> {
    if n_max < 1 {
        return Err(Error::Config("need n_max >= 1".into()));
    }
    if !(big_c > 0.0 && small_c > 0.0) {
        return Err(Error::Config("series constants must be positive".into()));
    }
    if !(t > 0.0) || !(beta < alpha) {
        return Err(Error::Domain(format!("need t > 0 and beta < alpha, got t={t}, beta={beta}, alpha={alpha}")));
    }
    let a = big_c * xi * l_sigma;
    if a == 0.0 {
        return Ok(SeriesValue { value: 0.0, log_value: f64::NEG_INFINITY, terms: 0 });
    }
    let theta = (alpha - beta) / alpha;
    let log_a2 = 2.0 * a.ln();
    let log_term = |n: f64| n * log_a2 + theta * (n * t.ln() - ln_gamma(n + 1.0));

    let mut peak = f64::NEG_INFINITY;
    let mut sum = 0.0; // relative to `peak`
    let mut n = 1usize;
    loop {
        let lt = log_term(n as f64);
        if lt > peak {
            sum = sum * (peak - lt).exp() + 1.0;
            peak = lt;
        } else {
            sum += (lt - peak).exp();
        }
        let next = log_term(n as f64 + 1.0);
        let ratio = (next - lt).exp();
        if ratio < 1.0 {
            let log_tail = next - (-ratio).ln_1p();
            if log_tail - peak - sum.ln() < (1e-12f64).ln() {
                break;
            }
        }
        if n >= n_max {
            return Err(Error::NeedMoreTerms { terms: n });
        }
        n += 1;
    }
    let log_value = small_c.ln() - 2.0 * mu1 * t + peak + sum.ln();
    Ok(SeriesValue { value: log_value.exp(), log_value, terms: n })
}
