//! Closed-form moment bound curves and the auxiliary identities and
//! inequalities they rest on.
//!
//! The theorems only assert that suitable constants exist, so every curve
//! carries its constants explicitly; the checks in [`series`] and
//! [`integrals`] fit constants on grids and count violations.

pub mod integrals;
pub mod series;

pub use integrals::{
    kernel_integral_check_lm2, lambda_cells, lm2_integral, timsc_check, timsc_constant, timsc_integral, Lm2Report,
    TimscReport,
};
pub use series::{
    gronwall_curve, ml_bounds_check, ml_series, simplex_integral, simplex_integral_oracle, stirling_lambda,
    stirling_ratio, verify_on, GronwallFit, MlBoundsReport, StirlingReport,
};

use serde::Serialize;

use crate::covariance::{eta, kappa, TemporalKernel};
use crate::error::{Error, Result};

/// Existential constants of one two-sided bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub big_c1: f64,
    pub big_c2: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        BoundConstants { c1: 1.0, c2: 1.0, big_c1: 1.0, big_c2: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundParams {
    pub alpha: f64,
    pub beta: f64,
    pub d: usize,
    pub mu1: f64,
    pub p: f64,
    pub xi: f64,
    pub delta: f64,
    /// Moment inequality constant; defaults to `2 sqrt(p)`.
    pub z_p: f64,
    pub l_sigma: f64,
    pub big_l_sigma: f64,
    pub hurst: Option<f64>,
    pub constants: BoundConstants,
}

impl BoundParams {
    /// Unit constants, `delta = 0.1`, `z_p = 2 sqrt(p)` and `sigma = identity`.
    pub fn new(alpha: f64, beta: f64, d: usize, mu1: f64, p: f64, xi: f64) -> Result<Self> {
        let out = BoundParams {
            alpha,
            beta,
            d,
            mu1,
            p,
            xi,
            delta: 0.1,
            z_p: 2.0 * p.sqrt(),
            l_sigma: 1.0,
            big_l_sigma: 1.0,
            hurst: None,
            constants: BoundConstants::default(),
        };
        out.validate()?;
        Ok(out)
    }

    pub fn with_hurst(mut self, hurst: f64) -> Result<Self> {
        self.hurst = Some(hurst);
        self.validate()?;
        Ok(self)
    }

    pub fn with_constants(mut self, constants: BoundConstants) -> Result<Self> {
        self.constants = constants;
        self.validate()?;
        Ok(self)
    }

    pub fn with_xi(&self, xi: f64) -> Result<Self> {
        let mut out = self.clone();
        out.xi = xi;
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d as f64;
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 2], got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < self.alpha.min(d)) {
            return Err(Error::Domain(format!("need 0 < beta < min(alpha, d), got beta={}", self.beta)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.p >= 2.0) {
            return Err(Error::Domain(format!("moment order must be at least 2, got {}", self.p)));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::Domain(format!("noise level must be finite and nonnegative, got {}", self.xi)));
        }
        if let Some(h) = self.hurst {
            if !(h > 0.5 && h < 1.0) {
                return Err(Error::Domain(format!("hurst index must lie in (1/2, 1), got {h}")));
            }
        }
        let c = &self.constants;
        let positive = [self.mu1, self.z_p, self.l_sigma, self.big_l_sigma, c.c1, c.c2, c.big_c1, c.big_c2];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain("mu1, z_p, the sigma bounds and all constants must be positive".into()));
        }
        Ok(())
    }

    /// `2 alpha / (alpha - beta)`.
    pub fn xi_power(&self) -> f64 {
        2.0 * self.alpha / (self.alpha - self.beta)
    }

    /// `alpha / (alpha - beta)`.
    fn half_power(&self) -> f64 {
        self.alpha / (self.alpha - self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BoundForm {
    SpaceWhite,
    TimeColored(TemporalKernel),
    Fbm { hurst: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCurve {
    pub form: BoundForm,
    pub params: BoundParams,
}

pub fn thm1_curve(params: &BoundParams) -> Result<BoundCurve> {
    params.validate()?;
    Ok(BoundCurve { form: BoundForm::SpaceWhite, params: params.clone() })
}

pub fn thm2_curve(params: &BoundParams, temporal: &TemporalKernel) -> Result<BoundCurve> {
    params.validate()?;
    if temporal.hurst().is_none() {
        return Err(Error::Config("the time-colored bound needs a locally integrable temporal kernel".into()));
    }
    Ok(BoundCurve { form: BoundForm::TimeColored(*temporal), params: params.clone() })
}

pub fn cor3_curve(params: &BoundParams) -> Result<BoundCurve> {
    params.validate()?;
    let hurst = params.hurst.ok_or_else(|| Error::Config("the fbm bound needs a hurst index".into()))?;
    Ok(BoundCurve { form: BoundForm::Fbm { hurst }, params: params.clone() })
}

/// `(2 H alpha - beta) / (alpha - beta)`.
pub fn rho_exponent(alpha: f64, beta: f64, hurst: f64) -> f64 {
    (2.0 * hurst * alpha - beta) / (alpha - beta)
}

/// Noise level at which the lower exponent of the white-in-time bound
/// changes sign.
pub fn thm1_threshold(params: &BoundParams) -> f64 {
    (params.mu1 / params.constants.c2).powf(1.0 / params.xi_power()) / params.l_sigma
}

impl BoundCurve {
    /// Growth rate of `log lower(t) / p` for the white-in-time bound.
    pub fn thm1_lower_rate(&self) -> f64 {
        let q = &self.params;
        q.constants.c2 * (q.xi * q.l_sigma).powf(q.xi_power()) - q.mu1
    }

    pub fn log_lower(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let q = &self.params;
        let c = &q.constants;
        let g = q.xi.powf(q.xi_power());
        Ok(match &self.form {
            BoundForm::SpaceWhite => q.p * c.c1.ln() + q.p * t * self.thm1_lower_rate(),
            BoundForm::TimeColored(temporal) => {
                let e = eta(temporal, t)?;
                q.p * c.c1.ln() + q.p * t * (c.c2 * e.powf(q.half_power()) * g - q.mu1)
            }
            BoundForm::Fbm { hurst } => {
                let rho = rho_exponent(q.alpha, q.beta, *hurst);
                q.p * c.c1.ln() + c.c2 * q.p * (t.powf(rho) * g - q.mu1 * t)
            }
        })
    }

    pub fn log_upper(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let q = &self.params;
        let c = &q.constants;
        let g = q.xi.powf(q.xi_power());
        let decay = (1.0 - q.delta) * q.mu1;
        Ok(match &self.form {
            BoundForm::SpaceWhite => {
                let noise = (q.xi * q.big_l_sigma * q.z_p).powf(q.xi_power());
                q.p * c.big_c1.ln() + q.p * t * (c.big_c2 * noise - decay)
            }
            BoundForm::TimeColored(temporal) => {
                let k = kappa(temporal, t)?;
                let gain = c.big_c2 * ((q.p - 1.0) * k).powf(q.half_power()) * g;
                q.p * c.big_c1.ln() + q.p * t * (gain - decay)
            }
            BoundForm::Fbm { hurst } => {
                let rho = rho_exponent(q.alpha, q.beta, *hurst);
                let gain = (q.p - 1.0).powf(q.half_power()) * t.powf(rho) * g;
                q.p * c.big_c1.ln() + c.big_c2 * q.p * (gain - (q.mu1 - q.delta) * t)
            }
        })
    }

    pub fn lower(&self, t: f64) -> Result<f64> {
        Ok(self.log_lower(t)?.exp())
    }

    pub fn upper(&self, t: f64) -> Result<f64> {
        Ok(self.log_upper(t)?.exp())
    }

    /// `(t, lower, upper)` rows.
    pub fn sample(&self, times: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
        times.iter().map(|&t| Ok((t, self.lower(t)?, self.upper(t)?))).collect()
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("bound curves need t > 0, got {t}")))
    }
}
