//! Spatial and temporal correlation kernels of the driving noise.

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad;

/// Value of a covariance kernel at a separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CovValue {
    Pointwise(f64),
    /// The kernel is a Dirac mass and has no pointwise value.
    Distributional,
}

impl CovValue {
    pub fn value(self) -> Option<f64> {
        match self {
            CovValue::Pointwise(v) => Some(v),
            CovValue::Distributional => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpatialKind {
    White,
    Riesz { beta: f64 },
    Bessel { eta: f64 },
    Fractional { hurst: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialKernel {
    pub kind: SpatialKind,
    pub d: usize,
}

impl SpatialKernel {
    pub fn white(d: usize) -> Result<Self> {
        check_dim(d)?;
        Ok(SpatialKernel { kind: SpatialKind::White, d })
    }

    pub fn riesz(beta: f64, d: usize) -> Result<Self> {
        check_dim(d)?;
        if !(beta > 0.0 && beta < d as f64) {
            return Err(Error::Config(format!("riesz exponent must lie in (0, {d}), got {beta}")));
        }
        Ok(SpatialKernel { kind: SpatialKind::Riesz { beta }, d })
    }

    pub fn bessel(eta: f64, d: usize) -> Result<Self> {
        check_dim(d)?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("bessel order must be positive, got {eta}")));
        }
        Ok(SpatialKernel { kind: SpatialKind::Bessel { eta }, d })
    }

    pub fn fractional(hurst: Vec<f64>) -> Result<Self> {
        let d = hurst.len();
        check_dim(d)?;
        if let Some(h) = hurst.iter().find(|&&h| !(h > 0.5 && h < 1.0)) {
            return Err(Error::Config(format!("fractional kernel needs every H in (1/2, 1), got {h}")));
        }
        Ok(SpatialKernel { kind: SpatialKind::Fractional { hurst }, d })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SpatialKind::White => "white",
            SpatialKind::Riesz { .. } => "riesz",
            SpatialKind::Bessel { .. } => "bessel",
            SpatialKind::Fractional { .. } => "fractional",
        }
    }

    pub fn riesz_beta(&self) -> Option<f64> {
        match self.kind {
            SpatialKind::Riesz { beta } => Some(beta),
            _ => None,
        }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TemporalKernel {
    White,
    Fbm { hurst: f64, c_h: f64 },
}

impl TemporalKernel {
    pub fn fbm(hurst: f64) -> Result<Self> {
        if !(hurst > 0.5 && hurst < 1.0) {
            return Err(Error::Config(format!("fbm Hurst index must lie in (1/2, 1), got {hurst}")));
        }
        Ok(TemporalKernel::Fbm { hurst, c_h: hurst * (2.0 * hurst - 1.0) })
    }

    pub fn is_white(&self) -> bool {
        matches!(self, TemporalKernel::White)
    }

    pub fn hurst(&self) -> Option<f64> {
        match *self {
            TemporalKernel::Fbm { hurst, .. } => Some(hurst),
            TemporalKernel::White => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSpec {
    pub xi: f64,
    pub spatial: SpatialKernel,
    pub temporal: TemporalKernel,
}

impl NoiseSpec {
    pub fn new(xi: f64, spatial: SpatialKernel, temporal: TemporalKernel) -> Result<Self> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::Config(format!("noise level must be finite and nonnegative, got {xi}")));
        }
        Ok(NoiseSpec { xi, spatial, temporal })
    }

    /// Check the riesz exponent against an operator of order `alpha`:
    /// `beta < min(alpha, d)`.
    pub fn check_pairing(&self, alpha: f64) -> Result<()> {
        match self.spatial.kind {
            SpatialKind::Riesz { beta } if beta < alpha.min(self.spatial.d as f64) => Ok(()),
            SpatialKind::Riesz { beta } => Err(Error::Assumption(format!(
                "riesz exponent {beta} must be below min(alpha, d) = {}",
                alpha.min(self.spatial.d as f64)
            ))),
            _ => Err(Error::Config(format!(
                "only the riesz spatial kernel can drive a simulation, got {}",
                self.spatial.name()
            ))),
        }
    }

    pub fn with_xi(&self, xi: f64) -> Result<Self> {
        NoiseSpec::new(xi, self.spatial.clone(), self.temporal)
    }
}

/// Pointwise spatial covariance at separation `r` (distance in `d = 1`, or
/// the radial distance for riesz and bessel).
pub fn lambda_eval(spatial: &SpatialKernel, r: f64) -> Result<CovValue> {
    match &spatial.kind {
        SpatialKind::Fractional { hurst } if hurst.len() != 1 => Err(Error::Config(
            "fractional kernel in d > 1 needs a separation vector; use lambda_eval_vec".into(),
        )),
        _ => lambda_eval_vec(spatial, &radial(r, spatial.d)),
    }
}

fn radial(r: f64, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[0] = r;
    v
}

/// Pointwise spatial covariance at a separation vector of length `d`.
pub fn lambda_eval_vec(spatial: &SpatialKernel, x: &[f64]) -> Result<CovValue> {
    if x.len() != spatial.d {
        return Err(Error::Config(format!("separation has {} components, kernel lives in d = {}", x.len(), spatial.d)));
    }
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let singular = || Error::Singularity { kernel: spatial.name().to_string() };
    match &spatial.kind {
        SpatialKind::White => Ok(CovValue::Distributional),
        SpatialKind::Riesz { beta } => {
            if r == 0.0 {
                return Err(singular());
            }
            Ok(CovValue::Pointwise(r.powf(-beta)))
        }
        SpatialKind::Bessel { eta } => {
            let nu = (eta - spatial.d as f64) / 2.0 + 1.0;
            if r == 0.0 {
                return if nu > 0.0 { Ok(CovValue::Pointwise(gamma(nu))) } else { Err(singular()) };
            }
            Ok(CovValue::Pointwise(2.0 * (r / 2.0).powf(nu) * bessel_k(nu, r)?))
        }
        SpatialKind::Fractional { hurst } => {
            let mut v = 1.0;
            for (xi, h) in x.iter().zip(hurst) {
                if *xi == 0.0 {
                    return Err(singular());
                }
                v *= xi.abs().powf(2.0 * h - 2.0);
            }
            Ok(CovValue::Pointwise(v))
        }
    }
}

/// Modified Bessel function of the second kind from
/// `K_nu(r) = int_0^inf exp(-r cosh s) cosh(nu s) ds`.
fn bessel_k(nu: f64, r: f64) -> Result<f64> {
    let top = (745.0 / r).max(1.0).acosh() + 1.0;
    quad::integrate(|s: f64| (-r * s.cosh()).exp() * (nu * s).cosh(), 0.0, top, 1e-14 * (-r).exp().max(1e-300))
}

/// Pointwise temporal covariance at lag `r`.
pub fn gamma_eval(temporal: &TemporalKernel, r: f64) -> Result<CovValue> {
    match *temporal {
        TemporalKernel::White => Ok(CovValue::Distributional),
        TemporalKernel::Fbm { hurst, c_h } => {
            if r == 0.0 {
                return Err(Error::Singularity { kernel: "fbm".into() });
            }
            Ok(CovValue::Pointwise(c_h * r.abs().powf(2.0 * hurst - 2.0)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DalangReport {
    pub holds: bool,
    pub rule: String,
}

/// Closed-form integrability rule of the spectral measure for each kernel
/// family.
pub fn dalang_check(spatial: &SpatialKernel, alpha: f64, d: usize) -> DalangReport {
    let df = d as f64;
    let (holds, rule) = match &spatial.kind {
        SpatialKind::White => (alpha > df, format!("white: alpha > d ({alpha} vs {d})")),
        SpatialKind::Riesz { beta } => (*beta < alpha, format!("riesz: beta < alpha ({beta} vs {alpha})")),
        SpatialKind::Bessel { eta } => (*eta > df - alpha, format!("bessel: eta > d - alpha ({eta} vs {})", df - alpha)),
        SpatialKind::Fractional { hurst } => {
            let s: f64 = hurst.iter().sum();
            (s > df - alpha / 2.0, format!("fractional: sum H > d - alpha/2 ({s} vs {})", df - alpha / 2.0))
        }
    };
    DalangReport { holds, rule }
}

fn fbm_parts(temporal: &TemporalKernel, t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time aggregate needs t >= 0, got {t}")));
    }
    match *temporal {
        TemporalKernel::White => Err(Error::NotLocallyIntegrable("white".into())),
        TemporalKernel::Fbm { hurst, c_h } => Ok((hurst, c_h)),
    }
}

/// `2 int_0^t gamma(r) dr`.
pub fn kappa(temporal: &TemporalKernel, t: f64) -> Result<f64> {
    let (h, c_h) = fbm_parts(temporal, t)?;
    Ok(2.0 * c_h * t.powf(2.0 * h - 1.0) / (2.0 * h - 1.0))
}

/// `int_0^{t/3} gamma(r) dr`.
pub fn eta(temporal: &TemporalKernel, t: f64) -> Result<f64> {
    let (h, c_h) = fbm_parts(temporal, t)?;
    Ok(c_h * (t / 3.0).powf(2.0 * h - 1.0) / (2.0 * h - 1.0))
}
