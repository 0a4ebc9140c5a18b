//! Two-sided envelopes of the Dirichlet heat kernel and fitting of their
//! existential constants on finite grids.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{gaussian_kernel, SpectralBasis};
use crate::error::{Error, Result};

const REL_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EnvelopeKind {
    /// Free Gaussian kernel `exp(-|x-y|^2/4t) / sqrt(4 pi t)`.
    GaussianExact,
    /// Brownian Dirichlet envelope with boundary factor and Gaussian decay.
    RiahAlpha2,
    /// Stable Dirichlet envelope with boundary factors and power-law decay.
    ChenKimStable,
    /// Free stable envelope `min(t^{-1/alpha}, t / |x-y|^{alpha+1})`.
    FreeStable,
}

impl EnvelopeKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvelopeKind::GaussianExact => "gaussian-exact",
            EnvelopeKind::RiahAlpha2 => "riah-alpha2",
            EnvelopeKind::ChenKimStable => "chenkim-stable",
            EnvelopeKind::FreeStable => "free-stable",
        }
    }
}

impl fmt::Display for EnvelopeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvelopeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-exact" => Ok(EnvelopeKind::GaussianExact),
            "riah-alpha2" => Ok(EnvelopeKind::RiahAlpha2),
            "chenkim-stable" => Ok(EnvelopeKind::ChenKimStable),
            "free-stable" => Ok(EnvelopeKind::FreeStable),
            other => Err(Error::Config(format!("unknown envelope kind `{other}`"))),
        }
    }
}

/// Which function stands in for the ground state inside an envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PhiMode {
    /// The basis' first eigenfunction.
    Eigenfunction,
    /// The boundary comparison `(1 - |x|)^{alpha/2}`.
    Comparison,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeConstants {
    pub lower_scale: f64,
    pub upper_scale: f64,
    /// Gaussian decay rate on the lower side (`riah-alpha2` only).
    pub lower_rate: f64,
    /// Gaussian decay rate on the upper side (`riah-alpha2` only).
    pub upper_rate: f64,
}

impl EnvelopeConstants {
    pub fn scales(lower: f64, upper: f64) -> Self {
        EnvelopeConstants { lower_scale: lower, upper_scale: upper, lower_rate: 0.0, upper_rate: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelEnvelope {
    pub kind: EnvelopeKind,
    pub constants: EnvelopeConstants,
    pub phi_mode: PhiMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeFit {
    pub envelope: KernelEnvelope,
    pub points: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    /// Condition number of the log-scale least-squares normal matrix.
    pub condition: f64,
    /// Smallest relative distance to either side of the envelope.
    pub worst_margin: f64,
}

/// One fitted constant for a one-sided bound, with the post-fit recount.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantFit {
    pub constant: f64,
    pub points: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

fn phi1(basis: &SpectralBasis, mode: PhiMode, x: f64) -> f64 {
    match mode {
        PhiMode::Eigenfunction => super::eigenfunction(1, x),
        PhiMode::Comparison => (1.0 - x.abs()).max(0.0).powf(basis.alpha() / 2.0),
    }
}

fn stable_core(alpha: f64, t: f64, r: f64) -> f64 {
    let near = t.powf(-1.0 / alpha);
    if r == 0.0 {
        near
    } else {
        near.min(t / r.powf(alpha + 1.0))
    }
}

/// Envelope shape without multiplicative constant; `rate` only enters the
/// Gaussian factor of `riah-alpha2`.
fn shape(kind: EnvelopeKind, basis: &SpectralBasis, mode: PhiMode, t: f64, x: f64, y: f64, rate: f64) -> f64 {
    let r = (x - y).abs();
    let alpha = basis.alpha();
    let mu1 = basis.mu1();
    match kind {
        EnvelopeKind::GaussianExact => gaussian_kernel(t, r),
        EnvelopeKind::RiahAlpha2 => {
            let boundary = (phi1(basis, mode, x) * phi1(basis, mode, y) / t.min(1.0)).min(1.0);
            boundary * (-mu1 * t).exp() * (-rate * r * r / t).exp() / t.sqrt().min(1.0)
        }
        EnvelopeKind::ChenKimStable => {
            let (px, py) = (phi1(basis, mode, x), phi1(basis, mode, y));
            let body = if t < 1.0 {
                (px / t.sqrt()).min(1.0) * (py / t.sqrt()).min(1.0) * stable_core(alpha, t, r)
            } else {
                px * py
            };
            (-mu1 * t).exp() * body
        }
        EnvelopeKind::FreeStable => stable_core(alpha, t, r),
    }
}

/// Evaluate `(lower, upper)` of an envelope at one point.
pub fn envelope_eval(
    kind: EnvelopeKind,
    basis: &SpectralBasis,
    t: f64,
    x: f64,
    y: f64,
    constants: &EnvelopeConstants,
    mode: PhiMode,
) -> Result<(f64, f64)> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("envelope needs t > 0, got {t}")));
    }
    let c = constants;
    if c.lower_scale < 0.0 || c.upper_scale < 0.0 || c.lower_rate < 0.0 || c.upper_rate < 0.0 {
        return Err(Error::Domain("envelope constants must be nonnegative".into()));
    }
    let lower = c.lower_scale * shape(kind, basis, mode, t, x, y, c.lower_rate);
    let upper = c.upper_scale * shape(kind, basis, mode, t, x, y, c.upper_rate);
    Ok((lower, upper))
}

struct Sample {
    t: f64,
    x: f64,
    y: f64,
    log_p: f64,
}

fn kernel_samples(basis: &SpectralBasis, t_grid: &[f64], xy_grid: &[f64]) -> Result<Vec<Sample>> {
    let modes: Vec<Vec<f64>> = xy_grid.iter().map(|&x| basis.mode_values(x)).collect();
    let mut out = Vec::with_capacity(t_grid.len() * xy_grid.len() * xy_grid.len());
    for &t in t_grid {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("envelope grids must avoid t <= 0, got {t}")));
        }
        for (i, &x) in xy_grid.iter().enumerate() {
            for (j, &y) in xy_grid.iter().enumerate() {
                let p = basis.kernel_from_modes(t, &modes[i], &modes[j]);
                if !(p > 0.0) {
                    return Err(Error::Fit(format!(
                        "kernel value {p:e} at t={t}, x={x}, y={y} is not positive; log-scale fit impossible"
                    )));
                }
                out.push(Sample { t, x, y, log_p: p.ln() });
            }
        }
    }
    Ok(out)
}

/// Fit envelope constants so the spectral kernel lies between the two sides
/// on every grid point.
///
/// The decay rate of `riah-alpha2` comes from ordinary least squares of
/// `log p_D - log shape` against `-|x-y|^2 / t`; the scales are then the
/// extreme residual ratios, and violations are recounted afterwards.
pub fn fit_envelope(
    kind: EnvelopeKind,
    basis: &SpectralBasis,
    t_grid: &[f64],
    xy_grid: &[f64],
    mode: PhiMode,
) -> Result<EnvelopeFit> {
    let samples = kernel_samples(basis, t_grid, xy_grid)?;
    let base: Vec<f64> = samples.iter().map(|s| shape(kind, basis, mode, s.t, s.x, s.y, 0.0).ln()).collect();
    if base.iter().any(|b| !b.is_finite()) {
        return Err(Error::Fit(format!("{kind} shape vanishes on the grid")));
    }

    let (rate, condition) = if kind == EnvelopeKind::RiahAlpha2 {
        let feats: Vec<f64> = samples.iter().map(|s| -(s.x - s.y).powi(2) / s.t).collect();
        let resid: Vec<f64> = samples.iter().zip(&base).map(|(s, b)| s.log_p - b).collect();
        let n = feats.len() as f64;
        let sq: f64 = feats.iter().sum();
        let sqq: f64 = feats.iter().map(|q| q * q).sum();
        let sz: f64 = resid.iter().sum();
        let sqz: f64 = feats.iter().zip(&resid).map(|(q, z)| q * z).sum();
        let det = n * sqq - sq * sq;
        let tr = n + sqq;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let (lmax, lmin) = (tr / 2.0 + disc, tr / 2.0 - disc);
        let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
        if !(det > 0.0) {
            return Err(Error::Fit("degenerate design: all separations equal".into()));
        }
        let slope = (n * sqz - sq * sz) / det;
        if !(slope > 0.0) {
            return Err(Error::Fit(format!("fitted Gaussian rate {slope} is not positive")));
        }
        (slope, condition)
    } else {
        (0.0, 1.0)
    };

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (s, b) in samples.iter().zip(&base) {
        let log_shape = if kind == EnvelopeKind::RiahAlpha2 { b - rate * (s.x - s.y).powi(2) / s.t } else { *b };
        let z = s.log_p - log_shape;
        lo = lo.min(z);
        hi = hi.max(z);
    }
    let constants =
        EnvelopeConstants { lower_scale: lo.exp(), upper_scale: hi.exp(), lower_rate: rate, upper_rate: rate };
    if !(constants.lower_scale > 0.0 && constants.upper_scale.is_finite()) {
        return Err(Error::Fit(format!("{kind}: fitted constants {constants:?} not finite and positive")));
    }

    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for s in &samples {
        let (l, u) = envelope_eval(kind, basis, s.t, s.x, s.y, &constants, mode)?;
        let p = s.log_p.exp();
        if p < l * (1.0 - REL_SLACK) || p > u * (1.0 + REL_SLACK) {
            violations += 1;
        }
        worst = worst.min(p / l - 1.0).min(1.0 - p / u);
    }
    Ok(EnvelopeFit {
        envelope: KernelEnvelope { kind, constants, phi_mode: mode },
        points: samples.len(),
        violations,
        violation_fraction: violations as f64 / samples.len() as f64,
        condition,
        worst_margin: worst,
    })
}

fn in_shrunk(x: f64, eps: f64) -> bool {
    x.abs() < 1.0 - eps
}

fn lower_constant(values: &[(f64, f64)]) -> Result<ConstantFit> {
    // values: (observed, shape) pairs; bound is c * shape <= observed
    if values.is_empty() {
        return Err(Error::Fit("no eligible grid points".into()));
    }
    let c = values.iter().map(|(v, s)| v / s).fold(f64::INFINITY, f64::min);
    if !(c > 0.0) {
        return Err(Error::Fit(format!("fitted lower constant {c:e} is not positive")));
    }
    let violations = values.iter().filter(|(v, s)| *v < c * s * (1.0 - REL_SLACK)).count();
    let worst = values.iter().map(|(v, s)| v / (c * s) - 1.0).fold(f64::INFINITY, f64::min);
    Ok(ConstantFit { constant: c, points: values.len(), violations, worst_margin: worst })
}

pub(crate) fn upper_constant(values: &[(f64, f64)]) -> Result<ConstantFit> {
    if values.is_empty() {
        return Err(Error::Fit("no eligible grid points".into()));
    }
    let c = values.iter().map(|(v, s)| v / s).fold(f64::NEG_INFINITY, f64::max);
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Fit(format!("fitted upper constant {c:e} is not finite and positive")));
    }
    let violations = values.iter().filter(|(v, s)| *v > c * s * (1.0 + REL_SLACK)).count();
    let worst = values.iter().map(|(v, s)| 1.0 - v / (c * s)).fold(f64::INFINITY, f64::min);
    Ok(ConstantFit { constant: c, points: values.len(), violations, worst_margin: worst })
}

/// Near-diagonal lower bound `p_D(t,x,y) >= c t^{-1/alpha} e^{-mu_1 t}` for
/// `x, y` in `D_eps` with `|x - y| < t^{1/alpha}`.
pub fn fit_lwbpd(basis: &SpectralBasis, t_grid: &[f64], eps: f64, xy_grid: &[f64]) -> Result<ConstantFit> {
    let pts: Vec<f64> = xy_grid.iter().copied().filter(|&x| in_shrunk(x, eps)).collect();
    let modes: Vec<Vec<f64>> = pts.iter().map(|&x| basis.mode_values(x)).collect();
    let mut values = Vec::new();
    for &t in t_grid {
        let reach = t.powf(1.0 / basis.alpha());
        let shape = t.powf(-1.0 / basis.alpha()) * (-basis.mu1() * t).exp();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                if (pts[i] - pts[j]).abs() < reach {
                    values.push((basis.kernel_from_modes(t, &modes[i], &modes[j]), shape));
                }
            }
        }
    }
    lower_constant(&values)
}

/// `int_{D_eps} p_D(t,x,y) dy >= c_1 e^{-mu_1 t}` for `x` in `D_eps`.
pub fn fit_prop31(basis: &SpectralBasis, t_grid: &[f64], eps: f64, x_grid: &[f64]) -> Result<ConstantFit> {
    let nodes = basis.grid().nodes();
    let h = basis.grid().spacing();
    let mut values = Vec::new();
    for &t in t_grid {
        for &x in x_grid.iter().filter(|&&x| in_shrunk(x, eps)) {
            let row = basis.kernel_row(t, x);
            let mass: f64 = row.iter().zip(nodes).filter(|(_, &y)| in_shrunk(y, eps)).map(|(p, _)| p * h).sum();
            values.push((mass, (-basis.mu1() * t).exp()));
        }
    }
    lower_constant(&values)
}

/// `int_D p_D(t,x,y) dy <= c e^{-mu_1 t}` for `x` in `D`.
pub fn fit_prop32_mass(basis: &SpectralBasis, t_grid: &[f64], x_grid: &[f64]) -> Result<ConstantFit> {
    let mut values = Vec::new();
    for &t in t_grid {
        for &x in x_grid {
            values.push((basis.mass(t, x), (-basis.mu1() * t).exp()));
        }
    }
    upper_constant(&values)
}

/// Smallest `c >= 1` with `phi_1(x) / (1-|x|)^{alpha/2}` in `[1/c, c]` on the
/// basis grid.
pub fn phi1_comparison(basis: &SpectralBasis) -> Result<f64> {
    let mut c: f64 = 1.0;
    for &x in basis.grid().nodes() {
        let ratio = super::eigenfunction(1, x) / (1.0 - x.abs()).powf(basis.alpha() / 2.0);
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::Fit(format!("ground-state ratio {ratio} at x={x}")));
        }
        c = c.max(ratio).max(1.0 / ratio);
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::eigenfunction;

    fn interior(n: usize) -> Vec<f64> {
        (1..n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect()
    }

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!("gaussian".parse::<EnvelopeKind>(), Err(Error::Config(_))));
        assert_eq!("riah-alpha2".parse::<EnvelopeKind>().unwrap(), EnvelopeKind::RiahAlpha2);
    }

    #[test]
    fn zero_lower_constant_always_holds() {
        let b = SpectralBasis::new(2.0, 64, 128).unwrap();
        let c = EnvelopeConstants::scales(0.0, 1.0);
        for &x in &[-0.5, 0.0, 0.7] {
            let (l, _) = envelope_eval(EnvelopeKind::GaussianExact, &b, 0.3, x, 0.1, &c, PhiMode::Eigenfunction).unwrap();
            assert_eq!(l, 0.0);
            assert!(b.heat_kernel(0.3, x, 0.1).unwrap() >= l);
        }
    }

    #[test]
    fn riah_shape_at_unit_time() {
        let b = SpectralBasis::new(2.0, 8, 16).unwrap();
        let c = EnvelopeConstants { lower_scale: 2.0, upper_scale: 3.0, lower_rate: 0.7, upper_rate: 0.1 };
        let (l, u) = envelope_eval(EnvelopeKind::RiahAlpha2, &b, 1.0, 0.0, 0.0, &c, PhiMode::Eigenfunction).unwrap();
        let expect = (eigenfunction(1, 0.0).powi(2)).min(1.0) * (-b.mu1()).exp();
        assert!((l - 2.0 * expect).abs() < 1e-15);
        assert!((u - 3.0 * expect).abs() < 1e-15);
    }

    #[test]
    fn free_stable_far_field() {
        let b = SpectralBasis::new(1.5, 8, 16).unwrap();
        let c = EnvelopeConstants::scales(1.0, 1.0);
        let (l, _) = envelope_eval(EnvelopeKind::FreeStable, &b, 1.0, -0.99, 1.01, &c, PhiMode::Eigenfunction).unwrap();
        assert!((l - 2f64.powf(-2.5)).abs() < 1e-12);
        assert!((l - 0.17678).abs() < 1e-5);
    }

    #[test]
    fn gaussian_fit_has_no_violations() {
        let b = SpectralBasis::new(2.0, 64, 256).unwrap();
        let ts: Vec<f64> = (0..8).map(|i| 0.05 * 40f64.powf(i as f64 / 7.0)).collect();
        let fit = fit_envelope(EnvelopeKind::GaussianExact, &b, &ts, &interior(12), PhiMode::Eigenfunction).unwrap();
        assert_eq!(fit.violations, 0);
        assert!(fit.envelope.constants.lower_scale > 0.0);
        assert!(fit.envelope.constants.upper_scale.is_finite());
        assert!(fit.envelope.constants.lower_scale <= fit.envelope.constants.upper_scale);
        // p_D never exceeds the free kernel
        assert!(fit.envelope.constants.upper_scale <= 1.0 + 1e-9);
    }

    #[test]
    fn riah_fit_positive_rate() {
        let b = SpectralBasis::new(2.0, 64, 256).unwrap();
        let ts = [0.05, 0.1, 0.3, 0.7, 1.5, 2.0];
        let fit = fit_envelope(EnvelopeKind::RiahAlpha2, &b, &ts, &interior(10), PhiMode::Eigenfunction).unwrap();
        assert_eq!(fit.violations, 0);
        assert!(fit.envelope.constants.lower_rate > 0.0);
        assert!(fit.condition.is_finite());
    }

    #[test]
    fn chenkim_fit_for_spectral_power() {
        let b = SpectralBasis::new(1.5, 64, 256).unwrap();
        let ts = [0.05, 0.2, 0.5, 1.0, 2.0];
        let fit = fit_envelope(EnvelopeKind::ChenKimStable, &b, &ts, &interior(10), PhiMode::Eigenfunction).unwrap();
        assert_eq!(fit.violations, 0);
        assert!(fit.envelope.constants.lower_scale > 0.0);
    }

    #[test]
    fn lwbpd_and_prop31_constants_positive() {
        let b = SpectralBasis::new(2.0, 64, 256).unwrap();
        let ts = [0.05, 0.1, 0.25, 0.5, 1.0, 2.0];
        let xs = interior(16);
        let lw = fit_lwbpd(&b, &ts, 0.25, &xs).unwrap();
        assert!(lw.constant > 0.0 && lw.violations == 0);
        let p31 = fit_prop31(&b, &ts, 0.25, &xs).unwrap();
        assert!(p31.constant > 0.0 && p31.violations == 0);
        let p32 = fit_prop32_mass(&b, &ts, &xs).unwrap();
        assert!(p32.violations == 0 && p32.constant.is_finite());
    }

    #[test]
    fn ground_state_comparison_alpha2() {
        let b = SpectralBasis::new(2.0, 8, 256).unwrap();
        let c = phi1_comparison(&b).unwrap();
        assert!(c > 1.0 && c < std::f64::consts::FRAC_PI_2 + 1e-9, "{c}");
    }
}
