use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::covariance::SpatialKernel;
use crate::error::{Error, Result};
use crate::noise::{space_cov_matrix, NoiseGrid};
use crate::quad;
use crate::spectral::{upper_constant, ConstantFit, SpectralBasis};

/// `int_0^inf f(u) du` for `f ~ u^{-g0}` at zero and `f ~ u^{-(2 - g_inf)}`
/// at infinity; the far half is folded onto `(0, 1]` by `u = 1/s`.
fn half_line<F: Fn(f64) -> f64>(f: F, g0: f64, g_inf: f64, tol: f64) -> Result<f64> {
    let near = quad::integrate_singular(&f, 0.0, 1.0, g0, 0.0, tol / 2.0)?;
    let far = quad::integrate_singular(
        |s: f64| if s == 0.0 { 0.0 } else { f(1.0 / s) / (s * s) },
        0.0,
        1.0,
        g_inf,
        0.0,
        tol / 2.0,
    )?;
    Ok(near + far)
}

/// Half-line integral with a possible kink at `kink > 0`.
fn half_line_kinked<F: Fn(f64) -> f64>(f: F, kink: f64, g0: f64, g_inf: f64, tol: f64) -> Result<f64> {
    if kink > 0.0 {
        let head = quad::integrate_singular(&f, 0.0, kink, g0, 0.0, tol / 2.0)?;
        Ok(head + half_line(|r| f(kink + r), 0.0, g_inf, tol / 2.0)?)
    } else {
        half_line(f, g0, g_inf, tol)
    }
}

/// `int_R e^{-t|v|^alpha} |w - v|^{beta - 1} dv`, split at `v = w`.
pub fn timsc_integral(alpha: f64, beta: f64, t: f64, w: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("need t > 0, got {t}")));
    }
    let tol = 1e-11 * t.powf(-beta / alpha);
    let side = |c: f64| {
        half_line_kinked(
            |u: f64| (-t * (c + u).abs().powf(alpha)).exp() * u.powf(beta - 1.0),
            (-c).max(0.0),
            1.0 - beta,
            0.0,
            tol,
        )
    };
    Ok(side(w)? + side(-w)?)
}

/// `int_R |v|^{beta - 1} / (1 + |w - v|^alpha) dv`.
fn k_integral(alpha: f64, beta: f64, w: f64) -> Result<f64> {
    let w = w.abs();
    let tol = 1e-11;
    let g_inf = (1.0 + beta - alpha).max(0.0);
    let left = half_line(|u: f64| u.powf(beta - 1.0) / (1.0 + (w + u).powf(alpha)), 1.0 - beta, g_inf, tol)?;
    let right_g0 = if w == 0.0 { 1.0 - beta } else { 0.0 };
    let right = half_line(|u: f64| (w + u).powf(beta - 1.0) / (1.0 + u.powf(alpha)), right_g0, g_inf, tol)?;
    let middle = if w > 0.0 {
        quad::integrate_singular(|u: f64| u.powf(beta - 1.0) / (1.0 + (w - u).powf(alpha)), 0.0, w, 1.0 - beta, 0.0, tol)?
    } else {
        0.0
    };
    Ok(left + middle + right)
}

/// `sup_w int_R |v|^{beta-1} / (1 + |w - v|^alpha) dv` over `w_grid`.
pub fn timsc_constant(alpha: f64, beta: f64, w_grid: &[f64]) -> Result<f64> {
    check_timsc(alpha, beta)?;
    w_grid.iter().try_fold(f64::NEG_INFINITY, |acc, &w| Ok(acc.max(k_integral(alpha, beta, w)?)))
}

fn check_timsc(alpha: f64, beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0 && beta < alpha && alpha <= 2.0) {
        return Err(Error::Domain(format!("need 0 < beta < min(alpha, 1), alpha <= 2, got alpha={alpha}, beta={beta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimscReport {
    pub alpha: f64,
    pub beta: f64,
    /// `(t, sup_w t^{beta/alpha} I(t, w))` per time.
    pub sup_per_t: Vec<(f64, f64)>,
    pub sup: f64,
    /// The same supremum with midpoints added to the `w` grid.
    pub refined_sup: f64,
    pub refinement_change: f64,
    /// `max / min - 1` of the per-time suprema.
    pub spread: f64,
    pub even_defect: f64,
    /// `2 Gamma(beta/alpha) / alpha`, the scaled integral at `w = 0`.
    pub origin_value: f64,
    pub k_constant: f64,
    /// Grid points with `t^{beta/alpha} I(t, w) > K`.
    pub violations: usize,
}

pub fn timsc_check(alpha: f64, beta: f64, t_grid: &[f64], w_grid: &[f64]) -> Result<TimscReport> {
    check_timsc(alpha, beta)?;
    if t_grid.is_empty() || w_grid.len() < 2 {
        return Err(Error::Config("need a nonempty time grid and at least two w values".into()));
    }
    let mut sorted = w_grid.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mids: Vec<f64> = sorted.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    let k_constant = timsc_constant(alpha, beta, &sorted)?;

    let mut sup_per_t = Vec::new();
    let mut refined_sup = f64::NEG_INFINITY;
    let mut even_defect: f64 = 0.0;
    let mut violations = 0;
    for &t in t_grid {
        let scale = t.powf(beta / alpha);
        let mut best = f64::NEG_INFINITY;
        for &w in &sorted {
            let v = scale * timsc_integral(alpha, beta, t, w)?;
            let mirrored = scale * timsc_integral(alpha, beta, t, -w)?;
            even_defect = even_defect.max((v - mirrored).abs() / v);
            if v > k_constant {
                violations += 1;
            }
            best = best.max(v);
        }
        let mut refined = best;
        for &w in &mids {
            refined = refined.max(scale * timsc_integral(alpha, beta, t, w)?);
        }
        refined_sup = refined_sup.max(refined);
        sup_per_t.push((t, best));
    }
    let sup = sup_per_t.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let inf = sup_per_t.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(TimscReport {
        alpha,
        beta,
        sup_per_t,
        sup,
        refined_sup,
        refinement_change: (refined_sup - sup).abs() / sup,
        spread: sup / inf - 1.0,
        even_defect,
        origin_value: 2.0 * gamma(beta / alpha) / alpha,
        k_constant,
        violations,
    })
}

/// Cell-averaged riesz covariance on the basis grid.
pub fn lambda_cells(basis: &SpectralBasis, beta: f64) -> Result<DMatrix<f64>> {
    let grid = NoiseGrid::from_grid(basis.grid(), 1.0, 1)?;
    space_cov_matrix(&grid, &SpatialKernel::riesz(beta, 1)?)
}

/// `int int p_D(t,x,y) p_D(s,w,z) Lambda(y-z) dy dz` on the basis grid with
/// the cell-averaged covariance `cells`.
pub fn lm2_integral(basis: &SpectralBasis, cells: &DMatrix<f64>, t: f64, x: f64, s: f64, w: f64) -> f64 {
    let h = basis.grid().spacing();
    let a = DVector::from_vec(basis.kernel_row(t, x));
    let b = DVector::from_vec(basis.kernel_row(s, w));
    a.dot(&(cells * b)) * h * h
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lm2Report {
    pub delta: f64,
    /// `c2` in `c2 e^{-(1-delta) mu1 (t+s)} (t+s)^{-beta/alpha}`.
    pub off_diagonal: ConstantFit,
    /// `c2` in `c2 e^{-(2-delta) mu1 t} t^{-beta/alpha}` on `t = s`, `x = w`.
    pub diagonal: ConstantFit,
    pub symmetry_defect: f64,
}

pub fn kernel_integral_check_lm2(
    basis: &SpectralBasis,
    beta: f64,
    t_grid: &[f64],
    s_grid: &[f64],
    x_grid: &[f64],
    delta: f64,
) -> Result<Lm2Report> {
    if t_grid.iter().chain(s_grid).any(|t| !(*t > 0.0)) {
        return Err(Error::Domain("time grids must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    let cells = lambda_cells(basis, beta)?;
    let mu1 = basis.mu1();
    let q = beta / basis.alpha();
    let mut pairs = Vec::new();
    let mut symmetry_defect: f64 = 0.0;
    for &t in t_grid {
        for &s in s_grid {
            let shape = (-(1.0 - delta) * mu1 * (t + s)).exp() * (t + s).powf(-q);
            for &x in x_grid {
                for &w in x_grid {
                    let v = lm2_integral(basis, &cells, t, x, s, w);
                    let swapped = lm2_integral(basis, &cells, s, w, t, x);
                    symmetry_defect = symmetry_defect.max((v - swapped).abs() / v.abs().max(f64::MIN_POSITIVE));
                    pairs.push((v, shape));
                }
            }
        }
    }
    let mut diag = Vec::new();
    for &t in t_grid {
        let shape = (-(2.0 - delta) * mu1 * t).exp() * t.powf(-q);
        for &x in x_grid {
            diag.push((lm2_integral(basis, &cells, t, x, t, x), shape));
        }
    }
    Ok(Lm2Report {
        delta,
        off_diagonal: upper_constant(&pairs)?,
        diagonal: upper_constant(&diag)?,
        symmetry_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn origin_closed_form() {
        for &(alpha, beta) in &[(2.0, 0.5), (1.5, 0.75)] {
            for t in [0.1f64, 1.0, 10.0] {
                let v = t.powf(beta / alpha) * timsc_integral(alpha, beta, t, 0.0).unwrap();
                let want = 2.0 * gamma(beta / alpha) / alpha;
                assert!((v - want).abs() < 1e-8 * want, "{alpha} {beta} {t}: {v} {want}");
            }
        }
    }

    #[test]
    fn k_at_origin() {
        for &(alpha, beta) in &[(2.0, 0.5), (1.5, 0.75)] {
            let want = 2.0 * PI / (alpha * (PI * beta / alpha).sin());
            let v = k_integral(alpha, beta, 0.0).unwrap();
            assert!((v - want).abs() < 1e-8 * want, "{v} {want}");
        }
    }

    #[test]
    fn scaled_integral_is_even_and_bounded() {
        let ws: Vec<f64> = (-4..=4).map(|i| 0.5 * i as f64).collect();
        let r = timsc_check(2.0, 0.5, &[0.1, 1.0, 10.0], &ws).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.even_defect < 1e-12);
        assert!(r.spread < 0.1, "{r:?}");
        assert!(r.refinement_change < 0.02);
        assert!((r.sup - r.origin_value).abs() < 1e-8 * r.sup);
    }

    #[test]
    fn lm2_symmetry_and_diagonal() {
        let b = SpectralBasis::new(2.0, 32, 64).unwrap();
        let ts = [0.1, 0.5, 2.0];
        let xs = [-0.5, 0.0, 0.6];
        let r = kernel_integral_check_lm2(&b, 0.5, &ts, &ts, &xs, 0.1).unwrap();
        assert!(r.symmetry_defect < 1e-12);
        assert_eq!(r.off_diagonal.violations, 0);
        assert_eq!(r.diagonal.violations, 0);
        assert!(r.off_diagonal.constant.is_finite());
    }
}
