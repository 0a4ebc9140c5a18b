use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::fit::{lyapunov_fit_logs, ols, LinearFit};
use crate::covariance::NoiseSpec;
use crate::error::{Error, Result};
use crate::noise::{build_space_cov, NoiseGrid};
use crate::spectral::SpectralBasis;

/// Spectral coefficient matrix of the two-point function at one step:
/// `f_t(x, w) = exp(log_scale) * phi(x)^T S phi(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub s: DMatrix<f64>,
    pub log_scale: f64,
}

#[derive(Debug, Clone)]
pub struct RenewalSolution {
    pub dt: f64,
    pub points: Vec<f64>,
    /// `(steps + 1) x points`: `log f_t(x, x)` at every step.
    pub log_diag: DMatrix<f64>,
    pub snapshots: Vec<Snapshot>,
    basis: SpectralBasis,
}

impl RenewalSolution {
    pub fn times(&self) -> Vec<f64> {
        (0..self.log_diag.nrows()).map(|k| k as f64 * self.dt).collect()
    }

    /// `E|u_t(x)|^2` at a step and observation point.
    pub fn second_moment(&self, step: usize, point: usize) -> f64 {
        self.log_diag[(step, point)].exp()
    }

    pub fn log_second_moment_series(&self, point: usize) -> Vec<f64> {
        self.log_diag.column(point).iter().copied().collect()
    }

    pub fn snapshot(&self, step: usize) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.step == step)
    }

    /// `f_t(x, w)` from a stored snapshot.
    pub fn two_point(&self, snap: &Snapshot, x: f64, w: f64) -> f64 {
        let a = DVector::from_vec(self.basis.mode_values(x));
        let b = DVector::from_vec(self.basis.mode_values(w));
        a.dot(&(&snap.s * b)) * snap.log_scale.exp()
    }
}

/// Time marching of the two-point renewal equation for `sigma = identity`.
///
/// With left-rectangle quadrature in time and the cell-averaged covariance
/// `C` on the basis grid, one step reads
/// `S <- E (S + xi^2 dt P (C o Psi^T S Psi) P^T) E`, where `Psi` samples the
/// modes on the grid and `P = h Psi` projects back. This is also the exact
/// second moment of the exponential Euler scheme with the same grids.
pub fn renewal_second_moment(
    basis: &SpectralBasis,
    noise: &NoiseSpec,
    u0: &DVector<f64>,
    dt: f64,
    steps: usize,
    points: &[f64],
    snapshot_steps: &[usize],
) -> Result<RenewalSolution> {
    if !noise.temporal.is_white() {
        return Err(Error::Config("the renewal oracle needs white-in-time noise".into()));
    }
    noise.check_pairing(basis.alpha())?;
    if u0.len() != basis.n_modes() {
        return Err(Error::Config("initial coefficients do not match the basis".into()));
    }
    let grid = NoiseGrid::from_grid(basis.grid(), dt, steps)?;
    let factor = build_space_cov(&grid, &noise.spatial)?;
    let m = basis.grid().len();
    let cov = &factor.target + DMatrix::identity(m, m) * factor.jitter;
    let psi = basis.modes();
    let proj = psi * basis.grid().spacing();
    let damp = DVector::from_iterator(basis.n_modes(), basis.eigenvalues().iter().map(|mu| (-mu * dt).exp()));
    let obs: Vec<DVector<f64>> = points.iter().map(|&x| DVector::from_vec(basis.mode_values(x))).collect();
    let gain = noise.xi * noise.xi * dt;

    let mut s = u0 * u0.transpose();
    let mut log_scale = 0.0;
    let mut log_diag = DMatrix::zeros(steps + 1, points.len());
    let mut snapshots = Vec::new();
    let mut record = |k: usize, s: &DMatrix<f64>, log_scale: f64| {
        for (j, o) in obs.iter().enumerate() {
            let v = o.dot(&(s * o));
            log_diag[(k, j)] = if v > 0.0 { v.ln() + log_scale } else { f64::NEG_INFINITY };
        }
        if snapshot_steps.contains(&k) {
            snapshots.push(Snapshot { step: k, s: s.clone(), log_scale });
        }
    };
    record(0, &s, log_scale);
    for k in 0..steps {
        if gain != 0.0 {
            let mut f = psi.transpose() * &s * psi;
            f.component_mul_assign(&cov);
            s += &proj * f * proj.transpose() * gain;
        }
        for i in 0..s.nrows() {
            for j in 0..s.ncols() {
                s[(i, j)] *= damp[i] * damp[j];
            }
        }
        s = (&s + s.transpose()) * 0.5;
        let top = s.amax();
        if top > 0.0 && top.is_finite() && !(1e-100..=1e100).contains(&top) {
            s /= top;
            log_scale += top.ln();
        }
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Error::Quadrature(format!("renewal iteration left the floating range at step {k}")));
        }
        record(k + 1, &s, log_scale);
    }
    Ok(RenewalSolution { dt, points: points.to_vec(), log_diag, snapshots, basis: basis.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseScan {
    pub xis: Vec<f64>,
    pub fits: Vec<LinearFit>,
    pub slopes: Vec<f64>,
    pub slope_ci: Vec<f64>,
    /// Adjacent noise levels whose slopes change sign.
    pub bracket: Option<(f64, f64)>,
    pub strictly_increasing: bool,
    /// Affine fit of slope against `xi^{2 alpha / (alpha - beta)}` on the
    /// levels with positive slope.
    pub growth_fit: Option<LinearFit>,
    pub growth_power: f64,
}

/// Lyapunov slopes of the renewal oracle across noise levels, fitted on
/// `t >= window_start` at one observation point.
#[allow(clippy::too_many_arguments)]
pub fn phase_scan(
    basis: &SpectralBasis,
    noise: &NoiseSpec,
    xis: &[f64],
    u0: &DVector<f64>,
    dt: f64,
    steps: usize,
    window_start: f64,
    point: f64,
) -> Result<PhaseScan> {
    let beta = noise
        .spatial
        .riesz_beta()
        .ok_or_else(|| Error::Config("phase scan needs the riesz kernel".into()))?;
    let fits: Vec<LinearFit> = xis
        .par_iter()
        .map(|&xi| {
            let sol = renewal_second_moment(basis, &noise.with_xi(xi)?, u0, dt, steps, &[point], &[])?;
            lyapunov_fit_logs(&sol.times(), &sol.log_second_moment_series(0), (window_start, f64::INFINITY))
        })
        .collect::<Result<Vec<_>>>()?;
    let slopes: Vec<f64> = fits.iter().map(|f| f.slope).collect();
    let slope_ci: Vec<f64> = fits.iter().map(|f| f.slope_ci()).collect();
    let bracket = (1..xis.len()).find(|&i| slopes[i - 1] < 0.0 && slopes[i] >= 0.0).map(|i| (xis[i - 1], xis[i]));
    let strictly_increasing = slopes.windows(2).all(|w| w[1] > w[0]);
    let alpha = basis.alpha();
    let growth_power = 2.0 * alpha / (alpha - beta);
    let (gx, gy): (Vec<f64>, Vec<f64>) =
        xis.iter().zip(&slopes).filter(|(_, s)| **s > 0.0).map(|(x, s)| (x.powf(growth_power), *s)).unzip();
    let growth_fit = if gx.len() >= 3 { Some(ols(&gx, &gy)?) } else { None };
    Ok(PhaseScan { xis: xis.to_vec(), fits, slopes, slope_ci, bracket, strictly_increasing, growth_fit, growth_power })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{SpatialKernel, TemporalKernel};
    use crate::solver::InitialCondition;

    fn setup() -> (SpectralBasis, DVector<f64>) {
        let b = SpectralBasis::new(2.0, 12, 24).unwrap();
        let u0 = InitialCondition::Constant { value: 1.0 }.coefficients(&b);
        (b, u0)
    }

    fn noise(xi: f64) -> NoiseSpec {
        NoiseSpec::new(xi, SpatialKernel::riesz(0.5, 1).unwrap(), TemporalKernel::White).unwrap()
    }

    #[test]
    fn zero_noise_is_product_of_means() {
        let (b, u0) = setup();
        let sol = renewal_second_moment(&b, &noise(0.0), &u0, 0.01, 30, &[0.0, 0.4], &[30]).unwrap();
        let g = |x: f64| b.evaluate(&b.propagate(0.3, &u0), x);
        let snap = sol.snapshot(30).unwrap();
        assert!((sol.two_point(snap, 0.0, 0.4) - g(0.0) * g(0.4)).abs() < 1e-13);
        assert!((sol.second_moment(30, 1) - g(0.4).powi(2)).abs() < 1e-13);
    }

    #[test]
    fn symmetric_and_monotone_in_noise() {
        let (b, u0) = setup();
        let lo = renewal_second_moment(&b, &noise(0.5), &u0, 0.01, 40, &[-0.3, 0.2], &[40]).unwrap();
        let hi = renewal_second_moment(&b, &noise(1.5), &u0, 0.01, 40, &[-0.3, 0.2], &[40]).unwrap();
        let s = lo.snapshot(40).unwrap();
        let (a, b) = (lo.two_point(s, -0.3, 0.2), lo.two_point(s, 0.2, -0.3));
        assert!((a - b).abs() <= 1e-14 * a.abs());
        for (a, c) in lo.log_diag.iter().zip(hi.log_diag.iter()) {
            assert!(c >= a);
        }
    }

    #[test]
    fn time_step_refinement() {
        let (b, u0) = setup();
        let coarse = renewal_second_moment(&b, &noise(1.0), &u0, 0.01, 50, &[0.0], &[]).unwrap();
        let fine = renewal_second_moment(&b, &noise(1.0), &u0, 0.005, 100, &[0.0], &[]).unwrap();
        let (a, c) = (coarse.second_moment(50, 0), fine.second_moment(100, 0));
        assert!((a - c).abs() < 0.03 * c, "{a} {c}");
    }

    #[test]
    fn growth_at_large_noise() {
        let (b, u0) = setup();
        let scan = phase_scan(&b, &noise(1.0), &[0.05, 4.0], &u0, 0.002, 1000, 1.0, 0.0).unwrap();
        assert!(scan.slopes[0] < 0.0);
        assert!(scan.slopes[1] > 0.0);
        assert_eq!(scan.bracket, Some((0.05, 4.0)));
    }
}
