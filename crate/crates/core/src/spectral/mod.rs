//! Dirichlet eigenbasis of the interval (-1, 1) and the heat kernel built
//! from it.
//!
//! Eigenfunctions are `phi_n(x) = sin(n pi (x + 1) / 2)`, orthonormal in
//! `L^2(-1, 1)`. For order `alpha = 2` the eigenvalues are `(n pi / 2)^2`;
//! for `alpha < 2` the spectral power `((n pi / 2)^2)^(alpha / 2)` of the
//! Dirichlet Laplacian is used with the same eigenfunctions. That operator
//! is a Dirichlet-type fractional Laplacian but not the generator of the
//! killed stable process, whose kernel has no closed form.
//!
//! The quadrature grid holds `M` equispaced interior nodes with spacing
//! `h = 2 / (M + 1)` and weight `h` each. On this grid the sampled sines are
//! exactly orthonormal for `n <= M` (discrete sine transform), so the grid
//! inner product reproduces the continuous one for every mode in the basis.

mod envelope;

pub use envelope::{
    envelope_eval, fit_envelope, fit_lwbpd, fit_prop31, fit_prop32_mass, phi1_comparison,
    ConstantFit, EnvelopeConstants, EnvelopeFit, EnvelopeKind, KernelEnvelope, PhiMode,
};
pub(crate) use envelope::upper_constant;

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad;

/// Equispaced interior quadrature nodes on (-1, 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    spacing: f64,
}

impl Grid {
    pub fn uniform_interior(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("grid needs at least 2 nodes, got {m}")));
        }
        let h = 2.0 / (m as f64 + 1.0);
        let nodes = (1..=m).map(|j| -1.0 + j as f64 * h).collect();
        Ok(Grid { nodes, weights: vec![h; m], spacing: h })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the node closest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let j = ((x + 1.0) / self.spacing).round() as isize - 1;
        j.clamp(0, self.nodes.len() as isize - 1) as usize
    }
}

/// Eigenvalue of mode `n` (1-based) under the spectral-power convention.
pub fn eigenvalue(alpha: f64, n: usize) -> f64 {
    (n as f64 * FRAC_PI_2).powf(alpha)
}

/// `phi_n(x)`, zero outside the interval.
pub fn eigenfunction(n: usize, x: f64) -> f64 {
    if x <= -1.0 || x >= 1.0 {
        return 0.0;
    }
    (n as f64 * FRAC_PI_2 * (x + 1.0)).sin()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    alpha: f64,
    eigenvalues: Vec<f64>,
    grid: Grid,
    /// `N x M` matrix of `phi_n(x_j)`.
    modes: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn new(alpha: f64, n_modes: usize, grid_size: usize) -> Result<Self> {
        check_alpha(alpha)?;
        if n_modes == 0 {
            return Err(Error::Config("need at least one mode".into()));
        }
        if grid_size < 2 * n_modes {
            return Err(Error::Config(format!(
                "grid size {grid_size} below twice the mode count {n_modes}"
            )));
        }
        let grid = Grid::uniform_interior(grid_size)?;
        let eigenvalues = (1..=n_modes).map(|n| eigenvalue(alpha, n)).collect();
        let modes = DMatrix::from_fn(n_modes, grid_size, |i, j| eigenfunction(i + 1, grid.nodes[j]));
        Ok(SpectralBasis { alpha, eigenvalues, grid, modes })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mu1(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `N x M` matrix of eigenfunction samples on the grid.
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    /// Witness constants `(c1, c2)` for `c1 n^alpha <= mu_n <= c2 n^alpha`.
    pub fn witness_constants(&self) -> (f64, f64) {
        let base = FRAC_PI_2.powf(self.alpha);
        (base * 2f64.powf(-self.alpha), base * 2f64.powf(self.alpha))
    }

    /// Multiply one stored eigenvalue by `factor`.
    ///
    /// Exists for negative controls: a basis whose eigenvalues no longer match
    /// the operator must fail the semigroup check against the reference kernel.
    pub fn perturb_eigenvalue(&mut self, index: usize, factor: f64) {
        self.eigenvalues[index] *= factor;
    }

    /// All `phi_n(x)` for `n = 1..=N` via the sine recurrence.
    pub fn mode_values(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_modes()];
        self.mode_values_into(x, &mut out);
        out
    }

    pub fn mode_values_into(&self, x: f64, out: &mut [f64]) {
        if x <= -1.0 || x >= 1.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let theta = FRAC_PI_2 * (x + 1.0);
        let two_cos = 2.0 * theta.cos();
        let (mut prev, mut cur) = (0.0, theta.sin());
        for v in out.iter_mut() {
            *v = cur;
            let next = two_cos * cur - prev;
            prev = cur;
            cur = next;
        }
    }

    /// Truncated series from precomputed mode values. Symmetric in its two
    /// mode-value arguments bit for bit.
    pub fn kernel_from_modes(&self, t: f64, phi_x: &[f64], phi_y: &[f64]) -> f64 {
        self.eigenvalues
            .iter()
            .zip(phi_x.iter().zip(phi_y))
            .map(|(mu, (a, b))| (-mu * t).exp() * (a * b))
            .sum()
    }

    /// `p_D(t, x, y)` as the truncated spectral series.
    pub fn heat_kernel(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
        }
        if !(x > -1.0 && x < 1.0 && y > -1.0 && y < 1.0) {
            return Err(Error::Domain(format!("points must lie in (-1, 1): x={x}, y={y}")));
        }
        Ok(self.kernel_from_modes(t, &self.mode_values(x), &self.mode_values(y)))
    }

    /// `p_D(t, x, y_j)` at every grid node.
    pub fn kernel_row(&self, t: f64, x: f64) -> Vec<f64> {
        let coeffs = DVector::from_iterator(
            self.n_modes(),
            self.mode_values(x).iter().zip(&self.eigenvalues).map(|(p, mu)| (-mu * t).exp() * p),
        );
        self.synthesize(&coeffs)
    }

    /// Quadrature mass `int_D p_D(t, x, y) dy`.
    pub fn mass(&self, t: f64, x: f64) -> f64 {
        self.kernel_row(t, x).iter().zip(self.grid.weights()).map(|(p, w)| p * w).sum()
    }

    /// Grid-quadrature coefficients `c_n = sum_j w_j phi_n(x_j) f_j`.
    pub fn project(&self, f: &[f64]) -> DVector<f64> {
        assert_eq!(f.len(), self.grid.len(), "grid function length mismatch");
        let h = self.grid.spacing();
        (&self.modes * DVector::from_column_slice(f)) * h
    }

    /// Coefficients of a function given in closed form, integrated accurately
    /// (panel-wise double-exponential quadrature, panels aligned with the
    /// zeros of each mode and with the origin).
    pub fn project_function<F: Fn(f64) -> f64>(&self, f: F) -> DVector<f64> {
        DVector::from_iterator(
            self.n_modes(),
            (1..=self.n_modes()).map(|n| {
                let panels = (2 * n).max(8);
                let panels = panels + panels % 2;
                let width = 2.0 / panels as f64;
                (0..panels)
                    .map(|k| {
                        let a = -1.0 + k as f64 * width;
                        quad::integrate_unchecked(|y| f(y) * eigenfunction(n, y), a, a + width, 1e-15)
                    })
                    .sum()
            }),
        )
    }

    /// Grid values of `sum_n c_n phi_n`.
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> Vec<f64> {
        (self.modes.transpose() * coeffs).as_slice().to_vec()
    }

    /// `sum_n c_n phi_n(x)` at an arbitrary point.
    pub fn evaluate(&self, coeffs: &DVector<f64>, x: f64) -> f64 {
        self.mode_values(x).iter().zip(coeffs.iter()).map(|(p, c)| p * c).sum()
    }

    /// Multiply coefficients by `exp(-mu_n t)`.
    pub fn propagate(&self, t: f64, coeffs: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(&self.eigenvalues).map(|(c, mu)| c * (-mu * t).exp()),
        )
    }

    /// `(G f)_t` on the grid: project, damp each mode, resynthesize. At
    /// `t = 0` this is the projection onto the first `N` modes.
    pub fn semigroup_apply(&self, t: f64, f: &[f64]) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("semigroup needs t >= 0, got {t}")));
        }
        if f.len() != self.grid.len() {
            return Err(Error::Config(format!(
                "grid function has {} values, basis grid has {}",
                f.len(),
                self.grid.len()
            )));
        }
        Ok(self.synthesize(&self.propagate(t, &self.project(f))))
    }

    /// `|int_D p_D(t,x,z) p_D(s,z,y) dz - p_D(t+s,x,y)|`, the integral by grid
    /// quadrature with this basis and the right-hand side from the reference
    /// kernel (method of images at `alpha = 2`, dense closed-form series
    /// otherwise).
    pub fn chapman_kolmogorov_residual(&self, t: f64, s: f64, x: f64, y: f64) -> Result<f64> {
        if !(t > 0.0 && s > 0.0) {
            return Err(Error::Domain(format!("need t, s > 0, got t={t}, s={s}")));
        }
        let left = self.kernel_row(t, x);
        let right = self.kernel_row(s, y);
        let h = self.grid.spacing();
        let conv: f64 = left.iter().zip(&right).map(|(a, b)| a * b).sum::<f64>() * h;
        let reference = reference_kernel(self.alpha, t + s, x, y)?;
        Ok((conv - reference).abs())
    }

    /// Largest deviation of the grid Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = &self.modes * self.modes.transpose() * self.grid.spacing();
        let n = gram.nrows();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }
}

/// Free heat kernel of the Laplacian (Brownian motion with variance `2t`).
pub fn gaussian_kernel(t: f64, r: f64) -> f64 {
    (-r * r / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

/// Dirichlet heat kernel computed independently of any stored basis.
///
/// `alpha = 2` uses the method of images on the interval; other orders sum
/// the closed-form spectral series until the terms drop below `1e-18`.
pub fn reference_kernel(alpha: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("reference kernel needs t > 0, got {t}")));
    }
    if (alpha - 2.0).abs() < f64::EPSILON {
        let reach = (4.0 * t * 45.0).sqrt();
        let kmax = (reach / 4.0).ceil() as i64 + 2;
        let mut total = 0.0;
        for k in -kmax..=kmax {
            let shift = 4.0 * k as f64;
            total += gaussian_kernel(t, x - y + shift) - gaussian_kernel(t, x + y - 2.0 + shift);
        }
        Ok(total)
    } else {
        let mut total = 0.0;
        let mut n = 1;
        loop {
            let damp = (-eigenvalue(alpha, n) * t).exp();
            if damp < 1e-18 && n > 1 {
                break;
            }
            total += damp * (eigenfunction(n, x) * eigenfunction(n, y));
            n += 1;
            if n > 2_000_000 {
                return Err(Error::Config("reference series did not converge; t too small".into()));
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigenvalue_examples() {
        let b = SpectralBasis::new(2.0, 3, 8).unwrap();
        assert_relative_eq!(b.eigenvalues()[0], PI * PI / 4.0, max_relative = 1e-15);
        assert_relative_eq!(b.eigenvalues()[0], 2.46740, epsilon = 1e-5);
        assert_relative_eq!(b.eigenvalues()[2], 22.2066, epsilon = 1e-4);
        let f = SpectralBasis::new(1.5, 1, 4).unwrap();
        assert_relative_eq!(f.mu1(), 1.96870, epsilon = 1e-5);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(SpectralBasis::new(2.5, 4, 16), Err(Error::Domain(_))));
        assert!(matches!(SpectralBasis::new(0.0, 4, 16), Err(Error::Domain(_))));
        assert!(matches!(SpectralBasis::new(2.0, 8, 15), Err(Error::Config(_))));
    }

    #[test]
    fn eigenvalues_increasing_within_witness() {
        for &alpha in &[0.5, 1.0, 1.5, 2.0] {
            let b = SpectralBasis::new(alpha, 64, 128).unwrap();
            let (c1, c2) = b.witness_constants();
            for (i, w) in b.eigenvalues().windows(2).enumerate() {
                assert!(w[0] < w[1] && w[0] > 0.0, "mode {i}");
            }
            for (i, mu) in b.eigenvalues().iter().enumerate() {
                let ratio = mu / ((i + 1) as f64).powf(alpha);
                assert!(c1 <= ratio && ratio <= c2);
            }
        }
    }

    #[test]
    fn grid_orthonormality() {
        let b = SpectralBasis::new(2.0, 64, 256).unwrap();
        assert!(b.orthonormality_defect() < 1e-8);
        let b = SpectralBasis::new(1.0, 100, 200).unwrap();
        assert!(b.orthonormality_defect() < 1e-8);
    }

    #[test]
    fn recurrence_matches_direct_sines() {
        let b = SpectralBasis::new(2.0, 256, 512).unwrap();
        for &x in &[-0.93, -0.2, 0.0, 0.41, 0.999] {
            for (i, v) in b.mode_values(x).iter().enumerate() {
                assert!((v - eigenfunction(i + 1, x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_symmetric_bitwise() {
        let b = SpectralBasis::new(2.0, 64, 128).unwrap();
        let pts: Vec<f64> = b.grid().nodes().iter().step_by(9).copied().collect();
        for &x in &pts {
            for &y in &pts {
                let a = b.heat_kernel(0.07, x, y).unwrap();
                let c = b.heat_kernel(0.07, y, x).unwrap();
                assert_eq!(a.to_bits(), c.to_bits());
            }
        }
    }

    #[test]
    fn kernel_rejects_nonpositive_time() {
        let b = SpectralBasis::new(2.0, 8, 16).unwrap();
        assert!(matches!(b.heat_kernel(0.0, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(b.heat_kernel(-1.0, 0.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn kernel_matches_images_at_small_time() {
        let b = SpectralBasis::new(2.0, 64, 256).unwrap();
        let series = b.heat_kernel(0.05, 0.0, 0.0).unwrap();
        let images = reference_kernel(2.0, 0.05, 0.0, 0.0).unwrap();
        assert!(((series - images) / images).abs() < 1e-6);
    }

    #[test]
    fn total_mass_sub_markov() {
        let b = SpectralBasis::new(2.0, 64, 256).unwrap();
        let m = b.mass(0.5, 0.0);
        assert!(m > 0.0 && m <= 1.0, "{m}");
        for &t in &[0.05, 0.2, 1.0] {
            for &x in &[-0.9, -0.3, 0.0, 0.6] {
                assert!(b.mass(t, x) <= 1.0 + 1e-6);
            }
        }
    }

    #[test]
    fn kernel_dip_bounded() {
        let b = SpectralBasis::new(2.0, 64, 256).unwrap();
        for &t in &[0.05, 0.3] {
            for &x in b.grid().nodes().iter().step_by(17) {
                let low = b.kernel_row(t, x).into_iter().fold(f64::INFINITY, f64::min);
                assert!(low > -1e-8, "t={t} x={x} min={low}");
            }
        }
    }

    #[test]
    fn semigroup_at_zero_is_projection() {
        let b = SpectralBasis::new(2.0, 16, 64).unwrap();
        let coeffs = DVector::from_fn(16, |i, _| 1.0 / (i as f64 + 1.0));
        let f = b.synthesize(&coeffs);
        let g = b.semigroup_apply(0.0, &f).unwrap();
        for (a, c) in f.iter().zip(&g) {
            assert!((a - c).abs() < 1e-13);
        }
    }

    #[test]
    fn semigroup_on_first_mode() {
        let b = SpectralBasis::new(2.0, 16, 64).unwrap();
        let phi1: Vec<f64> = b.grid().nodes().iter().map(|&x| eigenfunction(1, x)).collect();
        let g = b.semigroup_apply(0.8, &phi1).unwrap();
        let damp = (-b.mu1() * 0.8).exp();
        for (a, c) in phi1.iter().zip(&g) {
            assert!((damp * a - c).abs() < 1e-14);
        }
    }

    #[test]
    fn semigroup_of_constant_matches_closed_form_series() {
        let b = SpectralBasis::new(2.0, 64, 256).unwrap();
        let coeffs = b.project_function(|_| 1.0);
        let value = b.evaluate(&b.propagate(1.0, &coeffs), 0.0);
        // exact int_D phi_n = 2 (1 - cos n pi) / (n pi)
        let oracle: f64 = (1..=400)
            .map(|n| {
                let nf = n as f64;
                let integral = 2.0 * (1.0 - (nf * PI).cos()) / (nf * PI);
                (-eigenvalue(2.0, n)).exp() * eigenfunction(n, 0.0) * integral
            })
            .sum();
        assert!((value - oracle).abs() < 1e-8, "{value} vs {oracle}");
    }

    #[test]
    fn chapman_kolmogorov_small_and_symmetric() {
        let b = SpectralBasis::new(2.0, 64, 256).unwrap();
        let r = b.chapman_kolmogorov_residual(0.25, 0.25, 0.0, 0.0).unwrap();
        assert!(r < 1e-6, "{r}");
        let a = b.chapman_kolmogorov_residual(0.1, 0.4, 0.3, -0.2).unwrap();
        let c = b.chapman_kolmogorov_residual(0.4, 0.1, 0.3, -0.2).unwrap();
        assert!((a - c).abs() < 1e-12);
    }

    #[test]
    fn truncation_shows_in_residual() {
        let coarse = SpectralBasis::new(1.0, 8, 128).unwrap();
        let fine = SpectralBasis::new(1.0, 64, 128).unwrap();
        let rc = coarse.chapman_kolmogorov_residual(0.25, 0.25, 0.1, -0.3).unwrap();
        let rf = fine.chapman_kolmogorov_residual(0.25, 0.25, 0.1, -0.3).unwrap();
        assert!(rc >= rf, "{rc} < {rf}");
        assert!(rc > 1e-6);
    }

    #[test]
    fn corrupted_eigenvalue_breaks_semigroup_check() {
        let mut b = SpectralBasis::new(2.0, 64, 256).unwrap();
        b.perturb_eigenvalue(0, 1.05);
        let r = b.chapman_kolmogorov_residual(0.25, 0.25, 0.0, 0.0).unwrap();
        assert!(r > 1e-3, "{r}");
    }

    #[test]
    fn images_agree_with_dense_series() {
        for &(t, x, y) in &[(0.3, 0.0, 0.0), (0.1, 0.5, -0.2), (1.0, 0.9, 0.8)] {
            let img = reference_kernel(2.0, t, x, y).unwrap();
            let series: f64 =
                (1..2000).map(|n| (-eigenvalue(2.0, n) * t).exp() * eigenfunction(n, x) * eigenfunction(n, y)).sum();
            assert!((img - series).abs() < 1e-12, "{img} {series}");
        }
    }
}
