//! Gaussian noise on time x space grids.
//!
//! Spatial covariances are cell averages of the riesz kernel, which stay finite
//! on the diagonal. Time cells are integrated, so a white-in-time increment over
//! one step has covariance `dt * C`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::covariance::{SpatialKernel, TemporalKernel};
use crate::error::{Error, Result};
use crate::spectral::Grid;

/// Largest jitter, relative to the largest diagonal entry, the factorization
/// may add before giving up.
pub const MAX_RELATIVE_JITTER: f64 = 1e-6;

/// Default bound on `K * M` for space-time covariances.
pub const DEFAULT_SPACETIME_CAP: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseGrid {
    pub dt: f64,
    pub steps: usize,
    pub nodes: Vec<f64>,
    pub widths: Vec<f64>,
}

impl NoiseGrid {
    pub fn new(dt: f64, steps: usize, nodes: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if nodes.len() != widths.len() || nodes.is_empty() {
            return Err(Error::Config("nodes and widths must be nonempty and of equal length".into()));
        }
        if nodes.iter().any(|x| !(x.abs() < 1.0)) {
            return Err(Error::Config("noise nodes must lie strictly inside (-1, 1)".into()));
        }
        if widths.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("cell widths must be positive".into()));
        }
        if widths.iter().sum::<f64>() > 2.0 + 1e-12 {
            return Err(Error::Config("cell widths exceed the domain length".into()));
        }
        Ok(NoiseGrid { dt, steps, nodes, widths })
    }

    /// Cells of the spectral quadrature grid.
    pub fn from_grid(grid: &Grid, dt: f64, steps: usize) -> Result<Self> {
        NoiseGrid::new(dt, steps, grid.nodes().to_vec(), grid.weights().to_vec())
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn cell(&self, j: usize) -> (f64, f64) {
        (self.nodes[j] - self.widths[j] / 2.0, self.nodes[j] + self.widths[j] / 2.0)
    }
}

/// `int_a1^b1 int_a2^b2 |y - z|^{-beta} dz dy` in closed form (`0 < beta < 1`).
pub fn riesz_cell_integral(beta: f64, (a1, b1): (f64, f64), (a2, b2): (f64, f64)) -> f64 {
    let g = |u: f64| u.abs().powf(2.0 - beta) / ((1.0 - beta) * (2.0 - beta));
    -(g(b1 - b2) - g(b1 - a2) - g(a1 - b2) + g(a1 - a2))
}

/// `C_H int int |r - s|^{2H-2}` over two time cells of width `dt` whose left
/// ends are `lag` apart.
pub fn fbm_cell_integral(hurst: f64, dt: f64, lag: f64) -> f64 {
    let g = |u: f64| u.abs().powf(2.0 * hurst) / 2.0;
    g(lag + dt) + g(lag - dt) - 2.0 * g(lag)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceFactor {
    pub target: DMatrix<f64>,
    /// Lower-triangular `L` with `L L^T = target + jitter I`.
    pub factor: DMatrix<f64>,
    pub jitter: f64,
    pub description: String,
}

impl CovarianceFactor {
    /// Cholesky factorization with a diagonal jitter ladder capped at
    /// `MAX_RELATIVE_JITTER` times the largest diagonal entry.
    pub fn factorize(target: DMatrix<f64>, description: impl Into<String>) -> Result<Self> {
        let n = target.nrows();
        if n != target.ncols() || n == 0 {
            return Err(Error::Config("covariance must be a nonempty square matrix".into()));
        }
        let max_diag = target.diagonal().iter().cloned().fold(0.0f64, f64::max);
        let cap = MAX_RELATIVE_JITTER * max_diag;
        let mut jitter = 0.0;
        loop {
            let shifted = &target + DMatrix::identity(n, n) * jitter;
            if let Some(ch) = shifted.cholesky() {
                return Ok(CovarianceFactor { target, factor: ch.l(), jitter, description: description.into() });
            }
            jitter = if jitter == 0.0 { 1e-15 * max_diag } else { jitter * 10.0 };
            if jitter > cap * (1.0 + 1e-9) || !(jitter > 0.0) {
                return Err(Error::NotPsd { jitter: jitter / 10.0 });
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.target.nrows()
    }

    /// Largest entry of `|L L^T - target|` off the jitter.
    pub fn reconstruction_error(&self) -> f64 {
        let n = self.dim();
        let back = &self.factor * self.factor.transpose() - DMatrix::identity(n, n) * self.jitter;
        (back - &self.target).amax()
    }

    /// Draw a mean-zero vector with covariance `scale * (target + jitter I)`.
    pub fn sample<R: Rng>(&self, rng: &mut R, scale: f64) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut out = &self.factor * z;
        out *= scale.sqrt();
        out
    }
}

/// Cell-averaged riesz covariance on the noise cells.
pub fn space_cov_matrix(grid: &NoiseGrid, spatial: &SpatialKernel) -> Result<DMatrix<f64>> {
    let beta = match spatial.riesz_beta() {
        Some(b) if spatial.d == 1 => b,
        _ => {
            return Err(Error::Config(format!(
                "grid covariance is available for the riesz kernel in d = 1 only, got {} in d = {}",
                spatial.name(),
                spatial.d
            )))
        }
    };
    let m = grid.len();
    let mut c = DMatrix::zeros(m, m);
    for j in 0..m {
        for l in 0..=j {
            let v = riesz_cell_integral(beta, grid.cell(j), grid.cell(l)) / (grid.widths[j] * grid.widths[l]);
            c[(j, l)] = v;
            c[(l, j)] = v;
        }
    }
    Ok(c)
}

pub fn build_space_cov(grid: &NoiseGrid, spatial: &SpatialKernel) -> Result<CovarianceFactor> {
    let c = space_cov_matrix(grid, spatial)?;
    CovarianceFactor::factorize(c, format!("cell-averaged {} on {} cells", spatial.name(), grid.len()))
}

/// One white-in-time spatial increment with covariance `dt * C`.
pub fn sample_white_time<R: Rng>(factor: &CovarianceFactor, dt: f64, rng: &mut R) -> DVector<f64> {
    factor.sample(rng, dt)
}

/// Time-cell covariance of fbm increments over `steps` cells of width `dt`.
pub fn time_cov_matrix(temporal: &TemporalKernel, dt: f64, steps: usize) -> Result<DMatrix<f64>> {
    let hurst = temporal
        .hurst()
        .ok_or_else(|| Error::Config("space-time covariance needs an fbm temporal kernel".into()))?;
    Ok(DMatrix::from_fn(steps, steps, |i, k| fbm_cell_integral(hurst, dt, (i as f64 - k as f64).abs() * dt)))
}

/// Space-time covariance `T (x) C` kept in factored Kronecker form.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacetimeFactor {
    pub temporal: CovarianceFactor,
    pub spatial: CovarianceFactor,
}

impl SpacetimeFactor {
    /// Target covariance between (step `i`, cell `j`) and (step `k`, cell `l`).
    pub fn entry(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.temporal.target[(i, k)] * self.spatial.target[(j, l)]
    }

    /// Draw a `cells x steps` field; column `i` is the increment at step `i`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DMatrix<f64> {
        let m = self.spatial.dim();
        let k = self.temporal.dim();
        let z = DMatrix::from_fn(m, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.spatial.factor * z * self.temporal.factor.transpose()
    }

    pub fn jitter(&self) -> (f64, f64) {
        (self.temporal.jitter, self.spatial.jitter)
    }
}

/// Space-time covariance with fbm time cells. The product structure makes the
/// Kronecker product of the two Cholesky factors a Cholesky factor of the
/// whole matrix, so only the two blocks are factorized.
pub fn build_spacetime_cov(
    grid: &NoiseGrid,
    spatial: &SpatialKernel,
    temporal: &TemporalKernel,
    cap: usize,
) -> Result<SpacetimeFactor> {
    let size = grid.steps * grid.len();
    if size > cap {
        return Err(Error::Config(format!("space-time covariance of size {size} exceeds the cap {cap}")));
    }
    let t = time_cov_matrix(temporal, grid.dt, grid.steps)?;
    let temporal = CovarianceFactor::factorize(t, format!("fbm time cells, {} steps", grid.steps))?;
    let spatial = build_space_cov(grid, spatial)?;
    Ok(SpacetimeFactor { temporal, spatial })
}
