//! Exponential Euler time stepping of the mild equation in spectral space.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::covariance::{dalang_check, NoiseSpec};
use crate::error::{Error, Result};
use crate::noise::{build_space_cov, CovarianceFactor, NoiseGrid};
use crate::rng::StreamKey;
use crate::spectral::SpectralBasis;
use libm::erf;

/// Paths with any `|u|` above this are stopped and flagged.
pub const BLOW_UP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SigmaSpec {
    Identity,
    Linear { lambda: f64 },
    SinePerturbed { lambda: f64 },
}

impl SigmaSpec {
    pub fn linear(lambda: f64) -> Result<Self> {
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(Error::Config(format!("linear sigma needs a finite nonzero slope, got {lambda}")));
        }
        Ok(SigmaSpec::Linear { lambda })
    }

    pub fn sine_perturbed(lambda: f64) -> Result<Self> {
        if !(lambda.abs() < 1.0) {
            return Err(Error::Config(format!("sine perturbation needs |lambda| < 1, got {lambda}")));
        }
        Ok(SigmaSpec::SinePerturbed { lambda })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            SigmaSpec::Identity => x,
            SigmaSpec::Linear { lambda } => lambda * x,
            SigmaSpec::SinePerturbed { lambda } => x + lambda * x.sin(),
        }
    }

    /// Declared `(l_sigma, L_sigma)`.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            SigmaSpec::Identity => (1.0, 1.0),
            SigmaSpec::Linear { lambda } => (lambda.abs(), lambda.abs()),
            SigmaSpec::SinePerturbed { lambda } => (1.0 - lambda.abs(), 1.0 + lambda.abs()),
        }
    }

    /// Check `l |x| <= |sigma(x)| <= L |x|` on a sample grid.
    pub fn spot_check(&self) -> bool {
        let (l, u) = self.bounds();
        (-400..=400).map(|i| i as f64 * 0.05).all(|x| {
            let s = self.apply(x).abs();
            s >= l * x.abs() * (1.0 - 1e-12) && s <= u * x.abs() * (1.0 + 1e-12)
        })
    }
}

/// Initial data of the equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialCondition {
    Constant { value: f64 },
}

impl InitialCondition {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            InitialCondition::Constant { value } if x.abs() < 1.0 => value,
            InitialCondition::Constant { .. } => 0.0,
        }
    }

    /// Exact basis coefficients: `4c / (n pi)` for odd `n`, zero for even.
    pub fn coefficients(&self, basis: &SpectralBasis) -> DVector<f64> {
        let InitialCondition::Constant { value } = *self;
        DVector::from_fn(basis.n_modes(), |i, _| {
            let n = i + 1;
            if n % 2 == 1 {
                4.0 * value / (n as f64 * std::f64::consts::PI)
            } else {
                0.0
            }
        })
    }

    /// `(G u0)_t(x)` with the untruncated kernel: images with the error
    /// function for `alpha = 2` at short times, the odd-mode series otherwise.
    pub fn semigroup(&self, alpha: f64, t: f64, x: f64) -> f64 {
        let InitialCondition::Constant { value } = *self;
        if t <= 0.0 {
            return self.value(x);
        }
        if !(x.abs() < 1.0) {
            return 0.0;
        }
        if alpha == 2.0 && t < 0.25 {
            let scale = 2.0 * t.sqrt();
            let e = |u: f64| erf(u / scale);
            let mut total = 0.0;
            for k in -2..=2 {
                let c = x + 4.0 * k as f64;
                total += 0.5 * (e(c + 1.0) - e(c - 1.0)) - 0.5 * (e(c - 1.0) - e(c - 3.0));
            }
            return value * total;
        }
        let mut total = 0.0;
        let mut n = 1usize;
        loop {
            let amp = 4.0 / (n as f64 * std::f64::consts::PI) * (-crate::spectral::eigenvalue(alpha, n) * t).exp();
            total += amp * crate::spectral::eigenfunction(n, x);
            if amp < 1e-17 || n > 1_000_000 {
                break;
            }
            n += 2;
        }
        value * total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub bounded: bool,
    pub nonnegative: bool,
    pub inf_on_shrunk: f64,
    pub l_sigma: f64,
    pub upper_sigma: f64,
    pub sigma_ok: bool,
    pub passed: bool,
    pub messages: Vec<String>,
}

impl AssumptionReport {
    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::Assumption(self.messages.join("; ")))
        }
    }
}

/// Check the initial condition on `points` and the coefficient bounds.
pub fn validate_assumptions<F: Fn(f64) -> f64>(u0: F, points: &[f64], eps: f64, sigma: &SigmaSpec) -> AssumptionReport {
    let mut messages = Vec::new();
    let values: Vec<f64> = points.iter().map(|&x| u0(x)).collect();
    let bounded = values.iter().all(|v| v.is_finite());
    if !bounded {
        messages.push("initial condition is not bounded".to_string());
    }
    let nonnegative = values.iter().all(|v| *v >= 0.0);
    if !nonnegative {
        messages.push("initial condition takes negative values".to_string());
    }
    let inf_on_shrunk = points
        .iter()
        .zip(&values)
        .filter(|(x, _)| x.abs() < 1.0 - eps)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    if !(inf_on_shrunk > 0.0 && inf_on_shrunk.is_finite()) {
        messages.push(format!("initial condition infimum on the shrunk domain is {inf_on_shrunk}"));
    }
    let (l_sigma, upper_sigma) = sigma.bounds();
    let sigma_ok = l_sigma > 0.0 && sigma.spot_check();
    if !sigma_ok {
        messages.push("sigma violates its declared linear bounds".to_string());
    }
    AssumptionReport {
        bounded,
        nonnegative,
        inf_on_shrunk,
        l_sigma,
        upper_sigma,
        sigma_ok,
        passed: messages.is_empty(),
        messages,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSample {
    pub times: Vec<f64>,
    pub points: Vec<f64>,
    /// `times.len() x points.len()`; rows after a divergence are absent.
    #[serde(skip)]
    pub values: DMatrix<f64>,
    pub seed: u64,
    pub replicate: u64,
    /// First step at which the blow-up guard fired.
    pub diverged_at: Option<usize>,
}

impl FieldSample {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Everything that is shared between paths of one configuration.
#[derive(Debug, Clone)]
pub struct Solver {
    xi: f64,
    sigma: SigmaSpec,
    dt: f64,
    steps: usize,
    u0: DVector<f64>,
    damp: DVector<f64>,
    /// `N x M`: grid values to coefficients, `h phi_n(x_j)`.
    project: DMatrix<f64>,
    /// `M x N`: coefficients to grid values.
    synth: DMatrix<f64>,
    noise: CovarianceFactor,
    record_steps: Vec<usize>,
    points: Vec<f64>,
    /// `P x N`: coefficients to values at the observation points.
    observe: DMatrix<f64>,
}

impl Solver {
    /// `record_steps` lists the step indices (0 = initial time) at which `u`
    /// is read at `points`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        basis: &SpectralBasis,
        noise: &NoiseSpec,
        sigma: SigmaSpec,
        u0: DVector<f64>,
        dt: f64,
        steps: usize,
        record_steps: Vec<usize>,
        points: Vec<f64>,
    ) -> Result<Self> {
        if !noise.temporal.is_white() {
            return Err(Error::Config("pathwise simulation needs white-in-time noise".into()));
        }
        noise.check_pairing(basis.alpha())?;
        if !dalang_check(&noise.spatial, basis.alpha(), noise.spatial.d).holds {
            return Err(Error::Assumption("spatial kernel fails the integrability condition".into()));
        }
        if u0.len() != basis.n_modes() {
            return Err(Error::Config("initial coefficients do not match the basis".into()));
        }
        if record_steps.iter().any(|&k| k > steps) {
            return Err(Error::Config("record step beyond the horizon".into()));
        }
        if points.iter().any(|x| !(x.abs() < 1.0)) {
            return Err(Error::Config("observation points must lie in (-1, 1)".into()));
        }
        let grid = NoiseGrid::from_grid(basis.grid(), dt, steps)?;
        let factor = build_space_cov(&grid, &noise.spatial)?;
        let damp = DVector::from_iterator(basis.n_modes(), basis.eigenvalues().iter().map(|mu| (-mu * dt).exp()));
        let observe = DMatrix::from_fn(points.len(), basis.n_modes(), |p, n| {
            crate::spectral::eigenfunction(n + 1, points[p])
        });
        Ok(Solver {
            xi: noise.xi,
            sigma,
            dt,
            steps,
            u0,
            damp,
            project: basis.modes() * basis.grid().spacing(),
            synth: basis.modes().transpose(),
            noise: factor,
            record_steps,
            points,
            observe,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn record_times(&self) -> Vec<f64> {
        self.record_steps.iter().map(|&k| k as f64 * self.dt).collect()
    }

    pub fn noise_factor(&self) -> &CovarianceFactor {
        &self.noise
    }

    /// One trajectory driven by the streams of `key`.
    pub fn solve_path(&self, key: StreamKey) -> FieldSample {
        let n_rec = self.record_steps.len();
        let mut values = DMatrix::zeros(n_rec, self.points.len());
        let mut coeffs = self.u0.clone();
        let mut next_rec = 0;
        let mut diverged_at = None;

        let record = |k: usize, coeffs: &DVector<f64>, values: &mut DMatrix<f64>, next_rec: &mut usize| {
            while *next_rec < n_rec && self.record_steps[*next_rec] == k {
                let obs = &self.observe * coeffs;
                values.row_mut(*next_rec).copy_from(&obs.transpose());
                *next_rec += 1;
            }
        };
        record(0, &coeffs, &mut values, &mut next_rec);

        for k in 0..self.steps {
            if self.xi != 0.0 {
                let mut u = &self.synth * &coeffs;
                if u.iter().any(|v| !(v.abs() <= BLOW_UP)) {
                    diverged_at = Some(k);
                    break;
                }
                let mut rng = key.step(k as u64);
                let dw = self.noise.sample(&mut rng, self.dt);
                for (v, w) in u.iter_mut().zip(dw.iter()) {
                    *v = self.sigma.apply(*v) * w;
                }
                coeffs.gemv(self.xi, &self.project, &u, 1.0);
            }
            coeffs.component_mul_assign(&self.damp);
            record(k + 1, &coeffs, &mut values, &mut next_rec);
        }
        let values = values.rows(0, next_rec).into_owned();
        FieldSample {
            times: self.record_times()[..next_rec].to_vec(),
            points: self.points.clone(),
            values,
            seed: key.seed,
            replicate: key.replicate,
            diverged_at,
        }
    }
}

/// Single-path convenience wrapper recording every step on the basis grid.
pub fn solve_path(
    basis: &SpectralBasis,
    noise: &NoiseSpec,
    sigma: SigmaSpec,
    u0: DVector<f64>,
    dt: f64,
    steps: usize,
    key: StreamKey,
) -> Result<FieldSample> {
    let solver = Solver::new(basis, noise, sigma, u0, dt, steps, (0..=steps).collect(), basis.grid().nodes().to_vec())?;
    Ok(solver.solve_path(key))
}
