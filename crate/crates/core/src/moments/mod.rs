//! Moment estimators: Monte Carlo over solver paths, the two-point renewal
//! oracle, the Picard lower series, the chaos expansion for fbm time, and the
//! growth-rate fits applied to them.

mod chaos;
mod fit;
mod picard;
mod renewal;

pub use chaos::{chaos_second_moment_fbm, free_space_first_term, ChaosOptions, ChaosResult, ChaosTerm};
pub use fit::{lyapunov_fit, lyapunov_fit_logs, power_law_fit, rho_fit, student_t_quantile, LinearFit, PowerFit};
pub(crate) use fit::ols;
pub use picard::{picard_lower_series, SeriesValue};
pub use renewal::{phase_scan, renewal_second_moment, PhaseScan, RenewalSolution, Snapshot};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::StreamKey;
use crate::solver::Solver;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub replicates: usize,
    /// Batches for the batch-means confidence intervals.
    pub batches: usize,
    pub seed: u64,
    pub orders: Vec<u32>,
}

impl McConfig {
    pub fn new(replicates: usize, seed: u64, orders: Vec<u32>) -> Self {
        McConfig { replicates, batches: 20, seed, orders }
    }
}

/// Monte Carlo moments on a `times x points` grid. Every matrix is indexed
/// `(time, point)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub orders: Vec<u32>,
    pub times: Vec<f64>,
    pub points: Vec<f64>,
    #[serde(skip)]
    pub estimates: Vec<DMatrix<f64>>,
    /// 95% half-widths from batch means.
    #[serde(skip)]
    pub ci_half: Vec<DMatrix<f64>>,
    #[serde(skip)]
    pub mean: DMatrix<f64>,
    /// Standard error of `mean` from batch means.
    #[serde(skip)]
    pub mean_se: DMatrix<f64>,
    pub replicates: usize,
    pub used: usize,
    pub n_diverged: usize,
    /// False when every path diverged.
    pub usable: bool,
    pub seed: u64,
}

impl MomentEstimate {
    pub fn order_index(&self, p: u32) -> Option<usize> {
        self.orders.iter().position(|&q| q == p)
    }
}

#[derive(Clone)]
struct BatchSums {
    count: usize,
    diverged: usize,
    moments: Vec<DMatrix<f64>>,
    mean: DMatrix<f64>,
}

fn run_batch(solver: &Solver, seed: u64, range: std::ops::Range<usize>, orders: &[u32], shape: (usize, usize)) -> BatchSums {
    let mut out = BatchSums {
        count: 0,
        diverged: 0,
        moments: vec![DMatrix::zeros(shape.0, shape.1); orders.len()],
        mean: DMatrix::zeros(shape.0, shape.1),
    };
    for r in range {
        let path = solver.solve_path(StreamKey::new(seed, r as u64));
        if path.diverged() {
            out.diverged += 1;
            continue;
        }
        out.count += 1;
        out.mean += &path.values;
        for (acc, &p) in out.moments.iter_mut().zip(orders) {
            acc.zip_apply(&path.values, |a, u| *a += u.abs().powi(p as i32));
        }
    }
    out
}

/// Sample moments `E|u_t(x)|^p` over independent paths with batch-means
/// confidence intervals. Diverged paths are excluded and counted.
pub fn mc_moments(solver: &Solver, config: &McConfig) -> Result<MomentEstimate> {
    if config.replicates < 100 {
        return Err(Error::Config(format!("need at least 100 replicates, got {}", config.replicates)));
    }
    if config.batches < 2 || config.batches > config.replicates {
        return Err(Error::Config(format!("batch count {} out of range", config.batches)));
    }
    if config.orders.contains(&0) {
        return Err(Error::Config("moment orders must be positive".into()));
    }
    let times = solver.record_times();
    let shape = (times.len(), solver.points().len());
    let b = config.batches;
    let chunk = config.replicates.div_ceil(b);
    let batches: Vec<BatchSums> = (0..b)
        .into_par_iter()
        .map(|i| {
            let lo = (i * chunk).min(config.replicates);
            let hi = ((i + 1) * chunk).min(config.replicates);
            run_batch(solver, config.seed, lo..hi, &config.orders, shape)
        })
        .collect();

    let used: usize = batches.iter().map(|s| s.count).sum();
    let n_diverged: usize = batches.iter().map(|s| s.diverged).sum();
    let usable = used > 0;
    let live: Vec<&BatchSums> = batches.iter().filter(|s| s.count > 0).collect();
    let quantile = if live.len() >= 2 { student_t_quantile(0.975, (live.len() - 1) as f64) } else { f64::NAN };

    let summarize = |pick: &dyn Fn(&BatchSums) -> &DMatrix<f64>| -> (DMatrix<f64>, DMatrix<f64>) {
        let mut total = DMatrix::zeros(shape.0, shape.1);
        for s in &batches {
            total += pick(s);
        }
        let est = if usable { total / used as f64 } else { DMatrix::from_element(shape.0, shape.1, f64::NAN) };
        let means: Vec<DMatrix<f64>> = live.iter().map(|s| pick(s) / s.count as f64).collect();
        let k = means.len() as f64;
        let se = DMatrix::from_fn(shape.0, shape.1, |i, j| {
            if means.len() < 2 {
                return f64::NAN;
            }
            let m = means.iter().map(|a| a[(i, j)]).sum::<f64>() / k;
            let var = means.iter().map(|a| (a[(i, j)] - m).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        });
        (est, se)
    };

    let mut estimates = Vec::new();
    let mut ci_half = Vec::new();
    for o in 0..config.orders.len() {
        let (est, se) = summarize(&|s: &BatchSums| &s.moments[o]);
        estimates.push(est);
        ci_half.push(se * quantile);
    }
    let (mean, mean_se) = summarize(&|s: &BatchSums| &s.mean);
    Ok(MomentEstimate {
        orders: config.orders.clone(),
        times,
        points: solver.points().to_vec(),
        estimates,
        ci_half,
        mean,
        mean_se,
        replicates: config.replicates,
        used,
        n_diverged,
        usable,
        seed: config.seed,
    })
}
