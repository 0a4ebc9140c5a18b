//! The four subcommands. Each returns the files it wrote and a one-line
//! summary; `main` turns errors into exit codes.

use std::path::{Path, PathBuf};

use serde::Serialize;

use fshe_core::bounds::{cor3_curve, rho_exponent, thm1_curve, BoundParams};
use fshe_core::covariance::dalang_check;
use fshe_core::moments::{
    chaos_second_moment_fbm, lyapunov_fit, mc_moments, phase_scan, power_law_fit, ChaosOptions, LinearFit, McConfig,
    PhaseScan,
};
use fshe_core::solver::{validate_assumptions, Solver};
use fshe_core::spectral::SpectralBasis;
use fshe_core::verify::{run_verify, CheckResult, VerifySettings};
use fshe_core::Error;

use crate::config::{geomspace, step_of, ExperimentConfig, ScanMode};
use crate::error::{CliError, EXIT_OK, EXIT_VERIFY};
use crate::output::{write_csv, write_plot, PlotSeries};

/// Everything a command needs besides its own config section.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub config_hash: String,
    pub emit_plot_data: bool,
}

impl RunContext {
    /// Applies the `--seed` and `--out` overrides. The hash covers the
    /// effective config with the output directory blanked, so moving the
    /// output does not change the recorded provenance.
    pub fn new(mut config: ExperimentConfig, seed: Option<u64>, out: Option<PathBuf>, emit_plot_data: bool) -> Self {
        if let Some(s) = seed {
            config.seed = s;
        }
        if let Some(o) = out {
            config.out = o;
        }
        let out = config.out.clone();
        let mut hashed = config.clone();
        hashed.out = PathBuf::new();
        RunContext { seed: config.seed, config_hash: hashed.hash(), config, out, emit_plot_data }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
    pub exit_code: i32,
}

/// Integrability of the spatial kernel and the standing assumptions on
/// `u0` and `sigma`, checked before any run.
fn preflight(cfg: &ExperimentConfig, basis: &SpectralBasis) -> Result<(), CliError> {
    let spatial = cfg.spatial()?;
    let report = dalang_check(&spatial, cfg.operator.alpha, 1);
    if !report.holds {
        return Err(Error::Assumption(format!("spatial kernel `{}` fails the integrability condition", spatial.name())).into());
    }
    let u0 = cfg.initial_condition();
    validate_assumptions(|x| u0.value(x), basis.grid().nodes(), cfg.verify.eps, &cfg.sigma_spec()?).into_result()?;
    Ok(())
}

fn require_beta(cfg: &ExperimentConfig, what: &str) -> Result<f64, CliError> {
    cfg.riesz_beta().ok_or_else(|| CliError::config(format!("{what} needs the riesz spatial kernel")))
}

#[derive(Serialize)]
struct MomentRow {
    t: f64,
    x: f64,
    p: u32,
    estimate: f64,
    ci_half: f64,
    n_diverged: usize,
    seed: u64,
    config_hash: String,
}

#[derive(Serialize)]
struct BoundRow {
    form: &'static str,
    p: f64,
    t: f64,
    lower: f64,
    upper: f64,
    seed: u64,
    config_hash: String,
}

pub fn simulate(ctx: &RunContext) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let noise = cfg.noise_spec()?;
    if !noise.temporal.is_white() {
        return Err(CliError::config("simulate needs white-in-time noise"));
    }
    let basis = cfg.basis()?;
    preflight(cfg, &basis)?;
    let sigma = cfg.sigma_spec()?;
    let u0 = cfg.initial_condition();
    let dt = cfg.grid.dt;
    let steps = step_of(cfg.grid.horizon, dt)?;
    let record: Vec<usize> = cfg.grid.record_times.iter().map(|&t| step_of(t, dt)).collect::<Result<_, _>>()?;
    let solver = Solver::new(&basis, &noise, sigma, u0.coefficients(&basis), dt, steps, record, cfg.grid.points.clone())?;
    let mut mc = McConfig::new(cfg.simulate.replicates, ctx.seed, cfg.simulate.orders.clone());
    mc.batches = cfg.simulate.batches;
    let est = mc_moments(&solver, &mc)?;

    let mut rows = Vec::new();
    for (ti, &t) in est.times.iter().enumerate() {
        for (xi, &x) in est.points.iter().enumerate() {
            for (oi, &p) in est.orders.iter().enumerate() {
                rows.push(MomentRow {
                    t,
                    x,
                    p,
                    estimate: est.estimates[oi][(ti, xi)],
                    ci_half: est.ci_half[oi][(ti, xi)],
                    n_diverged: est.n_diverged,
                    seed: ctx.seed,
                    config_hash: ctx.config_hash.clone(),
                });
            }
        }
    }
    let mut files = vec![write_csv(&ctx.path("moments.csv"), &rows)?];

    let mut bound_rows = Vec::new();
    if let Some(beta) = cfg.riesz_beta() {
        let (l, big_l) = sigma.bounds();
        for &p in &est.orders {
            let mut params = BoundParams::new(cfg.operator.alpha, beta, 1, basis.mu1(), p as f64, noise.xi)?;
            params.delta = cfg.verify.delta;
            params.l_sigma = l;
            params.big_l_sigma = big_l;
            let curve = thm1_curve(&params)?;
            for (t, lower, upper) in curve.sample(&positive(&est.times))? {
                bound_rows.push(BoundRow {
                    form: "thm1",
                    p: p as f64,
                    t,
                    lower,
                    upper,
                    seed: ctx.seed,
                    config_hash: ctx.config_hash.clone(),
                });
            }
        }
        files.push(write_csv(&ctx.path("bounds.csv"), &bound_rows)?);
    }

    if ctx.emit_plot_data {
        let mut series = Vec::new();
        for (oi, &p) in est.orders.iter().enumerate() {
            for (xi, _) in est.points.iter().enumerate() {
                let pts = est.times.iter().enumerate().map(|(ti, &t)| (t, est.estimates[oi][(ti, xi)])).collect();
                series.push(PlotSeries::new(format!("moments_p{p}_x{xi}.dat"), pts));
            }
        }
        series.extend(bound_series(&bound_rows));
        files.extend(write_plot(&ctx.out, &series)?);
    }

    let summary = format!(
        "simulate: {} replicates, {} diverged, {} rows",
        est.replicates,
        est.n_diverged,
        rows.len()
    );
    Ok(Outcome { files, summary, exit_code: EXIT_OK })
}

fn positive(times: &[f64]) -> Vec<f64> {
    times.iter().copied().filter(|&t| t > 0.0).collect()
}

fn bound_series(rows: &[BoundRow]) -> Vec<PlotSeries> {
    let mut ps: Vec<f64> = rows.iter().map(|r| r.p).collect();
    ps.dedup();
    let mut out = Vec::new();
    for p in ps {
        let sel: Vec<&BoundRow> = rows.iter().filter(|r| r.p == p).collect();
        let form = sel.first().map_or("bound", |r| r.form);
        out.push(PlotSeries::new(
            format!("bounds_{form}_p{p}_lower.dat"),
            sel.iter().map(|r| (r.t, r.lower)).collect(),
        ));
        out.push(PlotSeries::new(
            format!("bounds_{form}_p{p}_upper.dat"),
            sel.iter().map(|r| (r.t, r.upper)).collect(),
        ));
    }
    out
}

#[derive(Serialize)]
struct PhaseRow {
    xi: f64,
    slope: f64,
    slope_ci: f64,
    bracket_lo: Option<f64>,
    bracket_hi: Option<f64>,
    seed: u64,
    config_hash: String,
}

/// Slopes by Monte Carlo, one solver per noise level.
fn mc_phase_scan(ctx: &RunContext, basis: &SpectralBasis) -> Result<PhaseScan, CliError> {
    let cfg = &ctx.config;
    let s = &cfg.scan;
    let noise = cfg.noise_spec()?;
    let beta = require_beta(cfg, "scan-xi")?;
    let steps = step_of(s.horizon, s.dt)?;
    let u0 = cfg.initial_condition().coefficients(basis);
    let record: Vec<usize> = (0..=steps).collect();
    let mut fits = Vec::new();
    for &xi in &cfg.noise.xi_scan {
        let solver = Solver::new(basis, &noise.with_xi(xi)?, cfg.sigma_spec()?, u0.clone(), s.dt, steps, record.clone(), vec![s.point])?;
        let est = mc_moments(&solver, &McConfig::new(s.replicates, ctx.seed, vec![2]))?;
        let values: Vec<f64> = est.estimates[0].column(0).iter().copied().collect();
        fits.push(lyapunov_fit(&est.times, &values, (s.window_start, f64::INFINITY))?);
    }
    Ok(summarize_scan(&cfg.noise.xi_scan, fits, cfg.operator.alpha, beta))
}

fn summarize_scan(xis: &[f64], fits: Vec<LinearFit>, alpha: f64, beta: f64) -> PhaseScan {
    let slopes: Vec<f64> = fits.iter().map(|f| f.slope).collect();
    let slope_ci: Vec<f64> = fits.iter().map(|f| f.slope_ci()).collect();
    let bracket = slopes
        .windows(2)
        .zip(xis.windows(2))
        .find(|(s, _)| s[0] < 0.0 && s[1] >= 0.0)
        .map(|(_, x)| (x[0], x[1]));
    let growth_power = 2.0 * alpha / (alpha - beta);
    PhaseScan {
        xis: xis.to_vec(),
        strictly_increasing: slopes.windows(2).all(|w| w[1] > w[0]),
        fits,
        slopes,
        slope_ci,
        bracket,
        growth_fit: None,
        growth_power,
    }
}

pub fn scan_xi(ctx: &RunContext) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let s = &cfg.scan;
    if cfg.noise.xi_scan.len() < 2 {
        return Err(CliError::config("scan-xi needs at least two noise levels in noise.xi_scan"));
    }
    let basis = cfg.basis()?;
    preflight(cfg, &basis)?;
    let scan = match s.mode {
        ScanMode::Renewal => {
            if !matches!(cfg.sigma, crate::config::SigmaConfig::Identity) {
                return Err(CliError::config("the renewal scan needs sigma = identity; use scan.mode = \"mc\""));
            }
            require_beta(cfg, "scan-xi")?;
            let steps = step_of(s.horizon, s.dt)?;
            let u0 = cfg.initial_condition().coefficients(&basis);
            phase_scan(&basis, &cfg.noise_spec()?, &cfg.noise.xi_scan, &u0, s.dt, steps, s.window_start, s.point)?
        }
        ScanMode::Mc => mc_phase_scan(ctx, &basis)?,
    };
    let rows: Vec<PhaseRow> = scan
        .xis
        .iter()
        .zip(scan.slopes.iter().zip(&scan.slope_ci))
        .map(|(&xi, (&slope, &slope_ci))| PhaseRow {
            xi,
            slope,
            slope_ci,
            bracket_lo: scan.bracket.map(|b| b.0),
            bracket_hi: scan.bracket.map(|b| b.1),
            seed: ctx.seed,
            config_hash: ctx.config_hash.clone(),
        })
        .collect();
    let mut files = vec![write_csv(&ctx.path("phase.csv"), &rows)?];
    if ctx.emit_plot_data {
        let pts = scan.xis.iter().copied().zip(scan.slopes.iter().copied()).collect();
        files.extend(write_plot(&ctx.out, &[PlotSeries::new("phase.dat".into(), pts)])?);
    }
    let summary = match scan.bracket {
        Some((lo, hi)) => format!("scan-xi: slope changes sign between xi = {lo} and xi = {hi}"),
        None => "scan-xi: no sign change in the scanned range".to_string(),
    };
    Ok(Outcome { files, summary, exit_code: EXIT_OK })
}

#[derive(Serialize)]
struct RhoRow {
    n: usize,
    t: f64,
    term: f64,
    mc_error: f64,
    low_precision: bool,
    fitted_exponent: f64,
    rho_reference: f64,
    seed: u64,
    config_hash: String,
}

#[derive(Serialize)]
struct CurveRow {
    t: f64,
    lower: f64,
    upper: f64,
    seed: u64,
    config_hash: String,
}

pub fn fit_rho(ctx: &RunContext) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let r = &cfg.rho;
    if !matches!(cfg.sigma, crate::config::SigmaConfig::Identity) {
        return Err(CliError::config("fit-rho needs sigma = identity"));
    }
    let noise = cfg.noise_spec()?;
    let hurst = noise.temporal.hurst().ok_or_else(|| CliError::config("fit-rho needs fbm temporal noise"))?;
    let beta = require_beta(cfg, "fit-rho")?;
    let alpha = cfg.operator.alpha;
    if r.count < 3 || !(r.t_min > 0.0 && r.t_max > r.t_min) {
        return Err(CliError::config("rho needs 0 < t_min < t_max and at least three times"));
    }
    let basis = SpectralBasis::new(alpha, r.n_modes, r.grid_size)?;
    preflight(cfg, &basis)?;
    let u0 = cfg.initial_condition();
    let times = geomspace(r.t_min, r.t_max, r.count);
    let opts = ChaosOptions::new(r.samples, ctx.seed);
    let results = times
        .iter()
        .map(|&t| chaos_second_moment_fbm(&basis, &noise, &u0, t, r.x, r.n_max, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    let reference = rho_exponent(alpha, beta, hurst);
    let mu1 = basis.mu1();

    let mut rows = Vec::new();
    let mut series = Vec::new();
    for k in 0..r.n_max {
        let n = k + 1;
        let undamped: Vec<f64> = results.iter().map(|c| c.terms[k].value * (2.0 * mu1 * c.t).exp()).collect();
        let fitted = power_law_fit(&times, &undamped).map(|f| f.exponent).unwrap_or(f64::NAN);
        for c in &results {
            let term = &c.terms[k];
            rows.push(RhoRow {
                n,
                t: c.t,
                term: term.value,
                mc_error: term.mc_error,
                low_precision: term.low_precision,
                fitted_exponent: fitted,
                rho_reference: reference,
                seed: ctx.seed,
                config_hash: ctx.config_hash.clone(),
            });
        }
        series.push(PlotSeries::new(format!("rho_n{n}.dat"), results.iter().map(|c| (c.t, c.terms[k].value)).collect()));
    }
    let mut files = vec![write_csv(&ctx.path("rho.csv"), &rows)?];

    let mut params = BoundParams::new(alpha, beta, 1, mu1, 2.0, noise.xi)?.with_hurst(hurst)?;
    params.delta = cfg.verify.delta;
    let curve = cor3_curve(&params)?;
    let bound_rows: Vec<CurveRow> = curve
        .sample(&times)?
        .into_iter()
        .map(|(t, lower, upper)| CurveRow { t, lower, upper, seed: ctx.seed, config_hash: ctx.config_hash.clone() })
        .collect();
    files.push(write_csv(&ctx.path("bounds.csv"), &bound_rows)?);

    if ctx.emit_plot_data {
        series.push(PlotSeries::new("bounds_cor3_lower.dat".into(), bound_rows.iter().map(|b| (b.t, b.lower)).collect()));
        series.push(PlotSeries::new("bounds_cor3_upper.dat".into(), bound_rows.iter().map(|b| (b.t, b.upper)).collect()));
        files.extend(write_plot(&ctx.out, &series)?);
    }
    let flagged = rows.iter().filter(|r| r.low_precision).count();
    let summary = format!("fit-rho: reference exponent {reference}, {flagged} low-precision terms");
    Ok(Outcome { files, summary, exit_code: EXIT_OK })
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    seed: u64,
    config_hash: &'a str,
    passed: bool,
    checks: &'a [CheckResult],
}

pub fn verify_settings(cfg: &ExperimentConfig) -> Result<VerifySettings, CliError> {
    Ok(VerifySettings {
        alpha: cfg.operator.alpha,
        beta: require_beta(cfg, "verify")?,
        n_modes: cfg.operator.n_modes,
        grid_size: cfg.operator.grid_size,
        eps: cfg.verify.eps,
        delta: cfg.verify.delta,
    })
}

pub fn verify(ctx: &RunContext) -> Result<Outcome, CliError> {
    let checks = run_verify(&verify_settings(&ctx.config)?)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.check.as_str()).collect();
    let report = VerifyReport { seed: ctx.seed, config_hash: &ctx.config_hash, passed: failed.is_empty(), checks: &checks };
    let path = ctx.path("verify.json");
    ensure_dir(&ctx.out)?;
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::io(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text)?;
    let (summary, exit_code) = if failed.is_empty() {
        (format!("verify: {} checks passed", checks.len()), EXIT_OK)
    } else {
        (format!("verify: FAIL in {}", failed.join(", ")), EXIT_VERIFY)
    };
    Ok(Outcome { files: vec![path], summary, exit_code })
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))
}
