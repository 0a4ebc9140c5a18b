//! Experiment configuration read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fshe_core::covariance::{NoiseSpec, SpatialKernel, TemporalKernel};
use fshe_core::solver::{InitialCondition, SigmaSpec};
use fshe_core::spectral::SpectralBasis;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub sigma: SigmaConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub rho: RhoConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorConfig {
    pub alpha: f64,
    pub n_modes: usize,
    pub grid_size: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig { alpha: 2.0, n_modes: 64, grid_size: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub xi: f64,
    pub xi_scan: Vec<f64>,
    pub spatial: SpatialConfig,
    pub temporal: TemporalConfig,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            xi: 1.0,
            xi_scan: geomspace(0.05, 8.0, 12),
            spatial: SpatialConfig::Riesz { beta: 0.5 },
            temporal: TemporalConfig::White,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpatialConfig {
    White,
    Riesz { beta: f64 },
    Bessel { eta: f64 },
    Fractional { hurst: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TemporalConfig {
    White,
    Fbm { hurst: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SigmaConfig {
    #[default]
    Identity,
    Linear { lambda: f64 },
    SinePerturbed { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialConfig {
    Constant { value: f64 },
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dt: f64,
    pub horizon: f64,
    pub points: Vec<f64>,
    pub record_times: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dt: 0.005,
            horizon: 1.0,
            points: vec![-0.5, 0.0, 0.5],
            record_times: vec![0.25, 0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub replicates: usize,
    pub batches: usize,
    pub orders: Vec<u32>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { replicates: 10_000, batches: 20, orders: vec![2] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    #[default]
    Renewal,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub mode: ScanMode,
    pub dt: f64,
    pub horizon: f64,
    pub window_start: f64,
    pub point: f64,
    /// Paths per noise level in `mc` mode.
    pub replicates: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { mode: ScanMode::Renewal, dt: 0.001, horizon: 2.0, window_start: 1.0, point: 0.0, replicates: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RhoConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
    pub n_max: usize,
    pub samples: usize,
    pub x: f64,
    /// Basis used by the chaos integrals; finer than the operator basis
    /// because the fitting window sits at short times.
    pub n_modes: usize,
    pub grid_size: usize,
}

impl Default for RhoConfig {
    fn default() -> Self {
        RhoConfig { t_min: 0.001, t_max: 0.01, count: 6, n_max: 2, samples: 200_000, x: 0.0, n_modes: 512, grid_size: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub eps: f64,
    pub delta: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { eps: 0.25, delta: 0.1 }
    }
}

/// `count` points from `lo` to `hi`, equally spaced in log scale.
pub fn geomspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let step = (hi / lo).ln() / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { hi } else { lo * (step * i as f64).exp() })
        .collect()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("invalid config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn basis(&self) -> Result<SpectralBasis, CliError> {
        Ok(SpectralBasis::new(self.operator.alpha, self.operator.n_modes, self.operator.grid_size)?)
    }

    pub fn spatial(&self) -> Result<SpatialKernel, CliError> {
        Ok(match &self.noise.spatial {
            SpatialConfig::White => SpatialKernel::white(1)?,
            SpatialConfig::Riesz { beta } => SpatialKernel::riesz(*beta, 1)?,
            SpatialConfig::Bessel { eta } => SpatialKernel::bessel(*eta, 1)?,
            SpatialConfig::Fractional { hurst } => SpatialKernel::fractional(hurst.clone())?,
        })
    }

    pub fn temporal(&self) -> Result<TemporalKernel, CliError> {
        Ok(match self.noise.temporal {
            TemporalConfig::White => TemporalKernel::White,
            TemporalConfig::Fbm { hurst } => TemporalKernel::fbm(hurst)?,
        })
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec, CliError> {
        Ok(NoiseSpec::new(self.noise.xi, self.spatial()?, self.temporal()?)?)
    }

    pub fn sigma_spec(&self) -> Result<SigmaSpec, CliError> {
        Ok(match self.sigma {
            SigmaConfig::Identity => SigmaSpec::Identity,
            SigmaConfig::Linear { lambda } => SigmaSpec::linear(lambda)?,
            SigmaConfig::SinePerturbed { lambda } => SigmaSpec::sine_perturbed(lambda)?,
        })
    }

    pub fn initial_condition(&self) -> InitialCondition {
        match self.initial {
            InitialConfig::Constant { value } => InitialCondition::Constant { value },
        }
    }

    pub fn riesz_beta(&self) -> Option<f64> {
        match self.noise.spatial {
            SpatialConfig::Riesz { beta } => Some(beta),
            _ => None,
        }
    }
}

/// Step index of `t` on a grid of width `dt`, if `t` is a grid time.
pub fn step_of(t: f64, dt: f64) -> Result<usize, CliError> {
    let k = (t / dt).round();
    if !(t >= 0.0) || (k * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(CliError::config(format!("time {t} is not a multiple of dt = {dt}")));
    }
    Ok(k as usize)
}
