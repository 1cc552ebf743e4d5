//! Run configuration: one TOML file, paths relative to the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use seiscox::datamodel::{GridSpec, TimeAxis, DEFAULT_BANDWIDTH_KM, DEFAULT_MIN_MAGNITUDE};
use seiscox::forecast::{HorizonLatent, DEFAULT_FORECAST_SAMPLES};
use seiscox::pressure::{PressureSource, SPTG_RMSE_BARA};
use seiscox::ratestate::{IntensityForm, DEFAULT_SIMPLIFY_THRESHOLD};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub grid: Option<GridSpec>,
    pub time: Option<TimeSpec>,
    pub data: Option<DataSpec>,
    pub pressure: Option<PressureSpec>,
    #[serde(default)]
    pub fit: FitSpec,
    #[serde(default)]
    pub sample: SampleSpec,
    pub forecast: Option<ForecastSection>,
    pub simulate: Option<SimulateSpec>,
    pub history_match: Option<HistorySpec>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub start_year: i32,
    pub n_years: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub catalog: PathBuf,
    pub production: PathBuf,
    #[serde(default = "default_min_magnitude")]
    pub min_magnitude: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_km: f64,
}

fn default_min_magnitude() -> f64 {
    DEFAULT_MIN_MAGNITUDE
}

fn default_bandwidth() -> f64 {
    DEFAULT_BANDWIDTH_KM
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureSpec {
    pub source: PressureSource,
    pub path: PathBuf,
    #[serde(default = "default_rmse")]
    pub rmse: f64,
    /// Last year of the mean field, for reservoir forecasts past the data window.
    pub until_year: Option<i32>,
    /// Overrides the error variance (the polynomial path otherwise uses its residual variance).
    pub sigma2: Option<f64>,
}

fn default_rmse() -> f64 {
    SPTG_RMSE_BARA
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub grad_tol: Option<f64>,
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub fix: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub burn_in: Option<usize>,
    pub samples: Option<usize>,
    pub step_size: Option<f64>,
    pub thinning: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormSpec {
    #[default]
    Auto,
    Full,
    Simplified,
}

impl FormSpec {
    pub fn form(self) -> IntensityForm {
        match self {
            FormSpec::Auto => IntensityForm::Auto(DEFAULT_SIMPLIFY_THRESHOLD),
            FormSpec::Full => IntensityForm::Full,
            FormSpec::Simplified => IntensityForm::Simplified,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastSection {
    pub years: Vec<i32>,
    #[serde(default = "default_forecast_samples")]
    pub n_samples: usize,
    /// Monthly well records covering the horizon; zero production when absent.
    pub production: Option<PathBuf>,
    #[serde(default = "default_horizon_latent")]
    pub horizon_latent: HorizonLatent,
    #[serde(default = "yes")]
    pub hold_pressure_flat: bool,
    #[serde(default)]
    pub form: FormSpec,
    #[serde(default = "yes")]
    pub gnuplot: bool,
}

fn default_forecast_samples() -> usize {
    DEFAULT_FORECAST_SAMPLES
}

fn default_horizon_latent() -> HorizonLatent {
    HorizonLatent::Prior
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub theta1: f64,
    pub theta2: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_b_value")]
    pub b_value: f64,
    #[serde(default = "default_min_magnitude")]
    pub min_magnitude: f64,
}

fn default_b_value() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub x_km: f64,
    pub y_km: f64,
    pub depth_km: f64,
    pub lx_km: f64,
    pub ly_km: f64,
    pub lz_km: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub name: String,
    pub temperature_k: f64,
    pub initial_pressure_bara: f64,
    #[serde(default)]
    pub blocks: Vec<BlockSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistorySpec {
    pub pvt: PathBuf,
    pub offtake: PathBuf,
    pub ranges: PathBuf,
    pub pressure_observations: PathBuf,
    pub benchmarks: Option<PathBuf>,
    #[serde(default = "default_poisson_ratio")]
    pub poisson_ratio: f64,
    #[serde(default = "default_simulations")]
    pub n_simulations: usize,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
    pub regions: Vec<RegionSpec>,
}

fn default_poisson_ratio() -> f64 {
    0.25
}

fn default_simulations() -> usize {
    500
}

/// A parsed config together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: PathBuf,
    pub base_dir: PathBuf,
    /// Hex SHA-256 of the config file bytes.
    pub hash: String,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Config {
            path: path.to_path_buf(),
            message: "config is not valid UTF-8".into(),
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig {
            config,
            path: path.to_path_buf(),
            base_dir,
            hash: hex::encode(Sha256::digest(&bytes)),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Resolve and check that an input file exists.
    pub fn input(&self, p: &Path) -> CliResult<PathBuf> {
        let full = self.resolve(p);
        if !full.is_file() {
            return Err(CliError::io(
                &full,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            ));
        }
        Ok(full)
    }

    pub fn section<'a, T>(&self, value: &'a Option<T>, name: &str) -> CliResult<&'a T> {
        value.as_ref().ok_or_else(|| CliError::Config {
            path: self.path.clone(),
            message: format!("missing [{name}] section"),
        })
    }

    pub fn axis(&self) -> CliResult<TimeAxis> {
        let t = self.section(&self.config.time, "time")?;
        Ok(TimeAxis::new(t.start_year, t.n_years)?)
    }
}
