//! Run configuration: a JSON file, optionally wrapped in a manifest, with flag overrides on top.

use std::path::{Path, PathBuf};

use qbgmm::limit_lab::ExperimentSpec;
use qbgmm::moments::ColumnMapping;
use qbgmm::param::{Axis, GridSpec, ParamBox};
use serde::{Deserialize, Serialize};

use crate::fail::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub columns: Option<ColumnMapping>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    QuantileIv,
    LinearIv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    0.5
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::QuantileIv,
            tau: default_tau(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `flat`, or `normal` (independent, centered in the box, sd a quarter of each side).
    #[serde(default = "default_density")]
    pub density: String,
}

fn default_density() -> String {
    "flat".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            draws: 60_000,
            burn_in: 10_000,
            thin: 5,
            chains: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceName {
    Pstar,
    P0,
    Mixture,
}

/// Settings for `simulate`: replications of the calibrated design built on the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Sample size per replication; defaults to the dataset size.
    #[serde(default)]
    pub n: Option<usize>,
    pub reps: usize,
    pub source: SourceName,
    /// Calibration point; estimated by CUE when absent.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n: None,
            reps: 1000,
            source: SourceName::Pstar,
            theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub prior: Option<PriorConfig>,
    /// Per-axis grid; defaults to the prior box with 151 x 201 points when two-dimensional.
    #[serde(default)]
    pub grid: Option<Vec<Axis>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_cond_draws")]
    pub cond_draws: usize,
    #[serde(default)]
    pub mcmc: McmcConfig,
    pub seed: Option<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// 0 keeps the default thread pool.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    #[serde(default)]
    pub experiment: Option<ExperimentSpec>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub simulate: SimulateConfig,
    /// Directory of a previous run for `plot`.
    #[serde(default)]
    pub input: Option<PathBuf>,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_cond_draws() -> usize {
    1000
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_reps() -> usize {
    10_000
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

/// What a run writes next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: RunConfig,
}

/// Read a config file; a manifest from an earlier run is accepted too.
pub fn load(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let inner = match value.get("config") {
        Some(c) if value.get("version").is_some() => c.clone(),
        _ => value,
    };
    serde_json::from_value(inner).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Parse `AX:MIN:MAX:COUNT`; `AX` is the 1-based axis index.
pub fn parse_grid_axis(s: &str) -> Result<(usize, Axis), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 4 {
        return Err(format!("grid axis `{s}` is not AX:MIN:MAX:COUNT"));
    }
    let ax: usize = parts[0].parse().map_err(|_| format!("bad axis index in `{s}`"))?;
    let min: f64 = parts[1].parse().map_err(|_| format!("bad minimum in `{s}`"))?;
    let max: f64 = parts[2].parse().map_err(|_| format!("bad maximum in `{s}`"))?;
    let count: usize = parts[3].parse().map_err(|_| format!("bad count in `{s}`"))?;
    if ax == 0 {
        return Err(format!("axis index in `{s}` starts at 1"));
    }
    Ok((ax, Axis { min, max, count }))
}

pub fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number `{p}` in `{s}`")))
        .collect()
}

impl RunConfig {
    pub fn seed(&self) -> Result<u64, Failure> {
        self.seed
            .ok_or_else(|| Failure::config("no seed given; pass --seed or set `seed` in the config".into()))
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.seed()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Failure::config(format!("alpha {} outside (0,1)", self.alpha)));
        }
        if !(self.model.tau > 0.0 && self.model.tau < 1.0) {
            return Err(Failure::config(format!("tau {} outside (0,1)", self.model.tau)));
        }
        if let Some(axes) = &self.grid {
            if axes.iter().any(|a| a.count == 0) {
                return Err(Failure::config("grid counts must be at least 1".into()));
            }
        }
        if let Some(p) = &self.prior {
            ParamBox::new(p.lower.clone(), p.upper.clone()).map_err(|e| Failure::config(format!("prior box: {e}")))?;
            if p.density != "flat" && p.density != "normal" {
                return Err(Failure::config(format!("unknown prior density `{}`", p.density)));
            }
        }
        if self.mcmc.chains == 0 || self.mcmc.thin == 0 || self.mcmc.draws == 0 {
            return Err(Failure::config("mcmc draws, thin and chains must be positive".into()));
        }
        Ok(())
    }

    pub fn prior_box(&self) -> Result<ParamBox, Failure> {
        let p = self
            .prior
            .as_ref()
            .ok_or_else(|| Failure::config("this command needs a `prior` box".into()))?;
        ParamBox::new(p.lower.clone(), p.upper.clone()).map_err(|e| Failure::config(format!("prior box: {e}")))
    }

    pub fn grid_spec(&self) -> Result<GridSpec, Failure> {
        let axes = match &self.grid {
            Some(a) => a.clone(),
            None => {
                let b = self.prior_box()?;
                let counts: &[usize] = if b.dim() == 2 { &[151, 201] } else { &[51] };
                if b.dim() > 2 {
                    return Err(Failure::config("no grid given for a prior of dimension > 2".into()));
                }
                GridSpec::over_box(&b, counts).map_err(|e| Failure::config(e.to_string()))?.axes
            }
        };
        GridSpec::new(axes).map_err(|e| Failure::config(format!("grid: {e}")))
    }
}
