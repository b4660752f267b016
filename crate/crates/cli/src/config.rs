use std::path::{Path, PathBuf};

use casimir_core::{
    AngularSpec, BoundaryCondition, CurveSpec, EigenMethod, QuadratureSpec, ScanOptions, SceneConfig,
    SweepParameter,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Energy,
    Sweep,
    Torque,
    Eigen,
    Fit,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Energy => "energy",
            Task::Sweep => "sweep",
            Task::Torque => "torque",
            Task::Eigen => "eigen",
            Task::Fit => "fit",
        }
    }
}

/// Sweep grid: explicit values, or `count` evenly spaced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Run a conductor scene once per boundary condition, side by side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_conditions: Option<Vec<BoundaryCondition>>,
}

impl SweepConfig {
    pub fn linspace(parameter: SweepParameter, start: f64, stop: f64, count: usize) -> Self {
        SweepConfig {
            parameter,
            values: None,
            start: Some(start),
            stop: Some(stop),
            count: Some(count),
            boundary_conditions: None,
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        match (&self.values, self.start, self.stop, self.count) {
            (Some(v), None, None, None) if !v.is_empty() => check_monotone(v.clone()),
            (None, Some(a), Some(b), Some(n)) if n >= 2 => {
                check_monotone((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect())
            }
            _ => Err(CliError::config(
                "sweep needs either non-empty `values` or `start`, `stop` and `count >= 2`",
            )),
        }
    }
}

fn check_monotone(grid: Vec<f64>) -> Result<Vec<f64>, CliError> {
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if (up || down) && grid.iter().all(|v| v.is_finite()) {
        Ok(grid)
    } else {
        Err(CliError::config("sweep grid must be finite and strictly monotone"))
    }
}

fn default_delta() -> f64 {
    casimir_core::energy::TORQUE_STEP
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorqueConfig {
    pub phi0: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_method() -> EigenMethod {
    EigenMethod::Pmm
}

fn default_bc() -> BoundaryCondition {
    BoundaryCondition::Dirichlet
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    pub curve: CurveSpec,
    #[serde(default = "default_bc")]
    pub bc: BoundaryCondition,
    #[serde(default = "default_method")]
    pub method: EigenMethod,
    pub range: [f64; 2],
    pub truncation: usize,
    #[serde(default)]
    pub scan: ScanOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// A `phi0,energy,error` table to fit; without it the sweep is run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

/// One CLI run. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneConfig>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub angular: AngularSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torque: Option<TorqueConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigen: Option<EigenConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
}

impl RunConfig {
    pub fn scene(&self) -> Result<&SceneConfig, CliError> {
        self.scene
            .as_ref()
            .ok_or_else(|| CliError::config(format!("task `{}` needs a `scene`", self.task.name())))
    }

    pub fn sweep(&self) -> Result<&SweepConfig, CliError> {
        self.sweep
            .as_ref()
            .ok_or_else(|| CliError::config(format!("task `{}` needs a `sweep`", self.task.name())))
    }
}

/// Parses a run config. A metadata sidecar, which carries the config under
/// `config`, is accepted too.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid JSON: {e}")))?;
    if let Some(inner) = value.get_mut("config") {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(|e| CliError::config(format!("invalid config: {e}")))
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}
