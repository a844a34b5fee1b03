use std::path::{Path, PathBuf};

use caim_core::controller::ControllerConfig;
use caim_core::dynamics::IntegratorConfig;
use caim_core::metrics::MetricOptions;
use caim_core::models::AimModel;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Compare,
    MuSweep,
    TauSweep,
    RestartSweep,
    NoiseSweep,
    SingleRun,
    TheoryCheck,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Compare => "compare",
            Scenario::MuSweep => "mu_sweep",
            Scenario::TauSweep => "tau_sweep",
            Scenario::RestartSweep => "restart_sweep",
            Scenario::NoiseSweep => "noise_sweep",
            Scenario::SingleRun => "single_run",
            Scenario::TheoryCheck => "theory_check",
        }
    }

    pub fn is_sweep(self) -> bool {
        matches!(
            self,
            Scenario::MuSweep | Scenario::TauSweep | Scenario::RestartSweep | Scenario::NoiseSweep | Scenario::TheoryCheck
        )
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSource {
    Generate {
        n: usize,
        instances: usize,
        seed: u64,
        #[serde(default = "default_true")]
        include_zero: bool,
    },
    File {
        paths: Vec<PathBuf>,
    },
}

/// Filters applied to generated instances in `theory_check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryOptions {
    #[serde(default = "default_grid_res")]
    pub grid_res: usize,
    /// Minimum spectral gap above the ground level.
    #[serde(default = "default_min_gap")]
    pub min_gap: f64,
    #[serde(default = "default_true")]
    pub require_unique_ground: bool,
    /// Upper bound on generator draws while looking for admissible instances.
    #[serde(default = "default_max_draws")]
    pub max_draws: usize,
}

fn default_grid_res() -> usize {
    41
}
fn default_min_gap() -> f64 {
    0.2
}
fn default_max_draws() -> usize {
    10_000
}

impl Default for TheoryOptions {
    fn default() -> Self {
        TheoryOptions {
            grid_res: default_grid_res(),
            min_gap: default_min_gap(),
            require_unique_ground: true,
            max_draws: default_max_draws(),
        }
    }
}

fn default_restarts() -> usize {
    1
}
fn default_mu() -> f64 {
    1.0
}
fn default_oracle_max_n() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub model: AimModel,
    pub problem: ProblemSource,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Absent: only the autonomous machine runs.
    #[serde(default)]
    pub controller: Option<ControllerConfig>,
    /// Uniform weight of the autonomous machine outside `mu_sweep`.
    /// Compare runs use the controller's `mu_prime` instead when a controller is present.
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub metrics: MetricOptions,
    /// Fold biases into an extra reference spin before running.
    #[serde(default)]
    pub augment_bias: bool,
    /// Brute-force ground energies are computed when `n` is at most this.
    #[serde(default = "default_oracle_max_n")]
    pub oracle_max_n: usize,
    #[serde(default)]
    pub theory: TheoryOptions,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BenchError::ConfigParse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::ConfigParse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text, path)
    }

    pub fn problem_size(&self) -> Option<usize> {
        match &self.problem {
            ProblemSource::Generate { n, .. } => Some(*n + usize::from(self.augment_bias)),
            ProblemSource::File { .. } => None,
        }
    }

    /// Collects every offending field before failing.
    pub fn validate(&self) -> Result<()> {
        let mut bad: Vec<String> = Vec::new();
        let mut check = |field: &str, r: caim_core::Result<()>| {
            if let Err(e) = r {
                bad.push(format!("{field}: {e}"));
            }
        };
        check("model", self.model.validate());
        check("integrator", self.integrator.validate());
        if let Some(c) = &self.controller {
            check("controller", c.validate(self.integrator.dt));
            if c.sensor.is_some() && self.model.family != caim_core::Family::Oim {
                bad.push("controller.sensor: sensor-in-loop mode needs the oim family".into());
            }
        }
        if self.restarts == 0 {
            bad.push("restarts: must be >= 1".into());
        }
        if !self.mu.is_finite() {
            bad.push(format!("mu: must be finite, got {}", self.mu));
        }
        match &self.problem {
            ProblemSource::Generate { n, instances, .. } => {
                if *n == 0 {
                    bad.push("problem.n: must be >= 1".into());
                }
                if *instances == 0 {
                    bad.push("problem.instances: must be >= 1".into());
                }
            }
            ProblemSource::File { paths } => {
                if paths.is_empty() {
                    bad.push("problem.paths: must list at least one file".into());
                }
            }
        }
        if self.scenario.is_sweep() && self.sweep.is_empty() {
            bad.push(format!("sweep: must be non-empty for {}", self.scenario.name()));
        }
        if let Some(v) = self.sweep.iter().find(|v| !v.is_finite()) {
            bad.push(format!("sweep: non-finite value {v}"));
        }
        match self.scenario {
            Scenario::Compare | Scenario::TauSweep if self.controller.is_none() => {
                bad.push(format!("controller: required for {}", self.scenario.name()));
            }
            Scenario::TauSweep => {
                if let Some(v) = self.sweep.iter().find(|&&v| v < self.integrator.dt) {
                    bad.push(format!("sweep: tau {v} is shorter than dt"));
                }
            }
            Scenario::NoiseSweep => {
                if let Some(v) = self.sweep.iter().find(|&&v| v < 0.0) {
                    bad.push(format!("sweep: negative noise amplitude {v}"));
                }
            }
            Scenario::RestartSweep => {
                if let Some(v) = self.sweep.iter().find(|&&v| v < 1.0 || v.fract() != 0.0) {
                    bad.push(format!("sweep: restart count {v} is not a positive integer"));
                }
            }
            Scenario::TheoryCheck if self.theory.grid_res < 11 => {
                bad.push("theory.grid_res: must be >= 11".into());
            }
            _ => {}
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(BenchError::Config(bad.join("; ")))
        }
    }
}
