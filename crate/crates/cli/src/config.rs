//! Run configuration: one TOML file describing grid, scenario, flow,
//! stepping, and diagnostics. Unknown keys anywhere are hard errors: a
//! silently ignored typo in a threshold name would corrupt an acceptance
//! run, so parsing rejects rather than guesses.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wavemap_core::analysis::ClassifierThresholds;
use wavemap_core::evolve::{Flow, StepControl};
use wavemap_core::Grading;

use crate::error::{config_err, CliError, Result};
use crate::scenarios::{scenario_from_table, Scenario};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Equivariance degree, k >= 1.
    pub k: u32,
    #[serde(default)]
    pub flow: FlowChoice,
    pub t_final: f64,
    /// Snapshot spacing in simulation time.
    pub cadence: f64,
    /// Generator seed for randomized scenarios; recorded in every summary.
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--output` on the command line overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub grid: GridConfig,
    #[serde(default)]
    pub control: ControlConfig,
    /// Scenario table: a `name` key plus that scenario's own parameters,
    /// validated against the scenario's schema before any computation.
    pub scenario: toml::Table,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub thresholds: ThresholdsConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowChoice {
    #[default]
    Nonlinear,
    Linear,
}

impl FlowChoice {
    pub fn as_flow(self) -> Flow {
        match self {
            FlowChoice::Nonlinear => Flow::Nonlinear,
            FlowChoice::Linear => Flow::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r_max: f64,
    pub n: usize,
    #[serde(default)]
    pub grading: GradingChoice,
    /// Consecutive node ratio in (0, 1); required iff grading is geometric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradingChoice {
    #[default]
    Uniform,
    Geometric,
}

impl GridConfig {
    pub fn grading(&self) -> Result<Grading> {
        match (self.grading, self.ratio) {
            (GradingChoice::Uniform, None) => Ok(Grading::Uniform),
            (GradingChoice::Uniform, Some(_)) => {
                config_err("grid.ratio is only meaningful with geometric grading")
            }
            (GradingChoice::Geometric, Some(ratio)) => Ok(Grading::Geometric { ratio }),
            (GradingChoice::Geometric, None) => {
                config_err("geometric grading requires grid.ratio")
            }
        }
    }
}

/// Step-control overrides; unset fields take the solver defaults.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_floor: Option<f64>,
}

impl ControlConfig {
    pub fn step_control(&self) -> StepControl {
        let d = StepControl::default();
        StepControl {
            cfl: self.cfl.unwrap_or(d.cfl),
            dt_min: self.dt_min.unwrap_or(d.dt_min),
            energy_cap: self.energy_cap.unwrap_or(d.energy_cap),
            resolution_floor: self.resolution_floor.unwrap_or(d.resolution_floor),
        }
    }

    pub fn filled(control: StepControl) -> Self {
        ControlConfig {
            cfl: Some(control.cfl),
            dt_min: Some(control.dt_min),
            energy_cap: Some(control.energy_cap),
            resolution_floor: Some(control.resolution_floor),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Track two-bubble scales along the trajectory (fits.csv).
    #[serde(default = "yes")]
    pub fit: bool,
    /// Extract the radiation component before fitting.
    #[serde(default = "yes")]
    pub radiation: bool,
    /// Report the decomposition's energy bookkeeping in run.json.
    #[serde(default = "yes")]
    pub budget: bool,
    /// Classify the outcome (verdict.json).
    #[serde(default = "yes")]
    pub classify: bool,
    /// Exterior matching radius for global radiation, as a fraction of t:
    /// rho(t) = fraction * t.
    #[serde(default = "default_cutoff_fraction")]
    pub radiation_cutoff_fraction: f64,
    /// Averaging cone for the blow-up profile: settled region is
    /// r >= factor * (T_plus - t); must exceed 1.
    #[serde(default = "default_cone_factor")]
    pub blowup_cone_factor: f64,
}

fn yes() -> bool {
    true
}

fn default_cutoff_fraction() -> f64 {
    0.5
}

fn default_cone_factor() -> f64 {
    2.0
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            fit: true,
            radiation: true,
            budget: true,
            classify: true,
            radiation_cutoff_fraction: default_cutoff_fraction(),
            blowup_cone_factor: default_cone_factor(),
        }
    }
}

/// Classifier threshold overrides; the defaults are documented conventions.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_certify: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_stay_away: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_fit_distance: Option<f64>,
}

impl ThresholdsConfig {
    pub fn classifier_thresholds(&self) -> ClassifierThresholds {
        let d = ClassifierThresholds::default();
        ClassifierThresholds {
            d_certify: self.d_certify.unwrap_or(d.d_certify),
            d_stay_away: self.d_stay_away.unwrap_or(d.d_stay_away),
            rate_ratio: self.rate_ratio.unwrap_or(d.rate_ratio),
            horizon_ratio: self.horizon_ratio.unwrap_or(d.horizon_ratio),
            interior_fraction: self.interior_fraction.unwrap_or(d.interior_fraction),
            single_fit_distance: self.single_fit_distance.unwrap_or(d.single_fit_distance),
        }
    }

    pub fn filled(t: ClassifierThresholds) -> Self {
        ThresholdsConfig {
            d_certify: Some(t.d_certify),
            d_stay_away: Some(t.d_stay_away),
            rate_ratio: Some(t.rate_ratio),
            horizon_ratio: Some(t.horizon_ratio),
            interior_fraction: Some(t.interior_fraction),
            single_fit_distance: Some(t.single_fit_distance),
        }
    }
}

/// Config after schema validation: typed scenario, resolved knobs.
#[derive(Debug, Clone)]
pub struct ValidatedRun {
    pub k: u32,
    pub flow: Flow,
    pub t_final: f64,
    pub cadence: f64,
    pub seed: u64,
    pub r_max: f64,
    pub n: usize,
    pub grading: Grading,
    pub control: StepControl,
    pub scenario: Scenario,
    pub diagnostics: DiagnosticsConfig,
    pub thresholds: ClassifierThresholds,
}

impl RunConfig {
    /// Validate every referenced parameter before any computation starts.
    pub fn validate(&self) -> Result<ValidatedRun> {
        if self.k < 1 {
            return config_err(format!("k must be at least 1, got {}", self.k));
        }
        if !(self.t_final > 0.0) {
            return config_err(format!("t_final must be positive, got {}", self.t_final));
        }
        if !(self.cadence > 0.0) {
            return config_err(format!("cadence must be positive, got {}", self.cadence));
        }
        let grading = self.grid.grading()?;
        let control = self.control.step_control();
        control.validate()?;
        let scenario = scenario_from_table(&self.scenario)?;
        let dg = &self.diagnostics;
        if !(dg.radiation_cutoff_fraction > 0.0 && dg.radiation_cutoff_fraction < 1.0) {
            return config_err(format!(
                "diagnostics.radiation_cutoff_fraction must lie in (0, 1), got {}",
                dg.radiation_cutoff_fraction
            ));
        }
        if !(dg.blowup_cone_factor > 1.0) {
            return config_err(format!(
                "diagnostics.blowup_cone_factor must exceed 1, got {}",
                dg.blowup_cone_factor
            ));
        }
        let thresholds = self.thresholds.classifier_thresholds();
        for (name, v) in [
            ("d_certify", thresholds.d_certify),
            ("d_stay_away", thresholds.d_stay_away),
            ("rate_ratio", thresholds.rate_ratio),
            ("horizon_ratio", thresholds.horizon_ratio),
            ("interior_fraction", thresholds.interior_fraction),
            ("single_fit_distance", thresholds.single_fit_distance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return config_err(format!(
                    "thresholds.{name} must be positive and finite, got {v}"
                ));
            }
        }
        Ok(ValidatedRun {
            k: self.k,
            flow: self.flow.as_flow(),
            t_final: self.t_final,
            cadence: self.cadence,
            seed: self.seed,
            r_max: self.grid.r_max,
            n: self.grid.n,
            grading,
            control,
            scenario,
            diagnostics: self.diagnostics,
            thresholds,
        })
    }

    /// Copy with every optional knob filled in, used as the run.json echo so
    /// a stored run can be re-validated without the original file.
    pub fn normalized(&self) -> RunConfig {
        let mut c = self.clone();
        c.control = ControlConfig::filled(self.control.step_control());
        c.thresholds = ThresholdsConfig::filled(self.thresholds.classifier_thresholds());
        c
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config(&text)
}
