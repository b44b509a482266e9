//! Experiment configuration files.
//!
//! TOML with one section per concern; every key is optional and falls back to
//! the group defaults:
//!
//! ```toml
//! group = "rob1"
//!
//! [run]
//! seed = 42
//! runs = 50
//! controller = "dem"
//!
//! [path]
//! path_length = 9.0
//! omega_ratio = 1.0
//! waveform = { shape = "trapezoid", ramp_fraction = 0.125 }
//!
//! [formation]
//! side = 0.6
//!
//! [timing]
//! deadline = 0.5
//!
//! [noise]
//! enabled = true
//! rho = 1.4153e-5
//!
//! [dem]
//! weights = [1.0, 1.0, 1.0]
//! grid_coarse = 41
//! grid_refinements = 6
//!
//! [sweep]
//! probabilities = [0.9, 0.7, 0.5]
//! ```
//!
//! `group = "custom"` takes its configurations from `[[custom]]` tables with
//! `name`, `v_m`, `period`, `p_true` and `p_assumed`.

use std::path::Path;

use formation_core::scenario::{Controller, GroupOverrides, SweepPoint, Waveform};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub group: Option<String>,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub path: PathSection,
    #[serde(default)]
    pub formation: FormationSection,
    #[serde(default)]
    pub timing: TimingSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub dem: DemSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub custom: Vec<SweepPoint>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub controller: Option<Controller>,
    pub parallelism: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSection {
    pub path_length: Option<f64>,
    pub omega_ratio: Option<f64>,
    pub waveform: Option<Waveform>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationSection {
    pub side: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSection {
    pub deadline: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub enabled: Option<bool>,
    pub rho: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemSection {
    pub weights: Option<[f64; 3]>,
    pub v_max: Option<f64>,
    pub omega_max: Option<f64>,
    pub grid_coarse: Option<usize>,
    pub grid_refinements: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub k_pos: Option<f64>,
    pub k_theta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub velocities: Option<Vec<f64>>,
    pub periods: Option<Vec<f64>>,
    pub probabilities: Option<Vec<f64>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn overrides(&self) -> GroupOverrides {
        GroupOverrides {
            runs: self.run.runs,
            seed: self.run.seed,
            controller: self.run.controller,
            path_length: self.path.path_length,
            omega_ratio: self.path.omega_ratio,
            waveform: self.path.waveform,
            side: self.formation.side,
            deadline: self.timing.deadline,
            rho: self.noise.rho,
            noise: self.noise.enabled,
            weights: self.dem.weights,
            v_max: self.dem.v_max,
            omega_max: self.dem.omega_max,
            grid_coarse: self.dem.grid_coarse,
            grid_refinements: self.dem.grid_refinements,
            velocities: self.sweep.velocities.clone(),
            periods: self.sweep.periods.clone(),
            probabilities: self.sweep.probabilities.clone(),
            k_pos: self.baseline.k_pos,
            k_theta: self.baseline.k_theta,
        }
    }
}
