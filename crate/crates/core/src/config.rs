//! Study configuration file (TOML).
//!
//! The `schema` key must equal [`SCHEMA`]; unknown keys anywhere are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::calibrate::CalibrationSettings;
use crate::harness::scenario::{Dgm, ScenarioSpec};
use crate::idm::{TransitionHazards, WaningRule};
use crate::meta::PoolingMethod;
use crate::survfit::TieMethod;
use crate::trial::{Allocation, DesignConstants};

pub const SCHEMA: &str = "estimand-forge/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub schema: String,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "defaults::replicates")]
    pub replicates: usize,
    #[serde(default = "defaults::oracle_n")]
    pub oracle_n: usize,
    #[serde(default = "defaults::n_trials")]
    pub n_trials_per_meta: usize,
    #[serde(default = "defaults::sample_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "defaults::mixing")]
    pub mixing: Vec<f64>,
    #[serde(default = "defaults::tau2_dgm")]
    pub tau2_dgm: f64,
    #[serde(default)]
    pub ties: TieMethod,
    pub grid: GridAxes,
    #[serde(default)]
    pub design: DesignConstants,
    #[serde(default)]
    pub waning: WaningRule,
    pub hazards: TransitionHazards,
    #[serde(default)]
    pub calibration: CalibrationSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxes {
    pub betas: Vec<f64>,
    pub switching_targets: Vec<f64>,
    pub allocations: Vec<Allocation>,
    #[serde(default = "defaults::dgms")]
    pub dgms: Vec<Dgm>,
    #[serde(default = "defaults::poolings")]
    pub poolings: Vec<PoolingMethod>,
}

mod defaults {
    use super::*;

    pub fn replicates() -> usize {
        10_000
    }
    pub fn oracle_n() -> usize {
        1_000_000
    }
    pub fn n_trials() -> usize {
        8
    }
    pub fn sample_sizes() -> Vec<usize> {
        vec![250, 300, 350]
    }
    pub fn mixing() -> Vec<f64> {
        vec![0.0, 0.25, 0.5, 0.75, 1.0]
    }
    pub fn tau2_dgm() -> f64 {
        0.03
    }
    pub fn dgms() -> Vec<Dgm> {
        vec![Dgm::FixedEffects]
    }
    pub fn poolings() -> Vec<PoolingMethod> {
        vec![PoolingMethod::RandomReml, PoolingMethod::Fixed]
    }
}

impl StudyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if config.schema != SCHEMA {
            return Err(Error::Config(format!(
                "unsupported schema {:?}, expected {SCHEMA:?}",
                config.schema
            )));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.betas.is_empty() || g.switching_targets.is_empty() || g.allocations.is_empty() || g.dgms.is_empty() {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        self.scenarios().iter().try_for_each(ScenarioSpec::validate)
    }

    /// Expand the grid: data-generating mode outermost, then beta,
    /// switching target and allocation.
    pub fn scenarios(&self) -> Vec<ScenarioSpec> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &dgm in &g.dgms {
            for &beta in &g.betas {
                for &target in &g.switching_targets {
                    for &allocation in &g.allocations {
                        out.push(ScenarioSpec {
                            beta,
                            switching_target: target,
                            allocation,
                            base_hazards: self.hazards.clone(),
                            h01_scale: 1.0,
                            waning: self.waning,
                            design: self.design,
                            n_trials_per_meta: self.n_trials_per_meta,
                            sample_sizes: self.sample_sizes.clone(),
                            replicates: self.replicates,
                            dgm,
                            tau2_dgm: self.tau2_dgm,
                            poolings: g.poolings.clone(),
                            mixing: self.mixing.clone(),
                            ties: self.ties,
                            oracle_n: self.oracle_n,
                            calibration: self.calibration,
                        });
                    }
                }
            }
        }
        out
    }
}
