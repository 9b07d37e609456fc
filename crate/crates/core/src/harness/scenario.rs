use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::calibrate::CalibrationSettings;
use crate::harness::seeding::{ScenarioKey, MAX_TRIALS_PER_REPLICATE};
use crate::idm::{TransitionHazards, WaningRule};
use crate::meta::PoolingMethod;
use crate::survfit::TieMethod;
use crate::trial::{Allocation, ArmSamplers, DesignConstants};

/// How study-level effects are generated within a replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dgm {
    /// Every trial uses the scenario's transition hazard ratio.
    FixedEffects,
    /// Each trial draws `ln beta_i ~ N(ln beta, tau2_dgm)`.
    RandomEffects,
}

impl Dgm {
    pub fn as_str(self) -> &'static str {
        match self {
            Dgm::FixedEffects => "fixed_effects",
            Dgm::RandomEffects => "random_effects",
        }
    }
}

impl fmt::Display for Dgm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dgm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_effects" => Ok(Dgm::FixedEffects),
            "random_effects" => Ok(Dgm::RandomEffects),
            other => Err(Error::Config(format!("unknown dgm {other:?}"))),
        }
    }
}

/// One cell of the simulation grid with every constant needed to run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub beta: f64,
    pub switching_target: f64,
    pub allocation: Allocation,
    pub base_hazards: TransitionHazards,
    /// Multiplier on the base h01 found by calibration; 1 until calibrated.
    pub h01_scale: f64,
    pub waning: WaningRule,
    pub design: DesignConstants,
    pub n_trials_per_meta: usize,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub dgm: Dgm,
    pub tau2_dgm: f64,
    pub poolings: Vec<PoolingMethod>,
    pub mixing: Vec<f64>,
    pub ties: TieMethod,
    pub oracle_n: usize,
    pub calibration: CalibrationSettings,
}

impl ScenarioSpec {
    /// Default study constants around the given base hazards.
    pub fn new(beta: f64, switching_target: f64, allocation: Allocation, base_hazards: TransitionHazards) -> Self {
        Self {
            beta,
            switching_target,
            allocation,
            base_hazards,
            h01_scale: 1.0,
            waning: WaningRule::default(),
            design: DesignConstants::default(),
            n_trials_per_meta: 8,
            sample_sizes: vec![250, 300, 350],
            replicates: 10_000,
            dgm: Dgm::FixedEffects,
            tau2_dgm: 0.03,
            poolings: vec![PoolingMethod::RandomReml, PoolingMethod::Fixed],
            mixing: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            ties: TieMethod::Efron,
            oracle_n: 1_000_000,
            calibration: CalibrationSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail(format!("beta {} must be > 0", self.beta));
        }
        if !(self.switching_target > 0.0 && self.switching_target < 1.0) {
            return fail(format!("switching target {} must lie in (0, 1)", self.switching_target));
        }
        if !(self.tau2_dgm >= 0.0) {
            return fail(format!("tau2_dgm {} must be >= 0", self.tau2_dgm));
        }
        if !(self.h01_scale > 0.0) {
            return fail(format!("h01 scale {} must be > 0", self.h01_scale));
        }
        if self.n_trials_per_meta == 0 || self.n_trials_per_meta >= MAX_TRIALS_PER_REPLICATE {
            return fail(format!(
                "n_trials_per_meta {} must lie in 1..{}",
                self.n_trials_per_meta, MAX_TRIALS_PER_REPLICATE
            ));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 2) {
            return fail("sample_sizes must be non-empty with every size >= 2".into());
        }
        if self.replicates == 0 {
            return fail("replicates must be >= 1".into());
        }
        if self.mixing.is_empty() || self.mixing.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return fail("mixing proportions must lie in [0, 1]".into());
        }
        if self.poolings.is_empty() {
            return fail("at least one pooling method is required".into());
        }
        self.waning.validate()?;
        self.design.trial(2, self.allocation).validate()?;
        Ok(())
    }

    pub fn key(&self) -> ScenarioKey {
        ScenarioKey {
            beta: self.beta,
            switching: self.switching_target,
            allocation: Some(self.allocation),
        }
    }

    /// e.g. `beta060_sw75_2to1`.
    pub fn id(&self) -> String {
        format!(
            "beta{:03}_sw{:02}_{}to{}",
            (self.beta * 100.0).round() as i64,
            (self.switching_target * 100.0).round() as i64,
            self.allocation.treatment,
            self.allocation.control
        )
    }

    /// Base hazards with the calibrated h01 multiplier applied.
    pub fn hazards(&self) -> Result<TransitionHazards> {
        let mut h = self.base_hazards.clone();
        h.h01 = h.h01.scaled(self.h01_scale)?;
        Ok(h)
    }

    pub fn arm_samplers(&self, beta: f64) -> Result<ArmSamplers> {
        ArmSamplers::new(&self.hazards()?, beta, &self.waning)
    }

    /// Number of treatment-policy trials for each mixing proportion.
    pub fn mix_counts(&self) -> Vec<usize> {
        self.mixing
            .iter()
            .map(|m| (m * self.n_trials_per_meta as f64).round() as usize)
            .collect()
    }
}

/// `exp(z)` with `z ~ N(ln beta, tau2)`; exactly `beta` when `tau2 == 0`.
pub fn sample_study_beta<R: Rng + ?Sized>(beta: f64, tau2: f64, rng: &mut R) -> Result<f64> {
    if !(beta > 0.0) || !(tau2 >= 0.0) {
        return Err(Error::Domain(format!("need beta > 0 and tau2 >= 0, got {beta}, {tau2}")));
    }
    if tau2 == 0.0 {
        return Ok(beta);
    }
    let normal = Normal::new(beta.ln(), tau2.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(normal.sample(rng).exp())
}
