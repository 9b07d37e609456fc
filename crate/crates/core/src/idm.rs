//! Irreversible three-state illness-death model with control-arm switching.
//!
//! States: 0 (initial), 1 (progressed), 2 (dead). Every control-arm subject
//! who progresses switches to the experimental treatment at progression.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazards::PiecewiseHazard;

/// Uniform draws consumed by one [`simulate_path`] call, regardless of outcome.
pub const DRAWS_PER_PATH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Treatment,
    Control,
}

impl Arm {
    pub fn indicator(self) -> u8 {
        match self {
            Arm::Treatment => 1,
            Arm::Control => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Treatment => "treatment",
            Arm::Control => "control",
        }
    }
}

/// Time origin for the progression-to-death hazard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum H12Clock {
    SinceRandomization,
    #[default]
    SinceProgression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionHazards {
    pub h01: PiecewiseHazard,
    pub h02: PiecewiseHazard,
    pub h12: PiecewiseHazard,
    #[serde(default)]
    pub h12_clock: H12Clock,
}

/// Post-progression effect waning applied to switched control patients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaningRule {
    pub attenuation: f64,
    pub null_cap: f64,
}

impl Default for WaningRule {
    fn default() -> Self {
        Self {
            attenuation: 1.34,
            null_cap: 0.99,
        }
    }
}

impl WaningRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.attenuation >= 1.0 && self.attenuation.is_finite()) {
            return Err(Error::Domain(format!(
                "waning attenuation {} must be >= 1",
                self.attenuation
            )));
        }
        if !(self.null_cap > 0.0 && self.null_cap < 1.0) {
            return Err(Error::Domain(format!(
                "waning null cap {} must lie in (0, 1)",
                self.null_cap
            )));
        }
        Ok(())
    }

    /// Multiplier on h12 for switched control patients:
    /// `1 / (attenuation * beta)` while that product is at most 1, else `1 / null_cap`.
    pub fn h12_multiplier(&self, beta: f64) -> f64 {
        let attenuated = self.attenuation * beta;
        if attenuated <= 1.0 {
            1.0 / attenuated
        } else {
            1.0 / self.null_cap
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitCause {
    Progression,
    DirectDeath,
}

/// One subject's latent trajectory, before any censoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatientPath {
    pub arm: Arm,
    pub recruit_time: f64,
    /// Months from randomization to leaving state 0; `None` if never.
    pub state0_exit: Option<f64>,
    pub cause: Option<ExitCause>,
    /// Months from randomization to death; `None` if death never occurs.
    pub death_time: Option<f64>,
    /// Present exactly for control-arm progressors, at the progression time.
    pub switch_time: Option<f64>,
}

impl PatientPath {
    pub fn progressed(&self) -> bool {
        self.cause == Some(ExitCause::Progression)
    }
}

/// Arm-specific transition hazards. The treatment arm uses `base`; the
/// control arm divides h01 and h02 by `beta` and multiplies h12 by the
/// waning multiplier, since every control progressor has switched.
pub fn arm_hazards(
    base: &TransitionHazards,
    arm: Arm,
    beta: f64,
    waning: &WaningRule,
) -> Result<TransitionHazards> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("transition hazard ratio {beta} must be > 0")));
    }
    match arm {
        Arm::Treatment => Ok(base.clone()),
        Arm::Control => Ok(TransitionHazards {
            h01: base.h01.scaled(1.0 / beta)?,
            h02: base.h02.scaled(1.0 / beta)?,
            h12: base.h12.scaled(waning.h12_multiplier(beta))?,
            h12_clock: base.h12_clock,
        }),
    }
}

/// Precomputed per-arm quantities used in the per-patient hot loop.
#[derive(Debug, Clone)]
pub struct PathSampler {
    hazards: TransitionHazards,
    exit: PiecewiseHazard,
}

impl PathSampler {
    pub fn new(hazards: TransitionHazards) -> Self {
        let exit = hazards.h01.sum(&hazards.h02);
        Self { hazards, exit }
    }

    pub fn hazards(&self) -> &TransitionHazards {
        &self.hazards
    }

    /// Trajectory from three uniforms: state-0 exit time, exit cause, and
    /// the post-progression sojourn (unused unless the subject progresses).
    pub fn path_from_uniforms(&self, arm: Arm, recruit_time: f64, u: [f64; DRAWS_PER_PATH]) -> PatientPath {
        let mut path = PatientPath {
            arm,
            recruit_time,
            state0_exit: None,
            cause: None,
            death_time: None,
            switch_time: None,
        };
        let Some(exit) = self.exit.invert(crate::hazards::exp1_quantile(u[0])) else {
            return path;
        };
        path.state0_exit = Some(exit);

        let h01 = self.hazards.h01.rate_at(exit);
        let h02 = self.hazards.h02.rate_at(exit);
        let total = h01 + h02;
        // At a boundary the summed hazard can be reached exactly where the
        // right-hand interval is zero; fall back on whichever rate is positive.
        let p_progress = if total > 0.0 {
            h01 / total
        } else if self.hazards.h02.is_zero() {
            1.0
        } else {
            0.0
        };
        if u[1] >= p_progress {
            path.cause = Some(ExitCause::DirectDeath);
            path.death_time = Some(exit);
            return path;
        }

        path.cause = Some(ExitCause::Progression);
        if arm == Arm::Control {
            path.switch_time = Some(exit);
        }
        let residual = crate::hazards::exp1_quantile(u[2]);
        path.death_time = match self.hazards.h12_clock {
            H12Clock::SinceProgression => self.hazards.h12.invert(residual).map(|s| exit + s),
            H12Clock::SinceRandomization => self
                .hazards
                .h12
                .invert(self.hazards.h12.cumulative_at(exit) + residual),
        };
        path
    }

    pub fn simulate<R: Rng + ?Sized>(&self, arm: Arm, recruit_time: f64, rng: &mut R) -> PatientPath {
        let u = std::array::from_fn(|_| open_uniform(rng));
        self.path_from_uniforms(arm, recruit_time, u)
    }
}

/// Simulate one subject through the illness-death model using exactly
/// [`DRAWS_PER_PATH`] uniforms from `rng`.
pub fn simulate_path<R: Rng + ?Sized>(
    hazards: &TransitionHazards,
    arm: Arm,
    recruit_time: f64,
    rng: &mut R,
) -> Result<PatientPath> {
    if !(recruit_time >= 0.0) {
        return Err(Error::Domain(format!("recruit time {recruit_time} must be >= 0")));
    }
    Ok(PathSampler::new(hazards.clone()).simulate(arm, recruit_time, rng))
}

/// Uniform on the open interval (0, 1).
pub(crate) fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(rand::distr::Open01)
}
