//! Tuning h01 so a target share of control patients switch.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::scenario::ScenarioSpec;
use crate::idm::{arm_hazards, open_uniform, Arm, PathSampler, TransitionHazards, WaningRule};
use crate::trial::{observe, DesignConstants, DRAWS_PER_PATIENT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSettings {
    pub n_patients: usize,
    pub tolerance: f64,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            n_patients: 200_000,
            tolerance: 0.005,
            scale_min: 1e-3,
            scale_max: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub beta: f64,
    pub target: f64,
    pub scale: f64,
    pub achieved: f64,
    pub iterations: usize,
}

/// A fixed control-arm cohort of uniforms; every candidate scale is scored
/// on the same draws, so the proportion is a deterministic function of it.
pub struct ControlCohort {
    uniforms: Vec<[f64; DRAWS_PER_PATIENT]>,
}

impl ControlCohort {
    pub fn draw<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let uniforms = (0..n)
            .map(|_| std::array::from_fn(|_| open_uniform(rng)))
            .collect();
        Self { uniforms }
    }

    /// Share of control patients observed to progress (and so switch)
    /// before their OS time, with h01 multiplied by `scale`.
    pub fn switching_proportion(
        &self,
        base: &TransitionHazards,
        scale: f64,
        beta: f64,
        waning: &WaningRule,
        design: &DesignConstants,
    ) -> Result<f64> {
        let mut scaled = base.clone();
        scaled.h01 = scaled.h01.scaled(scale)?;
        let sampler = PathSampler::new(arm_hazards(&scaled, Arm::Control, beta, waning)?);
        let trial = design.trial(self.uniforms.len(), crate::trial::Allocation::ONE_TO_ONE);
        let rate = trial.dropout_rate();
        let switched: usize = self
            .uniforms
            .par_chunks(4096)
            .map(|chunk| {
                chunk
                    .iter()
                    .filter(|u| {
                        observe(&sampler, &trial, rate, 0, Arm::Control, **u)
                            .switch_time
                            .is_some()
                    })
                    .count()
            })
            .sum();
        Ok(switched as f64 / self.uniforms.len().max(1) as f64)
    }
}

/// Bisection (on the log scale) for the h01 multiplier that makes the
/// control-arm switching proportion hit `target`.
pub fn calibrate_h01<R: Rng + ?Sized>(
    base: &TransitionHazards,
    beta: f64,
    waning: &WaningRule,
    design: &DesignConstants,
    target: f64,
    settings: &CalibrationSettings,
    rng: &mut R,
) -> Result<CalibrationReport> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Calibration(format!("target {target} must lie in (0, 1)")));
    }
    if base.h01.is_zero() {
        return Err(Error::Calibration("base h01 is identically zero".into()));
    }
    let cohort = ControlCohort::draw(settings.n_patients, rng);
    let proportion = |s: f64| cohort.switching_proportion(base, s, beta, waning, design);

    let (mut lo, mut hi) = (settings.scale_min, settings.scale_max);
    let (p_lo, p_hi) = (proportion(lo)?, proportion(hi)?);
    if !(p_lo <= target && target <= p_hi) {
        return Err(Error::Calibration(format!(
            "target {target} outside reachable range [{p_lo:.4}, {p_hi:.4}] for scales [{lo}, {hi}]"
        )));
    }

    let mut best = if (p_lo - target).abs() < (p_hi - target).abs() { (lo, p_lo) } else { (hi, p_hi) };
    let mut iterations = 0;
    while iterations < 100 && (best.1 - target).abs() > 1e-4 && hi / lo > 1.0 + 1e-12 {
        iterations += 1;
        let mid = (lo * hi).sqrt();
        let p = proportion(mid)?;
        if (p - target).abs() < (best.1 - target).abs() {
            best = (mid, p);
        }
        if p < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (best.1 - target).abs() > settings.tolerance {
        return Err(Error::Calibration(format!(
            "closest proportion {:.4} misses target {target} by more than {}",
            best.1, settings.tolerance
        )));
    }
    Ok(CalibrationReport { beta, target, scale: best.0, achieved: best.1, iterations })
}

/// Calibrate a scenario and return it with the scale applied.
pub fn calibrate_scenario<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<(ScenarioSpec, CalibrationReport)> {
    let report = calibrate_h01(
        &spec.base_hazards,
        spec.beta,
        &spec.waning,
        &spec.design,
        spec.switching_target,
        &spec.calibration,
        rng,
    )?;
    let mut calibrated = spec.clone();
    calibrated.h01_scale = report.scale;
    Ok((calibrated, report))
}
