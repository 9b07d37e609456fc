//! True estimand values from a single very large simulated trial.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::scenario::ScenarioSpec;
use crate::harness::seeding::SeedPlan;
use crate::survfit::estimate;
use crate::trial::{simulate_trial, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueEstimands {
    pub hr_treatment_policy: f64,
    pub hr_hypothetical: f64,
}

impl TrueEstimands {
    pub fn get(&self, strategy: Strategy) -> f64 {
        match strategy {
            Strategy::TreatmentPolicy => self.hr_treatment_policy,
            Strategy::Hypothetical => self.hr_hypothetical,
        }
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.hr_treatment_policy - other.hr_treatment_policy)
            .abs()
            .max((self.hr_hypothetical - other.hr_hypothetical).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    pub n: usize,
    pub estimands: TrueEstimands,
    /// Same oracle on a disjoint stream.
    pub check: TrueEstimands,
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub stable: bool,
}

impl OracleReport {
    pub fn require_stable(self) -> Result<Self> {
        if self.stable {
            Ok(self)
        } else {
            Err(Error::Unstable(format!(
                "two oracle seeds differ by {:.4} (tolerance {})",
                self.max_abs_diff, self.tolerance
            )))
        }
    }
}

/// Stability tolerance on the HR scale: 0.01 at the full million-patient
/// oracle, 0.02 for anything smaller.
pub fn stability_tolerance(n: usize) -> f64 {
    if n >= 1_000_000 {
        0.01
    } else {
        0.02
    }
}

/// Back-transformed Cox HRs of both strategies on one trial of size `n`
/// with the scenario's own design, from oracle stream `copy`.
pub fn oracle_trial(spec: &ScenarioSpec, plan: &SeedPlan, n: usize, copy: u64) -> Result<TrueEstimands> {
    let arms = spec.arm_samplers(spec.beta)?;
    let design = spec.design.trial(n, spec.allocation);
    let mut rng = plan.oracle(&spec.key(), copy);
    let trial = simulate_trial(&arms, &design, &mut rng)?;
    Ok(TrueEstimands {
        hr_treatment_policy: estimate(&trial, Strategy::TreatmentPolicy, spec.ties)?.log_hr.exp(),
        hr_hypothetical: estimate(&trial, Strategy::Hypothetical, spec.ties)?.log_hr.exp(),
    })
}

/// Oracle estimands at `spec.oracle_n`, checked against a second disjoint
/// stream. The report carries the stability verdict; callers decide
/// whether instability is fatal.
pub fn true_estimands(spec: &ScenarioSpec, plan: &SeedPlan) -> Result<OracleReport> {
    let n = spec.oracle_n;
    let (estimands, check) = rayon::join(
        || oracle_trial(spec, plan, n, 0),
        || oracle_trial(spec, plan, n, 1),
    );
    let (estimands, check) = (estimands?, check?);
    let max_abs_diff = estimands.max_abs_diff(&check);
    let tolerance = stability_tolerance(n);
    Ok(OracleReport {
        n,
        estimands,
        check,
        max_abs_diff,
        tolerance,
        stable: max_abs_diff < tolerance,
    })
}
