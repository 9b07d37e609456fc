//! One replicate: a set of simulated trials, both strategy fits per trial,
//! and the mixed-estimand meta-analyses.

use rand::seq::IndexedRandom;

use crate::error::{Error, Result};
use crate::harness::scenario::{sample_study_beta, Dgm, ScenarioSpec};
use crate::harness::seeding::{SeedPlan, MAX_ATTEMPTS};
use crate::meta::{pool, MetaResult, PoolingMethod};
use crate::survfit::{estimate, EstimateRecord};
use crate::trial::{simulate_trial, Strategy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialEstimates {
    pub beta: f64,
    pub n: usize,
    pub treatment_policy: EstimateRecord,
    pub hypothetical: EstimateRecord,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixPooled {
    pub mix_tpe: f64,
    pub n_tpe: usize,
    pub result: MetaResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    /// Attempts discarded because some trial could not be estimated.
    pub redrawn: u64,
    pub trials: Vec<TrialEstimates>,
    /// One entry per pooling method, in the scenario's order.
    pub pooled: Vec<(PoolingMethod, Vec<MixPooled>)>,
}

/// Pool the first `n_tpe` trials' treatment-policy estimates with the
/// remaining trials' hypothetical estimates.
pub fn mix_pool(trials: &[TrialEstimates], n_tpe: usize, method: PoolingMethod) -> Result<MetaResult> {
    let estimates: Vec<EstimateRecord> = trials
        .iter()
        .enumerate()
        .map(|(i, t)| if i < n_tpe { t.treatment_policy } else { t.hypothetical })
        .collect();
    pool(&estimates, method)
}

pub fn pool_mixtures(spec: &ScenarioSpec, trials: &[TrialEstimates]) -> Result<Vec<(PoolingMethod, Vec<MixPooled>)>> {
    spec.poolings
        .iter()
        .map(|&method| {
            let by_mix = spec
                .mixing
                .iter()
                .zip(spec.mix_counts())
                .map(|(&mix_tpe, n_tpe)| {
                    Ok(MixPooled { mix_tpe, n_tpe, result: mix_pool(trials, n_tpe, method)? })
                })
                .collect::<Result<_>>()?;
            Ok((method, by_mix))
        })
        .collect()
}

fn is_redrawable(e: &Error) -> bool {
    matches!(e, Error::Inestimable(_) | Error::Nonconvergent(_))
}

fn simulate_attempt(spec: &ScenarioSpec, plan: &SeedPlan, replicate: u64, attempt: u64) -> Result<Vec<TrialEstimates>> {
    let key = spec.key();
    let mut level = plan.replicate_level(&key, replicate, attempt);
    let sizes: Vec<usize> = (0..spec.n_trials_per_meta)
        .map(|_| *spec.sample_sizes.choose(&mut level).expect("non-empty sample sizes"))
        .collect();
    let betas: Vec<f64> = match spec.dgm {
        Dgm::FixedEffects => vec![spec.beta; spec.n_trials_per_meta],
        Dgm::RandomEffects => (0..spec.n_trials_per_meta)
            .map(|_| sample_study_beta(spec.beta, spec.tau2_dgm, &mut level))
            .collect::<Result<_>>()?,
    };

    let shared = match spec.dgm {
        Dgm::FixedEffects => Some(spec.arm_samplers(spec.beta)?),
        Dgm::RandomEffects => None,
    };
    sizes
        .iter()
        .zip(&betas)
        .enumerate()
        .map(|(slot, (&n, &beta))| {
            let own;
            let arms = match &shared {
                Some(a) => a,
                None => {
                    own = spec.arm_samplers(beta)?;
                    &own
                }
            };
            let design = spec.design.trial(n, spec.allocation);
            let mut rng = plan.trial(&key, replicate, attempt, slot);
            let trial = simulate_trial(arms, &design, &mut rng)?;
            Ok(TrialEstimates {
                beta,
                n,
                treatment_policy: estimate(&trial, Strategy::TreatmentPolicy, spec.ties)?,
                hypothetical: estimate(&trial, Strategy::Hypothetical, spec.ties)?,
            })
        })
        .collect()
}

/// Run replicate `replicate` of a (calibrated) scenario. If any trial is
/// inestimable under either strategy the whole replicate is redrawn on the
/// next attempt stream.
pub fn run_replicate(spec: &ScenarioSpec, plan: &SeedPlan, replicate: u64) -> Result<ReplicateOutcome> {
    for attempt in 0..MAX_ATTEMPTS {
        match simulate_attempt(spec, plan, replicate, attempt) {
            Ok(trials) => {
                let pooled = pool_mixtures(spec, &trials)?;
                return Ok(ReplicateOutcome { replicate, redrawn: attempt, trials, pooled });
            }
            Err(e) if is_redrawable(&e) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Inestimable("replicate redraw budget exhausted"))
}
