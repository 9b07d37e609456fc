//! Scenario-grid orchestration with per-scenario checkpoints.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::StudyConfig;
use crate::error::{Error, Result};
use crate::harness::calibrate::{calibrate_scenario, CalibrationReport};
use crate::harness::output::{
    self, raw_file_name, CalibrationRow, DiagnosticsRow, RawRow, ResultRow, TruthRow,
};
use crate::harness::performance::{performance, PooledDraw};
use crate::harness::replicate::{run_replicate, ReplicateOutcome};
use crate::harness::scenario::ScenarioSpec;
use crate::harness::seeding::SeedPlan;
use crate::harness::truth::{true_estimands, OracleReport};
use crate::meta::PoolingMethod;
use crate::trial::Strategy;

#[derive(Debug, Clone)]
pub struct GridOptions {
    pub workers: usize,
    pub output_dir: Option<PathBuf>,
    /// Treat an unstable oracle as an error.
    pub strict_truth: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            output_dir: None,
            strict_truth: true,
        }
    }
}

/// Everything produced for one scenario (one data-generating mode).
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub spec: ScenarioSpec,
    pub rows: Vec<ResultRow>,
    pub raw: Vec<(PoolingMethod, Vec<RawRow>)>,
    pub diagnostics: DiagnosticsRow,
}

#[derive(Debug, Clone, Default)]
pub struct GridResults {
    pub rows: Vec<ResultRow>,
    pub calibrations: Vec<CalibrationRow>,
    pub truths: Vec<TruthRow>,
    pub diagnostics: Vec<DiagnosticsRow>,
    /// Scenarios restored from checkpoints instead of recomputed.
    pub resumed: Vec<String>,
}

pub fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

/// Run all replicates of a calibrated scenario. Replicates are spread over
/// the current rayon pool and collected in replicate order.
pub fn run_replicates(spec: &ScenarioSpec, plan: &SeedPlan) -> Result<Vec<ReplicateOutcome>> {
    (0..spec.replicates as u64)
        .into_par_iter()
        .map(|r| run_replicate(spec, plan, r))
        .collect()
}

/// Reduce replicate outcomes into performance rows (against both
/// estimands) and raw pooled samples.
pub fn summarize(spec: &ScenarioSpec, truth: &OracleReport, outcomes: &[ReplicateOutcome]) -> Result<ScenarioRun> {
    let id = spec.id();
    let n_redrawn: u64 = outcomes.iter().map(|o| o.redrawn).sum();
    let mut rows = Vec::new();
    let mut raw = Vec::new();
    let mut reml_nonconverged = 0;

    for (p, &method) in spec.poolings.iter().enumerate() {
        let mut raw_rows = Vec::with_capacity(outcomes.len() * spec.mixing.len());
        let mut draws: Vec<Vec<PooledDraw>> = vec![Vec::with_capacity(outcomes.len()); spec.mixing.len()];
        for o in outcomes {
            let (m, by_mix) = &o.pooled[p];
            debug_assert_eq!(*m, method);
            for (j, mix) in by_mix.iter().enumerate() {
                let r = &mix.result;
                reml_nonconverged += !r.converged as usize;
                draws[j].push(PooledDraw { hr: r.pooled_hr(), ci_low: r.ci_low_hr, ci_high: r.ci_high_hr });
                raw_rows.push(RawRow {
                    scenario_id: id.clone(),
                    replicate: o.replicate,
                    mix_tpe: mix.mix_tpe,
                    pooled_hr: r.pooled_hr(),
                    ci_low: r.ci_low_hr,
                    ci_high: r.ci_high_hr,
                    tau2: r.tau2,
                });
            }
        }
        for (j, &mix_tpe) in spec.mixing.iter().enumerate() {
            for reference in [Strategy::Hypothetical, Strategy::TreatmentPolicy] {
                let true_hr = truth.estimands.get(reference);
                let s = performance(&draws[j], true_hr)?;
                rows.push(ResultRow {
                    scenario_id: id.clone(),
                    dgm: spec.dgm,
                    pooling: method,
                    beta: spec.beta,
                    switching: spec.switching_target,
                    allocation: spec.allocation,
                    mix_tpe,
                    ref_estimand: reference,
                    true_hr,
                    mean_hr: s.mean_hr,
                    mean_ci_low: s.mean_ci_low,
                    mean_ci_high: s.mean_ci_high,
                    bias: s.bias,
                    pct2_5: s.pct_2_5,
                    pct97_5: s.pct_97_5,
                    coverage: s.coverage,
                    se_bias: s.se_bias,
                    se_coverage: s.se_coverage,
                    n_replicates: s.n,
                    n_redrawn,
                });
            }
        }
        raw.push((method, raw_rows));
    }
    Ok(ScenarioRun {
        spec: spec.clone(),
        rows,
        raw,
        diagnostics: DiagnosticsRow {
            scenario_id: id,
            dgm: spec.dgm,
            n_replicates: outcomes.len(),
            n_redrawn,
            reml_nonconverged,
        },
    })
}

/// Calibrate, compute oracle truths and run one scenario end to end.
pub fn run_scenario(spec: &ScenarioSpec, plan: &SeedPlan) -> Result<(ScenarioRun, CalibrationReport, OracleReport)> {
    spec.validate()?;
    let (calibrated, calibration) =
        calibrate_scenario(spec, &mut plan.calibration(spec.beta, spec.switching_target))?;
    let oracle = true_estimands(&calibrated, plan)?;
    let outcomes = run_replicates(&calibrated, plan)?;
    Ok((summarize(&calibrated, &oracle, &outcomes)?, calibration, oracle))
}

pub fn truth_row(spec: &ScenarioSpec, o: &OracleReport) -> TruthRow {
    TruthRow {
        scenario_id: spec.id(),
        beta: spec.beta,
        switching: spec.switching_target,
        allocation: spec.allocation,
        oracle_n: o.n,
        hr_treatment_policy: o.estimands.hr_treatment_policy,
        hr_hypothetical: o.estimands.hr_hypothetical,
        check_hr_treatment_policy: o.check.hr_treatment_policy,
        check_hr_hypothetical: o.check.hr_hypothetical,
        max_abs_diff: o.max_abs_diff,
        tolerance: o.tolerance,
        stable: o.stable,
    }
}

pub fn calibration_row(r: &CalibrationReport) -> CalibrationRow {
    CalibrationRow {
        beta: r.beta,
        target: r.target,
        scale: r.scale,
        achieved: r.achieved,
        iterations: r.iterations,
    }
}

type Bits = (u64, u64);
type TruthKey = (u64, u64, u32, u32);

fn bits(spec: &ScenarioSpec) -> Bits {
    (spec.beta.to_bits(), spec.switching_target.to_bits())
}

fn truth_key(spec: &ScenarioSpec) -> TruthKey {
    let (b, s) = bits(spec);
    (b, s, spec.allocation.treatment, spec.allocation.control)
}

struct Checkpoint {
    dir: PathBuf,
    fingerprint: String,
}

impl Checkpoint {
    fn new(root: &Path, spec: &ScenarioSpec, master_seed: u64) -> Self {
        let dir = root.join("checkpoints").join(format!("{}_{}", spec.id(), spec.dgm.as_str()));
        let fingerprint = format!(
            "master_seed = {master_seed}\n{}",
            toml::to_string(spec).expect("scenario serializes")
        );
        Self { dir, fingerprint }
    }

    fn marker(&self) -> PathBuf {
        self.dir.join("fingerprint.toml")
    }

    fn load(&self) -> Result<Option<(Vec<ResultRow>, DiagnosticsRow)>> {
        match std::fs::read_to_string(self.marker()) {
            Ok(text) if text == self.fingerprint => {}
            _ => return Ok(None),
        }
        let rows = output::read_file(&self.dir.join("results.csv"))?;
        let diag: Vec<DiagnosticsRow> = output::read_file(&self.dir.join("diagnostics.csv"))?;
        Ok(diag.into_iter().next().map(|d| (rows, d)))
    }

    fn save(&self, run: &ScenarioRun) -> Result<()> {
        output::write_file(&self.dir.join("results.csv"), &run.rows, output::RESULTS_HEADER)?;
        output::write_file(
            &self.dir.join("diagnostics.csv"),
            std::slice::from_ref(&run.diagnostics),
            output::DIAGNOSTICS_HEADER,
        )?;
        // Written last: its presence marks the checkpoint complete.
        std::fs::write(self.marker(), &self.fingerprint).map_err(|e| Error::io(self.marker(), e))
    }
}

/// Run every scenario in the config. With an output directory, each
/// completed scenario is checkpointed and skipped on a rerun with an
/// identical scenario definition and seed; final tables are written there.
pub fn run_scenario_grid(config: &StudyConfig, opts: &GridOptions) -> Result<GridResults> {
    config.validate()?;
    let plan = SeedPlan::new(config.master_seed);
    let pool = build_pool(opts.workers)?;
    let mut results = GridResults::default();
    let mut calibrations: HashMap<Bits, CalibrationReport> = HashMap::new();
    let mut truths: HashMap<TruthKey, OracleReport> = HashMap::new();

    for spec in config.scenarios() {
        let checkpoint = opts
            .output_dir
            .as_deref()
            .map(|dir| Checkpoint::new(dir, &spec, config.master_seed));
        if let Some(Some((rows, diag))) = checkpoint.as_ref().map(Checkpoint::load).transpose()? {
            results.resumed.push(format!("{}_{}", spec.id(), spec.dgm.as_str()));
            results.rows.extend(rows);
            results.diagnostics.push(diag);
            continue;
        }

        let calibration = match calibrations.get(&bits(&spec)) {
            Some(c) => *c,
            None => {
                let (_, c) = pool.install(|| {
                    calibrate_scenario(&spec, &mut plan.calibration(spec.beta, spec.switching_target))
                })?;
                calibrations.insert(bits(&spec), c);
                results.calibrations.push(calibration_row(&c));
                c
            }
        };
        let mut calibrated = spec.clone();
        calibrated.h01_scale = calibration.scale;

        let oracle = match truths.get(&truth_key(&spec)) {
            Some(o) => *o,
            None => {
                let o = pool.install(|| true_estimands(&calibrated, &plan))?;
                if opts.strict_truth {
                    o.require_stable()?;
                }
                truths.insert(truth_key(&spec), o);
                results.truths.push(truth_row(&calibrated, &o));
                o
            }
        };

        let outcomes = pool.install(|| run_replicates(&calibrated, &plan))?;
        let run = summarize(&calibrated, &oracle, &outcomes)?;
        if let (Some(dir), Some(cp)) = (opts.output_dir.as_deref(), checkpoint.as_ref()) {
            for (method, raw) in &run.raw {
                let path = dir.join("raw").join(raw_file_name(&run.spec.id(), spec.dgm, *method));
                output::write_file(&path, raw, output::RAW_HEADER)?;
            }
            cp.save(&run)?;
        }
        results.rows.extend(run.rows);
        results.diagnostics.push(run.diagnostics);
    }

    if let Some(dir) = opts.output_dir.as_deref() {
        write_grid_outputs(dir, &results)?;
    }
    Ok(results)
}

pub fn write_grid_outputs(dir: &Path, results: &GridResults) -> Result<()> {
    output::write_file(&dir.join("results.csv"), &results.rows, output::RESULTS_HEADER)?;
    output::write_file(&dir.join("diagnostics.csv"), &results.diagnostics, output::DIAGNOSTICS_HEADER)?;
    if !results.calibrations.is_empty() {
        output::write_file(&dir.join("calibration.csv"), &results.calibrations, output::CALIBRATION_HEADER)?;
    }
    if !results.truths.is_empty() {
        output::write_file(&dir.join("truth.csv"), &results.truths, output::TRUTH_HEADER)?;
    }
    Ok(())
}
