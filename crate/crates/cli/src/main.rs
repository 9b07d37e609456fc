mod report;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use estimand_forge_core::harness::calibrate::{calibrate_scenario, ControlCohort};
use estimand_forge_core::harness::grid::{build_pool, calibration_row, truth_row};
use estimand_forge_core::harness::output::{self, CalibrationRow, TruthRow};
use estimand_forge_core::harness::{run_scenario_grid, true_estimands, GridOptions, ScenarioSpec, SeedPlan};
use estimand_forge_core::trial::{simulate_trial, write_trial_csv};
use estimand_forge_core::StudyConfig;

/// Monte Carlo study of meta-analyses that pool treatment-policy and
/// hypothetical hazard ratios from trials with control-arm switching.
#[derive(Debug, Parser)]
#[command(name = "estimand-forge", version)]
struct Cli {
    /// Worker threads. Defaults to the available parallelism.
    #[arg(long, global = true, env = "ESTIMAND_FORGE_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate the h01 scale for every (beta, switching target) pair.
    Calibrate(CalibrateArgs),
    /// Compute oracle true estimands with a two-seed stability check.
    Truth(TruthArgs),
    /// Run the scenario grid and write results, raw samples and diagnostics.
    Run(RunArgs),
    /// Render result tables and density-plot data from a results CSV.
    Report(ReportArgs),
    /// Dump one simulated trial, patient by patient.
    SimulateTrial(SimulateTrialArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Study configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,

    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<StudyConfig> {
        ensure!(self.config.is_file(), "config file not found: {}", self.config.display());
        let mut config = StudyConfig::load(&self.config)
            .with_context(|| format!("loading config {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    config: ConfigArgs,

    /// Calibrate to this switching proportion instead of the configured ones.
    #[arg(long)]
    target: Option<f64>,

    /// Also write the calibration table as CSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TruthArgs {
    #[command(flatten)]
    config: ConfigArgs,

    /// Oracle trial size. Below 10^6 the stability tolerance widens to 0.02.
    #[arg(long)]
    oracle_n: Option<usize>,

    /// Also write the truth table as CSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,

    #[arg(long)]
    replicates: Option<usize>,

    #[arg(long)]
    oracle_n: Option<usize>,

    /// Results directory. Completed scenarios are checkpointed here and
    /// skipped when the same run is started again.
    #[arg(short, long)]
    output_dir: PathBuf,

    /// Abort when the two oracle seeds disagree beyond tolerance.
    #[arg(long)]
    strict_truth: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// `results.csv` written by `run`.
    #[arg(short, long)]
    results: PathBuf,

    /// Raw pooled-estimate files. Defaults to `raw/` next to the results.
    #[arg(long)]
    raw_dir: Option<PathBuf>,

    /// Where to write `tables.txt` and density files. Tables go to stdout
    /// when omitted.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateTrialArgs {
    #[command(flatten)]
    config: ConfigArgs,

    /// Scenario id such as `beta060_sw75_2to1`; the first scenario when omitted.
    #[arg(long)]
    scenario: Option<String>,

    /// Number of patients.
    #[arg(short, long, default_value_t = 300)]
    n: usize,

    #[arg(long, default_value_t = 0)]
    replicate: u64,

    /// Trial slot within the replicate.
    #[arg(long, default_value_t = 0)]
    slot: usize,

    /// CSV destination; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let workers = match cli.workers {
        Some(0) => bail!("--workers must be at least 1"),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    match cli.command {
        Command::Calibrate(args) => calibrate(args, workers),
        Command::Truth(args) => truth(args, workers),
        Command::Run(args) => run(args, workers),
        Command::Report(args) => report::run(&args.results, args.raw_dir.as_deref(), args.output_dir.as_deref()),
        Command::SimulateTrial(args) => simulate(args),
    }
}

/// One scenario per distinct (beta, switching target), in grid order.
fn calibration_cells(config: &StudyConfig) -> Vec<ScenarioSpec> {
    let mut seen = BTreeSet::new();
    config
        .scenarios()
        .into_iter()
        .filter(|s| seen.insert((s.beta.to_bits(), s.switching_target.to_bits())))
        .collect()
}

fn calibrate(args: CalibrateArgs, workers: usize) -> Result<()> {
    let mut config = args.config.load()?;
    if let Some(target) = args.target {
        config.grid.switching_targets = vec![target];
    }
    let plan = SeedPlan::new(config.master_seed);
    let pool = build_pool(workers)?;
    let mut rows: Vec<CalibrationRow> = Vec::new();

    println!("{:>6} {:>7} {:>10} {:>9} {:>9}", "beta", "target", "scale", "achieved", "recheck");
    for spec in calibration_cells(&config) {
        let (beta, target) = (spec.beta, spec.switching_target);
        let (report, recheck) = pool.install(|| -> Result<_> {
            let mut rng = plan.calibration(beta, target);
            let (_, report) = calibrate_scenario(&spec, &mut rng)
                .with_context(|| format!("calibrating beta {beta}, target {target}"))?;
            // Fresh draws from the same stream, disjoint from the ones used to fit.
            let fresh = ControlCohort::draw(spec.calibration.n_patients, &mut rng);
            let recheck =
                fresh.switching_proportion(&spec.base_hazards, report.scale, beta, &spec.waning, &spec.design)?;
            Ok((report, recheck))
        })?;
        println!(
            "{:>6.2} {:>7.3} {:>10.5} {:>9.4} {:>9.4}",
            beta, target, report.scale, report.achieved, recheck
        );
        rows.push(calibration_row(&report));
    }
    if let Some(path) = args.output {
        output::write_file(&path, &rows, output::CALIBRATION_HEADER)?;
    }
    Ok(())
}

fn truth(args: TruthArgs, workers: usize) -> Result<()> {
    let mut config = args.config.load()?;
    if let Some(n) = args.oracle_n {
        ensure!(n >= 2, "--oracle-n must be at least 2");
        config.oracle_n = n;
    }
    let plan = SeedPlan::new(config.master_seed);
    let pool = build_pool(workers)?;
    let mut rows: Vec<TruthRow> = Vec::new();

    println!(
        "{:<20} {:>8} {:>8} {:>8} {:>8} {:>7}",
        "scenario", "HE", "TPE", "HE'", "TPE'", "stable"
    );
    let mut seen = BTreeSet::new();
    for spec in config.scenarios() {
        if !seen.insert(spec.id()) {
            continue;
        }
        let row = pool.install(|| -> Result<_> {
            let (calibrated, _) = calibrate_scenario(&spec, &mut plan.calibration(spec.beta, spec.switching_target))?;
            let oracle = true_estimands(&calibrated, &plan)?;
            Ok(truth_row(&calibrated, &oracle))
        })?;
        println!(
            "{:<20} {:>8.2} {:>8.2} {:>8.4} {:>8.4} {:>7}",
            row.scenario_id,
            row.hr_hypothetical,
            row.hr_treatment_policy,
            row.check_hr_hypothetical,
            row.check_hr_treatment_policy,
            row.stable
        );
        rows.push(row);
    }
    if let Some(path) = args.output {
        output::write_file(&path, &rows, output::TRUTH_HEADER)?;
    }
    let unstable: Vec<_> = rows.iter().filter(|r| !r.stable).collect();
    if !unstable.is_empty() {
        for r in &unstable {
            eprintln!(
                "unstable: {} seeds differ by {:.4} (tolerance {})",
                r.scenario_id, r.max_abs_diff, r.tolerance
            );
        }
        bail!("{} of {} oracle estimates were unstable", unstable.len(), rows.len());
    }
    Ok(())
}

fn run(args: RunArgs, workers: usize) -> Result<()> {
    let mut config = args.config.load()?;
    if let Some(r) = args.replicates {
        ensure!(r >= 1, "--replicates must be at least 1");
        config.replicates = r;
    }
    if let Some(n) = args.oracle_n {
        config.oracle_n = n;
    }
    let opts = GridOptions { workers, output_dir: Some(args.output_dir.clone()), strict_truth: args.strict_truth };
    let results = run_scenario_grid(&config, &opts)?;

    for id in &results.resumed {
        eprintln!("resumed {id} from checkpoint");
    }
    for t in results.truths.iter().filter(|t| !t.stable) {
        eprintln!(
            "warning: oracle for {} unstable ({:.4} >= {})",
            t.scenario_id, t.max_abs_diff, t.tolerance
        );
    }
    let redrawn: u64 = results.diagnostics.iter().map(|d| d.n_redrawn).sum();
    let max_mcse = results
        .rows
        .iter()
        .map(|r| r.se_bias.max(r.se_coverage))
        .fold(0.0, f64::max);
    println!(
        "{} result rows from {} scenario runs in {}; {} replicate redraws; largest MCSE {:.5}",
        results.rows.len(),
        results.diagnostics.len(),
        args.output_dir.display(),
        redrawn,
        max_mcse
    );
    Ok(())
}

fn find_scenario(config: &StudyConfig, id: Option<&str>) -> Result<ScenarioSpec> {
    let scenarios = config.scenarios();
    match id {
        None => Ok(scenarios.into_iter().next().expect("validated grid is non-empty")),
        Some(id) => scenarios.into_iter().find(|s| s.id() == id).with_context(|| {
            let ids: BTreeSet<_> = config.scenarios().iter().map(ScenarioSpec::id).collect();
            format!("no scenario {id:?}; available: {}", ids.into_iter().collect::<Vec<_>>().join(", "))
        }),
    }
}

fn simulate(args: SimulateTrialArgs) -> Result<()> {
    let config = args.config.load()?;
    let spec = find_scenario(&config, args.scenario.as_deref())?;
    ensure!(args.n >= 2, "-n must be at least 2");
    let plan = SeedPlan::new(config.master_seed);
    let (calibrated, _) = calibrate_scenario(&spec, &mut plan.calibration(spec.beta, spec.switching_target))?;
    let design = calibrated.design.trial(args.n, calibrated.allocation);
    let arms = calibrated.arm_samplers(calibrated.beta)?;
    let mut rng = plan.trial(&calibrated.key(), args.replicate, 0, args.slot);
    let trial = simulate_trial(&arms, &design, &mut rng)?;

    match &args.output {
        Some(path) => write_trial_to(path, &trial),
        None => Ok(write_trial_csv(&trial, io::stdout().lock())?),
    }
}

fn write_trial_to(path: &Path, trial: &estimand_forge_core::TrialDataset) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write_trial_csv(trial, &mut out)?;
    out.flush()?;
    Ok(())
}
