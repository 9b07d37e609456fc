//! Monte Carlo harness: calibration, oracle truths, replicates, pooling
//! and performance summaries across a scenario grid.

pub mod calibrate;
pub mod grid;
pub mod output;
pub mod performance;
pub mod replicate;
pub mod scenario;
pub mod seeding;
pub mod truth;

pub use calibrate::{calibrate_h01, calibrate_scenario, CalibrationReport, CalibrationSettings, ControlCohort};
pub use grid::{run_replicates, run_scenario, run_scenario_grid, summarize, GridOptions, GridResults, ScenarioRun};
pub use output::{CalibrationRow, DiagnosticsRow, RawRow, ResultRow, TruthRow};
pub use performance::{performance, PerformanceSummary, PooledDraw};
pub use replicate::{run_replicate, ReplicateOutcome, TrialEstimates};
pub use scenario::{Dgm, ScenarioSpec};
pub use seeding::{ScenarioKey, SeedPlan};
pub use truth::{true_estimands, OracleReport, TrueEstimands};
