//! Simulation of randomized trials with control-arm treatment switching,
//! estimation of overall-survival hazard ratios under the treatment-policy
//! and hypothetical strategies, and meta-analysis of mixed estimands.

// Negated float comparisons are how NaN gets rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod harness;
pub mod hazards;
pub mod idm;
pub mod meta;
pub mod survfit;
pub mod trial;

pub use config::StudyConfig;
pub use error::{Error, Result};
pub use harness::{Dgm, GridOptions, GridResults, ResultRow, ScenarioSpec, SeedPlan};
pub use hazards::PiecewiseHazard;
pub use idm::{Arm, H12Clock, PatientPath, TransitionHazards, WaningRule};
pub use meta::{pool, MetaResult, PoolingMethod};
pub use survfit::{cox_fit, estimate, CoxFit, EstimateRecord, TieMethod};
pub use trial::{Allocation, DesignConstants, PatientRecord, Strategy, TrialDataset, TrialDesign};
