#![allow(dead_code)]

use std::path::PathBuf;

use estimand_forge_core::harness::ScenarioSpec;
use estimand_forge_core::{Allocation, StudyConfig, TransitionHazards};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// The shipped full-grid configuration.
pub fn study_config() -> StudyConfig {
    StudyConfig::load(&config_path("study.toml")).expect("shipped config loads")
}

pub fn base_hazards() -> TransitionHazards {
    study_config().hazards
}

/// A scenario from the shipped config with the given cell coordinates.
pub fn scenario(beta: f64, switching: f64, allocation: Allocation) -> ScenarioSpec {
    let config = study_config();
    config
        .scenarios()
        .into_iter()
        .find(|s| s.beta == beta && s.switching_target == switching && s.allocation == allocation)
        .unwrap_or_else(|| ScenarioSpec::new(beta, switching, allocation, config.hazards.clone()))
}
