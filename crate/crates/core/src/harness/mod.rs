//! Experiment orchestration: JSON config parsing, deterministic seeding,
//! parallel Monte Carlo, scenario presets, and report emission.

pub mod config;
pub mod probes;
pub mod runner;
pub mod scenarios;

pub use config::ExperimentConfig;
pub use runner::{init_threads_from_env, run_paths, EnsembleOutcome};
pub use scenarios::{
    estimate_nu, fixtures, list_scenarios, run_scenario, ScenarioReport, ScenarioRow, SCENARIOS,
};
