//! Experiment runner for the ndnqos simulator.

pub mod plan;
pub mod runner;

pub use plan::{parse_plan, Args, ExperimentPlan, ParseFailure, PlanError, PlanPoint};
pub use runner::{aggregate, run_plan, RunError, RunReport};
