//! Batch execution of independent runs.
//!
//! With the `parallel` feature (on by default) runs are spread over the rayon
//! pool; without it they execute one after another. Results always come back
//! in input order, and each run owns its seeded streams, so both paths give
//! identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::engine::SimError;
use crate::metrics::MetricsLog;
use crate::scenarios::{build_config, ScenarioParams};

pub fn run_one(params: &ScenarioParams) -> Result<MetricsLog, SimError> {
    crate::engine::run(build_config(params))
}

pub fn run_batch_sequential(params: &[ScenarioParams]) -> Vec<Result<MetricsLog, SimError>> {
    params.iter().map(run_one).collect()
}

#[cfg(feature = "parallel")]
pub fn run_batch(params: &[ScenarioParams]) -> Vec<Result<MetricsLog, SimError>> {
    params.par_iter().map(run_one).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch(params: &[ScenarioParams]) -> Vec<Result<MetricsLog, SimError>> {
    run_batch_sequential(params)
}

/// Like [`run_batch`] but on a dedicated pool of `jobs` threads.
#[cfg(feature = "parallel")]
pub fn run_batch_jobs(params: &[ScenarioParams], jobs: usize) -> Vec<Result<MetricsLog, SimError>> {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| run_batch(params)),
        Err(_) => run_batch_sequential(params),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch_jobs(params: &[ScenarioParams], _jobs: usize) -> Vec<Result<MetricsLog, SimError>> {
    run_batch_sequential(params)
}

/// Same parameters over seeds `first..first + count`.
pub fn seed_sweep(base: &ScenarioParams, first: u64, count: u64) -> Vec<ScenarioParams> {
    (first..first + count)
        .map(|seed| ScenarioParams {
            seed,
            ..base.clone()
        })
        .collect()
}
