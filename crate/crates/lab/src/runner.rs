//! Parallel experiment execution. Runs are independent; aggregation happens
//! after every run has joined, in grid order, so results do not depend on
//! the thread count.

use pref_lab_core::experiments::{aggregate, prepare, run_job, AggregateCurve, ExperimentSpec};
use pref_lab_core::LearningCurve;
use rayon::prelude::*;

use crate::error::{LabError, Result};

pub const THREADS_VAR: &str = "PREF_LAB_THREADS";

/// Thread cap from `PREF_LAB_THREADS`; unset or 0 means one per core.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| LabError::usage(format!("{THREADS_VAR} must be a non-negative integer, got '{v}'"))),
        Err(_) => Ok(0),
    }
}

pub fn run_experiment_parallel(spec: &ExperimentSpec, threads: usize) -> Result<Vec<AggregateCurve>> {
    let prepared = prepare(spec)?;
    let jobs = spec.jobs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::usage(format!("thread pool: {e}")))?;
    let runs: Vec<LearningCurve> = pool.install(|| {
        jobs.par_iter()
            .map(|job| run_job(spec, &prepared, job))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut grouped: Vec<Vec<LearningCurve>> = spec.tau_grid.iter().map(|_| Vec::new()).collect();
    for (job, run) in jobs.iter().zip(runs) {
        grouped[job.tau_index].push(run);
    }
    spec.tau_grid
        .iter()
        .zip(&grouped)
        .map(|(&tau, runs)| Ok(aggregate(tau, &prepared.actions, runs)?))
        .collect()
}
