#![allow(dead_code)]

use pref_lab_core::rng::LabRng;
use pref_lab_core::space::{ActionSpace, ContextSet};
use pref_lab_core::table::PerContext;
use pref_lab_core::{LogitParams, PreferenceTable, TabularPolicy};
use rand::Rng;

pub fn actions(n: usize) -> ActionSpace {
    ActionSpace::new((0..n).map(|i| format!("y{i}"))).unwrap()
}

pub fn contexts(rng: &mut LabRng, n: usize) -> ContextSet {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    ContextSet::new((0..n).map(|i| format!("x{i}")), w.iter().map(|v| v / total).collect()).unwrap()
}

/// Independent `P[i][j] ∈ [0.05, 0.95]` for `i < j`; not Bradley-Terry in general.
pub fn random_table(rng: &mut LabRng, n_actions: usize, n_contexts: usize) -> PreferenceTable {
    let ctx = contexts(rng, n_contexts);
    PreferenceTable::from_fn(actions(n_actions), ctx, |_, _, _| rng.random_range(0.05..0.95)).unwrap()
}

pub fn random_logits(rng: &mut LabRng, c: usize, n: usize, scale: f64) -> LogitParams {
    let rows: Vec<Vec<f64>> = (0..c).map(|_| (0..n).map(|_| rng.random_range(-scale..scale)).collect()).collect();
    LogitParams::from_rows(&rows).unwrap()
}

/// Full-support policy with logits in `[-1, 1]`.
pub fn random_policy(rng: &mut LabRng, c: usize, n: usize) -> TabularPolicy {
    random_logits(rng, c, n, 1.0).to_policy()
}

pub fn random_rewards(rng: &mut LabRng, c: usize, n: usize, scale: f64) -> PerContext {
    random_logits(rng, c, n, scale).0
}
