//! Preference optimisation on finite contextual bandits.
//!
//! This crate holds the pure algorithmic side of the lab: the domain types
//! (action and context spaces, preference tables, tabular policies and
//! datasets), the closed-form regularised optima, every training loss with
//! its analytic gradient, a from-scratch Adam optimiser with the stochastic
//! training loop, the two-stage RLHF pipeline, brute-force verification
//! oracles and the experiment builders.
//!
//! Everything here is `no_std` with `alloc`. File formats, the parallel
//! experiment runner and the command-line tool live in the `pref-lab` crate.
//!
//! Conventions used throughout:
//!
//! * `P[x][i][j]` is the probability that action `i` is preferred to action
//!   `j` in context `x`; self-comparisons are fixed at `1/2`.
//! * Per-context vectors (policies, logits, rewards, gradients) are stored in
//!   a [`PerContext`] table indexed `[context][action]`.
//! * `tau` is the KL-regularisation strength.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod closed_form;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod math;
pub mod optim;
pub mod oracle;
pub mod policy;
pub mod preference;
pub mod rlhf;
pub mod rng;
pub mod space;
pub mod table;

pub use closed_form::{
    expected_psi, psipo_objective, psipo_optimal_policy, regularized_argmax, PsiFn, RewardTable,
};
pub use dataset::{sample_dataset, PreferenceDataset, Record};
pub use error::{Error, Result};
pub use losses::{LossKind, LossValue, LossWarning};
pub use optim::{population_train, train, AdamConfig, AdamState, CurvePoint, LearningCurve, TrainConfig};
pub use policy::{kl_divergence, total_variation, LogitParams, TabularPolicy};
pub use preference::{preference_vs_policy, total_preference, PreferenceTable};
pub use space::{ActionSpace, ContextSet};
pub use table::PerContext;

/// Tolerance applied when validating probability vectors and preference
/// antisymmetry at construction time.
pub const PROB_TOLERANCE: f64 = 1e-12;
