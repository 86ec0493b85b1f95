//! Bandit experiments: the fixed preference datasets, multi-seed training
//! sweeps over τ, and aggregation into mean curves with 95% intervals.

use alloc::string::String;
use alloc::vec::Vec;

use crate::closed_form::{psipo_optimal_policy, PsiFn};
use crate::dataset::PreferenceDataset;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::math;
use crate::optim::{train, LearningCurve, TrainConfig};
use crate::policy::{LogitParams, TabularPolicy};
use crate::preference::PreferenceTable;
use crate::rng::derive_seed;
use crate::space::{ActionSpace, ContextSet};

/// z-score of a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// Total order: a ≻ b, b ≻ c, a ≻ c.
    D1,
    /// Cycle: a ≻ b, b ≻ c, c ≻ a.
    D2,
    /// a ≻ b and b ≻ a; c never observed.
    D3,
    /// Two actions with a single comparison y1 ≻ y2.
    TwoActionAsymptotic,
    Custom {
        name: String,
        actions: ActionSpace,
        data: PreferenceDataset,
    },
}

impl Scenario {
    /// Parses the built-in scenario names (`d1`, `d2`, `d3`, `two-action`).
    pub fn builtin(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "d1" => Ok(Self::D1),
            "d2" => Ok(Self::D2),
            "d3" => Ok(Self::D3),
            "two-action" | "two_action" => Ok(Self::TwoActionAsymptotic),
            _ => Err(Error::UnknownId {
                kind: "scenario",
                id: name.into(),
            }),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::D1 => "d1",
            Self::D2 => "d2",
            Self::D3 => "d3",
            Self::TwoActionAsymptotic => "two-action",
            Self::Custom { name, .. } => name,
        }
    }

    pub fn actions(&self) -> ActionSpace {
        match self {
            Self::TwoActionAsymptotic => ActionSpace::new(["y1", "y2"]).expect("static ids"),
            Self::Custom { actions, .. } => actions.clone(),
            _ => ActionSpace::new(["a", "b", "c"]).expect("static ids"),
        }
    }
}

pub fn build_dataset(scenario: &Scenario) -> Result<PreferenceDataset> {
    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    match scenario {
        Scenario::D1 => PreferenceDataset::bandit(3, &[(A, B), (B, C), (A, C)]),
        Scenario::D2 => PreferenceDataset::bandit(3, &[(A, B), (B, C), (C, A)]),
        Scenario::D3 => PreferenceDataset::bandit(3, &[(A, B), (B, A)]),
        Scenario::TwoActionAsymptotic => PreferenceDataset::bandit(2, &[(0, 1)]),
        Scenario::Custom { actions, data, .. } => {
            if data.n_actions() != actions.len() {
                return Err(Error::Dimension {
                    what: "custom dataset actions",
                    expected: actions.len(),
                    found: data.n_actions(),
                });
            }
            Ok(data.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub method: LossKind,
    pub tau_grid: Vec<f64>,
    pub n_seeds: usize,
    pub base_seed: u64,
    /// Everything except `tau` and `seed`, which come from the sweep.
    pub train: TrainConfig,
}

impl ExperimentSpec {
    /// The default sweep: τ ∈ {0.01, 0.1, 0.5, 1}, 10 seeds, default training.
    pub fn new(scenario: Scenario, method: LossKind) -> Self {
        Self {
            scenario,
            method,
            tau_grid: alloc::vec![0.01, 0.1, 0.5, 1.0],
            n_seeds: 10,
            base_seed: 0,
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_grid.is_empty() {
            return Err(Error::param("tau grid must not be empty"));
        }
        if self.n_seeds == 0 {
            return Err(Error::param("at least one seed is required"));
        }
        for &tau in &self.tau_grid {
            TrainConfig { tau, ..self.train }.validate()?;
        }
        Ok(())
    }

    /// Every (τ, seed) run of the sweep in a fixed order.
    pub fn jobs(&self) -> Vec<Job> {
        let mut out = Vec::with_capacity(self.tau_grid.len() * self.n_seeds);
        for (tau_index, &tau) in self.tau_grid.iter().enumerate() {
            for seed_index in 0..self.n_seeds {
                out.push(Job {
                    tau_index,
                    tau,
                    seed_index,
                    seed: child_seed(self.base_seed, tau, seed_index),
                });
            }
        }
        out
    }
}

/// Seed for one run; depends only on the base seed, τ and the seed index.
pub fn child_seed(base: u64, tau: f64, seed_index: usize) -> u64 {
    derive_seed(base, &[tau.to_bits(), seed_index as u64])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub tau_index: usize,
    pub tau: f64,
    pub seed_index: usize,
    pub seed: u64,
}

/// Data and reference policy shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub actions: ActionSpace,
    pub data: PreferenceDataset,
    pub pi_ref: TabularPolicy,
}

pub fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    spec.validate()?;
    let data = build_dataset(&spec.scenario)?;
    if data.n_contexts() != 1 {
        return Err(Error::Unsupported("experiments run on single-context datasets"));
    }
    Ok(Prepared {
        actions: spec.scenario.actions(),
        pi_ref: TabularPolicy::uniform(1, data.n_actions()),
        data,
    })
}

/// One training run from uniform logits.
pub fn run_job(spec: &ExperimentSpec, prepared: &Prepared, job: &Job) -> Result<LearningCurve> {
    let cfg = TrainConfig {
        tau: job.tau,
        seed: job.seed,
        ..spec.train
    };
    let s0 = LogitParams::zeros(1, prepared.data.n_actions());
    train(spec.method, &s0, &prepared.pi_ref, &prepared.data, &cfg)
}

/// Mean policy and 95% interval per recorded step, across seeds, for one τ.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub tau: f64,
    pub n_seeds: usize,
    pub actions: Vec<String>,
    pub steps: Vec<usize>,
    /// `mean[k][a]`: mean probability of action `a` at `steps[k]`.
    pub mean: Vec<Vec<f64>>,
    /// `1.96 · sd / √n` with the sample standard deviation (0 for one seed).
    pub half_width: Vec<Vec<f64>>,
}

impl AggregateCurve {
    pub fn final_mean(&self) -> &[f64] {
        self.mean.last().expect("curves are never empty")
    }

    pub fn final_mean_of(&self, action: usize) -> f64 {
        self.final_mean()[action]
    }
}

/// Reduces single-context runs sharing one τ. All curves must have been
/// recorded at the same steps.
pub fn aggregate(tau: f64, actions: &ActionSpace, curves: &[LearningCurve]) -> Result<AggregateCurve> {
    let first = curves.first().ok_or(Error::param("nothing to aggregate"))?;
    let steps: Vec<usize> = first.points.iter().map(|p| p.step).collect();
    let n_actions = actions.len();
    for c in curves {
        if c.points.len() != steps.len() || c.points.iter().zip(&steps).any(|(p, s)| p.step != *s) {
            return Err(Error::param("runs recorded at different steps"));
        }
        if c.points.iter().any(|p| p.policy.n_contexts() != 1 || p.policy.n_actions() != n_actions) {
            return Err(Error::Dimension {
                what: "aggregated policy",
                expected: n_actions,
                found: first.points[0].policy.n_actions(),
            });
        }
    }
    let n = curves.len() as f64;
    let mut mean = Vec::with_capacity(steps.len());
    let mut half_width = Vec::with_capacity(steps.len());
    for k in 0..steps.len() {
        let mut m_row = Vec::with_capacity(n_actions);
        let mut h_row = Vec::with_capacity(n_actions);
        for a in 0..n_actions {
            let m = curves.iter().map(|c| c.points[k].policy.prob(0, a)).sum::<f64>() / n;
            let h = if curves.len() > 1 {
                let var = curves
                    .iter()
                    .map(|c| {
                        let d = c.points[k].policy.prob(0, a) - m;
                        d * d
                    })
                    .sum::<f64>()
                    / (n - 1.0);
                Z_95 * math::sqrt(var) / math::sqrt(n)
            } else {
                0.0
            };
            m_row.push(m);
            h_row.push(h);
        }
        mean.push(m_row);
        half_width.push(h_row);
    }
    Ok(AggregateCurve {
        tau,
        n_seeds: curves.len(),
        actions: actions.ids().to_vec(),
        steps,
        mean,
        half_width,
    })
}

/// All runs of a sweep, grouped by τ in grid order.
pub fn run_all(spec: &ExperimentSpec) -> Result<(Prepared, Vec<Vec<LearningCurve>>)> {
    let prepared = prepare(spec)?;
    let mut grouped: Vec<Vec<LearningCurve>> = spec.tau_grid.iter().map(|_| Vec::new()).collect();
    for job in spec.jobs() {
        grouped[job.tau_index].push(run_job(spec, &prepared, &job)?);
    }
    Ok((prepared, grouped))
}

/// Serial sweep; one aggregate per τ in grid order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<AggregateCurve>> {
    let (prepared, grouped) = run_all(spec)?;
    spec.tau_grid
        .iter()
        .zip(&grouped)
        .map(|(&tau, runs)| aggregate(tau, &prepared.actions, runs))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticRow {
    pub tau: f64,
    pub ipo: f64,
    pub dpo: f64,
}

/// Probability of the preferred action in the two-action deterministic
/// bandit (uniform `μ` and `π_ref`) under the IPO optimum and under the
/// log-odds optimum with clipping `epsilon`.
pub fn asymptotic_table(tau_grid: &[f64], epsilon: f64) -> Result<Vec<AsymptoticRow>> {
    let actions = ActionSpace::new(["y1", "y2"]).expect("static ids");
    let table = PreferenceTable::total_order(actions, ContextSet::single());
    let u = TabularPolicy::uniform(1, 2);
    let log_odds = PsiFn::log_odds(epsilon)?;
    tau_grid
        .iter()
        .map(|&tau| {
            Ok(AsymptoticRow {
                tau,
                ipo: psipo_optimal_policy(&table, &u, &u, tau, PsiFn::Identity)?.prob(0, 0),
                dpo: psipo_optimal_policy(&table, &u, &u, tau, log_odds)?.prob(0, 0),
            })
        })
        .collect()
}
