//! Adam and the training loops.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::closed_form::check_tau;
use crate::dataset::{PreferenceDataset, Record};
use crate::error::{Error, Result};
use crate::losses::{empirical_loss, population_loss, LossKind};
use crate::math;
use crate::policy::{LogitParams, TabularPolicy};
use crate::preference::PreferenceTable;
use crate::rng::rng_from_seed;
use crate::table::PerContext;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates for Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: PerContext,
    v: PerContext,
    t: u64,
    config: AdamConfig,
}

impl AdamState {
    pub fn new(n_contexts: usize, n_actions: usize, config: AdamConfig) -> Self {
        Self {
            m: PerContext::zeros(n_contexts, n_actions),
            v: PerContext::zeros(n_contexts, n_actions),
            t: 0,
            config,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &PerContext {
        &self.m
    }

    pub fn second_moment(&self) -> &PerContext {
        &self.v
    }

    /// One update: `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
    /// `s ← s − lr·m̂/(√v̂ + ε)` with `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`.
    pub fn step(&mut self, params: &mut PerContext, grad: &PerContext, lr: f64) -> Result<()> {
        let (c, a) = self.m.shape();
        params.check_shape("parameters", c, a)?;
        grad.check_shape("gradient", c, a)?;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::param(format!("learning rate must be positive, got {lr}")));
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let t = self.t as f64;
        let bc1 = 1.0 - libm::pow(beta1, t);
        let bc2 = 1.0 - libm::pow(beta2, t);
        let m = self.m.as_mut_slice();
        let v = self.v.as_mut_slice();
        for (i, (p, &g)) in params.as_mut_slice().iter_mut().zip(grad.as_slice()).enumerate() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *p -= lr * m_hat / (math::sqrt(v_hat) + epsilon);
        }
        Ok(())
    }
}

/// Hyperparameters of a training run. Defaults are the bandit experiment
/// settings: 18000 Adam steps, learning rate 0.01, mini-batches of 9.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub tau: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Curve sampling stride; the final step is always recorded.
    pub record_every: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            learning_rate: 0.01,
            steps: 18_000,
            batch_size: 9,
            seed: 0,
            record_every: 100,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning rate must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::param("steps must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every must be at least 1"));
        }
        Ok(())
    }

    fn records_at(&self, step: usize) -> bool {
        step.is_multiple_of(self.record_every) || step == self.steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    /// Number of updates applied so far.
    pub step: usize,
    pub policy: TabularPolicy,
    /// Full (not mini-batch) loss at this point.
    pub loss: f64,
}

/// Policies recorded along a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub loss: LossKind,
    pub config: TrainConfig,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn final_point(&self) -> &CurvePoint {
        self.points.last().expect("a curve always records its final step")
    }

    pub fn final_policy(&self) -> &TabularPolicy {
        &self.final_point().policy
    }
}

fn check_init(s0: &LogitParams, pi_ref: &TabularPolicy) -> Result<()> {
    s0.table()
        .check_shape("initial logits", pi_ref.n_contexts(), pi_ref.n_actions())
}

/// Stochastic training on an empirical loss: each step draws `batch_size`
/// records uniformly with replacement, averages their gradients and takes one
/// Adam step. Deterministic given `cfg.seed`.
pub fn train(
    kind: LossKind,
    s0: &LogitParams,
    pi_ref: &TabularPolicy,
    data: &PreferenceDataset,
    cfg: &TrainConfig,
) -> Result<LearningCurve> {
    cfg.validate()?;
    check_init(s0, pi_ref)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    // validates shapes and support once before the loop
    empirical_loss(kind, s0, pi_ref, data.records(), cfg.tau)?;

    let mut rng = rng_from_seed(cfg.seed);
    let mut params = s0.clone();
    let mut adam = AdamState::new(s0.n_contexts(), s0.n_actions(), cfg.adam);
    let mut batch: Vec<Record> = Vec::with_capacity(cfg.batch_size);
    let mut points = Vec::new();
    for step in 1..=cfg.steps {
        batch.clear();
        batch.extend((0..cfg.batch_size).map(|_| data.records()[rng.random_range(0..data.len())]));
        let grad = empirical_loss(kind, &params, pi_ref, &batch, cfg.tau)?.gradient;
        adam.step(&mut params.0, &grad, cfg.learning_rate)?;
        if cfg.records_at(step) {
            let loss = empirical_loss(kind, &params, pi_ref, data.records(), cfg.tau)?.value;
            points.push(CurvePoint {
                step,
                policy: params.to_policy(),
                loss,
            });
        }
    }
    Ok(LearningCurve {
        loss: kind,
        config: *cfg,
        points,
    })
}

/// Full-gradient Adam on the exact population loss (DPO or the IPO
/// root-finding loss). `batch_size` and `seed` are unused.
pub fn population_train(
    kind: LossKind,
    s0: &LogitParams,
    pi_ref: &TabularPolicy,
    table: &PreferenceTable,
    mu: &TabularPolicy,
    cfg: &TrainConfig,
) -> Result<LearningCurve> {
    Ok(population_descent(kind, s0, pi_ref, table, mu, cfg)?.0)
}

/// [`population_train`] that also hands back the final logits.
pub fn population_descent(
    kind: LossKind,
    s0: &LogitParams,
    pi_ref: &TabularPolicy,
    table: &PreferenceTable,
    mu: &TabularPolicy,
    cfg: &TrainConfig,
) -> Result<(LearningCurve, LogitParams)> {
    cfg.validate()?;
    check_init(s0, pi_ref)?;
    let mut params = s0.clone();
    let mut adam = AdamState::new(s0.n_contexts(), s0.n_actions(), cfg.adam);
    let mut points = Vec::new();
    let mut current = population_loss(kind, &params, pi_ref, table, mu, cfg.tau)?;
    for step in 1..=cfg.steps {
        adam.step(&mut params.0, &current.gradient, cfg.learning_rate)?;
        current = population_loss(kind, &params, pi_ref, table, mu, cfg.tau)?;
        if cfg.records_at(step) {
            points.push(CurvePoint {
                step,
                policy: params.to_policy(),
                loss: current.value,
            });
        }
    }
    Ok((
        LearningCurve {
            loss: kind,
            config: *cfg,
            points,
        },
        params,
    ))
}
