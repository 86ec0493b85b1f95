//! Two-stage RLHF: fit a Bradley-Terry reward, then solve the KL-regularised
//! policy problem in closed form. Also hosts the DPO/RLHF equivalence check.

use alloc::vec::Vec;

use crate::closed_form::{check_tau, regularized_argmax, RewardTable};
use crate::dataset::PreferenceDataset;
use crate::error::{Error, Result};
use crate::losses::{bt_logistic_loss, bt_population_loss, LossKind, LossValue};
use crate::math;
use crate::optim::{population_descent, AdamConfig, AdamState, TrainConfig};
use crate::policy::{total_variation, LogitParams, TabularPolicy};
use crate::preference::PreferenceTable;
use crate::table::PerContext;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardFitConfig {
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Converged once the gradient's largest entry drops below this...
    pub grad_tol: f64,
    /// ...and every diagonal Newton step `|g_i| / H_ii` is below this. A
    /// reward running off to infinity keeps Newton steps of order one even
    /// as its gradient vanishes.
    pub newton_tol: f64,
    pub adam: AdamConfig,
}

impl Default for RewardFitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            max_steps: 200_000,
            grad_tol: 1e-9,
            newton_tol: 1e-6,
            adam: AdamConfig::default(),
        }
    }
}

/// Fitted rewards, zero-sum over the determined actions of every context.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardFit {
    pub rewards: RewardTable,
    /// `(context, action)` pairs with no information; pinned at 0.
    pub undetermined: Vec<(usize, usize)>,
    pub steps: usize,
    pub grad_norm: f64,
}

/// Weighted comparison counts `w[x][y][y']` with the probability that `y`
/// beats `y'` folded in.
struct Comparisons {
    n_actions: usize,
    weights: Vec<f64>,
}

impl Comparisons {
    fn idx(&self, x: usize, y: usize, y2: usize) -> usize {
        (x * self.n_actions + y) * self.n_actions + y2
    }

    /// Diagonal of the loss Hessian at `r`.
    fn curvature(&self, r: &PerContext) -> PerContext {
        let n = self.n_actions;
        let mut h = PerContext::zeros(r.n_contexts(), n);
        for x in 0..r.n_contexts() {
            for y in 0..n {
                for y2 in 0..n {
                    let w = self.weights[self.idx(x, y, y2)];
                    if w == 0.0 || y == y2 {
                        continue;
                    }
                    let d = r.get(x, y) - r.get(x, y2);
                    let c = w * math::sigmoid(d) * math::sigmoid(-d);
                    h.add(x, y, c);
                    h.add(x, y2, c);
                }
            }
        }
        h
    }
}

fn fit_with<F>(
    n_contexts: usize,
    comparisons: Comparisons,
    determined: &PerContext,
    cfg: &RewardFitConfig,
    mut loss: F,
) -> Result<RewardFit>
where
    F: FnMut(&RewardTable) -> Result<LossValue>,
{
    let n = comparisons.n_actions;
    let mut r = PerContext::zeros(n_contexts, n);
    let mut adam = AdamState::new(n_contexts, n, cfg.adam);
    let mut grad_norm = f64::INFINITY;
    for step in 0..=cfg.max_steps {
        let value = loss(&RewardTable::new(r.clone())?)?;
        grad_norm = value.gradient.max_abs();
        if grad_norm < cfg.grad_tol {
            let curv = comparisons.curvature(&r);
            let newton = value
                .gradient
                .as_slice()
                .iter()
                .zip(curv.as_slice())
                .filter(|(g, _)| **g != 0.0)
                .fold(0.0, |m: f64, (g, h)| m.max(g.abs() / h));
            if newton < cfg.newton_tol {
                return Ok(RewardFit {
                    undetermined: undetermined_list(determined),
                    rewards: RewardTable::new(r)?,
                    steps: step,
                    grad_norm,
                });
            }
        }
        if step == cfg.max_steps {
            break;
        }
        adam.step(&mut r, &value.gradient, cfg.learning_rate)?;
        project_zero_sum(&mut r, determined);
    }
    let spread = (0..n_contexts)
        .map(|x| {
            let row = r.row(x);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .fold(0.0, f64::max);
    Err(Error::NotConverged {
        steps: cfg.max_steps,
        grad_norm,
        reward_spread: spread,
    })
}

/// Subtracts the mean over determined actions; undetermined entries stay 0.
fn project_zero_sum(r: &mut PerContext, determined: &PerContext) {
    for x in 0..r.n_contexts() {
        let mask = determined.row(x);
        let count = mask.iter().filter(|m| **m > 0.0).count();
        if count == 0 {
            r.row_mut(x).iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let mean = r.row(x).iter().zip(mask).filter(|(_, m)| **m > 0.0).map(|(v, _)| v).sum::<f64>() / count as f64;
        for (v, m) in r.row_mut(x).iter_mut().zip(mask) {
            *v = if *m > 0.0 { *v - mean } else { 0.0 };
        }
    }
}

fn undetermined_list(determined: &PerContext) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for x in 0..determined.n_contexts() {
        for (y, &m) in determined.row(x).iter().enumerate() {
            if m == 0.0 {
                out.push((x, y));
            }
        }
    }
    out
}

/// Minimises the population Bradley-Terry loss
/// `−E_{x∼ρ, y,y'∼μ}[p*(y ≻ y'|x)·log σ(r(x, y) − r(x, y'))]` with full-batch
/// Adam, projecting onto zero-sum rewards after every step.
///
/// Deterministic preferences have no finite minimiser; the fit then reports
/// [`Error::NotConverged`]. Clip the table first (see
/// [`PreferenceTable::clipped`]) to obtain finite rewards.
pub fn fit_bt_reward(table: &PreferenceTable, mu: &TabularPolicy, cfg: &RewardFitConfig) -> Result<RewardFit> {
    table.check_policy("behaviour policy", mu)?;
    let (c, n) = (table.n_contexts(), table.n_actions());
    let mut determined = PerContext::zeros(c, n);
    let mut weights = alloc::vec![0.0; c * n * n];
    for (x, &rho) in table.contexts().weights().iter().enumerate() {
        if rho == 0.0 {
            continue;
        }
        for y in 0..n {
            if mu.prob(x, y) > 0.0 {
                determined.set(x, y, 1.0);
            }
            for y2 in 0..n {
                weights[(x * n + y) * n + y2] = rho * mu.prob(x, y) * mu.prob(x, y2) * table.get(x, y, y2);
            }
        }
    }
    let comparisons = Comparisons { n_actions: n, weights };
    fit_with(c, comparisons, &determined, cfg, |r| bt_population_loss(r, table, mu))
}

/// Minimises the empirical logistic loss over the dataset. Actions that never
/// appear in a context are flagged as undetermined and pinned at 0.
pub fn fit_bt_reward_empirical(data: &PreferenceDataset, cfg: &RewardFitConfig) -> Result<RewardFit> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (c, n) = (data.n_contexts(), data.n_actions());
    let mut determined = PerContext::zeros(c, n);
    let mut weights = alloc::vec![0.0; c * n * n];
    let inv_n = 1.0 / data.len() as f64;
    for r in data.records() {
        determined.set(r.context, r.winner, 1.0);
        determined.set(r.context, r.loser, 1.0);
        weights[(r.context * n + r.winner) * n + r.loser] += inv_n;
    }
    let comparisons = Comparisons { n_actions: n, weights };
    fit_with(c, comparisons, &determined, cfg, |r| bt_logistic_loss(r, data))
}

/// Exact maximiser of `E_π[r] − τ·D_KL(π || π_ref)`.
pub fn rlhf_policy(rewards: &RewardTable, pi_ref: &TabularPolicy, tau: f64) -> Result<TabularPolicy> {
    regularized_argmax(rewards.table(), pi_ref, tau)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceConfig {
    /// Preference entries are clamped into `[δ, 1 − δ]` before reward fitting.
    pub clip_delta: f64,
    pub reward: RewardFitConfig,
    /// Learning rate and step budget for the population DPO descent.
    pub dpo_learning_rate: f64,
    pub dpo_steps: usize,
    pub tolerance: f64,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            clip_delta: 1e-6,
            reward: RewardFitConfig::default(),
            dpo_learning_rate: 0.01,
            dpo_steps: 20_000,
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub rlhf_policy: TabularPolicy,
    pub dpo_policy: TabularPolicy,
    pub rewards: RewardTable,
    pub total_variation: f64,
    pub tolerance: f64,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.total_variation <= self.tolerance
    }
}

/// Compares the RLHF policy built on the fitted Bradley-Terry reward with the
/// minimiser of the population DPO loss, on an arbitrary (not necessarily
/// Bradley-Terry) preference table.
pub fn verify_dpo_rlhf_equivalence(
    table: &PreferenceTable,
    mu: &TabularPolicy,
    pi_ref: &TabularPolicy,
    tau: f64,
    cfg: &EquivalenceConfig,
) -> Result<EquivalenceReport> {
    check_tau(tau)?;
    let clipped = table.clipped(cfg.clip_delta)?;
    let fit = fit_bt_reward(&clipped, mu, &cfg.reward)?;
    let rlhf = rlhf_policy(&fit.rewards, pi_ref, tau)?;

    let train_cfg = TrainConfig {
        tau,
        learning_rate: cfg.dpo_learning_rate,
        steps: cfg.dpo_steps,
        record_every: cfg.dpo_steps,
        ..TrainConfig::default()
    };
    let s0 = LogitParams::zeros(table.n_contexts(), table.n_actions());
    let (curve, _) = population_descent(LossKind::Dpo, &s0, pi_ref, &clipped, mu, &train_cfg)?;
    let dpo = curve.final_policy().clone();
    Ok(EquivalenceReport {
        total_variation: total_variation(&rlhf, &dpo)?,
        rlhf_policy: rlhf,
        dpo_policy: dpo,
        rewards: fit.rewards,
        tolerance: cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{psipo_optimal_policy, PsiFn};
    use crate::math::sigmoid;
    use crate::space::{ActionSpace, ContextSet};

    fn abc() -> ActionSpace {
        ActionSpace::new(["a", "b", "c"]).unwrap()
    }

    #[test]
    fn uniform_table_gives_zero_reward() {
        let t = PreferenceTable::uniform(abc(), ContextSet::single());
        let fit = fit_bt_reward(&t, &TabularPolicy::uniform(1, 3), &RewardFitConfig::default()).unwrap();
        assert!(fit.rewards.table().max_abs() < 1e-12);
        assert!(fit.undetermined.is_empty());
    }

    #[test]
    fn recovers_bradley_terry_reward() {
        let r0 = PerContext::from_rows(&[[1.0, -0.5, 0.2], [0.0, 2.0, -1.0]]).unwrap();
        let ctx = ContextSet::new(["x", "y"], alloc::vec![0.4, 0.6]).unwrap();
        let t = PreferenceTable::bradley_terry(abc(), ctx, &r0).unwrap();
        let mu = TabularPolicy::from_rows(&[[0.3, 0.3, 0.4], [0.2, 0.5, 0.3]]).unwrap();
        let fit = fit_bt_reward(&t, &mu, &RewardFitConfig::default()).unwrap();
        for x in 0..2 {
            let mean = r0.row(x).iter().sum::<f64>() / 3.0;
            for y in 0..3 {
                assert!((fit.rewards.get(x, y) - (r0.get(x, y) - mean)).abs() < 1e-6);
            }
            assert!(fit.rewards.row(x).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_table_diverges() {
        let t = PreferenceTable::total_order(abc(), ContextSet::single());
        let cfg = RewardFitConfig {
            max_steps: 20_000,
            ..RewardFitConfig::default()
        };
        match fit_bt_reward(&t, &TabularPolicy::uniform(1, 3), &cfg) {
            Err(Error::NotConverged { reward_spread, .. }) => assert!(reward_spread > 20.0, "{reward_spread}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn empirical_paired_comparison_mle() {
        let mut pairs = alloc::vec![(0, 1); 8];
        pairs.extend([(1, 0), (1, 0)]);
        let d = PreferenceDataset::bandit(2, &pairs).unwrap();
        let fit = fit_bt_reward_empirical(&d, &RewardFitConfig::default()).unwrap();
        let gap = fit.rewards.get(0, 0) - fit.rewards.get(0, 1);
        assert!((gap - 4f64.ln()).abs() < 1e-4, "{gap}");
    }

    #[test]
    fn unobserved_action_is_flagged() {
        let d = PreferenceDataset::bandit(3, &[(0, 1), (1, 0)]).unwrap();
        let fit = fit_bt_reward_empirical(&d, &RewardFitConfig::default()).unwrap();
        assert_eq!(fit.undetermined, [(0, 2)]);
        assert_eq!(fit.rewards.get(0, 2), 0.0);
        assert!((fit.rewards.get(0, 0) - fit.rewards.get(0, 1)).abs() < 1e-6);
    }

    #[test]
    fn rlhf_policy_examples() {
        let u = TabularPolicy::uniform(1, 2);
        let zero = rlhf_policy(&RewardTable::zeros(1, 2), &u, 0.3).unwrap();
        assert_eq!(zero, u);
        let r = RewardTable::from_rows(&[[1.0, 0.0]]).unwrap();
        let p = rlhf_policy(&r, &u, 1.0).unwrap();
        assert!((p.prob(0, 0) - sigmoid(1.0)).abs() < 1e-15);
        let wide = rlhf_policy(&r, &u, 1e6).unwrap();
        assert!((wide.prob(0, 0) - 0.5).abs() < 1e-5);
        let shifted = RewardTable::from_rows(&[[101.0, 100.0]]).unwrap();
        assert!(total_variation(&p, &rlhf_policy(&shifted, &u, 1.0).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn cyclic_preferences_equivalence() {
        let t = PreferenceTable::from_fn(abc(), ContextSet::single(), |_, i, j| match (i, j) {
            (0, 1) | (1, 2) => 0.9,
            _ => 0.1, // (0, 2): c beats a with 0.9
        })
        .unwrap();
        let u = TabularPolicy::uniform(1, 3);
        let rep = verify_dpo_rlhf_equivalence(&t, &u, &u, 1.0, &EquivalenceConfig::default()).unwrap();
        assert!(rep.passed(), "{}", rep.total_variation);
    }

    #[test]
    fn bradley_terry_equivalence_matches_log_odds_closed_form() {
        let r0 = PerContext::from_rows(&[[0.8, -0.3, 0.1, -0.6]]).unwrap();
        let t = PreferenceTable::bradley_terry(ActionSpace::new(["a", "b", "c", "d"]).unwrap(), ContextSet::single(), &r0)
            .unwrap();
        let mu = TabularPolicy::from_rows(&[[0.1, 0.2, 0.3, 0.4]]).unwrap();
        let pi_ref = TabularPolicy::from_rows(&[[0.4, 0.3, 0.2, 0.1]]).unwrap();
        let tau = 0.5;
        let rep = verify_dpo_rlhf_equivalence(&t, &mu, &pi_ref, tau, &EquivalenceConfig::default()).unwrap();
        assert!(rep.passed(), "{}", rep.total_variation);
        let closed = psipo_optimal_policy(&t, &mu, &pi_ref, tau, PsiFn::LogOdds { epsilon: 1e-12 }).unwrap();
        assert!(total_variation(&closed, &rep.rlhf_policy).unwrap() < 1e-6);
        assert!(total_variation(&closed, &rep.dpo_policy).unwrap() < 1e-3);
    }

    #[test]
    fn uniform_table_equivalence_is_reference() {
        let t = PreferenceTable::uniform(abc(), ContextSet::single());
        let u = TabularPolicy::uniform(1, 3);
        let pi_ref = TabularPolicy::from_rows(&[[0.5, 0.3, 0.2]]).unwrap();
        let rep = verify_dpo_rlhf_equivalence(&t, &u, &pi_ref, 1.0, &EquivalenceConfig::default()).unwrap();
        assert!(total_variation(&rep.rlhf_policy, &pi_ref).unwrap() < 1e-12);
        assert!(total_variation(&rep.dpo_policy, &pi_ref).unwrap() < 1e-6);
    }
}
