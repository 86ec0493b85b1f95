//! Training losses with hand-derived gradients with respect to logits (or
//! rewards, for the Bradley-Terry losses).
//!
//! Every policy loss here depends on the logits only through the log-ratio
//! gap
//!
//! ```text
//! h(y, y') = log(π(y) π_ref(y') / (π(y') π_ref(y)))
//!          = (s(y) − s(y')) − (log π_ref(y) − log π_ref(y'))
//! ```
//!
//! so `∂h/∂s = e_y − e_{y'}` and each gradient row sums to zero.
//!
//! Population losses weight every ordered pair `(y, y')`, self-pairs
//! included, by `ρ(x)·μ(y|x)·μ(y'|x)`. Self-pairs have `h = 0` and only
//! shift the value by a constant. Sums run in index order so results are
//! bitwise reproducible.

use alloc::vec::Vec;

use crate::closed_form::{check_tau, RewardTable};
use crate::dataset::{PreferenceDataset, Record};
use crate::error::{Error, Result};
use crate::math;
use crate::policy::{LogitParams, TabularPolicy};
use crate::preference::PreferenceTable;
use crate::table::PerContext;

/// Which direct preference loss to optimise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Dpo,
    Ipo,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Dpo => "dpo",
            LossKind::Ipo => "ipo",
        }
    }
}

/// Non-fatal conditions noticed while evaluating a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossWarning {
    /// `Supp(μ) ≠ Supp(π_ref)` in this context; the IPO minimiser is then not
    /// unique.
    SupportMismatch { context: usize },
}

/// Loss value together with its gradient (same shape as the parameters).
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: PerContext,
    pub warnings: Vec<LossWarning>,
}

impl LossValue {
    fn new(value: f64, gradient: PerContext) -> Self {
        Self {
            value,
            gradient,
            warnings: Vec::new(),
        }
    }
}

/// `log π_ref`, with `-inf` outside the support.
struct RefLog(PerContext);

impl RefLog {
    fn new(pi_ref: &TabularPolicy) -> Self {
        let mut t = pi_ref.table().clone();
        t.as_mut_slice().iter_mut().for_each(|p| {
            *p = if *p > 0.0 { math::ln(*p) } else { f64::NEG_INFINITY }
        });
        Self(t)
    }

    fn require(&self, context: usize, action: usize) -> Result<()> {
        if self.0.get(context, action).is_finite() {
            Ok(())
        } else {
            Err(Error::Support { context, action })
        }
    }

    #[inline]
    fn gap(&self, s: &PerContext, x: usize, y: usize, y2: usize) -> f64 {
        (s.get(x, y) - s.get(x, y2)) - (self.0.get(x, y) - self.0.get(x, y2))
    }
}

fn check_params(s: &LogitParams, pi_ref: &TabularPolicy) -> Result<()> {
    s.table()
        .check_shape("logits", pi_ref.n_contexts(), pi_ref.n_actions())
}

fn check_records(records: &[Record], n_contexts: usize, n_actions: usize) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for r in records {
        if r.context >= n_contexts {
            return Err(Error::Index {
                what: "record context",
                index: r.context,
                len: n_contexts,
            });
        }
        if r.winner >= n_actions || r.loser >= n_actions {
            return Err(Error::Index {
                what: "record action",
                index: r.winner.max(r.loser),
                len: n_actions,
            });
        }
    }
    Ok(())
}

/// `h_π(y, y')` in context `x`.
pub fn h_pi(s: &LogitParams, pi_ref: &TabularPolicy, y: usize, y2: usize, x: usize) -> Result<f64> {
    check_params(s, pi_ref)?;
    check_records(&[Record::new(x, y, y2)], s.n_contexts(), s.n_actions())?;
    let refs = RefLog::new(pi_ref);
    refs.require(x, y)?;
    refs.require(x, y2)?;
    Ok(refs.gap(s.table(), x, y, y2))
}

/// Bradley-Terry logistic loss `−(1/N) Σ log σ(r(x, y_w) − r(x, y_l))`,
/// gradient with respect to the reward entries.
pub fn bt_logistic_loss(rewards: &RewardTable, data: &PreferenceDataset) -> Result<LossValue> {
    let r = rewards.table();
    r.check_shape("rewards", data.n_contexts(), data.n_actions())?;
    check_records(data.records(), r.n_contexts(), r.n_actions())?;
    let inv_n = 1.0 / data.len() as f64;
    let mut value = 0.0;
    let mut grad = PerContext::zeros(r.n_contexts(), r.n_actions());
    for rec in data.records() {
        let d = r.get(rec.context, rec.winner) - r.get(rec.context, rec.loser);
        value -= math::log_sigmoid(d);
        let coeff = -math::sigmoid(-d) * inv_n;
        grad.add(rec.context, rec.winner, coeff);
        grad.add(rec.context, rec.loser, -coeff);
    }
    Ok(LossValue::new(value * inv_n, grad))
}

/// Population Bradley-Terry loss
/// `−E_{x∼ρ, y,y'∼μ}[p*(y ≻ y'|x)·log σ(r(x, y) − r(x, y'))]`.
pub fn bt_population_loss(rewards: &RewardTable, table: &PreferenceTable, mu: &TabularPolicy) -> Result<LossValue> {
    let r = rewards.table();
    r.check_shape("rewards", table.n_contexts(), table.n_actions())?;
    table.check_policy("behaviour policy", mu)?;
    let n = table.n_actions();
    let mut value = 0.0;
    let mut grad = PerContext::zeros(r.n_contexts(), n);
    for (x, &rho) in table.contexts().weights().iter().enumerate() {
        if rho == 0.0 {
            continue;
        }
        for y in 0..n {
            for y2 in 0..n {
                let w = rho * mu.prob(x, y) * mu.prob(x, y2) * table.get(x, y, y2);
                if w == 0.0 {
                    continue;
                }
                let d = r.get(x, y) - r.get(x, y2);
                value -= w * math::log_sigmoid(d);
                let coeff = -w * math::sigmoid(-d);
                grad.add(x, y, coeff);
                grad.add(x, y2, -coeff);
            }
        }
    }
    Ok(LossValue::new(value, grad))
}

/// Empirical loss of `kind` averaged over `records` (a full dataset or a
/// mini-batch).
pub fn empirical_loss(
    kind: LossKind,
    s: &LogitParams,
    pi_ref: &TabularPolicy,
    records: &[Record],
    tau: f64,
) -> Result<LossValue> {
    check_tau(tau)?;
    check_params(s, pi_ref)?;
    check_records(records, s.n_contexts(), s.n_actions())?;
    let refs = RefLog::new(pi_ref);
    for r in records {
        refs.require(r.context, r.winner)?;
        refs.require(r.context, r.loser)?;
    }
    let s = s.table();
    let inv_n = 1.0 / records.len() as f64;
    let mut value = 0.0;
    let mut grad = PerContext::zeros(s.n_contexts(), s.n_actions());
    for r in records {
        let h = refs.gap(s, r.context, r.winner, r.loser);
        // d(loss term)/dh
        let dh = match kind {
            LossKind::Dpo => {
                let z = tau * h;
                value += math::softplus(-z);
                -tau * math::sigmoid(-z)
            }
            LossKind::Ipo => {
                let e = h - 0.5 / tau;
                value += e * e;
                2.0 * e
            }
        };
        grad.add(r.context, r.winner, dh * inv_n);
        grad.add(r.context, r.loser, -dh * inv_n);
    }
    Ok(LossValue::new(value * inv_n, grad))
}

/// DPO loss `(1/N) Σ −log σ(τ·h_π(y_w, y_l))` over the dataset.
pub fn dpo_empirical_loss(s: &LogitParams, pi_ref: &TabularPolicy, data: &PreferenceDataset, tau: f64) -> Result<LossValue> {
    empirical_loss(LossKind::Dpo, s, pi_ref, data.records(), tau)
}

/// IPO loss `(1/N) Σ (h_π(y_w, y_l) − 1/(2τ))²` over the dataset.
///
/// This is the symmetrised two-term estimate of the sampled population loss
/// with its `π`-independent constant dropped; see [`ipo_symmetrized_loss`].
pub fn ipo_empirical_loss(s: &LogitParams, pi_ref: &TabularPolicy, data: &PreferenceDataset, tau: f64) -> Result<LossValue> {
    empirical_loss(LossKind::Ipo, s, pi_ref, data.records(), tau)
}

/// Two-term form: each record contributes `(h(y_w, y_l) − 1/τ)²` (label 1)
/// and `h(y_l, y_w)²` (label 0), averaged over records.
///
/// Equals `2·ipo_empirical_loss + 1/(2τ²)`.
pub fn ipo_symmetrized_loss(s: &LogitParams, pi_ref: &TabularPolicy, data: &PreferenceDataset, tau: f64) -> Result<LossValue> {
    check_tau(tau)?;
    check_params(s, pi_ref)?;
    check_records(data.records(), s.n_contexts(), s.n_actions())?;
    let refs = RefLog::new(pi_ref);
    let s = s.table();
    let inv_n = 1.0 / data.len() as f64;
    let mut value = 0.0;
    let mut grad = PerContext::zeros(s.n_contexts(), s.n_actions());
    for r in data.records() {
        refs.require(r.context, r.winner)?;
        refs.require(r.context, r.loser)?;
        let h = refs.gap(s, r.context, r.winner, r.loser);
        let win = h - 1.0 / tau;
        let lose = -h;
        value += win * win + lose * lose;
        // d/dh of (h − 1/τ)² + (−h)²
        let dh = 2.0 * win + 2.0 * h;
        grad.add(r.context, r.winner, dh * inv_n);
        grad.add(r.context, r.loser, -dh * inv_n);
    }
    Ok(LossValue::new(value * inv_n, grad))
}

/// Shared driver for the population losses: `term(x, y, y', h)` returns the
/// per-pair value and `d/dh`, already weighted by everything except
/// `ρ(x)·μ(y)·μ(y')`.
fn population_sum<F>(
    s: &LogitParams,
    pi_ref: &TabularPolicy,
    table: &PreferenceTable,
    mu: &TabularPolicy,
    mut term: F,
) -> Result<LossValue>
where
    F: FnMut(usize, usize, usize, f64) -> (f64, f64),
{
    check_params(s, pi_ref)?;
    table.check_policy("reference policy", pi_ref)?;
    table.check_policy("behaviour policy", mu)?;
    let refs = RefLog::new(pi_ref);
    let n = table.n_actions();
    let st = s.table();
    let mut value = 0.0;
    let mut grad = PerContext::zeros(st.n_contexts(), n);
    let mut warnings = Vec::new();
    for (x, &rho) in table.contexts().weights().iter().enumerate() {
        if rho == 0.0 {
            continue;
        }
        for y in 0..n {
            if mu.prob(x, y) > 0.0 {
                refs.require(x, y)?;
            }
        }
        if (0..n).any(|y| (mu.prob(x, y) > 0.0) != (pi_ref.prob(x, y) > 0.0)) {
            warnings.push(LossWarning::SupportMismatch { context: x });
        }
        for y in 0..n {
            for y2 in 0..n {
                let w = rho * mu.prob(x, y) * mu.prob(x, y2);
                if w == 0.0 {
                    continue;
                }
                let h = refs.gap(st, x, y, y2);
                let (v, dh) = term(x, y, y2, h);
                value += w * v;
                grad.add(x, y, w * dh);
                grad.add(x, y2, -w * dh);
            }
        }
    }
    Ok(LossValue {
        value,
        gradient: grad,
        warnings,
    })
}

/// Population DPO loss
/// `E_{x, y, y'∼μ}[−p*(y ≻ y'|x)·log σ(τ·h_π(y, y'))]`.
pub fn dpo_population_loss(
    s: &LogitParams,
    pi_ref: &TabularPolicy,
    table: &PreferenceTable,
    mu: &TabularPolicy,
    tau: f64,
) -> Result<LossValue> {
    check_tau(tau)?;
    population_sum(s, pi_ref, table, mu, |x, y, y2, h| {
        let p = table.get(x, y, y2);
        let z = tau * h;
        (p * math::softplus(-z), -p * tau * math::sigmoid(-z))
    })
}

/// Population IPO loss
/// `E_{x, y, y'∼μ}[(h_π(y, y') − (p*(y ≻ μ) − p*(y' ≻ μ))/τ)²]`.
///
/// When `Supp(μ) ≠ Supp(π_ref)` in some context the value is still
/// returned, with a [`LossWarning::SupportMismatch`] attached.
pub fn ipo_population_loss(
    s: &LogitParams,
    pi_ref: &TabularPolicy,
    table: &PreferenceTable,
    mu: &TabularPolicy,
    tau: f64,
) -> Result<LossValue> {
    check_tau(tau)?;
    let vs = table.preference_vs_policy_table(mu)?;
    population_sum(s, pi_ref, table, mu, |x, y, y2, h| {
        let target = (vs.get(x, y) - vs.get(x, y2)) / tau;
        let e = h - target;
        (e * e, 2.0 * e)
    })
}

/// Sampled population IPO loss with the Bernoulli label integrated out:
/// `E_{x, y, y'∼μ}[p*·(h − 1/τ)² + (1 − p*)·h²]`.
pub fn ipo_sampled_population_loss(
    s: &LogitParams,
    pi_ref: &TabularPolicy,
    table: &PreferenceTable,
    mu: &TabularPolicy,
    tau: f64,
) -> Result<LossValue> {
    check_tau(tau)?;
    population_sum(s, pi_ref, table, mu, |x, y, y2, h| {
        let p = table.get(x, y, y2);
        let win = h - 1.0 / tau;
        (p * win * win + (1.0 - p) * h * h, 2.0 * (h - p / tau))
    })
}

/// Population loss of `kind` (DPO: population DPO; IPO: the root-finding
/// form).
pub fn population_loss(
    kind: LossKind,
    s: &LogitParams,
    pi_ref: &TabularPolicy,
    table: &PreferenceTable,
    mu: &TabularPolicy,
    tau: f64,
) -> Result<LossValue> {
    match kind {
        LossKind::Dpo => dpo_population_loss(s, pi_ref, table, mu, tau),
        LossKind::Ipo => ipo_population_loss(s, pi_ref, table, mu, tau),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{psipo_optimal_policy, PsiFn};
    use crate::oracle::{finite_diff_grad, relative_error};
    use crate::rng::rng_from_seed;
    use crate::space::{ActionSpace, ContextSet};
    use alloc::vec;
    use rand::Rng;

    fn d1() -> PreferenceDataset {
        PreferenceDataset::bandit(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn h_examples() {
        let u = TabularPolicy::uniform(1, 3);
        let s = LogitParams::from_rows(&[[1.0, 0.0, -1.0]]).unwrap();
        assert_eq!(h_pi(&s, &u, 0, 2, 0).unwrap(), 2.0);
        assert_eq!(h_pi(&s, &u, 2, 0, 0).unwrap(), -2.0);
        assert_eq!(h_pi(&s, &u, 1, 1, 0).unwrap(), 0.0);
        let r = TabularPolicy::from_rows(&[[0.2, 0.3, 0.5]]).unwrap();
        let at_ref = r.to_logits().unwrap();
        for y in 0..3 {
            for y2 in 0..3 {
                assert!(h_pi(&at_ref, &r, y, y2, 0).unwrap().abs() < 1e-15);
            }
        }
        let z = TabularPolicy::from_rows(&[[0.5, 0.5, 0.0]]).unwrap();
        assert!(matches!(h_pi(&s, &z, 0, 2, 0), Err(Error::Support { .. })));
    }

    #[test]
    fn bt_values() {
        let data = PreferenceDataset::bandit(2, &[(0, 1), (1, 0), (0, 1)]).unwrap();
        let flat = RewardTable::zeros(1, 2);
        let v = bt_logistic_loss(&flat, &data).unwrap();
        assert!((v.value - core::f64::consts::LN_2).abs() < 1e-15);

        let wide = PreferenceDataset::bandit(2, &[(0, 1), (0, 1)]).unwrap();
        let r = RewardTable::from_rows(&[[10.0, 0.0]]).unwrap();
        let v = bt_logistic_loss(&r, &wide).unwrap();
        let expected = (-10.0f64).exp().ln_1p();
        assert!((v.value - expected).abs() < 1e-18);
        assert!((v.value - 4.54e-5).abs() < 1e-7);

        let empty = PreferenceDataset::bandit(2, &[]).unwrap();
        assert_eq!(bt_logistic_loss(&flat, &empty).unwrap_err(), Error::EmptyDataset);
    }

    #[test]
    fn dpo_at_reference_is_log_two() {
        let u = TabularPolicy::uniform(1, 3);
        let s = LogitParams::zeros(1, 3);
        let v = dpo_empirical_loss(&s, &u, &d1(), 0.7).unwrap();
        assert!((v.value - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn dpo_loss_vanishes_as_gap_grows() {
        let u = TabularPolicy::uniform(1, 2);
        let data = PreferenceDataset::bandit(2, &[(0, 1)]).unwrap();
        let mut prev = f64::INFINITY;
        for gap in [0.0, 5.0, 20.0, 50.0] {
            let s = LogitParams::from_rows(&[[gap, 0.0]]).unwrap();
            let v = dpo_empirical_loss(&s, &u, &data, 1.0).unwrap().value;
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn dpo_population_uniform_table_at_reference() {
        let t = PreferenceTable::uniform(ActionSpace::new(["a", "b", "c"]).unwrap(), ContextSet::single());
        let mu = TabularPolicy::from_rows(&[[0.2, 0.3, 0.5]]).unwrap();
        let pi_ref = TabularPolicy::uniform(1, 3);
        let v = dpo_population_loss(&LogitParams::zeros(1, 3), &pi_ref, &t, &mu, 2.0).unwrap();
        // every pair carries p* = 1/2 and −log σ(0) = log 2
        assert!((v.value - 0.5 * core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn ipo_empirical_at_reference() {
        let u = TabularPolicy::uniform(1, 3);
        for tau in [0.1, 0.5, 2.0] {
            let v = ipo_empirical_loss(&LogitParams::zeros(1, 3), &u, &d1(), tau).unwrap();
            assert!((v.value - 1.0 / (4.0 * tau * tau)).abs() < 1e-12);
        }
    }

    #[test]
    fn ipo_population_zero_at_closed_form() {
        let mut rng = rng_from_seed(99);
        let actions = ActionSpace::new(["a", "b", "c", "d"]).unwrap();
        let t = PreferenceTable::from_fn(actions, ContextSet::uniform(["x", "y"]).unwrap(), |_, _, _| rng.random()).unwrap();
        let mu = TabularPolicy::from_rows(&[[0.1, 0.2, 0.3, 0.4], [0.25, 0.25, 0.25, 0.25]]).unwrap();
        let pi_ref = TabularPolicy::from_rows(&[[0.4, 0.3, 0.2, 0.1], [0.1, 0.1, 0.1, 0.7]]).unwrap();
        for tau in [0.1, 1.0, 3.0] {
            let star = psipo_optimal_policy(&t, &mu, &pi_ref, tau, PsiFn::Identity).unwrap();
            let v = ipo_population_loss(&star.to_logits().unwrap(), &pi_ref, &t, &mu, tau).unwrap();
            assert!(v.value.abs() < 1e-12, "{}", v.value);
            assert!(v.warnings.is_empty());
        }
    }

    #[test]
    fn ipo_population_d1_table_at_reference() {
        let t = PreferenceTable::total_order(ActionSpace::new(["a", "b", "c"]).unwrap(), ContextSet::single());
        let u = TabularPolicy::uniform(1, 3);
        let v = ipo_population_loss(&LogitParams::zeros(1, 3), &u, &t, &u, 1.0).unwrap();
        // p(·≻μ) = (5/6, 1/2, 1/6); enumerate the nine ordered pairs
        let vs = [5.0 / 6.0, 0.5, 1.0 / 6.0];
        let mut brute = 0.0f64;
        for a in vs {
            for b in vs {
                brute += (a - b) * (a - b) / 9.0;
            }
        }
        // 4 pairs at (1/3)², 2 at (2/3)², 3 at 0: 12/81
        assert!((brute - 12.0 / 81.0).abs() < 1e-15);
        assert!((v.value - 12.0 / 81.0).abs() < 1e-15);

        let flat = PreferenceTable::uniform(ActionSpace::new(["a", "b", "c"]).unwrap(), ContextSet::single());
        assert_eq!(ipo_population_loss(&LogitParams::zeros(1, 3), &u, &flat, &u, 1.0).unwrap().value, 0.0);
        let sampled = ipo_sampled_population_loss(&LogitParams::zeros(1, 3), &u, &flat, &u, 0.5).unwrap();
        assert!((sampled.value - 0.5 * 4.0).abs() < 1e-14);
    }

    #[test]
    fn support_mismatch_warns() {
        let t = PreferenceTable::total_order(ActionSpace::new(["a", "b", "c"]).unwrap(), ContextSet::single());
        let mu = TabularPolicy::from_rows(&[[0.5, 0.5, 0.0]]).unwrap();
        let u = TabularPolicy::uniform(1, 3);
        let v = ipo_population_loss(&LogitParams::zeros(1, 3), &u, &t, &mu, 1.0).unwrap();
        assert_eq!(v.warnings, vec![LossWarning::SupportMismatch { context: 0 }]);
        // π_ref zero where μ is positive is a hard error
        let r = TabularPolicy::from_rows(&[[0.5, 0.0, 0.5]]).unwrap();
        assert!(matches!(
            ipo_population_loss(&LogitParams::zeros(1, 3), &r, &t, &u, 1.0),
            Err(Error::Support { .. })
        ));
    }

    #[test]
    fn symmetrized_form_differs_by_constant() {
        let mut rng = rng_from_seed(4);
        let u = TabularPolicy::from_rows(&[[0.2, 0.5, 0.3]]).unwrap();
        for tau in [0.2, 1.0] {
            for _ in 0..10 {
                let s = LogitParams::from_rows(&[[rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>(), 0.3]]).unwrap();
                let two = ipo_symmetrized_loss(&s, &u, &d1(), tau).unwrap();
                let one = ipo_empirical_loss(&s, &u, &d1(), tau).unwrap();
                assert!((two.value - (2.0 * one.value + 0.5 / (tau * tau))).abs() < 1e-10);
                for (a, b) in two.gradient.as_slice().iter().zip(one.gradient.as_slice()) {
                    assert!((a - 2.0 * b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng_from_seed(31);
        let actions = ActionSpace::new(["a", "b", "c"]).unwrap();
        let ctx = ContextSet::new(["x", "y"], vec![0.3, 0.7]).unwrap();
        let t = PreferenceTable::from_fn(actions, ctx, |_, _, _| rng.random()).unwrap();
        let mu = TabularPolicy::from_rows(&[[0.2, 0.3, 0.5], [0.6, 0.1, 0.3]]).unwrap();
        let pi_ref = TabularPolicy::from_rows(&[[0.3, 0.3, 0.4], [0.1, 0.8, 0.1]]).unwrap();
        let s = LogitParams::from_rows(&[[0.3, -0.2, 0.9], [1.1, 0.0, -0.5]]).unwrap();
        let data = crate::dataset::sample_dataset(&t, &mu, 25, 8).unwrap();
        let tau = 0.6;
        type LossFn<'a> = &'a dyn Fn(&LogitParams) -> LossValue;
        let cases: [(&str, LossFn); 5] = [
            ("dpo", &|s| dpo_empirical_loss(s, &pi_ref, &data, tau).unwrap()),
            ("ipo", &|s| ipo_empirical_loss(s, &pi_ref, &data, tau).unwrap()),
            ("dpo-pop", &|s| dpo_population_loss(s, &pi_ref, &t, &mu, tau).unwrap()),
            ("ipo-pop", &|s| ipo_population_loss(s, &pi_ref, &t, &mu, tau).unwrap()),
            ("ipo-sampled", &|s| ipo_sampled_population_loss(s, &pi_ref, &t, &mu, tau).unwrap()),
        ];
        for (name, f) in cases {
            let analytic = f(&s).gradient;
            let numeric = finite_diff_grad(|p| f(&LogitParams(p.clone())).value, s.table(), 1e-5);
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-6, "{name}: {err}");
            for row in analytic.rows() {
                assert!(row.iter().sum::<f64>().abs() < 1e-10, "{name}");
            }
        }
    }

    #[test]
    fn losses_ignore_per_context_shift() {
        let u = TabularPolicy::uniform(1, 3);
        let t = PreferenceTable::total_order(ActionSpace::new(["a", "b", "c"]).unwrap(), ContextSet::single());
        let a = LogitParams::from_rows(&[[0.3, -0.2, 0.9]]).unwrap();
        let b = LogitParams::from_rows(&[[7.3, 6.8, 7.9]]).unwrap();
        for kind in [LossKind::Dpo, LossKind::Ipo] {
            let la = empirical_loss(kind, &a, &u, d1().records(), 0.4).unwrap();
            let lb = empirical_loss(kind, &b, &u, d1().records(), 0.4).unwrap();
            assert!((la.value - lb.value).abs() < 1e-10);
            let pa = population_loss(kind, &a, &u, &t, &u, 0.4).unwrap();
            let pb = population_loss(kind, &b, &u, &t, &u, 0.4).unwrap();
            assert!((pa.value - pb.value).abs() < 1e-10);
            assert!(relative_error(&pa.gradient, &pb.gradient) < 1e-10);
        }
    }
}
