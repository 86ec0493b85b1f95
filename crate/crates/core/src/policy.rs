//! Tabular policies, their logit parametrisation and the KL regulariser.

use alloc::format;

use crate::error::{Error, Result};
use crate::math;
use crate::space::{check_distribution, ContextSet};
use crate::table::PerContext;

/// A conditional distribution over actions for every context.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy(PerContext);

impl TabularPolicy {
    /// Validates every row as a probability vector (tolerance 1e-12). Rows
    /// outside tolerance are rejected, never renormalised.
    pub fn new(probs: PerContext) -> Result<Self> {
        if probs.n_actions() < 1 || probs.n_contexts() < 1 {
            return Err(Error::param("a policy needs at least one context and one action"));
        }
        for row in probs.rows() {
            check_distribution("policy", row)?;
        }
        Ok(Self(probs))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(PerContext::from_rows(rows)?)
    }

    pub fn uniform(n_contexts: usize, n_actions: usize) -> Self {
        Self(PerContext::filled(n_contexts, n_actions, 1.0 / n_actions as f64))
    }

    /// All mass on `action` in every context.
    pub fn point_mass(n_contexts: usize, n_actions: usize, action: usize) -> Self {
        let mut t = PerContext::zeros(n_contexts, n_actions);
        for x in 0..n_contexts {
            t.set(x, action, 1.0);
        }
        Self(t)
    }

    pub fn prob(&self, context: usize, action: usize) -> f64 {
        self.0.get(context, action)
    }

    pub fn row(&self, context: usize) -> &[f64] {
        self.0.row(context)
    }

    pub fn n_contexts(&self) -> usize {
        self.0.n_contexts()
    }

    pub fn n_actions(&self) -> usize {
        self.0.n_actions()
    }

    pub fn table(&self) -> &PerContext {
        &self.0
    }

    pub fn into_table(self) -> PerContext {
        self.0
    }

    /// Logits reproducing this policy; requires strictly positive entries.
    pub fn to_logits(&self) -> Result<LogitParams> {
        let mut s = PerContext::zeros(self.n_contexts(), self.n_actions());
        for x in 0..self.n_contexts() {
            for (y, &p) in self.row(x).iter().enumerate() {
                if p <= 0.0 {
                    return Err(Error::Support { context: x, action: y });
                }
                s.set(x, y, math::ln(p));
            }
        }
        Ok(LogitParams(s))
    }

    pub(crate) fn check_shape(&self, what: &'static str, n_contexts: usize, n_actions: usize) -> Result<()> {
        self.0.check_shape(what, n_contexts, n_actions)
    }
}

/// Unconstrained per-context logits `s`; the policy is `softmax(s[x])`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitParams(pub PerContext);

impl LogitParams {
    pub fn zeros(n_contexts: usize, n_actions: usize) -> Self {
        Self(PerContext::zeros(n_contexts, n_actions))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let t = PerContext::from_rows(rows)?;
        if let Some(v) = t.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::param(format!("logit {v} is not finite")));
        }
        Ok(Self(t))
    }

    pub fn to_policy(&self) -> TabularPolicy {
        let mut out = PerContext::zeros(self.0.n_contexts(), self.0.n_actions());
        for x in 0..self.0.n_contexts() {
            math::softmax_into(self.0.row(x), out.row_mut(x));
        }
        TabularPolicy(out)
    }

    /// `log π(y|x)` for every entry.
    pub fn log_policy(&self) -> PerContext {
        let mut out = self.0.clone();
        for x in 0..out.n_contexts() {
            let lse = math::log_sum_exp(out.row(x));
            out.row_mut(x).iter_mut().for_each(|v| *v -= lse);
        }
        out
    }

    pub fn table(&self) -> &PerContext {
        &self.0
    }

    pub fn n_contexts(&self) -> usize {
        self.0.n_contexts()
    }

    pub fn n_actions(&self) -> usize {
        self.0.n_actions()
    }
}

/// `ρ`-weighted KL divergence `E_x[KL(π(·|x) || π_ref(·|x))]`, with the
/// convention `0 · log 0 = 0`. Contexts with zero weight are ignored.
pub fn kl_divergence(pi: &TabularPolicy, pi_ref: &TabularPolicy, contexts: &ContextSet) -> Result<f64> {
    pi.check_shape("policy", contexts.len(), pi_ref.n_actions())?;
    pi_ref.check_shape("reference policy", contexts.len(), pi.n_actions())?;
    let mut total = 0.0;
    for (x, &w) in contexts.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut kl = 0.0;
        for (y, (&p, &q)) in pi.row(x).iter().zip(pi_ref.row(x)).enumerate() {
            if p == 0.0 {
                continue;
            }
            if q == 0.0 {
                return Err(Error::Support { context: x, action: y });
            }
            kl += p * math::ln(p / q);
        }
        total += w * kl;
    }
    Ok(total)
}

/// Largest per-context total-variation distance `½ Σ_y |π(y|x) − π'(y|x)|`.
pub fn total_variation(a: &TabularPolicy, b: &TabularPolicy) -> Result<f64> {
    b.check_shape("policy", a.n_contexts(), a.n_actions())?;
    let mut worst: f64 = 0.0;
    for x in 0..a.n_contexts() {
        let l1: f64 = a.row(x).iter().zip(b.row(x)).map(|(p, q)| (p - q).abs()).sum();
        worst = worst.max(0.5 * l1);
    }
    Ok(worst)
}

impl From<TabularPolicy> for PerContext {
    fn from(p: TabularPolicy) -> Self {
        p.0
    }
}
