//! Analytic optima of KL-regularised objectives.
//!
//! [`regularized_argmax`] solves `max_δ E_δ[f] − τ·KL(δ || η)` exactly: the
//! maximiser is `δ*(s) ∝ η(s)·exp(f(s)/τ)`. The ΨPO optimum follows by taking
//! `f = g` with `g(y) = E_{y'∼μ}[Ψ(p*(y ≻ y'))]`, computed by exact
//! summation.

use alloc::format;

use crate::error::{Error, Result};
use crate::math;
use crate::policy::{kl_divergence, TabularPolicy};
use crate::preference::PreferenceTable;
use crate::table::PerContext;

/// Monotone transform applied to preference probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiFn {
    Identity,
    /// `Ψ(q) = log(q̃ / (1 − q̃))` with `q̃ = clamp(q, ε, 1 − ε)`.
    LogOdds { epsilon: f64 },
}

impl PsiFn {
    pub const DEFAULT_EPSILON: f64 = 1e-6;

    pub fn log_odds(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::param(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
        }
        Ok(PsiFn::LogOdds { epsilon })
    }

    pub fn eval(&self, q: f64) -> f64 {
        match *self {
            PsiFn::Identity => q,
            PsiFn::LogOdds { epsilon } => {
                let q = q.clamp(epsilon, 1.0 - epsilon);
                math::ln(q / (1.0 - q))
            }
        }
    }
}

/// Pointwise rewards `r(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable(PerContext);

impl RewardTable {
    pub fn new(values: PerContext) -> Result<Self> {
        if let Some(v) = values.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::param(format!("reward {v} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(PerContext::from_rows(rows)?)
    }

    pub fn zeros(n_contexts: usize, n_actions: usize) -> Self {
        Self(PerContext::zeros(n_contexts, n_actions))
    }

    pub fn get(&self, context: usize, action: usize) -> f64 {
        self.0.get(context, action)
    }

    pub fn row(&self, context: usize) -> &[f64] {
        self.0.row(context)
    }

    pub fn table(&self) -> &PerContext {
        &self.0
    }

    pub fn into_table(self) -> PerContext {
        self.0
    }
}

/// `δ*(s|x) = η(s|x)·exp(f(s|x)/τ) / Σ η(s'|x)·exp(f(s'|x)/τ)` per context.
///
/// Exponents are shifted by their per-context maximum before
/// exponentiation. Actions outside the support of `η` get probability 0.
pub fn regularized_argmax(f: &PerContext, eta: &TabularPolicy, tau: f64) -> Result<TabularPolicy> {
    check_tau(tau)?;
    f.check_shape("objective", eta.n_contexts(), eta.n_actions())?;
    let mut logits = PerContext::zeros(eta.n_contexts(), eta.n_actions());
    let mut out = PerContext::zeros(eta.n_contexts(), eta.n_actions());
    for x in 0..eta.n_contexts() {
        for (y, l) in logits.row_mut(x).iter_mut().enumerate() {
            let e = eta.prob(x, y);
            *l = if e > 0.0 {
                math::ln(e) + f.get(x, y) / tau
            } else {
                f64::NEG_INFINITY
            };
        }
        math::softmax_into(logits.row(x), out.row_mut(x));
    }
    TabularPolicy::new(out)
}

/// `g(x, y) = E_{y'∼μ(·|x)}[Ψ(p*(y ≻ y' | x))]`.
pub fn expected_psi(table: &PreferenceTable, mu: &TabularPolicy, psi: PsiFn) -> Result<PerContext> {
    table.check_policy("behaviour policy", mu)?;
    let n = table.n_actions();
    let mut g = PerContext::zeros(table.n_contexts(), n);
    for x in 0..table.n_contexts() {
        for y in 0..n {
            let v = (0..n)
                .filter(|&o| mu.prob(x, o) > 0.0)
                .map(|o| mu.prob(x, o) * psi.eval(table.get(x, y, o)))
                .sum();
            g.set(x, y, v);
        }
    }
    Ok(g)
}

/// Maximiser of the ΨPO objective:
/// `π*(y|x) ∝ π_ref(y|x)·exp(τ⁻¹·E_{y'∼μ}[Ψ(p*(y ≻ y'|x))])`.
pub fn psipo_optimal_policy(
    table: &PreferenceTable,
    mu: &TabularPolicy,
    pi_ref: &TabularPolicy,
    tau: f64,
    psi: PsiFn,
) -> Result<TabularPolicy> {
    check_tau(tau)?;
    table.check_policy("reference policy", pi_ref)?;
    let g = expected_psi(table, mu, psi)?;
    regularized_argmax(&g, pi_ref, tau)
}

/// `E_{x∼ρ, y∼π, y'∼μ}[Ψ(p*(y ≻ y'|x))] − τ·D_KL(π || π_ref)`.
pub fn psipo_objective(
    table: &PreferenceTable,
    pi: &TabularPolicy,
    mu: &TabularPolicy,
    pi_ref: &TabularPolicy,
    tau: f64,
    psi: PsiFn,
) -> Result<f64> {
    check_tau(tau)?;
    table.check_policy("policy", pi)?;
    table.check_policy("reference policy", pi_ref)?;
    let g = expected_psi(table, mu, psi)?;
    let mut gain = 0.0;
    for (x, &w) in table.contexts().weights().iter().enumerate() {
        let inner: f64 = pi
            .row(x)
            .iter()
            .zip(g.row(x))
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, v)| p * v)
            .sum();
        gain += w * inner;
    }
    Ok(gain - tau * kl_divergence(pi, pi_ref, table.contexts())?)
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::param("tau must be positive"))
    }
}
