//! The true preference function `p*(y ≻ y' | x)` and the exact expectations
//! built on it.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::policy::TabularPolicy;
use crate::space::{ActionSpace, ContextSet};
use crate::table::PerContext;
use crate::PROB_TOLERANCE;

/// Per-context preference matrices over a fixed action space.
///
/// `get(x, i, j)` is the probability that action `i` is preferred to action
/// `j` in context `x`. Matrices satisfy `P[i][j] + P[j][i] = 1` and
/// `P[i][i] = 1/2`. The table also carries the context distribution `ρ` used
/// by every population-level quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceTable {
    actions: ActionSpace,
    contexts: ContextSet,
    p: Vec<f64>,
}

impl PreferenceTable {
    /// `matrices[x][i][j] = p*(y_i ≻ y_j | x)`.
    pub fn new(actions: ActionSpace, contexts: ContextSet, matrices: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n = actions.len();
        if matrices.len() != contexts.len() {
            return Err(Error::Dimension {
                what: "preference matrices",
                expected: contexts.len(),
                found: matrices.len(),
            });
        }
        let mut p = Vec::with_capacity(contexts.len() * n * n);
        for m in matrices {
            if m.len() != n {
                return Err(Error::Dimension {
                    what: "preference matrix rows",
                    expected: n,
                    found: m.len(),
                });
            }
            for row in m {
                if row.len() != n {
                    return Err(Error::Dimension {
                        what: "preference matrix columns",
                        expected: n,
                        found: row.len(),
                    });
                }
                p.extend_from_slice(row);
            }
        }
        let table = Self { actions, contexts, p };
        table.validate()?;
        Ok(table)
    }

    /// Builds a table from `f(x, i, j)` evaluated for `i < j`; the lower
    /// triangle and diagonal follow from antisymmetry.
    pub fn from_fn<F>(actions: ActionSpace, contexts: ContextSet, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize, usize) -> f64,
    {
        let n = actions.len();
        let mut p = alloc::vec![0.5; contexts.len() * n * n];
        for x in 0..contexts.len() {
            for i in 0..n {
                for j in i + 1..n {
                    let v = f(x, i, j);
                    p[(x * n + i) * n + j] = v;
                    p[(x * n + j) * n + i] = 1.0 - v;
                }
            }
        }
        let table = Self { actions, contexts, p };
        table.validate()?;
        Ok(table)
    }

    /// Every comparison is a coin flip.
    pub fn uniform(actions: ActionSpace, contexts: ContextSet) -> Self {
        Self::from_fn(actions, contexts, |_, _, _| 0.5).expect("constant 1/2 table is valid")
    }

    /// Deterministic total order: earlier actions always beat later ones.
    pub fn total_order(actions: ActionSpace, contexts: ContextSet) -> Self {
        Self::from_fn(actions, contexts, |_, _, _| 1.0).expect("deterministic table is valid")
    }

    /// Bradley-Terry table `p*(y ≻ y') = σ(r(x, y) − r(x, y'))`.
    pub fn bradley_terry(actions: ActionSpace, contexts: ContextSet, rewards: &PerContext) -> Result<Self> {
        rewards.check_shape("rewards", contexts.len(), actions.len())?;
        Self::from_fn(actions, contexts, |x, i, j| {
            math::sigmoid(rewards.get(x, i) - rewards.get(x, j))
        })
    }

    fn validate(&self) -> Result<()> {
        let n = self.actions.len();
        for x in 0..self.contexts.len() {
            for i in 0..n {
                let d = self.get(x, i, i);
                if (d - 0.5).abs() > PROB_TOLERANCE {
                    return Err(Error::InvalidProbability {
                        what: "preference table",
                        detail: format!("self-comparison P[{i}][{i}] = {d} in context {x}, expected 1/2"),
                    });
                }
                for j in 0..n {
                    let v = self.get(x, i, j);
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::InvalidProbability {
                            what: "preference table",
                            detail: format!("P[{i}][{j}] = {v} in context {x} is outside [0, 1]"),
                        });
                    }
                    let sum = v + self.get(x, j, i);
                    if (sum - 1.0).abs() > PROB_TOLERANCE {
                        return Err(Error::InvalidProbability {
                            what: "preference table",
                            detail: format!("P[{i}][{j}] + P[{j}][{i}] = {sum} in context {x}, expected 1"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn contexts(&self) -> &ContextSet {
        &self.contexts
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.len()
    }

    #[inline]
    pub fn get(&self, context: usize, winner: usize, loser: usize) -> f64 {
        let n = self.actions.len();
        self.p[(context * n + winner) * n + loser]
    }

    /// Row-major `n × n` matrix for one context.
    pub fn matrix(&self, context: usize) -> &[f64] {
        let n = self.actions.len();
        &self.p[context * n * n..(context + 1) * n * n]
    }

    /// Copy with every entry clamped into `[delta, 1 − delta]`.
    pub fn clipped(&self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::param(format!("clip delta must lie in (0, 1/2), got {delta}")));
        }
        let mut out = self.clone();
        out.p.iter_mut().for_each(|v| *v = v.clamp(delta, 1.0 - delta));
        Ok(out)
    }

    /// True when every off-diagonal entry is 0 or 1.
    pub fn is_deterministic(&self) -> bool {
        let n = self.actions.len();
        (0..self.p.len())
            .filter(|k| (k / n) % n != k % n)
            .all(|k| self.p[k] == 0.0 || self.p[k] == 1.0)
    }

    pub(crate) fn check_policy(&self, what: &'static str, pi: &TabularPolicy) -> Result<()> {
        pi.check_shape(what, self.n_contexts(), self.n_actions())
    }

    fn check_index(&self, context: usize, action: usize) -> Result<()> {
        if context >= self.n_contexts() {
            return Err(Error::Index {
                what: "context",
                index: context,
                len: self.n_contexts(),
            });
        }
        if action >= self.n_actions() {
            return Err(Error::Index {
                what: "action",
                index: action,
                len: self.n_actions(),
            });
        }
        Ok(())
    }

    /// `p*(y ≻ μ | x)` for every context and action, as a table.
    pub fn preference_vs_policy_table(&self, mu: &TabularPolicy) -> Result<PerContext> {
        self.check_policy("behaviour policy", mu)?;
        let n = self.n_actions();
        let mut out = PerContext::zeros(self.n_contexts(), n);
        for x in 0..self.n_contexts() {
            for y in 0..n {
                out.set(x, y, self.against(x, y, mu.row(x)));
            }
        }
        Ok(out)
    }

    fn against(&self, context: usize, action: usize, mu_row: &[f64]) -> f64 {
        let n = self.n_actions();
        let row = &self.matrix(context)[action * n..(action + 1) * n];
        row.iter().zip(mu_row).map(|(p, m)| p * m).sum()
    }
}

/// `p*(y ≻ μ | x) = Σ_{y'} μ(y'|x) · p*(y ≻ y' | x)`.
pub fn preference_vs_policy(table: &PreferenceTable, action: usize, mu: &TabularPolicy, context: usize) -> Result<f64> {
    table.check_policy("behaviour policy", mu)?;
    table.check_index(context, action)?;
    Ok(table.against(context, action, mu.row(context)))
}

/// Total preference `E_{x∼ρ, y∼π(·|x)}[p*(y ≻ μ | x)]`.
pub fn total_preference(table: &PreferenceTable, pi: &TabularPolicy, mu: &TabularPolicy) -> Result<f64> {
    table.check_policy("policy", pi)?;
    table.check_policy("behaviour policy", mu)?;
    let mut total = 0.0;
    for (x, &w) in table.contexts().weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let inner: f64 = (0..table.n_actions())
            .map(|y| pi.prob(x, y) * table.against(x, y, mu.row(x)))
            .sum();
        total += w * inner;
    }
    Ok(total)
}
