//! Brute-force checks that share no code path with the analytic machinery:
//! central finite differences, exhaustive grid minimisation, and the
//! support-deficient IPO instance whose minimiser is not unique.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::ipo_population_loss;
use crate::math;
use crate::policy::{LogitParams, TabularPolicy};
use crate::preference::{preference_vs_policy, PreferenceTable};
use crate::space::{ActionSpace, ContextSet};
use crate::table::PerContext;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central differences `(f(s + h·e_i) − f(s − h·e_i)) / 2h` for every entry.
pub fn finite_diff_grad<F>(mut f: F, s: &PerContext, h: f64) -> PerContext
where
    F: FnMut(&PerContext) -> f64,
{
    let mut grad = PerContext::zeros(s.n_contexts(), s.n_actions());
    let mut probe = s.clone();
    for i in 0..s.as_slice().len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        grad.as_mut_slice()[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, 1e-8)`.
///
/// Normalising by the largest entry keeps near-zero components from
/// dominating the comparison.
pub fn relative_error(a: &PerContext, b: &PerContext) -> f64 {
    let diff = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()));
    diff / a.max_abs().max(b.max_abs()).max(1e-8)
}

/// Axis-aligned grid `lo, lo + step, …, ≤ hi` per dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            lo: -20.0,
            hi: 20.0,
            step: 1e-3,
        }
    }
}

impl Grid {
    fn points(&self) -> Result<usize> {
        if !(self.step > 0.0 && self.hi >= self.lo) {
            return Err(Error::param("grid needs step > 0 and hi >= lo"));
        }
        Ok(((self.hi - self.lo) / self.step + 1e-9) as usize + 1)
    }

    fn at(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMinimum {
    pub point: Vec<f64>,
    pub value: f64,
}

/// Exhaustive scan of `f` over a 1- or 2-dimensional grid. Points are
/// visited in lexicographic order and only a strictly smaller value replaces
/// the incumbent, so ties resolve to the lexicographically smallest point.
pub fn grid_minimize<F>(mut f: F, dims: usize, grid: Grid) -> Result<GridMinimum>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = grid.points()?;
    let mut best = GridMinimum {
        point: vec![grid.lo; dims],
        value: f64::INFINITY,
    };
    let mut consider = |p: &[f64]| {
        let v = f(p);
        if v < best.value {
            best.value = v;
            best.point.copy_from_slice(p);
        }
    };
    match dims {
        1 => {
            for i in 0..n {
                consider(&[grid.at(i)]);
            }
        }
        2 => {
            for i in 0..n {
                let u = grid.at(i);
                for j in 0..n {
                    consider(&[u, grid.at(j)]);
                }
            }
        }
        _ => return Err(Error::Unsupported("grid search supports 1 or 2 dimensions")),
    }
    Ok(best)
}

/// Single-context logits from consecutive log-ratio gaps with the last logit
/// fixed at zero: `gaps[k] = s[k] − s[k+1]`.
pub fn logits_from_gaps(gaps: &[f64]) -> LogitParams {
    let mut s = vec![0.0; gaps.len() + 1];
    for k in (0..gaps.len()).rev() {
        s[k] = s[k + 1] + gaps[k];
    }
    LogitParams(PerContext::from_rows(&[s]).expect("one row"))
}

/// The support-deficient IPO instance: three actions in a deterministic
/// order `y1 ≻ y2 ≻ y3`, uniform `π_ref`, and `μ = (1/2, 1/2, 0)`.
pub fn support_deficient_instance() -> (PreferenceTable, TabularPolicy, TabularPolicy) {
    let actions = ActionSpace::new(["y1", "y2", "y3"]).expect("static ids");
    let table = PreferenceTable::total_order(actions, ContextSet::single());
    let mu = TabularPolicy::from_rows(&[[0.5, 0.5, 0.0]]).expect("static policy");
    (table, mu, TabularPolicy::uniform(1, 3))
}

/// Outcome of [`nonuniqueness_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct NonUniquenessReport {
    pub tau: f64,
    /// Prescribed ratio `π(y1)/π(y2) = exp((p*(y1 ≻ μ) − p*(y2 ≻ μ))/τ)`.
    pub prescribed_ratio: f64,
    /// Largest change in the loss when only the third logit moves.
    pub third_logit_variation: f64,
    /// Masses on `y3` of the two minimisers compared.
    pub third_masses: [f64; 2],
    pub minimizer_losses: [f64; 2],
    /// Same third-logit sweep with `μ` restored to full support.
    pub full_support_variation: f64,
    /// Smallest loss increase over ratio perturbations away from the
    /// prescribed value.
    pub ratio_perturbation_increase: f64,
}

impl NonUniquenessReport {
    pub fn minimizer_gap(&self) -> f64 {
        (self.minimizer_losses[0] - self.minimizer_losses[1]).abs()
    }

    pub fn passed(&self) -> bool {
        self.third_logit_variation <= 1e-12
            && self.minimizer_gap() <= 1e-10
            && self.full_support_variation > 1e-3
            && self.ratio_perturbation_increase > 0.0
    }
}

/// Demonstrates the flat direction of the IPO population loss when `μ` does
/// not cover the support of `π_ref`.
pub fn nonuniqueness_probe(tau: f64) -> Result<NonUniquenessReport> {
    let (table, mu, pi_ref) = support_deficient_instance();
    let loss = |s: &LogitParams, mu: &TabularPolicy| -> Result<f64> {
        Ok(ipo_population_loss(s, &pi_ref, &table, mu, tau)?.value)
    };

    let third_sweep = |mu: &TabularPolicy| -> Result<f64> {
        let base = LogitParams::from_rows(&[[0.4, -0.1, 0.0]])?;
        let l0 = loss(&base, mu)?;
        let mut worst: f64 = 0.0;
        for c in [-5.0, -1.0, 0.5, 2.0, 8.0] {
            let moved = LogitParams::from_rows(&[[0.4, -0.1, c]])?;
            worst = worst.max((loss(&moved, mu)? - l0).abs());
        }
        Ok(worst)
    };

    let gap = preference_vs_policy(&table, 0, &mu, 0)? - preference_vs_policy(&table, 1, &mu, 0)?;
    let ratio = math::exp(gap / tau);
    let with_ratio = |ratio: f64, third: f64| -> Result<LogitParams> {
        let q = (1.0 - third) / (1.0 + ratio);
        TabularPolicy::from_rows(&[[q * ratio, q, third]])?.to_logits()
    };

    let third_masses = [0.1, 0.6];
    let minimizer_losses = [
        loss(&with_ratio(ratio, third_masses[0])?, &mu)?,
        loss(&with_ratio(ratio, third_masses[1])?, &mu)?,
    ];

    let mut increase = f64::INFINITY;
    for factor in [0.9, 0.99, 1.01, 1.1] {
        let v = loss(&with_ratio(ratio * factor, third_masses[0])?, &mu)?;
        increase = increase.min(v - minimizer_losses[0]);
    }

    let full = TabularPolicy::uniform(1, 3);
    Ok(NonUniquenessReport {
        tau,
        prescribed_ratio: ratio,
        third_logit_variation: third_sweep(&mu)?,
        third_masses,
        minimizer_losses,
        full_support_variation: third_sweep(&full)?,
        ratio_perturbation_increase: increase,
    })
}
