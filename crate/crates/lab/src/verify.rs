//! Verification suites behind `pref-lab verify`.

use std::fmt;

use clap::ValueEnum;
use pref_lab_core::closed_form::{psipo_optimal_policy, PsiFn};
use pref_lab_core::dataset::sample_dataset;
use pref_lab_core::losses::{
    bt_logistic_loss, dpo_empirical_loss, dpo_population_loss, ipo_empirical_loss, ipo_population_loss,
    ipo_sampled_population_loss, ipo_symmetrized_loss, LossValue,
};
use pref_lab_core::oracle::{finite_diff_grad, nonuniqueness_probe, relative_error, DEFAULT_FD_STEP};
use pref_lab_core::rlhf::{verify_dpo_rlhf_equivalence, EquivalenceConfig};
use pref_lab_core::rng::{rng_from_seed, LabRng};
use pref_lab_core::space::{ActionSpace, ContextSet};
use pref_lab_core::table::PerContext;
use pref_lab_core::{
    population_train, total_variation, LogitParams, LossKind, PreferenceDataset, PreferenceTable, RewardTable,
    TabularPolicy, TrainConfig,
};
use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Gradients,
    Prop2,
    Prop3,
    Thm1,
    A2,
    All,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Gradients => "gradients",
            Suite::Prop2 => "prop2",
            Suite::Prop3 => "prop3",
            Suite::Thm1 => "thm1",
            Suite::A2 => "a2",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{:<10} {:<24} {verdict}  {}", self.suite, self.name, self.detail)
    }
}

/// Random inputs shared by every gradient case.
pub struct GradientInstance {
    pub table: PreferenceTable,
    pub mu: TabularPolicy,
    pub pi_ref: TabularPolicy,
    pub tau: f64,
    pub data: PreferenceDataset,
    pub logits: PerContext,
    pub rewards: PerContext,
}

type Eval = fn(&GradientInstance, &PerContext) -> pref_lab_core::Result<LossValue>;

/// A loss checked against finite differences. `on_rewards` selects the
/// reward table instead of the logits as the differentiated argument.
#[derive(Clone, Copy)]
pub struct GradientCase {
    pub name: &'static str,
    pub on_rewards: bool,
    pub eval: Eval,
}

fn logits(p: &PerContext) -> LogitParams {
    LogitParams(p.clone())
}

pub fn default_gradient_cases() -> Vec<GradientCase> {
    vec![
        GradientCase {
            name: "bt-logistic",
            on_rewards: true,
            eval: |i, p| bt_logistic_loss(&RewardTable::new(p.clone())?, &i.data),
        },
        GradientCase {
            name: "dpo-empirical",
            on_rewards: false,
            eval: |i, p| dpo_empirical_loss(&logits(p), &i.pi_ref, &i.data, i.tau),
        },
        GradientCase {
            name: "dpo-population",
            on_rewards: false,
            eval: |i, p| dpo_population_loss(&logits(p), &i.pi_ref, &i.table, &i.mu, i.tau),
        },
        GradientCase {
            name: "ipo-population",
            on_rewards: false,
            eval: |i, p| ipo_population_loss(&logits(p), &i.pi_ref, &i.table, &i.mu, i.tau),
        },
        GradientCase {
            name: "ipo-sampled-population",
            on_rewards: false,
            eval: |i, p| ipo_sampled_population_loss(&logits(p), &i.pi_ref, &i.table, &i.mu, i.tau),
        },
        GradientCase {
            name: "ipo-empirical",
            on_rewards: false,
            eval: |i, p| ipo_empirical_loss(&logits(p), &i.pi_ref, &i.data, i.tau),
        },
        GradientCase {
            name: "ipo-symmetrized",
            on_rewards: false,
            eval: |i, p| ipo_symmetrized_loss(&logits(p), &i.pi_ref, &i.data, i.tau),
        },
    ]
}

fn actions(n: usize) -> ActionSpace {
    ActionSpace::new((0..n).map(|i| format!("y{i}"))).expect("generated ids")
}

fn random_table(rng: &mut LabRng, n_actions: usize, n_contexts: usize) -> Result<PreferenceTable> {
    let w: Vec<f64> = (0..n_contexts).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    let ctx = ContextSet::new((0..n_contexts).map(|i| format!("x{i}")), w.iter().map(|v| v / total).collect())?;
    Ok(PreferenceTable::from_fn(actions(n_actions), ctx, |_, _, _| rng.random_range(0.05..0.95))?)
}

fn random_table_values(rng: &mut LabRng, c: usize, n: usize, scale: f64) -> PerContext {
    let mut t = PerContext::zeros(c, n);
    t.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
    t
}

fn random_policy(rng: &mut LabRng, c: usize, n: usize) -> TabularPolicy {
    LogitParams(random_table_values(rng, c, n, 1.0)).to_policy()
}

pub const GRADIENT_INSTANCES: usize = 50;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

fn gradient_instance(rng: &mut LabRng) -> Result<GradientInstance> {
    let (c, n) = (2, 4);
    let table = random_table(rng, n, c)?;
    let mu = random_policy(rng, c, n);
    let pi_ref = random_policy(rng, c, n);
    let tau = rng.random_range(0.1..2.0);
    let data = sample_dataset(&table, &mu, 30, rng.random())?;
    Ok(GradientInstance {
        logits: random_table_values(rng, c, n, 2.0),
        rewards: random_table_values(rng, c, n, 2.0),
        table,
        mu,
        pi_ref,
        tau,
        data,
    })
}

fn gradients(cases: &[GradientCase]) -> Result<Vec<Check>> {
    let mut rng = rng_from_seed(0x6772_6164);
    let instances = (0..GRADIENT_INSTANCES)
        .map(|_| gradient_instance(&mut rng))
        .collect::<Result<Vec<_>>>()?;
    cases
        .iter()
        .map(|case| {
            let mut worst: f64 = 0.0;
            for inst in &instances {
                let at = if case.on_rewards { &inst.rewards } else { &inst.logits };
                let analytic = (case.eval)(inst, at)?;
                let fd = finite_diff_grad(
                    |p| (case.eval)(inst, p).map(|v| v.value).unwrap_or(f64::NAN),
                    at,
                    DEFAULT_FD_STEP,
                );
                let err = relative_error(&analytic.gradient, &fd);
                worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
            }
            Ok(Check {
                suite: "gradients",
                name: case.name.into(),
                passed: worst <= GRADIENT_TOLERANCE,
                detail: format!("max rel err {worst:.2e} over {GRADIENT_INSTANCES} instances (tol {GRADIENT_TOLERANCE:e})"),
            })
        })
        .collect()
}

/// The sampled IPO loss minus the root-finding IPO loss is the same for every
/// policy.
fn prop2() -> Result<Vec<Check>> {
    let mut rng = rng_from_seed(0x7032);
    (0..3)
        .map(|k| {
            let table = random_table(&mut rng, 4, 1)?;
            let mu = random_policy(&mut rng, 1, 4);
            let pi_ref = random_policy(&mut rng, 1, 4);
            let tau = rng.random_range(0.2..2.0);
            let mut diffs = Vec::with_capacity(10);
            for _ in 0..10 {
                let s = LogitParams(random_table_values(&mut rng, 1, 4, 2.0));
                diffs.push(
                    ipo_sampled_population_loss(&s, &pi_ref, &table, &mu, tau)?.value
                        - ipo_population_loss(&s, &pi_ref, &table, &mu, tau)?.value,
                );
            }
            let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(Check {
                suite: "prop2",
                name: format!("table-{k}"),
                passed: hi - lo <= 1e-10,
                detail: format!("constant {:.6}, spread {:.2e} over 10 policies (tol 1e-10)", diffs[0], hi - lo),
            })
        })
        .collect()
}

/// Fitted-reward RLHF and population DPO agree on non-Bradley-Terry tables.
fn prop3() -> Result<Vec<Check>> {
    let cfg = EquivalenceConfig::default();
    let check = |name: String, rep: pref_lab_core::rlhf::EquivalenceReport| Check {
        suite: "prop3",
        name,
        passed: rep.passed(),
        detail: format!("TV {:.2e} (tol {:e})", rep.total_variation, rep.tolerance),
    };
    let cyclic = PreferenceTable::from_fn(
        ActionSpace::new(["a", "b", "c"]).expect("static ids"),
        ContextSet::single(),
        |_, i, j| if matches!((i, j), (0, 1) | (1, 2)) { 0.9 } else { 0.1 },
    )?;
    let u = TabularPolicy::uniform(1, 3);
    let mut out = vec![check("cyclic".into(), verify_dpo_rlhf_equivalence(&cyclic, &u, &u, 1.0, &cfg)?)];

    let mut rng = rng_from_seed(0x7033);
    let mut instances = Vec::new();
    for k in 0..10 {
        let n = 3 + k % 3;
        let table = random_table(&mut rng, n, 2)?;
        let mu = random_policy(&mut rng, 2, n);
        let pi_ref = random_policy(&mut rng, 2, n);
        instances.push((k, table, mu, pi_ref, rng.random_range(0.5..2.0)));
    }
    let reports = instances
        .par_iter()
        .map(|(k, t, mu, pi_ref, tau)| Ok(check(format!("random-{k}"), verify_dpo_rlhf_equivalence(t, mu, pi_ref, *tau, &cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    out.extend(reports);
    Ok(out)
}

/// Population IPO descent from many starting points lands on the closed form.
fn thm1() -> Result<Vec<Check>> {
    let mut rng = rng_from_seed(0x746d31);
    let table = random_table(&mut rng, 4, 2)?;
    let mu = random_policy(&mut rng, 2, 4);
    let pi_ref = random_policy(&mut rng, 2, 4);
    let tau = 0.5;
    let closed = psipo_optimal_policy(&table, &mu, &pi_ref, tau, PsiFn::Identity)?;
    let cfg = TrainConfig {
        tau,
        learning_rate: 0.001,
        steps: 60_000,
        record_every: 60_000,
        ..TrainConfig::default()
    };
    let starts: Vec<LogitParams> = (0..20)
        .map(|_| LogitParams(random_table_values(&mut rng, 2, 4, 3.0)))
        .collect();
    let finals = starts
        .par_iter()
        .map(|s0| Ok(population_train(LossKind::Ipo, s0, &pi_ref, &table, &mu, &cfg)?.final_policy().clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut pairwise: f64 = 0.0;
    for (i, a) in finals.iter().enumerate() {
        for b in &finals[i + 1..] {
            pairwise = pairwise.max(total_variation(a, b)?);
        }
    }
    let mut to_closed: f64 = 0.0;
    for p in &finals {
        to_closed = to_closed.max(total_variation(p, &closed)?);
    }
    Ok(vec![
        Check {
            suite: "thm1",
            name: "single-minimiser".into(),
            passed: pairwise <= 1e-4,
            detail: format!("max pairwise TV {pairwise:.2e} over 20 starts (tol 1e-4)"),
        },
        Check {
            suite: "thm1",
            name: "matches-closed-form".into(),
            passed: to_closed <= 1e-4,
            detail: format!("max TV to closed form {to_closed:.2e} (tol 1e-4)"),
        },
    ])
}

fn a2() -> Result<Vec<Check>> {
    let r = nonuniqueness_probe(1.0)?;
    let check = |name: &str, passed: bool, detail: String| Check {
        suite: "a2",
        name: name.into(),
        passed,
        detail,
    };
    Ok(vec![
        check(
            "third-logit-flat",
            r.third_logit_variation <= 1e-12,
            format!("variation {:.2e} (tol 1e-12)", r.third_logit_variation),
        ),
        check(
            "equal-minimisers",
            r.minimizer_gap() <= 1e-10,
            format!(
                "y3 mass {:?}, loss gap {:.2e} (tol 1e-10)",
                r.third_masses,
                r.minimizer_gap()
            ),
        ),
        check(
            "full-support-curved",
            r.full_support_variation > 1e-3,
            format!("variation {:.3} (needs > 1e-3)", r.full_support_variation),
        ),
        check(
            "ratio-pinned",
            r.ratio_perturbation_increase > 0.0,
            format!("min increase {:.2e}", r.ratio_perturbation_increase),
        ),
    ])
}

pub fn run_suite(suite: Suite, cases: &[GradientCase]) -> Result<Vec<Check>> {
    match suite {
        Suite::Gradients => gradients(cases),
        Suite::Prop2 => prop2(),
        Suite::Prop3 => prop3(),
        Suite::Thm1 => thm1(),
        Suite::A2 => a2(),
        Suite::All => {
            let mut out = Vec::new();
            for s in [Suite::Gradients, Suite::Prop2, Suite::Prop3, Suite::Thm1, Suite::A2] {
                out.extend(run_suite(s, cases)?);
            }
            Ok(out)
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
