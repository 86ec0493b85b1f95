use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use pref_lab_core::closed_form::{psipo_objective, psipo_optimal_policy, PsiFn};
use pref_lab_core::experiments::{asymptotic_table, build_dataset, ExperimentSpec, Scenario};
use pref_lab_core::rlhf::{
    fit_bt_reward, fit_bt_reward_empirical, rlhf_policy, verify_dpo_rlhf_equivalence, EquivalenceConfig,
    RewardFitConfig,
};
use pref_lab_core::space::{ActionSpace, ContextSet};
use pref_lab_core::{train, LogitParams, LossKind, PreferenceDataset, TabularPolicy, TrainConfig};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::formats::{
    read_json, rewards_to_json, to_json_string, write_aggregate, write_file, write_learning_curve, DatasetJson,
    ManifestJson, PolicyJson, PreferenceTableJson, RewardsJson, TrainConfigJson,
};
use crate::runner::{run_experiment_parallel, threads_from_env};
use crate::verify::{run_suite, GradientCase, Suite};

#[derive(Debug, Parser)]
#[command(name = "pref-lab", version, about = "Preference optimisation on finite contextual bandits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the regularised optimum for a preference table as JSON.
    ClosedForm(ClosedFormArgs),
    /// Train one policy with mini-batch Adam and write its learning curve.
    Train(TrainArgs),
    /// Run a multi-seed sweep over tau and write aggregate curves.
    Experiment(ExperimentArgs),
    /// Run verification suites; exits 1 if any check fails.
    Verify(VerifyArgs),
    /// Fit a Bradley-Terry reward and print it with the resulting policy.
    Rlhf(RlhfArgs),
    /// Print the two-action optimum for IPO and clipped log-odds as CSV.
    Asymptotic(AsymptoticArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PsiArg {
    Identity,
    Logodds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Ipo,
    Dpo,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Ipo => LossKind::Ipo,
            LossArg::Dpo => LossKind::Dpo,
        }
    }
}

#[derive(Debug, Args)]
pub struct ClosedFormArgs {
    /// Preference table JSON.
    #[arg(long)]
    pub pref: PathBuf,
    #[arg(long, value_enum, default_value = "identity")]
    pub psi: PsiArg,
    /// Clipping for the log-odds map; ignored for identity.
    #[arg(long, default_value_t = PsiFn::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// KL-regularisation strength.
    #[arg(long, allow_negative_numbers = true)]
    pub tau: f64,
    /// Behaviour policy JSON [default: uniform].
    #[arg(long)]
    pub mu: Option<PathBuf>,
    /// Reference policy JSON [default: uniform].
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingFlags {
    #[arg(long, default_value_t = 18_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 9)]
    pub batch: usize,
    /// Curve sampling stride; the final step is always written.
    #[arg(long, default_value_t = 100)]
    pub record_every: usize,
}

impl TrainingFlags {
    fn config(&self, tau: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            tau,
            learning_rate: self.lr,
            steps: self.steps,
            batch_size: self.batch,
            seed,
            record_every: self.record_every,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub loss: LossArg,
    /// d1, d2, d3, two-action, or a dataset JSON file.
    #[arg(long)]
    pub dataset: String,
    #[arg(long, allow_negative_numbers = true)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub training: TrainingFlags,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// d1, d2, d3, two-action, or a single-context dataset JSON file.
    #[arg(long)]
    pub scenario: String,
    /// Comma-separated losses to sweep.
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub method: Vec<LossArg>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,0.5,1.0")]
    pub taus: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// Base seed; per-run seeds are derived from it, tau and the seed index.
    #[arg(long, default_value_t = 0)]
    pub base_seed: u64,
    #[command(flatten)]
    pub training: TrainingFlags,
    /// Worker threads; overrides PREF_LAB_THREADS (0 = one per core).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["pref", "dataset"])))]
pub struct RlhfArgs {
    /// Fit on a preference table (population loss).
    #[arg(long)]
    pub pref: Option<PathBuf>,
    /// Fit on a dataset (empirical loss): d1, d2, d3, two-action or a JSON file.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Behaviour policy JSON for --pref [default: uniform].
    #[arg(long)]
    pub mu: Option<PathBuf>,
    /// Reference policy JSON [default: uniform].
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau: f64,
    /// Clamp table entries into [clip, 1 - clip] before fitting; 0 disables.
    #[arg(long, default_value_t = 1e-6)]
    pub clip: f64,
    /// Also minimise the population DPO loss and report the distance.
    #[arg(long)]
    pub compare_dpo: bool,
    #[arg(long, default_value_t = 200_000)]
    pub max_steps: usize,
}

#[derive(Debug, Args)]
pub struct AsymptoticArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10")]
    pub taus: Vec<f64>,
    /// Log-odds clipping.
    #[arg(long, default_value_t = 1e-10)]
    pub epsilon: f64,
}

pub fn run(cli: Cli, cases: &[GradientCase]) -> Result<()> {
    match cli.command {
        Command::ClosedForm(a) => closed_form(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Experiment(a) => experiment(&a),
        Command::Verify(a) => verify(&a, cases),
        Command::Rlhf(a) => rlhf(&a),
        Command::Asymptotic(a) => asymptotic(&a),
    }
}

fn policy_or_uniform(path: Option<&Path>, actions: &ActionSpace, contexts: &ContextSet) -> Result<TabularPolicy> {
    match path {
        Some(p) => read_json::<PolicyJson>(p)?.to_policy(actions, contexts),
        None => Ok(TabularPolicy::uniform(contexts.len(), actions.len())),
    }
}

#[derive(Serialize)]
struct ClosedFormOutput {
    psi: &'static str,
    tau: f64,
    policy: PolicyJson,
    objective: f64,
}

fn closed_form(a: &ClosedFormArgs) -> Result<()> {
    let table = read_json::<PreferenceTableJson>(&a.pref)?.to_table()?;
    let (actions, contexts) = (table.actions(), table.contexts());
    let mu = policy_or_uniform(a.mu.as_deref(), actions, contexts)?;
    let pi_ref = policy_or_uniform(a.reference.as_deref(), actions, contexts)?;
    let (psi, name) = match a.psi {
        PsiArg::Identity => (PsiFn::Identity, "identity"),
        PsiArg::Logodds => (PsiFn::log_odds(a.epsilon)?, "logodds"),
    };
    let pi = psipo_optimal_policy(&table, &mu, &pi_ref, a.tau, psi)?;
    let objective = psipo_objective(&table, &pi, &mu, &pi_ref, a.tau, psi)?;
    println!(
        "{}",
        to_json_string(&ClosedFormOutput {
            psi: name,
            tau: a.tau,
            policy: PolicyJson::from_policy(actions, contexts, &pi),
            objective,
        })
    );
    Ok(())
}

struct LoadedData {
    name: String,
    actions: ActionSpace,
    contexts: ContextSet,
    data: PreferenceDataset,
}

fn load_dataset(spec: &str) -> Result<LoadedData> {
    if let Ok(scenario) = Scenario::builtin(spec) {
        return Ok(LoadedData {
            name: scenario.name().into(),
            actions: scenario.actions(),
            contexts: ContextSet::single(),
            data: build_dataset(&scenario)?,
        });
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(LabError::usage(format!(
            "dataset '{spec}' is neither d1, d2, d3, two-action nor an existing file"
        )));
    }
    let (actions, contexts, data) = read_json::<DatasetJson>(path)?.to_dataset()?;
    Ok(LoadedData {
        name: path.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned()),
        actions,
        contexts,
        data,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let loaded = load_dataset(&a.dataset)?;
    let kind = LossKind::from(a.loss);
    let cfg = a.training.config(a.tau, a.seed);
    cfg.validate()?;
    let pi_ref = TabularPolicy::uniform(loaded.contexts.len(), loaded.actions.len());
    let s0 = LogitParams::zeros(loaded.contexts.len(), loaded.actions.len());
    let curve = train(kind, &s0, &pi_ref, &loaded.data, &cfg)?;

    create_dir(&a.out)?;
    let stem = format!("{}_{}_tau{}_seed{}", loaded.name, kind.name(), a.tau, a.seed);
    let csv_path = a.out.join(format!("{stem}.csv"));
    let mut buf = Vec::new();
    write_learning_curve(&mut buf, &curve, &loaded.actions, &loaded.contexts)?;
    write_file(&csv_path, &buf)?;
    let sidecar = TrainConfigJson::new(kind.name(), &loaded.name, &cfg);
    write_file(&a.out.join(format!("{stem}.json")), to_json_string(&sidecar).as_bytes())?;

    let last = curve.final_policy();
    for (x, c) in loaded.contexts.ids().iter().enumerate() {
        let probs: Vec<String> = loaded
            .actions
            .ids()
            .iter()
            .enumerate()
            .map(|(y, id)| format!("{id}={:.4}", last.prob(x, y)))
            .collect();
        println!("{c}: {}", probs.join(" "));
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn experiment(a: &ExperimentArgs) -> Result<()> {
    let scenario = match Scenario::builtin(&a.scenario) {
        Ok(s) => s,
        Err(_) => {
            let loaded = load_dataset(&a.scenario)?;
            Scenario::Custom {
                name: loaded.name,
                actions: loaded.actions,
                data: loaded.data,
            }
        }
    };
    let threads = match a.threads {
        Some(t) => t,
        None => threads_from_env()?,
    };
    create_dir(&a.out)?;
    for &method in &a.method {
        let kind = LossKind::from(method);
        let spec = ExperimentSpec {
            scenario: scenario.clone(),
            method: kind,
            tau_grid: a.taus.clone(),
            n_seeds: a.seeds,
            base_seed: a.base_seed,
            train: a.training.config(1.0, 0),
        };
        let curves = run_experiment_parallel(&spec, threads)?;
        let mut files = Vec::with_capacity(curves.len());
        for curve in &curves {
            let name = format!("{}_{}_tau{}.csv", scenario.name(), kind.name(), curve.tau);
            let mut buf = Vec::new();
            write_aggregate(&mut buf, curve)?;
            write_file(&a.out.join(&name), &buf)?;
            let finals: Vec<String> = curve
                .actions
                .iter()
                .zip(curve.final_mean())
                .map(|(id, p)| format!("{id}={p:.4}"))
                .collect();
            println!("{} {} tau={}: {}", scenario.name(), kind.name(), curve.tau, finals.join(" "));
            files.push(name);
        }
        let manifest = ManifestJson::new(&spec, files);
        let path = a.out.join(format!("{}_{}_manifest.json", scenario.name(), kind.name()));
        write_file(&path, to_json_string(&manifest).as_bytes())?;
    }
    Ok(())
}

fn verify(a: &VerifyArgs, cases: &[GradientCase]) -> Result<()> {
    let checks = run_suite(a.suite, cases)?;
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}/{}", c.suite, c.name))
        .collect();
    println!("{} of {} checks passed", checks.len() - failed.len(), checks.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(LabError::Verification(failed))
    }
}

#[derive(Serialize)]
struct Equivalence {
    total_variation: f64,
    tolerance: f64,
    passed: bool,
    dpo_policy: PolicyJson,
}

#[derive(Serialize)]
struct RlhfOutput {
    rewards: RewardsJson,
    /// `[context, action]` pairs with no data; their reward is pinned at 0.
    undetermined: Vec<(String, String)>,
    steps: usize,
    policy: PolicyJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    equivalence: Option<Equivalence>,
}

fn rlhf(a: &RlhfArgs) -> Result<()> {
    let reward_cfg = RewardFitConfig {
        max_steps: a.max_steps,
        ..RewardFitConfig::default()
    };
    let (actions, contexts, fit, equivalence) = if let Some(path) = &a.pref {
        let raw = read_json::<PreferenceTableJson>(path)?.to_table()?;
        let table = if a.clip > 0.0 { raw.clipped(a.clip)? } else { raw };
        let (actions, contexts) = (table.actions().clone(), table.contexts().clone());
        let mu = policy_or_uniform(a.mu.as_deref(), &actions, &contexts)?;
        let fit = fit_bt_reward(&table, &mu, &reward_cfg)?;
        let equivalence = if a.compare_dpo {
            let pi_ref = policy_or_uniform(a.reference.as_deref(), &actions, &contexts)?;
            let cfg = EquivalenceConfig {
                clip_delta: if a.clip > 0.0 { a.clip } else { 1e-6 },
                reward: reward_cfg,
                ..EquivalenceConfig::default()
            };
            let rep = verify_dpo_rlhf_equivalence(&table, &mu, &pi_ref, a.tau, &cfg)?;
            Some(Equivalence {
                total_variation: rep.total_variation,
                tolerance: rep.tolerance,
                passed: rep.passed(),
                dpo_policy: PolicyJson::from_policy(&actions, &contexts, &rep.dpo_policy),
            })
        } else {
            None
        };
        (actions, contexts, fit, equivalence)
    } else {
        if a.compare_dpo || a.mu.is_some() {
            return Err(LabError::usage("--compare-dpo and --mu need --pref"));
        }
        let loaded = load_dataset(a.dataset.as_deref().expect("clap enforces one source"))?;
        let fit = fit_bt_reward_empirical(&loaded.data, &reward_cfg)?;
        (loaded.actions, loaded.contexts, fit, None)
    };
    let pi_ref = policy_or_uniform(a.reference.as_deref(), &actions, &contexts)?;
    let pi = rlhf_policy(&fit.rewards, &pi_ref, a.tau)?;
    let out = RlhfOutput {
        rewards: rewards_to_json(&actions, &contexts, &fit.rewards),
        undetermined: fit
            .undetermined
            .iter()
            .map(|&(x, y)| (contexts.ids()[x].clone(), actions.ids()[y].clone()))
            .collect(),
        steps: fit.steps,
        policy: PolicyJson::from_policy(&actions, &contexts, &pi),
        equivalence,
    };
    println!("{}", to_json_string(&out));
    Ok(())
}

fn asymptotic(a: &AsymptoticArgs) -> Result<()> {
    println!("tau,ipo,dpo");
    for row in asymptotic_table(&a.taus, a.epsilon)? {
        println!("{},{},{}", row.tau, row.ipo, row.dpo);
    }
    Ok(())
}
