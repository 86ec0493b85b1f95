//! JSON and CSV file formats.
//!
//! Preference tables:
//!
//! ```json
//! {"actions": ["a", "b"], "contexts": ["x0"], "rho": [1.0],
//!  "p": {"x0": [[0.5, 1.0], [0.0, 0.5]]}}
//! ```
//!
//! `contexts` defaults to `["x0"]` and `rho` to uniform. Policies use the same
//! header with `"probs": {ctx: [...]}`. Datasets list `[context, winner,
//! loser]` triples as identifiers or indices. Rewards are `{ctx: {action: r}}`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use pref_lab_core::dataset::{PreferenceDataset, Record};
use pref_lab_core::experiments::{AggregateCurve, ExperimentSpec};
use pref_lab_core::space::{ActionSpace, ContextSet};
use pref_lab_core::table::PerContext;
use pref_lab_core::{LearningCurve, PreferenceTable, RewardTable, TabularPolicy, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

fn default_contexts() -> Vec<String> {
    vec!["x0".into()]
}

fn context_set(ids: &[String], rho: Option<&[f64]>) -> Result<ContextSet> {
    Ok(match rho {
        Some(w) => ContextSet::new(ids.iter().cloned(), w.to_vec())?,
        None => ContextSet::uniform(ids.iter().cloned())?,
    })
}

fn per_context<T: Clone>(what: &str, contexts: &[String], map: &BTreeMap<String, T>) -> Result<Vec<T>> {
    if let Some(extra) = map.keys().find(|k| !contexts.contains(k)) {
        return Err(LabError::usage(format!("{what}: unknown context '{extra}'")));
    }
    contexts
        .iter()
        .map(|c| {
            map.get(c)
                .cloned()
                .ok_or_else(|| LabError::usage(format!("{what}: missing context '{c}'")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceTableJson {
    pub actions: Vec<String>,
    #[serde(default = "default_contexts")]
    pub contexts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    pub p: BTreeMap<String, Vec<Vec<f64>>>,
}

impl PreferenceTableJson {
    pub fn to_table(&self) -> Result<PreferenceTable> {
        let actions = ActionSpace::new(self.actions.iter().cloned())?;
        let contexts = context_set(&self.contexts, self.rho.as_deref())?;
        let matrices = per_context("preference table", &self.contexts, &self.p)?;
        Ok(PreferenceTable::new(actions, contexts, &matrices)?)
    }

    pub fn from_table(table: &PreferenceTable) -> Self {
        let contexts = table.contexts().ids().to_vec();
        let p = contexts
            .iter()
            .enumerate()
            .map(|(x, id)| {
                let m = table.matrix(x);
                (id.clone(), m.chunks(table.n_actions()).map(<[f64]>::to_vec).collect())
            })
            .collect();
        Self {
            actions: table.actions().ids().to_vec(),
            contexts,
            rho: Some(table.contexts().weights().to_vec()),
            p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyJson {
    pub actions: Vec<String>,
    #[serde(default = "default_contexts")]
    pub contexts: Vec<String>,
    pub probs: BTreeMap<String, Vec<f64>>,
}

impl PolicyJson {
    /// Reads the policy against a fixed action and context order.
    pub fn to_policy(&self, actions: &ActionSpace, contexts: &ContextSet) -> Result<TabularPolicy> {
        if self.actions != actions.ids() {
            return Err(LabError::usage("policy actions do not match"));
        }
        if self.contexts != contexts.ids() {
            return Err(LabError::usage("policy contexts do not match"));
        }
        let rows = per_context("policy", &self.contexts, &self.probs)?;
        Ok(TabularPolicy::from_rows(&rows)?)
    }

    pub fn from_policy(actions: &ActionSpace, contexts: &ContextSet, pi: &TabularPolicy) -> Self {
        Self {
            actions: actions.ids().to_vec(),
            contexts: contexts.ids().to_vec(),
            probs: contexts
                .ids()
                .iter()
                .enumerate()
                .map(|(x, id)| (id.clone(), pi.row(x).to_vec()))
                .collect(),
        }
    }
}

/// A record field given either as an identifier or as an index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IdOrIndex {
    Index(usize),
    Id(String),
}

impl IdOrIndex {
    fn resolve(&self, what: &str, ids: &[String]) -> Result<usize> {
        match self {
            Self::Index(i) if *i < ids.len() => Ok(*i),
            Self::Index(i) => Err(LabError::usage(format!("{what} index {i} out of range"))),
            Self::Id(id) => ids
                .iter()
                .position(|s| s == id)
                .ok_or_else(|| LabError::usage(format!("unknown {what} '{id}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetJson {
    pub actions: Vec<String>,
    #[serde(default = "default_contexts")]
    pub contexts: Vec<String>,
    pub records: Vec<(IdOrIndex, IdOrIndex, IdOrIndex)>,
}

impl DatasetJson {
    pub fn to_dataset(&self) -> Result<(ActionSpace, ContextSet, PreferenceDataset)> {
        let actions = ActionSpace::new(self.actions.iter().cloned())?;
        let contexts = ContextSet::uniform(self.contexts.iter().cloned())?;
        let records = self
            .records
            .iter()
            .map(|(x, w, l)| {
                Ok(Record::new(
                    x.resolve("context", &self.contexts)?,
                    w.resolve("action", &self.actions)?,
                    l.resolve("action", &self.actions)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let data = PreferenceDataset::new(contexts.len(), actions.len(), records)?;
        Ok((actions, contexts, data))
    }

    pub fn from_dataset(actions: &ActionSpace, contexts: &ContextSet, data: &PreferenceDataset) -> Self {
        let id = |ids: &[String], i: usize| IdOrIndex::Id(ids[i].clone());
        Self {
            actions: actions.ids().to_vec(),
            contexts: contexts.ids().to_vec(),
            records: data
                .records()
                .iter()
                .map(|r| {
                    (
                        id(contexts.ids(), r.context),
                        id(actions.ids(), r.winner),
                        id(actions.ids(), r.loser),
                    )
                })
                .collect(),
        }
    }
}

pub type RewardsJson = BTreeMap<String, BTreeMap<String, f64>>;

pub fn rewards_to_json(actions: &ActionSpace, contexts: &ContextSet, rewards: &RewardTable) -> RewardsJson {
    contexts
        .ids()
        .iter()
        .enumerate()
        .map(|(x, c)| {
            let row = actions
                .ids()
                .iter()
                .enumerate()
                .map(|(y, a)| (a.clone(), rewards.get(x, y)))
                .collect();
            (c.clone(), row)
        })
        .collect()
}

pub fn rewards_from_json(actions: &ActionSpace, contexts: &ContextSet, json: &RewardsJson) -> Result<RewardTable> {
    let rows = per_context("rewards", contexts.ids(), json)?;
    let mut table = PerContext::zeros(contexts.len(), actions.len());
    for (x, row) in rows.iter().enumerate() {
        if let Some(extra) = row.keys().find(|k| actions.index_of(k).is_err()) {
            return Err(LabError::usage(format!("rewards: unknown action '{extra}'")));
        }
        for (y, a) in actions.ids().iter().enumerate() {
            let r = row
                .get(a)
                .ok_or_else(|| LabError::usage(format!("rewards: missing action '{a}'")))?;
            table.set(x, y, *r);
        }
    }
    Ok(RewardTable::new(table)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| LabError::Input {
        path: path.into(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| LabError::Input {
        path: path.into(),
        message: format!("malformed JSON: {e}"),
    })
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("lab types serialise infallibly")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamJson {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// Sidecar written next to a learning-curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfigJson {
    pub loss: String,
    pub dataset: String,
    pub tau: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub record_every: usize,
    pub adam: AdamJson,
}

impl TrainConfigJson {
    pub fn new(loss: &str, dataset: &str, cfg: &TrainConfig) -> Self {
        Self {
            loss: loss.into(),
            dataset: dataset.into(),
            tau: cfg.tau,
            learning_rate: cfg.learning_rate,
            steps: cfg.steps,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
            record_every: cfg.record_every,
            adam: AdamJson {
                beta1: cfg.adam.beta1,
                beta2: cfg.adam.beta2,
                epsilon: cfg.adam.epsilon,
            },
        }
    }
}

/// Full record of an experiment sweep and the files it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestJson {
    pub scenario: String,
    pub method: String,
    pub tau_grid: Vec<f64>,
    pub n_seeds: usize,
    pub base_seed: u64,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub record_every: usize,
    pub adam: AdamJson,
    pub files: Vec<String>,
}

impl ManifestJson {
    pub fn new(spec: &ExperimentSpec, files: Vec<String>) -> Self {
        let t = &spec.train;
        Self {
            scenario: spec.scenario.name().into(),
            method: spec.method.name().into(),
            tau_grid: spec.tau_grid.clone(),
            n_seeds: spec.n_seeds,
            base_seed: spec.base_seed,
            learning_rate: t.learning_rate,
            steps: t.steps,
            batch_size: t.batch_size,
            record_every: t.record_every,
            adam: TrainConfigJson::new("", "", t).adam,
            files,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    pub context: String,
    pub action: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub tau: f64,
    pub step: usize,
    pub action: String,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_seeds: usize,
}

/// One row per recorded step, context and action.
pub fn write_learning_curve<W: Write>(
    out: W,
    curve: &LearningCurve,
    actions: &ActionSpace,
    contexts: &ContextSet,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &curve.points {
        for (x, c) in contexts.ids().iter().enumerate() {
            for (y, a) in actions.ids().iter().enumerate() {
                w.serialize(CurveRow {
                    step: p.step,
                    context: c.clone(),
                    action: a.clone(),
                    probability: p.policy.prob(x, y),
                })?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_aggregate<W: Write>(out: W, curve: &AggregateCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (k, &step) in curve.steps.iter().enumerate() {
        for (a, action) in curve.actions.iter().enumerate() {
            let mean = curve.mean[k][a];
            let hw = curve.half_width[k][a];
            w.serialize(AggregateRow {
                tau: curve.tau,
                step,
                action: action.clone(),
                mean,
                ci_lo: mean - hw,
                ci_hi: mean + hw,
                n_seeds: curve.n_seeds,
            })?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_rows<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}
