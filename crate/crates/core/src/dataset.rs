//! Preference datasets and Bernoulli sampling from a preference table.

use alloc::format;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::TabularPolicy;
use crate::preference::PreferenceTable;
use crate::rng::rng_from_seed;

/// One rated comparison: in `context`, `winner` was preferred to `loser`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Record {
    pub context: usize,
    pub winner: usize,
    pub loser: usize,
}

impl Record {
    pub fn new(context: usize, winner: usize, loser: usize) -> Self {
        Self { context, winner, loser }
    }
}

/// Ordered list of records over fixed context and action counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceDataset {
    n_contexts: usize,
    n_actions: usize,
    records: Vec<Record>,
}

impl PreferenceDataset {
    pub fn new(n_contexts: usize, n_actions: usize, records: Vec<Record>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
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
            if r.winner == r.loser {
                return Err(Error::param(format!(
                    "record {i} compares action {} with itself",
                    r.winner
                )));
            }
        }
        Ok(Self {
            n_contexts,
            n_actions,
            records,
        })
    }

    /// Single-context dataset from `(winner, loser)` pairs.
    pub fn bandit(n_actions: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let records = pairs.iter().map(|&(w, l)| Record::new(0, w, l)).collect();
        Self::new(1, n_actions, records)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Whether `action` appears (as winner or loser) in `context`.
    pub fn observes(&self, context: usize, action: usize) -> bool {
        self.records
            .iter()
            .any(|r| r.context == context && (r.winner == action || r.loser == action))
    }
}

/// Draws `n` records: `x ∼ ρ`, then `y, y' ∼ μ(·|x)` independently until they
/// differ, then `y` wins with probability `p*(y ≻ y' | x)`.
///
/// Contexts with positive weight need at least two actions in the support of
/// `μ`, otherwise no distinct pair can be drawn.
pub fn sample_dataset(table: &PreferenceTable, mu: &TabularPolicy, n: usize, seed: u64) -> Result<PreferenceDataset> {
    if n == 0 {
        return Err(Error::param("sample size must be at least 1"));
    }
    table.check_policy("behaviour policy", mu)?;
    let contexts = table.contexts();
    for (x, &w) in contexts.weights().iter().enumerate() {
        let support = mu.row(x).iter().filter(|&&p| p > 0.0).count();
        if w > 0.0 && support < 2 {
            return Err(Error::param(format!(
                "behaviour policy has fewer than two actions in its support in context {x}"
            )));
        }
    }
    let context_dist = WeightedIndex::new(contexts.weights()).map_err(|e| Error::param(format!("{e}")))?;
    let action_dists = (0..contexts.len())
        .map(|x| WeightedIndex::new(mu.row(x)).ok())
        .collect::<Vec<_>>();

    let mut rng = rng_from_seed(seed);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let x = context_dist.sample(&mut rng);
        let dist = action_dists[x].as_ref().expect("positive-weight context has valid support");
        let (y, y2) = loop {
            let y = dist.sample(&mut rng);
            let y2 = dist.sample(&mut rng);
            if y != y2 {
                break (y, y2);
            }
        };
        let u: f64 = rng.random();
        let record = if u < table.get(x, y, y2) {
            Record::new(x, y, y2)
        } else {
            Record::new(x, y2, y)
        };
        records.push(record);
    }
    PreferenceDataset::new(contexts.len(), table.n_actions(), records)
}
