//! Action and context spaces.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::PROB_TOLERANCE;

/// Ordered, finite set of action identifiers. Every matrix and vector in the
/// crate indexes actions by their position here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    ids: Vec<String>,
}

impl ActionSpace {
    pub fn new<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ids = unique_ids("action", ids)?;
        if ids.len() < 2 {
            return Err(Error::param(format!(
                "an action space needs at least 2 actions, got {}",
                ids.len()
            )));
        }
        Ok(Self { ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.ids.iter().position(|a| a == id).ok_or(Error::UnknownId {
            kind: "action",
            id: id.to_owned(),
        })
    }
}

/// Ordered contexts together with their sampling distribution `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet {
    ids: Vec<String>,
    weights: Vec<f64>,
}

impl ContextSet {
    pub fn new<I, S>(ids: I, weights: Vec<f64>) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ids = unique_ids("context", ids)?;
        if ids.is_empty() {
            return Err(Error::param("a context set needs at least one context"));
        }
        if weights.len() != ids.len() {
            return Err(Error::Dimension {
                what: "context weights",
                expected: ids.len(),
                found: weights.len(),
            });
        }
        check_distribution("context weights", &weights)?;
        Ok(Self { ids, weights })
    }

    /// Equal weight on every context.
    pub fn uniform<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ids = unique_ids("context", ids)?;
        let n = ids.len().max(1);
        let weights = alloc::vec![1.0 / n as f64; ids.len()];
        Self::new(ids, weights)
    }

    /// The plain bandit setting: one context `x0` with weight one.
    pub fn single() -> Self {
        Self {
            ids: alloc::vec!["x0".to_owned()],
            weights: alloc::vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.ids.iter().position(|c| c == id).ok_or(Error::UnknownId {
            kind: "context",
            id: id.to_owned(),
        })
    }
}

fn unique_ids<I, S>(kind: &'static str, ids: I) -> Result<Vec<String>>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
    for (i, id) in ids.iter().enumerate() {
        if id.is_empty() {
            return Err(Error::param(format!("{kind} identifier at position {i} is empty")));
        }
        if ids[..i].contains(id) {
            return Err(Error::param(format!("duplicate {kind} identifier `{id}`")));
        }
    }
    Ok(ids)
}

/// Rejects vectors with negative or non-finite entries, or whose sum is not
/// one within [`PROB_TOLERANCE`].
pub(crate) fn check_distribution(what: &'static str, probs: &[f64]) -> Result<()> {
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidProbability {
            what,
            detail: format!("entry {p} is not a non-negative finite number"),
        });
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::InvalidProbability {
            what,
            detail: format!("entries sum to {sum}, expected 1"),
        });
    }
    Ok(())
}
