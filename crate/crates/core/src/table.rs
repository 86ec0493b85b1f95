use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense `[context][action]` table of reals.
///
/// Backs policies, logits, rewards and gradients so they all share one shape
/// check and one iteration order.
#[derive(Debug, Clone, PartialEq)]
pub struct PerContext {
    n_contexts: usize,
    n_actions: usize,
    data: Vec<f64>,
}

impl PerContext {
    pub fn zeros(n_contexts: usize, n_actions: usize) -> Self {
        Self::filled(n_contexts, n_actions, 0.0)
    }

    pub fn filled(n_contexts: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_contexts,
            n_actions,
            data: vec![value; n_contexts * n_actions],
        }
    }

    /// Builds a table from rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_actions = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_actions);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n_actions {
                return Err(Error::Dimension {
                    what: "row length",
                    expected: n_actions,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            n_contexts: rows.len(),
            n_actions,
            data,
        })
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_contexts, self.n_actions)
    }

    pub fn row(&self, context: usize) -> &[f64] {
        let start = context * self.n_actions;
        &self.data[start..start + self.n_actions]
    }

    pub fn row_mut(&mut self, context: usize) -> &mut [f64] {
        let start = context * self.n_actions;
        &mut self.data[start..start + self.n_actions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.n_actions.max(1))
    }

    pub fn get(&self, context: usize, action: usize) -> f64 {
        self.data[context * self.n_actions + action]
    }

    pub fn set(&mut self, context: usize, action: usize, value: f64) {
        self.data[context * self.n_actions + action] = value;
    }

    pub fn add(&mut self, context: usize, action: usize, value: f64) {
        self.data[context * self.n_actions + action] += value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    pub(crate) fn check_shape(&self, what: &'static str, n_contexts: usize, n_actions: usize) -> Result<()> {
        if self.n_contexts != n_contexts {
            return Err(Error::Dimension {
                what,
                expected: n_contexts,
                found: self.n_contexts,
            });
        }
        if self.n_actions != n_actions {
            return Err(Error::Dimension {
                what,
                expected: n_actions,
                found: self.n_actions,
            });
        }
        Ok(())
    }
}
