//! Column-major categorical datasets used for learning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    names: Vec<String>,
    states: Vec<Vec<String>>,
    columns: Vec<Vec<u8>>,
}

impl Dataset {
    /// `columns[i][row]` is the state index of variable `i`; every index must be below
    /// `states[i].len()`.
    pub fn new(names: Vec<String>, states: Vec<Vec<String>>, columns: Vec<Vec<u8>>) -> Result<Self> {
        if names.len() != states.len() || names.len() != columns.len() {
            return Err(Error::Invalid("names, states and columns differ in length".into()));
        }
        let rows = columns.first().map_or(0, Vec::len);
        for (i, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::Invalid(format!("column `{}` has a different length", names[i])));
            }
            if states[i].is_empty() || states[i].len() > u8::MAX as usize {
                return Err(Error::Invalid(format!("column `{}` needs 1..=255 states", names[i])));
            }
            if let Some(v) = col.iter().find(|&&v| v as usize >= states[i].len()) {
                return Err(Error::Invalid(format!(
                    "column `{}` holds state index {v} beyond its {} states",
                    names[i],
                    states[i].len()
                )));
            }
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Invalid(format!("duplicate column `{n}`")));
            }
        }
        Ok(Self {
            names,
            states,
            columns,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn states(&self, var: usize) -> &[String] {
        &self.states[var]
    }

    pub fn all_states(&self) -> &[Vec<String>] {
        &self.states
    }

    pub fn cardinality(&self, var: usize) -> usize {
        self.states[var].len()
    }

    pub fn column(&self, var: usize) -> &[u8] {
        &self.columns[var]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    /// Dataset made of the given rows (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            states: self.states.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
        }
    }

    /// Nonparametric bootstrap: `n_rows` rows drawn uniformly with replacement.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Dataset {
        let n = self.n_rows();
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        self.select_rows(&rows)
    }

    /// Subset of variables, in the given order.
    pub fn select_columns(&self, vars: &[usize]) -> Dataset {
        Dataset {
            names: vars.iter().map(|&v| self.names[v].clone()).collect(),
            states: vars.iter().map(|&v| self.states[v].clone()).collect(),
            columns: vars.iter().map(|&v| self.columns[v].clone()).collect(),
        }
    }
}
