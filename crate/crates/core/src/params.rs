//! Named parameter vectors shared by every backbone.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// An ordered list of named, flat parameter vectors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet {
    entries: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its position.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.entries.push(Param {
            name: name.into(),
            shape,
            values,
        });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|p| p.values.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn values(&self, idx: usize) -> &[f64] {
        &self.entries[idx].values
    }

    pub fn values_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.entries[idx].values
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.iter().find(|p| p.name == name)
    }

    /// Overwrites a parameter by name, keeping its shape.
    pub fn set(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let p = self
            .entries
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
        if p.values.len() != values.len() {
            return Err(Error::Shape(format!(
                "parameter `{name}` has {} values, got {}",
                p.values.len(),
                values.len()
            )));
        }
        p.values.copy_from_slice(values);
        Ok(())
    }

    /// Registers every parameter as a graph leaf, in order.
    pub fn attach(&self, graph: &mut Graph) -> Vec<NodeId> {
        self.entries
            .iter()
            .map(|p| graph.leaf(p.values.clone()))
            .collect()
    }

    /// Checks that `other` has the same names and shapes, then copies its
    /// values in.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, checkpoint has {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (mine, theirs) in self.entries.iter_mut().zip(&other.entries) {
            if mine.name != theirs.name || mine.shape != theirs.shape {
                return Err(Error::Shape(format!(
                    "parameter `{}` {:?} does not match checkpoint `{}` {:?}",
                    mine.name, mine.shape, theirs.name, theirs.shape
                )));
            }
            if theirs.values.len() != mine.values.len()
                || theirs.values.iter().any(|v| !v.is_finite())
            {
                return Err(Error::Input(format!(
                    "parameter `{}` has invalid values",
                    theirs.name
                )));
            }
            mine.values.copy_from_slice(&theirs.values);
        }
        Ok(())
    }
}
