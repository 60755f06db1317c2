use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet {
    tensors: BTreeMap<String, Matrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Matrix> {
        self.get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Matrix)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Matrix)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Matrix::len).sum()
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Matrix::zeros(v.rows(), v.cols())))
                .collect(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors
            .values()
            .map(|m| m.as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Records every tensor on `tape` as a trainable leaf.
    pub fn register(&self, tape: &mut Tape) -> Result<ParamVars> {
        let mut vars = BTreeMap::new();
        for (name, value) in &self.tensors {
            vars.insert(name.clone(), tape.param(value.clone())?);
        }
        Ok(ParamVars { vars })
    }

    /// Gradients for every registered tensor; unreached parameters get zeros.
    pub fn collect_grads(&self, vars: &ParamVars, grads: &Gradients) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, value) in &self.tensors {
            let g = vars
                .vars
                .get(name)
                .and_then(|&v| grads.get(v))
                .cloned()
                .unwrap_or_else(|| Matrix::zeros(value.rows(), value.cols()));
            out.insert(name.clone(), g);
        }
        out
    }
}

/// Tape handles of a registered [`ParamSet`].
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("parameter {name} not registered")))
    }
}
