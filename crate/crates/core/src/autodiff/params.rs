use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Optimizer group: weight decay applies to `Weights` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Weights,
    Tau,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub group: ParamGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: BTreeMap<String, usize>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredParam {
    shape: [usize; 2],
    group: ParamGroup,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct StoredParams {
    version: u32,
    params: BTreeMap<String, StoredParam>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor, group: ParamGroup) -> ParamId {
        assert!(!self.by_name.contains_key(name), "duplicate parameter {name}");
        let id = self.params.len();
        let (r, c) = value.shape();
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            grad: Tensor::zeros(r, c),
            group,
        });
        self.by_name.insert(name.to_string(), id);
        ParamId(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub(crate) fn to_stored(&self) -> StoredParams {
        StoredParams {
            version: CHECKPOINT_VERSION,
            params: self
                .params
                .iter()
                .map(|p| {
                    let (r, c) = p.value.shape();
                    (
                        p.name.clone(),
                        StoredParam {
                            shape: [r, c],
                            group: p.group,
                            values: p.value.data().to_vec(),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Copies values from `stored` into this store. Every parameter must be
    /// present with the same shape and group, and no extra entries allowed.
    pub(crate) fn load_stored(&mut self, stored: &StoredParams) -> Result<()> {
        if stored.version != CHECKPOINT_VERSION {
            return Err(Error::Mismatch(format!(
                "checkpoint version {} (expected {CHECKPOINT_VERSION})",
                stored.version
            )));
        }
        if stored.params.len() != self.params.len() {
            return Err(Error::Mismatch(format!(
                "checkpoint has {} parameters, model has {}",
                stored.params.len(),
                self.params.len()
            )));
        }
        for p in &mut self.params {
            let s = stored
                .params
                .get(&p.name)
                .ok_or_else(|| Error::Mismatch(format!("checkpoint lacks parameter {}", p.name)))?;
            if s.shape != [p.value.rows(), p.value.cols()] || s.group != p.group {
                return Err(Error::Mismatch(format!(
                    "parameter {}: checkpoint shape {:?}, model shape {:?}",
                    p.name,
                    s.shape,
                    p.value.shape()
                )));
            }
            p.value = Tensor::from_vec(s.shape[0], s.shape[1], s.values.clone())?;
        }
        Ok(())
    }

    /// Versioned JSON map `name -> {shape, group, values}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_stored()).expect("params serialize")
    }

    pub fn load_json(&mut self, s: &str) -> Result<()> {
        let stored: StoredParams = serde_json::from_str(s)?;
        self.load_stored(&stored)
    }
}
