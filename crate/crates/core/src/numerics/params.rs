//! Named parameter storage and the JSON checkpoint format.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::Mat;
use crate::error::{contract, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
    grads: Vec<Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(contract(format!("duplicate parameter name {name:?}")));
        }
        self.names.push(name);
        self.grads.push(Mat::zeros(value.dim()));
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Mat {
        &self.grads[id.0]
    }

    pub fn add_grad(&mut self, id: ParamId, g: &Mat) {
        self.grads[id.0] += g;
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for g in &mut self.grads {
            *g *= factor;
        }
    }

    pub fn snapshot(&self) -> Vec<Mat> {
        self.values.clone()
    }

    pub fn restore(&mut self, snapshot: &[Mat]) -> Result<()> {
        if snapshot.len() != self.values.len()
            || snapshot.iter().zip(&self.values).any(|(a, b)| a.dim() != b.dim())
        {
            return Err(contract("snapshot does not match parameter layout"));
        }
        self.values.clone_from_slice(snapshot);
        Ok(())
    }

    pub fn total_size(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let params = self
            .names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| {
                let (r, c) = v.dim();
                (
                    n.clone(),
                    ParamEntry {
                        shape: [r, c],
                        data: v.iter().copied().collect(),
                    },
                )
            })
            .collect();
        Checkpoint(params)
    }

    /// Overwrites values from a checkpoint. Every stored parameter must be
    /// present with a matching shape.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let entry = ckpt
                .0
                .get(name)
                .ok_or_else(|| contract(format!("checkpoint lacks parameter {name:?}")))?;
            let [r, c] = entry.shape;
            if (r, c) != self.values[i].dim() || entry.data.len() != r * c {
                return Err(contract(format!("checkpoint shape mismatch for {name:?}")));
            }
            self.values[i] = Mat::from_shape_vec((r, c), entry.data.clone())
                .map_err(|e| contract(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Parameter name → shape and row-major data. Floats are written in their
/// shortest round-trip decimal form, so save/load is bit-exact.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Checkpoint(pub BTreeMap<String, ParamEntry>);

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Uniform in ±√(6 / (fan_in + fan_out)).
pub fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Mat {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Mat::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit))
}
