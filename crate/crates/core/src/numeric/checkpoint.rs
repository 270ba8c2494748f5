//! Named parameter lists and their JSON container.
//!
//! A checkpoint is an ordered list of `(name, shape, values)` records. Floats
//! are written with shortest round-trip formatting, so save/load is
//! value-exact for every finite `f64`.

use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};

/// Ordered, named collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its index.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor.with_requires_grad(true));
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.clear_grad();
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .filter_map(|t| t.grad())
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_records(&self) -> Vec<ParamRecord> {
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(n, t)| ParamRecord { name: n.clone(), shape: t.shape().to_vec(), values: t.values().to_vec() })
            .collect()
    }

    pub fn from_records(records: Vec<ParamRecord>) -> Result<Self, TensorError> {
        let mut set = Self::new();
        for r in records {
            let t = Tensor::new(r.shape, r.values)?;
            set.push(r.name, t);
        }
        Ok(set)
    }

    /// Replaces values from `records`, which must match names and shapes in order.
    pub fn load_records(&mut self, records: &[ParamRecord]) -> Result<(), TensorError> {
        if records.len() != self.len() {
            return Err(TensorError::Shape(format!(
                "checkpoint has {} parameters, model has {}",
                records.len(),
                self.len()
            )));
        }
        for (i, r) in records.iter().enumerate() {
            if r.name != self.names[i] || r.shape != self.tensors[i].shape() {
                return Err(TensorError::Shape(format!(
                    "checkpoint entry {i} is {} {:?}, expected {} {:?}",
                    r.name,
                    r.shape,
                    self.names[i],
                    self.tensors[i].shape()
                )));
            }
            self.tensors[i] = Tensor::new(r.shape.clone(), r.values.clone())?.with_requires_grad(true);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}
