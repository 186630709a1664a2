use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::tensor::Tensor;
use crate::error::{invalid, Result};
use crate::rng::Rng;

/// Ordered collection of named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.entries.push((name.into(), tensor));
        self.entries.len() - 1
    }

    pub fn get(&self, index: usize) -> &Tensor {
        &self.entries[index].1
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].1
    }

    pub fn name(&self, index: usize) -> &str {
        &self.entries[index].0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn by_name(&self, name: &str) -> Result<&Tensor> {
        self.index_of(name)
            .map(|i| self.get(i))
            .ok_or_else(|| invalid(format!("missing tensor `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Overwrites values of every tensor in `other` whose name exists here.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, t) in &mut self.entries {
            let src = other.by_name(name)?;
            if src.shape() != t.shape() {
                return Err(invalid(format!(
                    "tensor `{name}` has shape {:?} in checkpoint, model expects {:?}",
                    src.shape(),
                    t.shape()
                )));
            }
            *t = src.clone();
        }
        Ok(())
    }
}

/// He-normal initialisation for a weight tensor with the given fan-in.
pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| normal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).expect("consistent shape")
}

/// Small uniform bias initialisation in `[-k, k]`.
pub fn uniform_bias(len: usize, k: f64, rng: &mut Rng) -> Tensor {
    Tensor::vector((0..len).map(|_| rng.random_range(-k..=k)).collect())
}
