use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Anything Adam can update: an ordered list of tensors.
pub trait Parameters {
    fn tensors(&self) -> &[Tensor];
    fn tensors_mut(&mut self) -> &mut [Tensor];
}

impl Parameters for ParamBundle {
    fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }
}

impl Parameters for Tensor {
    fn tensors(&self) -> &[Tensor] {
        std::slice::from_ref(self)
    }

    fn tensors_mut(&mut self) -> &mut [Tensor] {
        std::slice::from_mut(self)
    }
}

/// Named tensors in a fixed order.
///
/// Used for every trainable set in the pipeline (relation-meta learner,
/// adapter, entity table) and for their gradients, which always share the
/// layout of the bundle they differentiate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamBundle {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::Shape(format!("duplicate parameter name `{name}`")));
        }
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn with(mut self, name: impl Into<String>, tensor: Tensor) -> Result<Self> {
        self.push(name, tensor)?;
        Ok(self)
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

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        ParamBundle {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    /// Total scalar count across all tensors.
    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn same_layout(&self, other: &ParamBundle) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub fn check_layout(&self, other: &ParamBundle, what: &str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!("{what}: parameter layouts differ")))
        }
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &ParamBundle) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            super::tensor::axpy(alpha, b.data(), a.data_mut());
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn flat_get(&self, mut index: usize) -> f64 {
        for t in &self.tensors {
            if index < t.len() {
                return t.data()[index];
            }
            index -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_set(&mut self, mut index: usize, value: f64) {
        for t in &mut self.tensors {
            if index < t.len() {
                t.data_mut()[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("flat index out of range");
    }

    /// All values, in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }
}

/// Glorot/Xavier uniform matrix: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::matrix(rows, cols, data).expect("sized by construction")
}
