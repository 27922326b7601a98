use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to one trainable tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Arena of named parameters. Ids are stable, names unique, iteration order
/// is insertion order, which checkpointing and Adam both rely on.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: String, value: Tensor) -> ParamId {
        debug_assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let grad = Tensor::zeros(value.shape().to_vec());
        self.params.push(Parameter { name, value, grad });
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform matrix `[rows x cols]`: U(-a, a), a = sqrt(6/(fan_in+fan_out)).
    pub fn matrix_glorot<R: Rng>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> ParamId {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
        self.push(
            String::from(name),
            Tensor::new(alloc::vec![rows, cols], data).expect("glorot shape"),
        )
    }

    /// Glorot-uniform projection vector (fan_out 1).
    pub fn vector_glorot<R: Rng>(&mut self, name: &str, len: usize, rng: &mut R) -> ParamId {
        let a = (6.0 / (len + 1) as f64).sqrt();
        let data: Vec<f64> = (0..len).map(|_| rng.random_range(-a..a)).collect();
        self.push(String::from(name), Tensor::vector(data))
    }

    /// Zero-initialised vector (biases).
    pub fn zeros(&mut self, name: &str, len: usize) -> ParamId {
        self.push(String::from(name), Tensor::zeros(alloc::vec![len]))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Load values by name; shapes must match the existing layout.
    pub fn load_values(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))?;
        if p.value.len() != values.len() {
            return Err(Error::Config(format!(
                "parameter {name:?} has {} values, checkpoint carries {}",
                p.value.len(),
                values.len()
            )));
        }
        p.value.data_mut().copy_from_slice(values);
        Ok(())
    }

    // Flat views across all parameters, used by finite differences and the
    // enumeration oracles.

    pub fn flat_len(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn get_flat(&self, mut i: usize) -> f64 {
        for p in &self.params {
            if i < p.value.len() {
                return p.value.data()[i];
            }
            i -= p.value.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut i: usize, x: f64) {
        for p in &mut self.params {
            if i < p.value.len() {
                p.value.data_mut()[i] = x;
                return;
            }
            i -= p.value.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for p in &self.params {
            out.extend_from_slice(p.grad.data());
        }
        out
    }
}
