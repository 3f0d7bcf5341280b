//! Dense f64 arrays, a reverse-mode tape over a fixed operation set, named
//! parameter storage, AdamW, and the binary parameter checkpoint.
//!
//! All learnable computation in the crate is expressed as tape operations on
//! [`Var`] handles. Parameters live in a [`ParamStore`] as [`ValueGrad`]s; a
//! forward pass pulls them onto a fresh [`Tape`], and [`Gradients`] from
//! [`Tape::backward`] are accumulated back into the store.

mod checkpoint;
mod gradcheck;
mod nn;
mod optim;
mod sparse;
mod tape;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, param_grad_check, GradCheckError, GradCheckReport};
pub use optim::{adamw_step, lr_schedule, LrSchedule, OptimState, StepReport};
pub use sparse::{KernelMap, RaySegments, RowMap};
pub use tape::{Gradients, Tape, Var};
pub(crate) use tape::sigmoid;

use std::collections::HashMap;

use rand::Rng;

/// Row-major dense array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_slice(data: &[f64]) -> Self {
        Tensor::new(vec![data.len()], data.to_vec())
    }

    /// Gaussian entries with the given standard deviation.
    pub fn randn<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| std * standard_normal(rng)).collect();
        Tensor::new(shape.to_vec(), data)
    }

    pub fn uniform<R: Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor::new(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len(), "bad reshape to {shape:?}");
        self.shape = shape.to_vec();
        self
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; the second variate is discarded to keep streams simple.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// A learnable array and its accumulated gradient. Shapes always agree.
#[derive(Clone, Debug)]
pub struct ValueGrad {
    pub value: Tensor,
    pub grad: Tensor,
}

impl ValueGrad {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        ValueGrad { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    params: Vec<ValueGrad>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Panics on a duplicate name.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter name {name}");
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.params.push(ValueGrad::new(value));
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &ValueGrad {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ValueGrad {
        &mut self.params[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ValueGrad)> {
        self.names.iter().map(String::as_str).zip(self.params.iter())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(ValueGrad::zero_grad);
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Replaces values from `other` for every name present in both stores.
    /// Returns the number of tensors copied.
    pub fn load_values_from(&mut self, other: &ParamStore) -> crate::Result<usize> {
        let mut copied = 0;
        for (name, vg) in other.iter() {
            if let Some(id) = self.id(name) {
                let dst = &mut self.params[id.0];
                if dst.value.shape() != vg.value.shape() {
                    return Err(crate::Error::Shape(format!(
                        "parameter {name}: expected {:?}, checkpoint has {:?}",
                        dst.value.shape(),
                        vg.value.shape()
                    )));
                }
                dst.value = vg.value.clone();
                copied += 1;
            }
        }
        Ok(copied)
    }
}
