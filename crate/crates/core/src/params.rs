use rand::Rng;

use crate::autodiff::{ParamId, Tape, Tensor};
use crate::error::{Error, Result};

/// Half-width of the uniform initialisation interval for every parameter
/// that is not a pretrained word vector.
pub const INIT_EPSILON: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered collection of named learnable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<NamedTensor>,
}

pub fn uniform<R: Rng + ?Sized>(n: usize, eps: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-eps..=eps)).collect()
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.entries.push(NamedTensor {
            name: name.into(),
            tensor: tensor.with_grad(),
        });
        ParamId(self.entries.len() - 1)
    }

    /// Adds a tensor drawn from `U(-eps, eps)`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        eps: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        let n = shape.iter().product();
        let t = Tensor::new(shape, uniform(n, eps, rng))?;
        Ok(self.add(name, t))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[NamedTensor] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [NamedTensor] {
        &mut self.entries
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    pub fn bind(&self, tape: &mut Tape, id: ParamId) -> crate::autodiff::Var {
        tape.param(self.get(id), id)
    }

    pub fn zero_grads(&mut self) {
        self.entries.iter_mut().for_each(|e| e.tensor.zero_grad());
    }

    /// Adds every parameter gradient recorded on `tape`, scaled by `weight`.
    pub fn accumulate_grads(&mut self, tape: &Tape, weight: f64) {
        for (id, row, g) in tape.param_grads() {
            let t = &mut self.entries[id.0].tensor;
            if !t.requires_grad() {
                continue;
            }
            let offset = row.map_or(0, |r| r * t.row_len());
            for (dst, src) in t.grad_mut()[offset..offset + g.len()].iter_mut().zip(g) {
                *dst += weight * src;
            }
        }
    }

    /// Global L2 norm over all gradients.
    pub fn grad_norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.tensor.grad().iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn check_finite_grads(&self) -> Result<()> {
        match self
            .entries
            .iter()
            .find(|e| e.tensor.grad().iter().any(|g| !g.is_finite()))
        {
            Some(e) => Err(Error::NonFiniteGradient(e.name.clone())),
            None => Ok(()),
        }
    }
}
