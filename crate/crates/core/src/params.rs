use std::ops::Index;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{NdrError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named learnable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, mut tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        tensor.requires_grad = true;
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of learnable scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    /// Replaces the value of a parameter; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self.find(name).ok_or_else(|| NdrError::Invalid(format!("unknown parameter `{name}`")))?;
        let slot = &mut self.tensors[id.0];
        if slot.shape() != value.shape() {
            return Err(NdrError::shape("set_param", format!("`{name}`: {:?} vs {:?}", slot.shape(), value.shape())));
        }
        *slot = value.with_grad();
        Ok(())
    }

    /// Puts every parameter on `g` as a gradient-tracking leaf.
    pub fn bind(&self, g: &mut Graph) -> Result<Bound> {
        self.tensors.iter().map(|t| g.param(t)).collect::<Result<_>>().map(Bound)
    }

    /// Same as [`bind`](Self::bind) but as constants, for inference.
    pub fn bind_frozen(&self, g: &mut Graph) -> Result<Bound> {
        self.tensors.iter().map(|t| g.constant(t)).collect::<Result<_>>().map(Bound)
    }

    /// Gradients of every parameter after `g.backward`, zero where unreached.
    pub fn collect_grads(&self, g: &Graph, bound: &Bound) -> Vec<Vec<f64>> {
        self.tensors
            .iter()
            .zip(&bound.0)
            .map(|(t, &v)| g.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
            .collect()
    }
}

/// Graph handles for a bound [`ParamSet`], indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    /// Wraps handles created in [`ParamSet`] order, e.g. by a caller that
    /// registered the parameters on the graph itself.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound(vars)
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.0[id.0]
    }
}

pub fn uniform_tensor<R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = if bound > 0.0 {
        let dist = Uniform::new_inclusive(-bound, bound).expect("positive bound");
        (0..n).map(|_| dist.sample(rng)).collect()
    } else {
        vec![0.0; n]
    };
    Tensor::new(shape, data).expect("shape matches")
}

pub fn normal_tensor<R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("shape matches")
}
