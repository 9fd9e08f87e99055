//! Parameter holders for the convolution layers used across the networks.

use rand::Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{uniform_tensor, Bound, ParamId, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Uniform in `±1/sqrt(fan_in)` for weights and biases.
    FanIn,
    Zeros,
}

fn init_bound(init: Init, fan_in: usize) -> f64 {
    match init {
        Init::FanIn => 1.0 / (fan_in as f64).sqrt(),
        Init::Zeros => 0.0,
    }
}

/// Pointwise `Cin -> Cout` map applied over the last axis.
#[derive(Debug, Clone, Copy)]
pub struct Conv1x1 {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
}

impl Conv1x1 {
    pub fn new<R: Rng>(params: &mut ParamSet, name: &str, cin: usize, cout: usize, init: Init, rng: &mut R) -> Self {
        let bound = init_bound(init, cin);
        let weight = params.add(format!("{name}.weight"), uniform_tensor(rng, &[cin, cout], bound));
        let bias = params.add(format!("{name}.bias"), uniform_tensor(rng, &[cout], bound));
        Self { weight, bias, cin, cout }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv1x1(x, p[self.weight], p[self.bias])
    }
}

/// Zero-padded 3x3 convolution.
#[derive(Debug, Clone, Copy)]
pub struct Conv3x3 {
    pub weight: ParamId,
    pub bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
}

impl Conv3x3 {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let bound = init_bound(init, 9 * cin);
        let weight = params.add(format!("{name}.weight"), uniform_tensor(rng, &[3, 3, cin, cout], bound));
        let bias = params.add(format!("{name}.bias"), uniform_tensor(rng, &[cout], bound));
        Self { weight, bias, cin, cout, stride }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.conv3x3(x, p[self.weight], p[self.bias], self.stride)
    }
}
