use rand::Rng;

use crate::params::{normal_tensor, ParamId, ParamSet};

/// Standard deviation of the random dictionary initialization.
pub const INIT_STD: f64 = 0.02;

/// Learnable `M x N` degradation dictionary: `N` prototype columns of
/// dimension `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NdrDictionary {
    pub id: ParamId,
    pub m: usize,
    pub n: usize,
}

impl NdrDictionary {
    pub const PARAM_NAME: &'static str = "ndr.dictionary";

    pub fn new<R: Rng>(params: &mut ParamSet, m: usize, n: usize, rng: &mut R) -> Self {
        let id = params.add(Self::PARAM_NAME, normal_tensor(rng, &[m, n], INIT_STD));
        Self { id, m, n }
    }

    pub fn param_count(&self) -> usize {
        self.m * self.n
    }
}
