//! Degradation injection: `F_out = (F_cp * U_cp + U_cp) + F`.

use rand::Rng;

use crate::error::{NdrError, Result};
use crate::graph::{Graph, Var};
use crate::params::{Bound, ParamSet};

use super::cp::{cp_conv, CpProjectors, CpWeights};

/// The affine combination alone, given the two projected maps.
pub fn affine_inject(g: &mut Graph, features: Var, f_cp: Var, u_cp: Var) -> Result<Var> {
    let prod = g.mul(f_cp, u_cp)?;
    let shifted = g.add(prod, u_cp)?;
    g.add(shifted, features)
}

pub fn di_inject(g: &mut Graph, features: Var, u: Var, f_weights: &CpWeights, u_weights: &CpWeights) -> Result<Var> {
    if g.shape(features) != g.shape(u) {
        return Err(NdrError::shape("di_inject", format!("features {:?} vs U {:?}", g.shape(features), g.shape(u))));
    }
    let u_cp = cp_conv(g, u, u_weights)?;
    let f_cp = cp_conv(g, features, f_weights)?;
    affine_inject(g, features, f_cp, u_cp)
}

/// Separate CP projectors for the image features and the degradation map.
#[derive(Debug, Clone, Copy)]
pub struct DegradationInjection {
    pub feature_proj: CpProjectors,
    pub degradation_proj: CpProjectors,
}

impl DegradationInjection {
    pub fn new<R: Rng>(params: &mut ParamSet, name: &str, channels: usize, rank: usize, rng: &mut R) -> Self {
        Self {
            feature_proj: CpProjectors::new(params, &format!("{name}.cp_f"), channels, rank, rng),
            degradation_proj: CpProjectors::new(params, &format!("{name}.cp_u"), channels, rank, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, features: Var, u: Var) -> Result<Var> {
        di_inject(g, features, u, &self.feature_proj.weights(p), &self.degradation_proj.weights(p))
    }
}
