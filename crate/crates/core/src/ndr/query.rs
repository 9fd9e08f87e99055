//! Degradation query: per-pixel affinities between mapped features and the
//! dictionary, softmax-normalized, then used to re-weight the dictionary
//! columns into an approximated degradation map.

use rand::Rng;

use crate::error::{NdrError, Result};
use crate::graph::{Graph, Var};
use crate::layers::{Conv1x1, Init};
use crate::params::{Bound, ParamSet};

use super::dictionary::NdrDictionary;

/// Output of a query at one scale.
#[derive(Debug, Clone, Copy)]
pub struct ApproxDegradation {
    /// `[H*W, N]` row-stochastic affinity matrix.
    pub affinity: Var,
    /// `[H*W, M]` re-weighted dictionary before the output mapping.
    pub u_prime: Var,
    /// `[H, W, C]` degradation map aligned with the input features.
    pub u: Var,
}

/// Affinity matrix `S = softmax_rows(P D)` where `P` is the flattened
/// `C -> M` pointwise mapping of `features`.
pub fn dq_affinity(g: &mut Graph, features: Var, dict: Var, map_w: Var, map_b: Var) -> Result<Var> {
    let (h, w) = match *g.shape(features) {
        [h, w, _] => (h, w),
        ref s => return Err(NdrError::shape("dq_affinity", format!("features must be [H, W, C], got {s:?}"))),
    };
    let mapped = g.conv1x1(features, map_w, map_b)?;
    let m = *g.shape(mapped).last().expect("rank 3");
    if g.shape(dict).first() != Some(&m) {
        return Err(NdrError::shape(
            "dq_affinity",
            format!("mapped feature dimension {m} vs dictionary {:?}", g.shape(dict)),
        ));
    }
    let p = g.reshape(mapped, &[h * w, m])?;
    let logits = g.matmul(p, dict)?;
    g.softmax_rows(logits)
}

/// `U'_{hw} = sum_n S_{hw,n} D^T_{n,.}`, reshaped to `[H, W, M]` and mapped
/// `M -> C` pointwise. Returns `(U', U)`.
pub fn dq_query(
    g: &mut Graph,
    affinity: Var,
    dict: Var,
    height: usize,
    width: usize,
    out_w: Var,
    out_b: Var,
) -> Result<(Var, Var)> {
    let (rows, n) = match *g.shape(affinity) {
        [r, n] => (r, n),
        ref s => return Err(NdrError::shape("dq_query", format!("affinity must be 2-D, got {s:?}"))),
    };
    if rows != height * width {
        return Err(NdrError::shape("dq_query", format!("{rows} affinity rows for a {height}x{width} map")));
    }
    if g.shape(dict).get(1) != Some(&n) {
        return Err(NdrError::shape("dq_query", format!("{n} affinity columns vs dictionary {:?}", g.shape(dict))));
    }
    let m = g.shape(dict)[0];
    let dt = g.transpose(dict)?;
    let u_prime = g.matmul(affinity, dt)?;
    let spatial = g.reshape(u_prime, &[height, width, m])?;
    let u = g.conv1x1(spatial, out_w, out_b)?;
    Ok((u_prime, u))
}

/// Weights of one query module: the `C -> M` input mapping and the
/// `M -> C` output mapping.
#[derive(Debug, Clone, Copy)]
pub struct DegradationQuery {
    pub map_in: Conv1x1,
    pub map_out: Conv1x1,
}

impl DegradationQuery {
    pub fn new<R: Rng>(params: &mut ParamSet, name: &str, channels: usize, dict: &NdrDictionary, rng: &mut R) -> Self {
        Self {
            map_in: Conv1x1::new(params, &format!("{name}.map_in"), channels, dict.m, Init::FanIn, rng),
            map_out: Conv1x1::new(params, &format!("{name}.map_out"), dict.m, channels, Init::FanIn, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, dict: Var, features: Var) -> Result<ApproxDegradation> {
        let (h, w) = (g.shape(features)[0], g.shape(features)[1]);
        let affinity = dq_affinity(g, features, dict, p[self.map_in.weight], p[self.map_in.bias])?;
        let (u_prime, u) = dq_query(g, affinity, dict, h, w, p[self.map_out.weight], p[self.map_out.bias])?;
        Ok(ApproxDegradation { affinity, u_prime, u })
    }
}
