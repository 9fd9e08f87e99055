//! Low-rank (CP) feature projection.
//!
//! Three projectors squeeze an `[H, W, C]` map into rank-K factors along
//! channels, rows and columns (pool, pointwise map, sigmoid). The factors are
//! recombined as K outer products and averaged over K.

use rand::Rng;

use crate::error::{NdrError, Result};
use crate::graph::{Graph, Var};
use crate::layers::{Conv1x1, Init};
use crate::params::{Bound, ParamSet};
use crate::tensor::Tensor;

/// Sigmoid-gated factors: `u1: [K, C]`, `u2: [K, H]`, `u3: [K, W]`.
#[derive(Debug, Clone, Copy)]
pub struct CpFactors {
    pub u1: Var,
    pub u2: Var,
    pub u3: Var,
}

/// Raw graph handles of the three projectors' weights.
///
/// The channel projector maps the `(H, W)`-pooled descriptor `[C]` to
/// `[K * C]`. The row and column projectors map each entry of the pooled
/// profiles (`[H]` pooled over `(C, W)`, `[W]` pooled over `(C, H)`) to K
/// values, so they do not depend on the spatial size.
#[derive(Debug, Clone, Copy)]
pub struct CpWeights {
    pub channel_w: Var,
    pub channel_b: Var,
    pub height_w: Var,
    pub height_b: Var,
    pub width_w: Var,
    pub width_b: Var,
}

fn rank_of(g: &Graph, w: &CpWeights) -> Result<usize> {
    match *g.shape(w.height_w) {
        [1, k] => Ok(k),
        ref s => Err(NdrError::shape("cp_conv", format!("row projector weight must be [1, K], got {s:?}"))),
    }
}

pub fn cp_factors(g: &mut Graph, x: Var, w: &CpWeights) -> Result<CpFactors> {
    let (h, wd, c) = match *g.shape(x) {
        [h, w, c] => (h, w, c),
        ref s => return Err(NdrError::shape("cp_conv", format!("input must be [H, W, C], got {s:?}"))),
    };
    let k = rank_of(g, w)?;
    if k == 0 || k >= c.min(h).min(wd) {
        return Err(NdrError::shape("cp_conv", format!("rank {k} must be below min(C={c}, H={h}, W={wd})")));
    }

    let pooled_c = g.global_avg_pool(x)?;
    let pooled_c = g.reshape(pooled_c, &[1, c])?;
    let z1 = g.conv1x1(pooled_c, w.channel_w, w.channel_b)?;
    let z1 = g.reshape(z1, &[k, c])?;
    let u1 = g.sigmoid(z1)?;

    let over_c = g.mean_axis(x, 2)?;
    let rows = g.mean_axis(over_c, 1)?;
    let cols = g.mean_axis(over_c, 0)?;
    let u2 = spatial_factor(g, rows, h, w.height_w, w.height_b)?;
    let u3 = spatial_factor(g, cols, wd, w.width_w, w.width_b)?;
    Ok(CpFactors { u1, u2, u3 })
}

fn spatial_factor(g: &mut Graph, profile: Var, len: usize, wt: Var, b: Var) -> Result<Var> {
    let col = g.reshape(profile, &[len, 1])?;
    let z = g.conv1x1(col, wt, b)?;
    let z = g.transpose(z)?;
    g.sigmoid(z)
}

/// `X_cp[h, w, c] = mean_k u1[k, c] u2[k, h] u3[k, w]`; every entry lies in (0, 1).
pub fn cp_conv(g: &mut Graph, x: Var, w: &CpWeights) -> Result<Var> {
    let f = cp_factors(g, x, w)?;
    g.cp_combine(f.u1, f.u2, f.u3)
}

/// Parameter ids of one CP projector set.
#[derive(Debug, Clone, Copy)]
pub struct CpProjectors {
    pub channel: Conv1x1,
    pub height: Conv1x1,
    pub width: Conv1x1,
    pub rank: usize,
}

impl CpProjectors {
    pub fn new<R: Rng>(params: &mut ParamSet, name: &str, channels: usize, rank: usize, rng: &mut R) -> Self {
        Self {
            channel: Conv1x1::new(params, &format!("{name}.p1"), channels, rank * channels, Init::FanIn, rng),
            height: Conv1x1::new(params, &format!("{name}.p2"), 1, rank, Init::FanIn, rng),
            width: Conv1x1::new(params, &format!("{name}.p3"), 1, rank, Init::FanIn, rng),
            rank,
        }
    }

    pub fn weights(&self, p: &Bound) -> CpWeights {
        CpWeights {
            channel_w: p[self.channel.weight],
            channel_b: p[self.channel.bias],
            height_w: p[self.height.weight],
            height_b: p[self.height.bias],
            width_w: p[self.width.weight],
            width_b: p[self.width.bias],
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        cp_conv(g, x, &self.weights(p))
    }
}

/// The K rank-1 terms `u1[k, c] * u2[k, h] * u3[k, w]` before averaging, as a
/// `[K, H, W, C]` tensor.
pub fn kronecker_slices(u1: &Tensor, u2: &Tensor, u3: &Tensor) -> Result<Tensor> {
    let (k, c, h, w) = match (u1.shape(), u2.shape(), u3.shape()) {
        (&[k, c], &[k2, h], &[k3, w]) if k == k2 && k == k3 => (k, c, h, w),
        (a, b, d) => return Err(NdrError::shape("kronecker_slices", format!("factors {a:?}, {b:?}, {d:?}"))),
    };
    let mut out = Vec::with_capacity(k * h * w * c);
    for r in 0..k {
        for y in 0..h {
            for x in 0..w {
                let s = u2.data()[r * h + y] * u3.data()[r * w + x];
                out.extend(u1.data()[r * c..][..c].iter().map(|a| a * s));
            }
        }
    }
    Tensor::new(&[k, h, w, c], out)
}
