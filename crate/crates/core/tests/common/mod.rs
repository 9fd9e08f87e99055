#![allow(dead_code)]

use ndr_core::graph::sigmoid;
use ndr_core::model::{ModelConfig, NdrNetworks};
use ndr_core::params::Bound;
use ndr_core::ndr::{cp_conv, cp_factors, di_inject, dq_affinity, dq_query, kronecker_slices, CpWeights};
use ndr_core::{Graph, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
pub const ORACLE_TOL: f64 = 1e-10;
pub const MINOR_TOL: f64 = 1e-9;
pub const SEEDS: u64 = 10;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// `sum(y * R)` for a fixed pseudo-random `R`, so every output entry gets a
/// distinct upstream gradient.
pub fn weighted_sum(g: &mut Graph, y: Var) -> Result<Var> {
    let shape = g.shape(y).to_vec();
    let r = rand_tensor(&mut rng(0xfeed), &shape, 1.0);
    let r = g.constant(&r)?;
    let prod = g.mul(y, r)?;
    g.sum(prod)
}

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest norm-wise relative error `|a - n| / max(|a|, |n|)` between the
/// analytic gradient and central differences, over every input.
pub fn grad_check<F>(inputs: &[Tensor], build: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.param(t).unwrap()).collect();
        let loss = build(&mut g, &vars).unwrap();
        g.item(loss)
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t).unwrap()).collect();
    let loss = build(&mut g, &vars).unwrap();
    g.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        let analytic: Vec<f64> = g.grad(vars[i]).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec);
        let mut numeric = vec![0.0; t.len()];
        let mut work = inputs.to_vec();
        for j in 0..t.len() {
            let orig = t.data()[j];
            work[i].data_mut()[j] = orig + FD_STEP;
            let up = eval(&work);
            work[i].data_mut()[j] = orig - FD_STEP;
            let down = eval(&work);
            work[i].data_mut()[j] = orig;
            numeric[j] = (up - down) / (2.0 * FD_STEP);
        }
        let diff = l2(analytic.iter().zip(&numeric).map(|(a, n)| a - n));
        let scale = l2(analytic.iter().copied()).max(l2(numeric.iter().copied())).max(1e-12);
        worst = worst.max(diff / scale);
    }
    worst
}

pub struct Shapes {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

/// Random small shapes: H, W <= 8, C <= 6, N <= 5, K <= 3 with K below
/// min(C, H, W).
pub fn random_shapes(rng: &mut ChaCha8Rng) -> Shapes {
    let k = rng.random_range(1..=3);
    Shapes {
        h: rng.random_range(k + 1..=8),
        w: rng.random_range(k + 1..=8),
        c: rng.random_range(k + 1..=6),
        m: rng.random_range(1..=6),
        n: rng.random_range(1..=5),
        k,
    }
}

pub fn cp_weights(g: &mut Graph, rng: &mut ChaCha8Rng, c: usize, k: usize, scale: f64) -> CpWeights {
    let mut p = |shape: &[usize]| g.param(&rand_tensor(rng, shape, scale)).unwrap();
    CpWeights {
        channel_w: p(&[c, k * c]),
        channel_b: p(&[k * c]),
        height_w: p(&[1, k]),
        height_b: p(&[k]),
        width_w: p(&[1, k]),
        width_b: p(&[k]),
    }
}

// ---- loop oracles -------------------------------------------------------

/// Affinity by explicit sums: `P = F W + b`, `sigma = P D`, row softmax.
pub fn naive_affinity(f: &Tensor, map_w: &Tensor, map_b: &Tensor, d: &Tensor) -> Vec<Vec<f64>> {
    let (h, w, c) = (f.shape()[0], f.shape()[1], f.shape()[2]);
    let (m, n) = (d.shape()[0], d.shape()[1]);
    let mut s = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let p: Vec<f64> = (0..m)
                .map(|mi| map_b.data()[mi] + (0..c).map(|ci| f.get(&[y, x, ci]) * map_w.get(&[ci, mi])).sum::<f64>())
                .collect();
            let sigma: Vec<f64> = (0..n).map(|ni| (0..m).map(|mi| p[mi] * d.get(&[mi, ni])).sum()).collect();
            let top = sigma.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = sigma.iter().map(|v| (v - top).exp()).collect();
            let z: f64 = e.iter().sum();
            s.push(e.iter().map(|v| v / z).collect());
        }
    }
    s
}

/// `U'[hw, m] = sum_n S[hw, n] D[m, n]`, then `U = U' Wo + bo`.
pub fn naive_query(s: &[Vec<f64>], d: &Tensor, out_w: &Tensor, out_b: &Tensor) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (m, n) = (d.shape()[0], d.shape()[1]);
    let c = out_w.shape()[1];
    let u_prime: Vec<Vec<f64>> =
        s.iter().map(|row| (0..m).map(|mi| (0..n).map(|ni| row[ni] * d.get(&[mi, ni])).sum()).collect()).collect();
    let u = u_prime
        .iter()
        .map(|up| (0..c).map(|ci| out_b.data()[ci] + (0..m).map(|mi| up[mi] * out_w.get(&[mi, ci])).sum::<f64>()).collect())
        .collect();
    (u_prime, u)
}

pub struct NaiveCp {
    pub u1: Vec<Vec<f64>>,
    pub u2: Vec<Vec<f64>>,
    pub u3: Vec<Vec<f64>>,
    pub out: Vec<f64>,
}

/// Pool, project, sigmoid, then `mean_k u1[k][c] u2[k][h] u3[k][w]`.
pub fn naive_cp(x: &Tensor, w: &[Tensor; 6], k: usize) -> NaiveCp {
    let (h, wd, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let [cw, cb, hw, hb, ww, wb] = w;
    let pooled_c: Vec<f64> =
        (0..c).map(|ci| (0..h).flat_map(|y| (0..wd).map(move |xx| (y, xx))).map(|(y, xx)| x.get(&[y, xx, ci])).sum::<f64>() / (h * wd) as f64).collect();
    let rows: Vec<f64> =
        (0..h).map(|y| (0..wd).flat_map(|xx| (0..c).map(move |ci| (xx, ci))).map(|(xx, ci)| x.get(&[y, xx, ci])).sum::<f64>() / (wd * c) as f64).collect();
    let cols: Vec<f64> =
        (0..wd).map(|xx| (0..h).flat_map(|y| (0..c).map(move |ci| (y, ci))).map(|(y, ci)| x.get(&[y, xx, ci])).sum::<f64>() / (h * c) as f64).collect();
    let u1: Vec<Vec<f64>> = (0..k)
        .map(|r| {
            (0..c)
                .map(|ci| {
                    let j = r * c + ci;
                    sigmoid(cb.data()[j] + (0..c).map(|cc| pooled_c[cc] * cw.get(&[cc, j])).sum::<f64>())
                })
                .collect()
        })
        .collect();
    let u2: Vec<Vec<f64>> = (0..k).map(|r| rows.iter().map(|&v| sigmoid(v * hw.get(&[0, r]) + hb.data()[r])).collect()).collect();
    let u3: Vec<Vec<f64>> = (0..k).map(|r| cols.iter().map(|&v| sigmoid(v * ww.get(&[0, r]) + wb.data()[r])).collect()).collect();
    let mut out = vec![0.0; h * wd * c];
    for y in 0..h {
        for xx in 0..wd {
            for ci in 0..c {
                out[(y * wd + xx) * c + ci] = (0..k).map(|r| u1[r][ci] * u2[r][y] * u3[r][xx]).sum::<f64>() / k as f64;
            }
        }
    }
    NaiveCp { u1, u2, u3, out }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Maximum deviation of each library routine from its loop oracle for one
/// random instance: `[affinity, query (U' and U), cp_conv, di_inject]`.
pub fn oracle_errors(seed: u64) -> [(&'static str, f64); 4] {
    let mut r = rng(seed);
    let s = random_shapes(&mut r);
    let f = rand_tensor(&mut r, &[s.h, s.w, s.c], 1.0);
    let d = rand_tensor(&mut r, &[s.m, s.n], 1.0);
    let map_w = rand_tensor(&mut r, &[s.c, s.m], 1.0);
    let map_b = rand_tensor(&mut r, &[s.m], 1.0);
    let out_w = rand_tensor(&mut r, &[s.m, s.c], 1.0);
    let out_b = rand_tensor(&mut r, &[s.c], 1.0);

    let mut g = Graph::new();
    let fv = g.constant(&f).unwrap();
    let dv = g.constant(&d).unwrap();
    let (mw, mb, ow, ob) =
        (g.constant(&map_w).unwrap(), g.constant(&map_b).unwrap(), g.constant(&out_w).unwrap(), g.constant(&out_b).unwrap());
    let a = dq_affinity(&mut g, fv, dv, mw, mb).unwrap();
    let (up, u) = dq_query(&mut g, a, dv, s.h, s.w, ow, ob).unwrap();
    let s_ref = naive_affinity(&f, &map_w, &map_b, &d);
    let (up_ref, u_ref) = naive_query(&s_ref, &d, &out_w, &out_b);
    let e_aff = max_diff(g.value(a), &s_ref.concat());
    let e_query = max_diff(g.value(up), &up_ref.concat()).max(max_diff(g.value(u), &u_ref.concat()));

    let x = rand_tensor(&mut r, &[s.h, s.w, s.c], 1.0);
    let wts_f: [Tensor; 6] = cp_tensors(&mut r, s.c, s.k);
    let wts_u: [Tensor; 6] = cp_tensors(&mut r, s.c, s.k);
    let xv = g.constant(&x).unwrap();
    let cw_f = const_cp(&mut g, &wts_f);
    let cp = cp_conv(&mut g, xv, &cw_f).unwrap();
    let cp_ref = naive_cp(&x, &wts_f, s.k);
    let e_cp = max_diff(g.value(cp), &cp_ref.out);

    let uu = rand_tensor(&mut r, &[s.h, s.w, s.c], 1.0);
    let uv = g.constant(&uu).unwrap();
    let cw_u = const_cp(&mut g, &wts_u);
    let di = di_inject(&mut g, xv, uv, &cw_f, &cw_u).unwrap();
    let ucp_ref = naive_cp(&uu, &wts_u, s.k);
    let di_ref: Vec<f64> = (0..x.len()).map(|i| cp_ref.out[i] * ucp_ref.out[i] + ucp_ref.out[i] + x.data()[i]).collect();
    let e_di = max_diff(g.value(di), &di_ref);
    [("dq_affinity", e_aff), ("dq_query", e_query), ("cp_conv", e_cp), ("di_inject", e_di)]
}

pub fn cp_tensors(r: &mut ChaCha8Rng, c: usize, k: usize) -> [Tensor; 6] {
    [
        rand_tensor(r, &[c, k * c], 1.0),
        rand_tensor(r, &[k * c], 1.0),
        rand_tensor(r, &[1, k], 1.0),
        rand_tensor(r, &[k], 1.0),
        rand_tensor(r, &[1, k], 1.0),
        rand_tensor(r, &[k], 1.0),
    ]
}

pub fn const_cp(g: &mut Graph, w: &[Tensor; 6]) -> CpWeights {
    let mut c = |t: &Tensor| g.constant(t).unwrap();
    CpWeights {
        channel_w: c(&w[0]),
        channel_b: c(&w[1]),
        height_w: c(&w[2]),
        height_b: c(&w[3]),
        width_w: c(&w[4]),
        width_b: c(&w[5]),
    }
}

/// Largest 2x2 minor over every matricization of every K-slice of the
/// library's Kronecker product, plus the deviation of the slice mean from
/// `cp_conv`'s output.
pub fn rank1_minor(seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let s = random_shapes(&mut r);
    let x = rand_tensor(&mut r, &[s.h, s.w, s.c], 1.0);
    let wts = cp_tensors(&mut r, s.c, s.k);
    let mut g = Graph::new();
    let xv = g.constant(&x).unwrap();
    let cw = const_cp(&mut g, &wts);
    let f = cp_factors(&mut g, xv, &cw).unwrap();
    let kro = kronecker_slices(&g.tensor(f.u1), &g.tensor(f.u2), &g.tensor(f.u3)).unwrap();
    let out = cp_conv(&mut g, xv, &cw).unwrap();
    let (h, w, c) = (s.h, s.w, s.c);
    let at = |k: usize, y: usize, xx: usize, ci: usize| kro.get(&[k, y, xx, ci]);
    let mut worst: f64 = 0.0;
    for k in 0..s.k {
        // Mode-1 (h vs w*c), mode-2 (w vs h*c) and mode-3 (c vs h*w) unfoldings.
        let idx: Vec<(usize, usize, usize)> = (0..h).flat_map(|y| (0..w).flat_map(move |xx| (0..c).map(move |ci| (y, xx, ci)))).collect();
        for &(y1, x1, c1) in &idx {
            for &(y2, x2, c2) in &idx {
                let m1 = at(k, y1, x1, c1) * at(k, y2, x2, c2) - at(k, y1, x2, c2) * at(k, y2, x1, c1);
                let m2 = at(k, y1, x1, c1) * at(k, y2, x2, c2) - at(k, y2, x1, c2) * at(k, y1, x2, c1);
                let m3 = at(k, y1, x1, c1) * at(k, y2, x2, c2) - at(k, y2, x2, c1) * at(k, y1, x1, c2);
                worst = worst.max(m1.abs()).max(m2.abs()).max(m3.abs());
            }
        }
    }
    let mean_err = (0..h * w * c)
        .map(|i| {
            let mean = (0..s.k).map(|k| kro.data()[k * h * w * c + i]).sum::<f64>() / s.k as f64;
            (mean - g.value(out)[i]).abs()
        })
        .fold(0.0, f64::max);
    (worst, mean_err)
}

/// One random query + CP forward: `(max |row sum - 1|, min cp, max cp)`.
pub fn normalization_pass(seed: u64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let s = random_shapes(&mut r);
    let scale = r.random_range(0.1..3.0);
    let mut g = Graph::new();
    let f = g.constant(&rand_tensor(&mut r, &[s.h, s.w, s.c], scale)).unwrap();
    let d = g.constant(&rand_tensor(&mut r, &[s.m, s.n], scale)).unwrap();
    let mw = g.constant(&rand_tensor(&mut r, &[s.c, s.m], scale)).unwrap();
    let mb = g.constant(&rand_tensor(&mut r, &[s.m], scale)).unwrap();
    let a = dq_affinity(&mut g, f, d, mw, mb).unwrap();
    let dev = g.value(a).chunks(s.n).map(|row| (row.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    let cw = cp_weights(&mut g, &mut r, s.c, s.k, 1.0);
    let cp = cp_conv(&mut g, f, &cw).unwrap();
    let v = g.value(cp);
    (dev, v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

// ---- gradient cases -------------------------------------------------------

pub type GradCase = (&'static str, fn(u64) -> f64);

fn unary(seed: u64, shape: &[usize], scale: f64, op: fn(&mut Graph, Var) -> Result<Var>) -> f64 {
    let x = rand_tensor(&mut rng(seed), shape, scale);
    grad_check(&[x], |g, v| {
        let y = op(g, v[0])?;
        weighted_sum(g, y)
    })
}

fn conv3(seed: u64, stride: usize) -> f64 {
    let mut r = rng(seed);
    let (h, w) = (r.random_range(2..=6), r.random_range(2..=6));
    let (ci, co) = (r.random_range(1..=3), r.random_range(1..=3));
    let inputs = [rand_tensor(&mut r, &[h, w, ci], 1.0), rand_tensor(&mut r, &[3, 3, ci, co], 1.0), rand_tensor(&mut r, &[co], 1.0)];
    grad_check(&inputs, |g, v| {
        let y = g.conv3x3(v[0], v[1], v[2], stride)?;
        weighted_sum(g, y)
    })
}

pub fn grad_cases() -> Vec<GradCase> {
    vec![
        ("matmul", |s| {
            let mut r = rng(s);
            let (p, q, n) = (r.random_range(1..=4), r.random_range(1..=4), r.random_range(1..=4));
            let inputs = [rand_tensor(&mut r, &[p, q], 1.0), rand_tensor(&mut r, &[q, n], 1.0)];
            grad_check(&inputs, |g, v| {
                let y = g.matmul(v[0], v[1])?;
                weighted_sum(g, y)
            })
        }),
        ("transpose", |s| unary(s, &[3, 4], 1.0, |g, x| g.transpose(x))),
        ("reshape", |s| unary(s, &[2, 6], 1.0, |g, x| g.reshape(x, &[3, 4]))),
        ("add_sub_mul_scale", |s| {
            let mut r = rng(s);
            let inputs = [rand_tensor(&mut r, &[3, 2], 1.0), rand_tensor(&mut r, &[3, 2], 1.0)];
            grad_check(&inputs, |g, v| {
                let a = g.add(v[0], v[1])?;
                let b = g.sub(v[0], v[1])?;
                let c = g.mul(a, b)?;
                let d = g.scale(c, -1.7)?;
                weighted_sum(g, d)
            })
        }),
        ("sigmoid", |s| unary(s, &[4, 3], 3.0, |g, x| g.sigmoid(x))),
        ("silu", |s| unary(s, &[4, 3], 3.0, |g, x| g.silu(x))),
        ("softmax_rows", |s| unary(s, &[4, 5], 2.0, |g, x| g.softmax_rows(x))),
        ("mean_axis", |s| {
            let axis = (s % 3) as usize;
            let x = rand_tensor(&mut rng(s), &[3, 4, 2], 1.0);
            grad_check(&[x], |g, v| {
                let y = g.mean_axis(v[0], axis)?;
                weighted_sum(g, y)
            })
        }),
        ("global_avg_pool", |s| unary(s, &[3, 4, 5], 1.0, |g, x| g.global_avg_pool(x))),
        ("conv1x1", |s| {
            let mut r = rng(s);
            let (ci, co) = (r.random_range(1..=4), r.random_range(1..=4));
            let inputs = [rand_tensor(&mut r, &[3, 2, ci], 1.0), rand_tensor(&mut r, &[ci, co], 1.0), rand_tensor(&mut r, &[co], 1.0)];
            grad_check(&inputs, |g, v| {
                let y = g.conv1x1(v[0], v[1], v[2])?;
                weighted_sum(g, y)
            })
        }),
        ("conv3x3", |s| conv3(s, 1)),
        ("conv3x3_stride2", |s| conv3(s, 2)),
        ("upsample2", |s| unary(s, &[3, 2, 2], 1.0, |g, x| g.upsample2(x))),
        ("scale_channels", |s| {
            let mut r = rng(s);
            let inputs = [rand_tensor(&mut r, &[3, 3, 4], 1.0), rand_tensor(&mut r, &[4], 1.0)];
            grad_check(&inputs, |g, v| {
                let y = g.scale_channels(v[0], v[1])?;
                weighted_sum(g, y)
            })
        }),
        ("cp_combine", |s| {
            let mut r = rng(s);
            let inputs = [rand_tensor(&mut r, &[2, 3], 1.0), rand_tensor(&mut r, &[2, 4], 1.0), rand_tensor(&mut r, &[2, 5], 1.0)];
            grad_check(&inputs, |g, v| {
                let y = g.cp_combine(v[0], v[1], v[2])?;
                weighted_sum(g, y)
            })
        }),
        ("concat_channels", |s| {
            let mut r = rng(s);
            let inputs = [rand_tensor(&mut r, &[2, 3, 2], 1.0), rand_tensor(&mut r, &[2, 3, 3], 1.0)];
            grad_check(&inputs, |g, v| {
                let y = g.concat_channels(v[0], v[1])?;
                weighted_sum(g, y)
            })
        }),
        ("mse", |s| {
            let mut r = rng(s);
            let inputs = [rand_tensor(&mut r, &[3, 4], 1.0), rand_tensor(&mut r, &[3, 4], 1.0)];
            grad_check(&inputs, |g, v| g.mse(v[0], v[1]))
        }),
        ("dq_affinity_query", |s| {
            let mut r = rng(s);
            let sh = random_shapes(&mut r);
            let inputs = [
                rand_tensor(&mut r, &[sh.h, sh.w, sh.c], 1.0),
                rand_tensor(&mut r, &[sh.m, sh.n], 1.0),
                rand_tensor(&mut r, &[sh.c, sh.m], 1.0),
                rand_tensor(&mut r, &[sh.m], 1.0),
                rand_tensor(&mut r, &[sh.m, sh.c], 1.0),
                rand_tensor(&mut r, &[sh.c], 1.0),
            ];
            grad_check(&inputs, |g, v| {
                let a = dq_affinity(g, v[0], v[1], v[2], v[3])?;
                let (up, u) = dq_query(g, a, v[1], sh.h, sh.w, v[4], v[5])?;
                let l1 = weighted_sum(g, u)?;
                let l2 = g.sum(up)?;
                let l2 = g.scale(l2, 0.3)?;
                g.add(l1, l2)
            })
        }),
        ("cp_conv", |s| {
            let mut r = rng(s);
            let sh = random_shapes(&mut r);
            let mut inputs = vec![rand_tensor(&mut r, &[sh.h, sh.w, sh.c], 1.0)];
            inputs.extend(cp_tensors(&mut r, sh.c, sh.k));
            grad_check(&inputs, |g, v| {
                let w = cp_from_vars(v, 1);
                let y = cp_conv(g, v[0], &w)?;
                weighted_sum(g, y)
            })
        }),
        ("di_inject", |s| {
            let mut r = rng(s);
            let sh = random_shapes(&mut r);
            let mut inputs = vec![rand_tensor(&mut r, &[sh.h, sh.w, sh.c], 1.0), rand_tensor(&mut r, &[sh.h, sh.w, sh.c], 1.0)];
            inputs.extend(cp_tensors(&mut r, sh.c, sh.k));
            inputs.extend(cp_tensors(&mut r, sh.c, sh.k));
            grad_check(&inputs, |g, v| {
                let wf = cp_from_vars(v, 2);
                let wu = cp_from_vars(v, 8);
                let y = di_inject(g, v[0], v[1], &wf, &wu)?;
                weighted_sum(g, y)
            })
        }),
        ("tiny_model", tiny_model_grad),
    ]
}

pub fn cp_from_vars(v: &[Var], at: usize) -> CpWeights {
    CpWeights {
        channel_w: v[at],
        channel_b: v[at + 1],
        height_w: v[at + 2],
        height_b: v[at + 3],
        width_w: v[at + 4],
        width_b: v[at + 5],
    }
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig { channels: 4, scales: 2, dict_m: 4, dict_n: 3, rank: 2, ..ModelConfig::default() }
}

/// Bidirectional loss of a tiny model with every parameter randomized
/// (so zero-initialized output layers do not hide paths), checked against
/// every parameter.
pub fn tiny_model_grad(seed: u64) -> f64 {
    let mut net = NdrNetworks::new(tiny_config(), seed).unwrap();
    let mut r = rng(seed ^ 0xabc);
    for t in net.params.tensors_mut() {
        let shape = t.shape().to_vec();
        *t = rand_tensor(&mut r, &shape, 0.5).with_grad();
    }
    let x = rand_tensor(&mut r, &[8, 8, 3], 0.5);
    let y = rand_tensor(&mut r, &[8, 8, 3], 0.5);
    let params: Vec<Tensor> = net.params.tensors().to_vec();
    grad_check(&params, |g, v| {
        let xv = g.constant(&x)?;
        let yv = g.constant(&y)?;
        let bound = Bound::from_vars(v.to_vec());
        let out = net.restore.forward(g, &bound, xv)?;
        let us: Vec<Var> = out.scales.iter().map(|s| s.u).collect();
        let x_hat = net.degrade.forward(g, &bound, yv, &us)?;
        let lx = g.mse(xv, x_hat)?;
        let ly = g.mse(yv, out.restored)?;
        let ly = g.scale(ly, 0.7)?;
        g.add(lx, ly)
    })
}
