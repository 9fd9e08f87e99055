//! Forward and adjoint kernels for the heavier tensor ops. Feature maps are
//! `[H, W, C]` row-major; 3x3 weights are `[3, 3, Cin, Cout]`.

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn conv_out_dim(n: usize, stride: usize) -> usize {
    (n + 2 - 3) / stride + 1
}

pub struct Conv3x3Dims {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
}

impl Conv3x3Dims {
    pub fn out_h(&self) -> usize {
        conv_out_dim(self.h, self.stride)
    }

    pub fn out_w(&self) -> usize {
        conv_out_dim(self.w, self.stride)
    }

    /// Valid input coordinate for output `o` and tap `k`, if not in the padding.
    #[inline]
    fn src(o: usize, k: usize, stride: usize, limit: usize) -> Option<usize> {
        let i = (o * stride + k).checked_sub(1)?;
        (i < limit).then_some(i)
    }
}

pub fn conv3x3_forward(x: &[f64], wt: &[f64], bias: &[f64], d: &Conv3x3Dims) -> Vec<f64> {
    let (ho, wo) = (d.out_h(), d.out_w());
    let (cin, cout) = (d.cin, d.cout);
    let mut y = vec![0.0; ho * wo * cout];
    for oy in 0..ho {
        for ox in 0..wo {
            let out = &mut y[(oy * wo + ox) * cout..][..cout];
            out.copy_from_slice(bias);
            for ky in 0..3 {
                let Some(iy) = Conv3x3Dims::src(oy, ky, d.stride, d.h) else { continue };
                for kx in 0..3 {
                    let Some(ix) = Conv3x3Dims::src(ox, kx, d.stride, d.w) else { continue };
                    let xin = &x[(iy * d.w + ix) * cin..][..cin];
                    let tap = &wt[(ky * 3 + kx) * cin * cout..][..cin * cout];
                    for (ci, &a) in xin.iter().enumerate() {
                        axpy(a, &tap[ci * cout..][..cout], out);
                    }
                }
            }
        }
    }
    y
}

/// Returns `(grad_x, grad_w, grad_b)`; the input gradient is skipped when
/// `need_x` is false.
pub fn conv3x3_backward(
    x: &[f64],
    wt: &[f64],
    gy: &[f64],
    d: &Conv3x3Dims,
    need_x: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (ho, wo) = (d.out_h(), d.out_w());
    let (cin, cout) = (d.cin, d.cout);
    let mut gx = need_x.then(|| vec![0.0; x.len()]);
    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; cout];
    for oy in 0..ho {
        for ox in 0..wo {
            let g = &gy[(oy * wo + ox) * cout..][..cout];
            axpy(1.0, g, &mut gb);
            for ky in 0..3 {
                let Some(iy) = Conv3x3Dims::src(oy, ky, d.stride, d.h) else { continue };
                for kx in 0..3 {
                    let Some(ix) = Conv3x3Dims::src(ox, kx, d.stride, d.w) else { continue };
                    let base = (iy * d.w + ix) * cin;
                    let tap_off = (ky * 3 + kx) * cin * cout;
                    let xin = &x[base..][..cin];
                    for (ci, &a) in xin.iter().enumerate() {
                        axpy(a, g, &mut gw[tap_off + ci * cout..][..cout]);
                    }
                    if let Some(gx) = gx.as_mut() {
                        let tap = &wt[tap_off..][..cin * cout];
                        let gxin = &mut gx[base..][..cin];
                        for (ci, slot) in gxin.iter_mut().enumerate() {
                            *slot += dot(&tap[ci * cout..][..cout], g);
                        }
                    }
                }
            }
        }
    }
    (gx, gw, gb)
}

/// `[rows, cin] x [cin, cout] + bias`.
pub fn conv1x1_forward(x: &[f64], wt: &[f64], bias: &[f64], cin: usize, cout: usize) -> Vec<f64> {
    let rows = x.len() / cin;
    let mut y = vec![0.0; rows * cout];
    for r in 0..rows {
        let out = &mut y[r * cout..][..cout];
        out.copy_from_slice(bias);
        for (ci, &a) in x[r * cin..][..cin].iter().enumerate() {
            axpy(a, &wt[ci * cout..][..cout], out);
        }
    }
    y
}

pub fn conv1x1_backward(
    x: &[f64],
    wt: &[f64],
    gy: &[f64],
    cin: usize,
    cout: usize,
    need_x: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let rows = x.len() / cin;
    let mut gx = need_x.then(|| vec![0.0; x.len()]);
    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; cout];
    for r in 0..rows {
        let g = &gy[r * cout..][..cout];
        axpy(1.0, g, &mut gb);
        for (ci, &a) in x[r * cin..][..cin].iter().enumerate() {
            axpy(a, g, &mut gw[ci * cout..][..cout]);
        }
        if let Some(gx) = gx.as_mut() {
            for (ci, slot) in gx[r * cin..][..cin].iter_mut().enumerate() {
                *slot += dot(&wt[ci * cout..][..cout], g);
            }
        }
    }
    (gx, gw, gb)
}

/// `[p, q] x [q, r]`, i-k-j loop order.
pub fn matmul(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut c = vec![0.0; p * r];
    for i in 0..p {
        let row = &mut c[i * r..][..r];
        for k in 0..q {
            axpy(a[i * q + k], &b[k * r..][..r], row);
        }
    }
    c
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

/// Rank-K outer-product reconstruction averaged over K:
/// `out[h, w, c] = mean_k u1[k, c] * u2[k, h] * u3[k, w]`.
pub fn cp_combine(u1: &[f64], u2: &[f64], u3: &[f64], k: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w * c];
    let inv_k = 1.0 / k as f64;
    for r in 0..k {
        let a = &u1[r * c..][..c];
        for y in 0..h {
            let by = u2[r * h + y] * inv_k;
            for x in 0..w {
                let s = by * u3[r * w + x];
                axpy(s, a, &mut out[(y * w + x) * c..][..c]);
            }
        }
    }
    out
}

pub fn cp_combine_backward(
    u1: &[f64],
    u2: &[f64],
    u3: &[f64],
    gy: &[f64],
    k: usize,
    c: usize,
    h: usize,
    w: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let inv_k = 1.0 / k as f64;
    let mut g1 = vec![0.0; u1.len()];
    let mut g2 = vec![0.0; u2.len()];
    let mut g3 = vec![0.0; u3.len()];
    for r in 0..k {
        let a = &u1[r * c..][..c];
        for y in 0..h {
            let by = u2[r * h + y];
            for x in 0..w {
                let cz = u3[r * w + x];
                let g = &gy[(y * w + x) * c..][..c];
                // t = <g, a> shared by the h and w factors
                let t = dot(g, a) * inv_k;
                g2[r * h + y] += t * cz;
                g3[r * w + x] += t * by;
                axpy(by * cz * inv_k, g, &mut g1[r * c..][..c]);
            }
        }
    }
    (g1, g2, g3)
}
