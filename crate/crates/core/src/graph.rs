//! Reverse-mode differentiation over a linear tape.
//!
//! Every op appends one node holding its output value. [`Graph::backward`]
//! walks the tape from the loss node back to the first node, so adjoints are
//! replayed in exact reverse execution order and gradients of leaves that
//! are used several times accumulate additively.

use crate::error::{NdrError, Result};
use crate::kernels::{self, Conv3x3Dims};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Silu(Var),
    SoftmaxRows(Var),
    MeanAxis { x: Var, axis: usize },
    GlobalAvgPool(Var),
    Conv1x1 { x: Var, w: Var, b: Var },
    Conv3x3 { x: Var, w: Var, b: Var, stride: usize },
    Upsample2(Var),
    ScaleChannels(Var, Var),
    CpCombine(Var, Var, Var),
    ConcatChannels(Var, Var),
    Mse(Var, Var),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Computation tape. One graph is built per forward pass and owned by a
/// single thread; independent samples get independent graphs.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("node shapes are validated on push")
    }

    /// Scalar value of a one-element node.
    pub fn item(&self, v: Var) -> f64 {
        let n = &self.nodes[v.0];
        assert_eq!(n.value.len(), 1, "item() on non-scalar node {:?}", n.shape);
        n.value[0]
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Copies the gradient of `v` into `t.grad` (zeros if `v` got none).
    pub fn write_grad(&self, v: Var, t: &mut Tensor) {
        let g = self.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec);
        t.grad = Some(g);
    }

    fn push(&mut self, op: &'static str, shape: Vec<usize>, value: Vec<f64>, kind: Op, inputs: &[Var]) -> Result<Var> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        if value.iter().any(|v| !v.is_finite()) {
            return Err(NdrError::NonFinite { op });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { shape, value, op: kind, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf that tracks gradients iff `t.requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> Result<Var> {
        self.leaf_with(t.shape().to_vec(), t.data().to_vec(), t.requires_grad)
    }

    /// Gradient-tracking leaf regardless of the tensor's own flag.
    pub fn param(&mut self, t: &Tensor) -> Result<Var> {
        self.leaf_with(t.shape().to_vec(), t.data().to_vec(), true)
    }

    pub fn constant(&mut self, t: &Tensor) -> Result<Var> {
        self.leaf_with(t.shape().to_vec(), t.data().to_vec(), false)
    }

    fn leaf_with(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool) -> Result<Var> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(NdrError::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node { shape, value, op: Op::Leaf, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims2(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(NdrError::shape(op, format!("expected a 2-D tensor, got {s:?}"))),
        }
    }

    fn dims3(&self, op: &'static str, v: Var) -> Result<(usize, usize, usize)> {
        match *self.shape(v) {
            [h, w, c] => Ok((h, w, c)),
            ref s => Err(NdrError::shape(op, format!("expected an [H, W, C] tensor, got {s:?}"))),
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(NdrError::shape(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.dims2("matmul", a)?;
        let (q2, r) = self.dims2("matmul", b)?;
        if q != q2 {
            return Err(NdrError::shape("matmul", format!("inner dimensions {q} and {q2} differ")));
        }
        let out = kernels::matmul(self.value(a), self.value(b), p, q, r);
        self.push("matmul", vec![p, r], out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2("transpose", a)?;
        let out = kernels::transpose(self.value(a), r, c);
        self.push("transpose", vec![c, r], out, Op::Transpose(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(NdrError::shape("reshape", format!("{:?} -> {shape:?}", self.shape(a))));
        }
        let out = self.value(a).to_vec();
        self.push("reshape", shape.to_vec(), out, Op::Reshape(a), &[a])
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, kind: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        self.push(op, shape, out, kind, &[a, b])
    }

    fn map(&mut self, op: &'static str, a: Var, kind: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(op, shape, out, kind, &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("scale", a, Op::Scale(a, c), |x| c * x)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, Op::Sigmoid(a), sigmoid)
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.map("silu", a, Op::Silu(a), |x| x * sigmoid(x))
    }

    /// Row-wise softmax of a 2-D tensor, stabilized by subtracting the row max.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (rows, cols) = self.dims2("softmax_rows", a)?;
        let mut out = self.value(a).to_vec();
        for row in out.chunks_exact_mut(cols) {
            softmax_in_place(row);
        }
        self.push("softmax_rows", vec![rows, cols], out, Op::SoftmaxRows(a), &[a])
    }

    /// Mean over one axis; the axis is removed (a rank-1 input yields `[1]`).
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(NdrError::shape("mean_axis", format!("axis {axis} out of range for {shape:?}")));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let src = self.value(a);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..][..inner];
            for i in 0..n {
                for (d, s) in dst.iter_mut().zip(&src[(o * n + i) * inner..][..inner]) {
                    *d += s;
                }
            }
            dst.iter_mut().for_each(|d| *d /= n as f64);
        }
        let mut new_shape: Vec<usize> = shape.iter().enumerate().filter(|&(i, _)| i != axis).map(|(_, &d)| d).collect();
        if new_shape.is_empty() {
            new_shape.push(1);
        }
        self.push("mean_axis", new_shape, out, Op::MeanAxis { x: a, axis }, &[a])
    }

    /// `[H, W, C] -> [C]`.
    pub fn global_avg_pool(&mut self, a: Var) -> Result<Var> {
        let (h, w, c) = self.dims3("global_avg_pool", a)?;
        let mut out = vec![0.0; c];
        for px in self.value(a).chunks_exact(c) {
            for (o, v) in out.iter_mut().zip(px) {
                *o += v;
            }
        }
        let inv = 1.0 / (h * w) as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        self.push("global_avg_pool", vec![c], out, Op::GlobalAvgPool(a), &[a])
    }

    /// Pointwise channel mixing. `x` is `[..., Cin]`, `w` is `[Cin, Cout]`,
    /// `b` is `[Cout]`; leading dimensions are kept.
    pub fn conv1x1(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (cin, cout) = self.dims2("conv1x1", w)?;
        let xs = self.shape(x).to_vec();
        if xs.last() != Some(&cin) || self.shape(b) != [cout] {
            return Err(NdrError::shape(
                "conv1x1",
                format!("input {xs:?}, weight [{cin}, {cout}], bias {:?}", self.shape(b)),
            ));
        }
        let out = kernels::conv1x1_forward(self.value(x), self.value(w), self.value(b), cin, cout);
        let mut shape = xs;
        *shape.last_mut().expect("non-empty") = cout;
        self.push("conv1x1", shape, out, Op::Conv1x1 { x, w, b }, &[x, w, b])
    }

    /// 3x3 convolution with zero padding of one pixel. `w` is `[3, 3, Cin, Cout]`.
    pub fn conv3x3(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (h, wd, cin) = self.dims3("conv3x3", x)?;
        let ws = self.shape(w).to_vec();
        let cout = match ws[..] {
            [3, 3, ci, co] if ci == cin => co,
            _ => return Err(NdrError::shape("conv3x3", format!("input {:?} vs weight {ws:?}", self.shape(x)))),
        };
        if self.shape(b) != [cout] || stride == 0 {
            return Err(NdrError::shape("conv3x3", format!("bias {:?}, stride {stride}", self.shape(b))));
        }
        let d = Conv3x3Dims { h, w: wd, cin, cout, stride };
        let out = kernels::conv3x3_forward(self.value(x), self.value(w), self.value(b), &d);
        let shape = vec![d.out_h(), d.out_w(), cout];
        self.push("conv3x3", shape, out, Op::Conv3x3 { x, w, b, stride }, &[x, w, b])
    }

    /// Nearest-neighbour 2x upsampling of `[H, W, C]`.
    pub fn upsample2(&mut self, a: Var) -> Result<Var> {
        let (h, w, c) = self.dims3("upsample2", a)?;
        let src = self.value(a);
        let mut out = vec![0.0; 4 * h * w * c];
        for y in 0..2 * h {
            for x in 0..2 * w {
                out[(y * 2 * w + x) * c..][..c].copy_from_slice(&src[((y / 2) * w + x / 2) * c..][..c]);
            }
        }
        self.push("upsample2", vec![2 * h, 2 * w, c], out, Op::Upsample2(a), &[a])
    }

    /// Multiplies every pixel of `x: [H, W, C]` by the gate `g: [C]`.
    pub fn scale_channels(&mut self, x: Var, g: Var) -> Result<Var> {
        let (h, w, c) = self.dims3("scale_channels", x)?;
        if self.shape(g) != [c] {
            return Err(NdrError::shape("scale_channels", format!("gate {:?} for {c} channels", self.shape(g))));
        }
        let gate = self.value(g);
        let out = self
            .value(x)
            .chunks_exact(c)
            .flat_map(|px| px.iter().zip(gate).map(|(a, b)| a * b))
            .collect();
        self.push("scale_channels", vec![h, w, c], out, Op::ScaleChannels(x, g), &[x, g])
    }

    /// Averaged rank-1 reconstruction from factors `[K, C]`, `[K, H]`,
    /// `[K, W]` into an `[H, W, C]` tensor.
    pub fn cp_combine(&mut self, u1: Var, u2: Var, u3: Var) -> Result<Var> {
        let (k, c) = self.dims2("cp_combine", u1)?;
        let (k2, h) = self.dims2("cp_combine", u2)?;
        let (k3, w) = self.dims2("cp_combine", u3)?;
        if k != k2 || k != k3 {
            return Err(NdrError::shape("cp_combine", format!("rank mismatch {k}/{k2}/{k3}")));
        }
        let out = kernels::cp_combine(self.value(u1), self.value(u2), self.value(u3), k, c, h, w);
        self.push("cp_combine", vec![h, w, c], out, Op::CpCombine(u1, u2, u3), &[u1, u2, u3])
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (h, w, ca) = self.dims3("concat_channels", a)?;
        let (h2, w2, cb) = self.dims3("concat_channels", b)?;
        if (h, w) != (h2, w2) {
            return Err(NdrError::shape("concat_channels", format!("{h}x{w} vs {h2}x{w2}")));
        }
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(h * w * (ca + cb));
        for (pa, pb) in va.chunks_exact(ca).zip(vb.chunks_exact(cb)) {
            out.extend_from_slice(pa);
            out.extend_from_slice(pb);
        }
        self.push("concat_channels", vec![h, w, ca + cb], out, Op::ConcatChannels(a, b), &[a, b])
    }

    /// Mean squared difference, as a `[1]` tensor.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let n = self.value(a).len() as f64;
        let s: f64 = self.value(a).iter().zip(self.value(b)).map(|(x, y)| (x - y) * (x - y)).sum();
        self.push("mse", vec![1], vec![s / n], Op::Mse(a, b), &[a, b])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().sum();
        self.push("sum", vec![1], vec![s], Op::Sum(a), &[a])
    }

    /// Fills gradients of every node with respect to the scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let node = &self.nodes[loss.0];
        if node.value.len() != 1 {
            return Err(NdrError::NotScalar(node.shape.clone()));
        }
        if !node.requires_grad {
            return Err(NdrError::Detached);
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else { continue };
            self.backprop_node(idx, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, idx: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        let needs = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, g: Vec<f64>| accumulate(grads, v, g);
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (p, q) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                let r = nodes[b.0].shape[1];
                if needs(a) {
                    // dA = dC * B^T
                    let bt = kernels::transpose(&nodes[b.0].value, q, r);
                    acc(a, kernels::matmul(gy, &bt, p, r, q));
                }
                if needs(b) {
                    // dB = A^T * dC
                    let at = kernels::transpose(&nodes[a.0].value, p, q);
                    acc(b, kernels::matmul(&at, gy, q, p, r));
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                acc(a, kernels::transpose(gy, c, r));
            }
            Op::Reshape(a) => acc(a, gy.to_vec()),
            Op::Add(a, b) => {
                if needs(a) {
                    acc(a, gy.to_vec());
                }
                if needs(b) {
                    acc(b, gy.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if needs(a) {
                    acc(a, gy.to_vec());
                }
                if needs(b) {
                    acc(b, gy.iter().map(|g| -g).collect());
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                if needs(a) {
                    acc(a, gy.iter().zip(vb).map(|(g, y)| g * y).collect());
                }
                if needs(b) {
                    acc(b, gy.iter().zip(va).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale(a, c) => acc(a, gy.iter().map(|g| g * c).collect()),
            Op::Sigmoid(a) => {
                let s = &node.value;
                acc(a, gy.iter().zip(s).map(|(g, s)| g * s * (1.0 - s)).collect());
            }
            Op::Silu(a) => {
                let x = &nodes[a.0].value;
                acc(
                    a,
                    gy.iter()
                        .zip(x)
                        .map(|(g, &x)| {
                            let s = sigmoid(x);
                            g * s * (1.0 + x * (1.0 - s))
                        })
                        .collect(),
                );
            }
            Op::SoftmaxRows(a) => {
                let cols = node.shape[1];
                let mut gx = vec![0.0; gy.len()];
                for ((grow, srow), out) in gy.chunks_exact(cols).zip(node.value.chunks_exact(cols)).zip(gx.chunks_exact_mut(cols)) {
                    let inner: f64 = grow.iter().zip(srow).map(|(g, s)| g * s).sum();
                    for ((o, g), s) in out.iter_mut().zip(grow).zip(srow) {
                        *o = s * (g - inner);
                    }
                }
                acc(a, gx);
            }
            Op::MeanAxis { x, axis } => {
                let (outer, n, inner) = split_axis(&nodes[x.0].shape, axis);
                let inv = 1.0 / n as f64;
                let mut gx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let src = &gy[o * inner..][..inner];
                    for i in 0..n {
                        for (d, s) in gx[(o * n + i) * inner..][..inner].iter_mut().zip(src) {
                            *d = s * inv;
                        }
                    }
                }
                acc(x, gx);
            }
            Op::GlobalAvgPool(a) => {
                let s = &nodes[a.0].shape;
                let inv = 1.0 / (s[0] * s[1]) as f64;
                let scaled: Vec<f64> = gy.iter().map(|g| g * inv).collect();
                acc(a, scaled.iter().copied().cycle().take(s[0] * s[1] * s[2]).collect());
            }
            Op::Conv1x1 { x, w, b } => {
                let (cin, cout) = (nodes[w.0].shape[0], nodes[w.0].shape[1]);
                let (gx, gw, gb) =
                    kernels::conv1x1_backward(&nodes[x.0].value, &nodes[w.0].value, gy, cin, cout, needs(x));
                if let Some(gx) = gx {
                    acc(x, gx);
                }
                if needs(w) {
                    acc(w, gw);
                }
                if needs(b) {
                    acc(b, gb);
                }
            }
            Op::Conv3x3 { x, w, b, stride } => {
                let xs = &nodes[x.0].shape;
                let d = Conv3x3Dims { h: xs[0], w: xs[1], cin: xs[2], cout: node.shape[2], stride };
                let (gx, gw, gb) = kernels::conv3x3_backward(&nodes[x.0].value, &nodes[w.0].value, gy, &d, needs(x));
                if let Some(gx) = gx {
                    acc(x, gx);
                }
                if needs(w) {
                    acc(w, gw);
                }
                if needs(b) {
                    acc(b, gb);
                }
            }
            Op::Upsample2(a) => {
                let s = &nodes[a.0].shape;
                let (h, w, c) = (s[0], s[1], s[2]);
                let mut gx = vec![0.0; h * w * c];
                for y in 0..2 * h {
                    for x in 0..2 * w {
                        let dst = &mut gx[((y / 2) * w + x / 2) * c..][..c];
                        for (d, g) in dst.iter_mut().zip(&gy[(y * 2 * w + x) * c..][..c]) {
                            *d += g;
                        }
                    }
                }
                acc(a, gx);
            }
            Op::ScaleChannels(x, g) => {
                let c = node.shape[2];
                let (vx, vg) = (&nodes[x.0].value, &nodes[g.0].value);
                if needs(x) {
                    acc(x, gy.chunks_exact(c).flat_map(|row| row.iter().zip(vg).map(|(a, b)| a * b)).collect());
                }
                if needs(g) {
                    let mut gg = vec![0.0; c];
                    for (grow, xrow) in gy.chunks_exact(c).zip(vx.chunks_exact(c)) {
                        for ((o, a), b) in gg.iter_mut().zip(grow).zip(xrow) {
                            *o += a * b;
                        }
                    }
                    acc(g, gg);
                }
            }
            Op::CpCombine(u1, u2, u3) => {
                let (k, c) = (nodes[u1.0].shape[0], nodes[u1.0].shape[1]);
                let (h, w) = (nodes[u2.0].shape[1], nodes[u3.0].shape[1]);
                let (g1, g2, g3) = kernels::cp_combine_backward(
                    &nodes[u1.0].value,
                    &nodes[u2.0].value,
                    &nodes[u3.0].value,
                    gy,
                    k,
                    c,
                    h,
                    w,
                );
                for (v, g) in [(u1, g1), (u2, g2), (u3, g3)] {
                    if needs(v) {
                        acc(v, g);
                    }
                }
            }
            Op::ConcatChannels(a, b) => {
                let ca = nodes[a.0].shape[2];
                let cb = nodes[b.0].shape[2];
                let mut ga = Vec::with_capacity(nodes[a.0].value.len());
                let mut gb = Vec::with_capacity(nodes[b.0].value.len());
                for px in gy.chunks_exact(ca + cb) {
                    ga.extend_from_slice(&px[..ca]);
                    gb.extend_from_slice(&px[ca..]);
                }
                if needs(a) {
                    acc(a, ga);
                }
                if needs(b) {
                    acc(b, gb);
                }
            }
            Op::Mse(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let k = 2.0 * gy[0] / va.len() as f64;
                let diff: Vec<f64> = va.iter().zip(vb).map(|(x, y)| k * (x - y)).collect();
                if needs(b) {
                    acc(b, diff.iter().map(|d| -d).collect());
                }
                if needs(a) {
                    acc(a, diff);
                }
            }
            Op::Sum(a) => acc(a, vec![gy[0]; nodes[a.0].value.len()]),
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, d)| *e += d),
        slot @ None => *slot = Some(g),
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
