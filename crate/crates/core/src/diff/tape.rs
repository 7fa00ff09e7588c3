//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! A `Tape` owns the nodes of one forward computation; `Var` is a copyable
//! handle into it. Inputs always precede outputs in the node list, so the
//! backward sweep is a single reverse pass. Every op validates shapes and
//! panics if it produces a non-finite value, naming the op; recoverable
//! failures (divergence, bad data) are the callers' job to detect before
//! they reach the tape.

use std::cell::RefCell;

use super::fft;
use super::tensor::{
    broadcast_shape, expand_to, for_each_batch, matmul as t_matmul, mm_nt, mm_tn, numel,
    reduce_to_shape, sum_axes as t_sum_axes, zip_broadcast, Tensor,
};
use rustfft::num_complex::Complex;

const GELU_S: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_S * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let h = GELU_S * (x + GELU_C * x * x * x);
    let t = h.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_S * (1.0 + 3.0 * GELU_C * x * x)
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Matmul(usize, usize),
    Tanh(usize),
    Relu(usize),
    Gelu(usize),
    Square(usize),
    Scale(usize, f64),
    AddScalar(usize),
    SumAxes {
        x: usize,
        axes: Vec<usize>,
        keepdims: bool,
    },
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Reshape(usize),
    SliceAxis {
        x: usize,
        axis: usize,
        start: usize,
    },
    SwapLast2(usize),
    Rfft(usize),
    Irfft(usize),
    CmulModes {
        v: usize,
        wre: usize,
        wim: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Matmul(..) => "matmul",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Gelu(..) => "gelu",
            Op::Square(..) => "square",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::SumAxes { .. } => "sum_axes",
            Op::Concat { .. } => "concat",
            Op::Reshape(..) => "reshape",
            Op::SliceAxis { .. } => "slice_axis",
            Op::SwapLast2(..) => "swap_last2",
            Op::Rfft(..) => "rfft",
            Op::Irfft(..) => "irfft",
            Op::CmulModes { .. } => "cmul_modes",
        }
    }
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    needs_grad: bool,
    op: Op,
}

pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        let idx = self.push(value, Op::Leaf, requires_grad);
        Var { tape: self, idx }
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> usize {
        if !value.all_finite() {
            panic!("non-finite output of op `{}`", op.name());
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            op,
        });
        nodes.len() - 1
    }

    fn needs(&self, idx: usize) -> bool {
        self.nodes.borrow()[idx].needs_grad
    }

    fn value_of(&self, idx: usize) -> Tensor {
        self.nodes.borrow()[idx].value.clone()
    }

    fn unary<'t>(&'t self, x: Var<'t>, f: impl FnOnce(&Tensor) -> Tensor, op: Op) -> Var<'t> {
        let out = {
            let nodes = self.nodes.borrow();
            f(&nodes[x.idx].value)
        };
        let needs = self.needs(x.idx);
        Var {
            tape: self,
            idx: self.push(out, op, needs),
        }
    }

    fn binary<'t>(
        &'t self,
        a: Var<'t>,
        b: Var<'t>,
        f: impl FnOnce(&Tensor, &Tensor) -> Tensor,
        op: Op,
    ) -> Var<'t> {
        let out = {
            let nodes = self.nodes.borrow();
            f(&nodes[a.idx].value, &nodes[b.idx].value)
        };
        let needs = self.needs(a.idx) || self.needs(b.idx);
        Var {
            tape: self,
            idx: self.push(out, op, needs),
        }
    }

    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Var<'t> {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let out = {
            let nodes = self.nodes.borrow();
            let first = &nodes[parts[0].idx].value;
            let rank = first.rank();
            assert!(axis < rank, "concat axis {} out of range", axis);
            let mut axis_total = 0usize;
            for p in parts {
                let s = nodes[p.idx].value.shape();
                assert_eq!(s.len(), rank, "concat rank mismatch");
                for d in 0..rank {
                    if d != axis {
                        assert_eq!(s[d], first.shape()[d], "concat off-axis dim mismatch");
                    }
                }
                axis_total += s[axis];
            }
            let mut shape = first.shape().to_vec();
            shape[axis] = axis_total;
            let outer: usize = shape[..axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let mut data = vec![0.0; numel(&shape)];
            let row = axis_total * inner;
            let mut col = 0usize;
            for p in parts {
                let v = &nodes[p.idx].value;
                let pa = v.shape()[axis];
                let block = pa * inner;
                for o in 0..outer {
                    let src = &v.data()[o * block..(o + 1) * block];
                    data[o * row + col..o * row + col + block].copy_from_slice(src);
                }
                col += block;
            }
            Tensor::new(shape, data)
        };
        let needs = parts.iter().any(|p| self.needs(p.idx));
        let op = Op::Concat {
            parts: parts.iter().map(|p| p.idx).collect(),
            axis,
        };
        Var {
            tape: self,
            idx: self.push(out, op, needs),
        }
    }

    /// Reverse sweep from a scalar loss. Gradients land on every node that
    /// needs them; leaves keep theirs until the tape is dropped.
    pub fn backward(&self, loss: Var<'_>) {
        let mut nodes = self.nodes.borrow_mut();
        assert_eq!(
            nodes[loss.idx].value.numel(),
            1,
            "backward needs a scalar loss, got shape {:?}",
            nodes[loss.idx].value.shape()
        );
        let seed_shape = nodes[loss.idx].value.shape().to_vec();
        nodes[loss.idx].grad = Some(Tensor::full(&seed_shape, 1.0));
        for i in (0..=loss.idx).rev() {
            if !nodes[i].needs_grad || nodes[i].grad.is_none() {
                continue;
            }
            let (lo, hi) = nodes.split_at_mut(i);
            let node = &mut hi[0];
            let g = node.grad.as_ref().unwrap().clone();
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc_into(lo, *a, reduce_to_shape(&g, lo[*a].value.shape()));
                    acc_into(lo, *b, reduce_to_shape(&g, lo[*b].value.shape()));
                }
                Op::Sub(a, b) => {
                    acc_into(lo, *a, reduce_to_shape(&g, lo[*a].value.shape()));
                    acc_into(lo, *b, reduce_to_shape(&g.map(|v| -v), lo[*b].value.shape()));
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if lo[a].needs_grad {
                        let ga = zip_broadcast(&g, &lo[b].value, |x, y| x * y);
                        acc_into(lo, a, reduce_to_shape(&ga, lo[a].value.shape()));
                    }
                    if lo[b].needs_grad {
                        let gb = zip_broadcast(&g, &lo[a].value, |x, y| x * y);
                        acc_into(lo, b, reduce_to_shape(&gb, lo[b].value.shape()));
                    }
                }
                Op::Div(a, b) => {
                    let (a, b) = (*a, *b);
                    if lo[a].needs_grad {
                        let ga = zip_broadcast(&g, &lo[b].value, |x, y| x / y);
                        acc_into(lo, a, reduce_to_shape(&ga, lo[a].value.shape()));
                    }
                    if lo[b].needs_grad {
                        // d(a/b)/db = -a / b^2 = -(a/b)/b
                        let t = zip_broadcast(&g, &node.value, |x, y| x * y);
                        let gb = zip_broadcast(&t, &lo[b].value, |x, y| -x / y);
                        acc_into(lo, b, reduce_to_shape(&gb, lo[b].value.shape()));
                    }
                }
                Op::Matmul(a, b) => {
                    let (a, b) = (*a, *b);
                    backward_matmul(lo, a, b, &g);
                }
                Op::Tanh(x) => {
                    let gx = zip_broadcast(&g, &node.value, |gg, y| gg * (1.0 - y * y));
                    acc_into(lo, *x, gx);
                }
                Op::Relu(x) => {
                    let gx = zip_broadcast(&g, &lo[*x].value, |gg, v| if v > 0.0 { gg } else { 0.0 });
                    acc_into(lo, *x, gx);
                }
                Op::Gelu(x) => {
                    let gx = zip_broadcast(&g, &lo[*x].value, |gg, v| gg * gelu_grad(v));
                    acc_into(lo, *x, gx);
                }
                Op::Square(x) => {
                    let gx = zip_broadcast(&g, &lo[*x].value, |gg, v| 2.0 * gg * v);
                    acc_into(lo, *x, gx);
                }
                Op::Scale(x, s) => {
                    let s = *s;
                    acc_into(lo, *x, g.map(|v| v * s));
                }
                Op::AddScalar(x) => {
                    acc_into(lo, *x, g.clone());
                }
                Op::SumAxes { x, axes, keepdims } => {
                    let xs = lo[*x].value.shape().to_vec();
                    let gk = if *keepdims {
                        g.clone()
                    } else {
                        let mut kept = xs.clone();
                        for &ax in axes {
                            kept[ax] = 1;
                        }
                        g.reshaped(&kept)
                    };
                    acc_into(lo, *x, expand_to(&gk, &xs));
                }
                Op::Concat { parts, axis } => {
                    let axis = *axis;
                    let shape = node.value.shape().to_vec();
                    let outer: usize = shape[..axis].iter().product();
                    let inner: usize = shape[axis + 1..].iter().product();
                    let row = shape[axis] * inner;
                    let mut col = 0usize;
                    for &p in parts {
                        let ps = lo[p].value.shape().to_vec();
                        let block = ps[axis] * inner;
                        if lo[p].needs_grad {
                            let mut part = vec![0.0; numel(&ps)];
                            for o in 0..outer {
                                part[o * block..(o + 1) * block]
                                    .copy_from_slice(&g.data()[o * row + col..o * row + col + block]);
                            }
                            acc_into(lo, p, Tensor::new(ps, part));
                        }
                        col += block;
                    }
                }
                Op::Reshape(x) => {
                    let xs = lo[*x].value.shape().to_vec();
                    acc_into(lo, *x, g.reshaped(&xs));
                }
                Op::SliceAxis { x, axis, start } => {
                    let (x, axis, start) = (*x, *axis, *start);
                    let xs = lo[x].value.shape().to_vec();
                    let gs = g.shape();
                    let outer: usize = xs[..axis].iter().product();
                    let inner: usize = xs[axis + 1..].iter().product();
                    let mut full = Tensor::zeros(&xs);
                    let src_row = gs[axis] * inner;
                    let dst_row = xs[axis] * inner;
                    for o in 0..outer {
                        let dst = &mut full.data_mut()[o * dst_row + start * inner..];
                        dst[..src_row].copy_from_slice(&g.data()[o * src_row..(o + 1) * src_row]);
                    }
                    acc_into(lo, x, full);
                }
                Op::SwapLast2(x) => {
                    acc_into(lo, *x, swap_last2(&g));
                }
                Op::Rfft(x) => {
                    acc_into(lo, *x, rfft_backward(&g, lo[*x].value.shape()));
                }
                Op::Irfft(x) => {
                    acc_into(lo, *x, irfft_backward(&g, lo[*x].value.shape()));
                }
                Op::CmulModes { v, wre, wim } => {
                    let (v, wre, wim) = (*v, *wre, *wim);
                    backward_cmul(lo, v, wre, wim, &g);
                }
            }
        }
    }

    pub fn grad(&self, v: Var<'_>) -> Option<Tensor> {
        self.nodes.borrow()[v.idx].grad.clone()
    }
}

fn acc_into(nodes: &mut [Node], idx: usize, contrib: Tensor) {
    if !nodes[idx].needs_grad {
        return;
    }
    match &mut nodes[idx].grad {
        Some(g) => {
            assert_eq!(g.shape(), contrib.shape(), "gradient shape drift");
            for (x, y) in g.data_mut().iter_mut().zip(contrib.data()) {
                *x += y;
            }
        }
        slot @ None => *slot = Some(contrib),
    }
}

fn backward_matmul(nodes: &mut [Node], a: usize, b: usize, g: &Tensor) {
    let (ashape, bshape) = (nodes[a].value.shape().to_vec(), nodes[b].value.shape().to_vec());
    let (ar, br) = (ashape.len(), bshape.len());
    let (m, k) = (ashape[ar - 2], ashape[ar - 1]);
    let n = bshape[br - 1];
    let lead = broadcast_shape(&ashape[..ar - 2], &bshape[..br - 2]).unwrap();
    let need_a = nodes[a].needs_grad;
    let need_b = nodes[b].needs_grad;
    let mut da = if need_a { Some(Tensor::zeros(&ashape)) } else { None };
    let mut db = if need_b { Some(Tensor::zeros(&bshape)) } else { None };
    {
        let av = nodes[a].value.data();
        let bv = nodes[b].value.data();
        for_each_batch(&lead, &ashape[..ar - 2], &bshape[..br - 2], |bi, oa, ob| {
            let gblock = &g.data()[bi * m * n..(bi + 1) * m * n];
            if let Some(da) = da.as_mut() {
                mm_nt(
                    gblock,
                    &bv[ob * k * n..(ob + 1) * k * n],
                    &mut da.data_mut()[oa * m * k..(oa + 1) * m * k],
                    m,
                    n,
                    k,
                );
            }
            if let Some(db) = db.as_mut() {
                mm_tn(
                    &av[oa * m * k..(oa + 1) * m * k],
                    gblock,
                    &mut db.data_mut()[ob * k * n..(ob + 1) * k * n],
                    m,
                    k,
                    n,
                );
            }
        });
    }
    if let Some(da) = da {
        acc_into(nodes, a, da);
    }
    if let Some(db) = db {
        acc_into(nodes, b, db);
    }
}

fn backward_cmul(nodes: &mut [Node], v: usize, wre: usize, wim: usize, g: &Tensor) {
    let vs = nodes[v].value.shape().to_vec();
    let ws = nodes[wre].value.shape().to_vec();
    let (bsz, ci, modes) = (vs[0], vs[1], vs[2]);
    let co = ws[0];
    let need_v = nodes[v].needs_grad;
    let need_w = nodes[wre].needs_grad || nodes[wim].needs_grad;
    let mut dv = if need_v { Some(Tensor::zeros(&vs)) } else { None };
    let mut dre = if need_w { Some(Tensor::zeros(&ws)) } else { None };
    let mut dim = if need_w { Some(Tensor::zeros(&ws)) } else { None };
    {
        let vv = nodes[v].value.data();
        let re = nodes[wre].value.data();
        let im = nodes[wim].value.data();
        let gd = g.data();
        for b in 0..bsz {
            for o in 0..co {
                for i in 0..ci {
                    let vb = (b * ci + i) * modes * 2;
                    let wb = (o * ci + i) * modes;
                    let ob = (b * co + o) * modes * 2;
                    for mo in 0..modes {
                        let (gr, gi) = (gd[ob + 2 * mo], gd[ob + 2 * mo + 1]);
                        let (vr, vi) = (vv[vb + 2 * mo], vv[vb + 2 * mo + 1]);
                        let (wr, wi) = (re[wb + mo], im[wb + mo]);
                        if let Some(dv) = dv.as_mut() {
                            let d = dv.data_mut();
                            d[vb + 2 * mo] += gr * wr + gi * wi;
                            d[vb + 2 * mo + 1] += -gr * wi + gi * wr;
                        }
                        if let Some(dre) = dre.as_mut() {
                            dre.data_mut()[wb + mo] += gr * vr + gi * vi;
                        }
                        if let Some(dim) = dim.as_mut() {
                            dim.data_mut()[wb + mo] += -gr * vi + gi * vr;
                        }
                    }
                }
            }
        }
    }
    if let Some(dv) = dv {
        acc_into(nodes, v, dv);
    }
    if let Some(dre) = dre {
        acc_into(nodes, wre, dre);
    }
    if let Some(dim) = dim {
        acc_into(nodes, wim, dim);
    }
}

fn swap_last2(x: &Tensor) -> Tensor {
    let r = x.rank();
    assert!(r >= 2, "swap_last2 needs rank >= 2");
    let (m, n) = (x.shape()[r - 2], x.shape()[r - 1]);
    let batch = x.numel() / (m * n);
    let mut shape = x.shape().to_vec();
    shape.swap(r - 2, r - 1);
    let mut data = vec![0.0; x.numel()];
    for b in 0..batch {
        let src = &x.data()[b * m * n..(b + 1) * m * n];
        let dst = &mut data[b * m * n..(b + 1) * m * n];
        for i in 0..m {
            for j in 0..n {
                dst[j * m + i] = src[i * n + j];
            }
        }
    }
    Tensor::new(shape, data)
}

fn rfft_rows(x: &Tensor) -> Tensor {
    let n = *x.shape().last().expect("rfft on rank 0");
    assert!(n.is_power_of_two() && n >= 2, "rfft length {} must be a power of two", n);
    let nf = n / 2 + 1;
    let rows = x.numel() / n;
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = nf;
    shape.push(2);
    let mut data = Vec::with_capacity(rows * nf * 2);
    for r in 0..rows {
        let spec = fft::rfft(&x.data()[r * n..(r + 1) * n]);
        for c in spec {
            data.push(c.re);
            data.push(c.im);
        }
    }
    Tensor::new(shape, data)
}

fn irfft_rows(x: &Tensor) -> Tensor {
    let r = x.rank();
    assert!(r >= 2 && x.shape()[r - 1] == 2, "irfft input must end in a re/im axis");
    let nf = x.shape()[r - 2];
    let n = 2 * (nf - 1);
    let rows = x.numel() / (nf * 2);
    let mut shape = x.shape()[..r - 1].to_vec();
    *shape.last_mut().unwrap() = n;
    let mut data = Vec::with_capacity(rows * n);
    let mut spec = vec![Complex::new(0.0, 0.0); nf];
    for row in 0..rows {
        let src = &x.data()[row * nf * 2..(row + 1) * nf * 2];
        for j in 0..nf {
            spec[j] = Complex::new(src[2 * j], src[2 * j + 1]);
        }
        data.extend_from_slice(&fft::irfft(&spec, n));
    }
    Tensor::new(shape, data)
}

fn rfft_backward(g: &Tensor, xshape: &[usize]) -> Tensor {
    // out_j = sum_x x cos - i sum_x x sin; pull back via one unnormalized
    // forward FFT of the conjugated, zero-padded cotangent per row.
    let n = *xshape.last().unwrap();
    let nf = n / 2 + 1;
    let rows = numel(xshape) / n;
    let mut data = Vec::with_capacity(numel(xshape));
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for r in 0..rows {
        let src = &g.data()[r * nf * 2..(r + 1) * nf * 2];
        for v in buf.iter_mut() {
            *v = Complex::new(0.0, 0.0);
        }
        for j in 0..nf {
            buf[j] = Complex::new(src[2 * j], -src[2 * j + 1]);
        }
        fft::fft_forward(&mut buf);
        data.extend(buf.iter().map(|c| c.re));
    }
    Tensor::new(xshape.to_vec(), data)
}

fn irfft_backward(g: &Tensor, xshape: &[usize]) -> Tensor {
    // Forward mixes bin j into every sample with weight 2/n (1/n at the two
    // real edge bins); the adjoint is an rfft scaled accordingly, with the
    // edge imaginary parts fixed at zero because the forward ignores them.
    let nf = xshape[xshape.len() - 2];
    let n = 2 * (nf - 1);
    let rows = numel(xshape) / (nf * 2);
    let mut data = Vec::with_capacity(numel(xshape));
    for r in 0..rows {
        let spec = fft::rfft(&g.data()[r * n..(r + 1) * n]);
        for (j, c) in spec.iter().enumerate() {
            let edge = j == 0 || j == nf - 1;
            let s = if edge { 1.0 } else { 2.0 } / n as f64;
            data.push(s * c.re);
            data.push(if edge { 0.0 } else { s * c.im });
        }
    }
    Tensor::new(xshape.to_vec(), data)
}

fn cmul_forward(v: &Tensor, wre: &Tensor, wim: &Tensor) -> Tensor {
    let vs = v.shape();
    let ws = wre.shape();
    assert_eq!(vs.len(), 4, "cmul_modes input must be [batch, ci, modes, 2]");
    assert_eq!(vs[3], 2, "cmul_modes input must end in a re/im axis");
    assert_eq!(ws.len(), 3, "cmul_modes weights must be [co, ci, modes]");
    assert_eq!(wre.shape(), wim.shape(), "cmul_modes weight halves must agree");
    assert_eq!(ws[1], vs[1], "cmul_modes channel mismatch");
    assert_eq!(ws[2], vs[2], "cmul_modes mode count mismatch");
    let (bsz, ci, modes) = (vs[0], vs[1], vs[2]);
    let co = ws[0];
    let mut out = Tensor::zeros(&[bsz, co, modes, 2]);
    let vv = v.data();
    let re = wre.data();
    let im = wim.data();
    for b in 0..bsz {
        for o in 0..co {
            for i in 0..ci {
                let vb = (b * ci + i) * modes * 2;
                let wb = (o * ci + i) * modes;
                let ob = (b * co + o) * modes * 2;
                let d = out.data_mut();
                for mo in 0..modes {
                    let (vr, vi) = (vv[vb + 2 * mo], vv[vb + 2 * mo + 1]);
                    let (wr, wi) = (re[wb + mo], im[wb + mo]);
                    d[ob + 2 * mo] += vr * wr - vi * wi;
                    d[ob + 2 * mo + 1] += vr * wi + vi * wr;
                }
            }
        }
    }
    out
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.idx)
    }

    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.idx].value.item()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.idx].value.shape().to_vec()
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.tape.grad(*self)
    }

    pub fn matmul(self, o: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self, o, |a, b| t_matmul(a, b), Op::Matmul(self.idx, o.idx))
    }

    pub fn tanh(self) -> Var<'t> {
        self.tape.unary(self, |x| x.map(f64::tanh), Op::Tanh(self.idx))
    }

    pub fn relu(self) -> Var<'t> {
        self.tape
            .unary(self, |x| x.map(|v| v.max(0.0)), Op::Relu(self.idx))
    }

    pub fn gelu(self) -> Var<'t> {
        self.tape.unary(self, |x| x.map(gelu), Op::Gelu(self.idx))
    }

    pub fn square(self) -> Var<'t> {
        self.tape
            .unary(self, |x| x.map(|v| v * v), Op::Square(self.idx))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.tape
            .unary(self, |x| x.map(|v| v * s), Op::Scale(self.idx, s))
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        self.tape
            .unary(self, |x| x.map(|v| v + s), Op::AddScalar(self.idx))
    }

    pub fn sum_axes(self, axes: &[usize], keepdims: bool) -> Var<'t> {
        let op = Op::SumAxes {
            x: self.idx,
            axes: axes.to_vec(),
            keepdims,
        };
        self.tape.unary(self, |x| t_sum_axes(x, axes, keepdims), op)
    }

    pub fn sum_all(self) -> Var<'t> {
        let rank = self.shape().len();
        let axes: Vec<usize> = (0..rank).collect();
        self.sum_axes(&axes, false)
    }

    pub fn mean_all(self) -> Var<'t> {
        let n = self.tape.nodes.borrow()[self.idx].value.numel();
        self.sum_all().scale(1.0 / n as f64)
    }

    pub fn mean_axis(self, axis: usize, keepdims: bool) -> Var<'t> {
        let len = self.shape()[axis];
        self.sum_axes(&[axis], keepdims).scale(1.0 / len as f64)
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        self.tape
            .unary(self, |x| x.reshaped(shape), Op::Reshape(self.idx))
    }

    pub fn slice_axis(self, axis: usize, start: usize, len: usize) -> Var<'t> {
        let op = Op::SliceAxis {
            x: self.idx,
            axis,
            start,
        };
        self.tape.unary(
            self,
            |x| {
                let xs = x.shape();
                assert!(axis < xs.len() && start + len <= xs[axis], "slice out of range");
                let outer: usize = xs[..axis].iter().product();
                let inner: usize = xs[axis + 1..].iter().product();
                let mut shape = xs.to_vec();
                shape[axis] = len;
                let mut data = Vec::with_capacity(numel(&shape));
                let row = xs[axis] * inner;
                for o in 0..outer {
                    let base = o * row + start * inner;
                    data.extend_from_slice(&x.data()[base..base + len * inner]);
                }
                Tensor::new(shape, data)
            },
            op,
        )
    }

    pub fn swap_last2(self) -> Var<'t> {
        self.tape
            .unary(self, swap_last2, Op::SwapLast2(self.idx))
    }

    pub fn rfft(self) -> Var<'t> {
        self.tape.unary(self, rfft_rows, Op::Rfft(self.idx))
    }

    pub fn irfft(self) -> Var<'t> {
        self.tape.unary(self, irfft_rows, Op::Irfft(self.idx))
    }

    pub fn cmul_modes(self, wre: Var<'t>, wim: Var<'t>) -> Var<'t> {
        let out = {
            let nodes = self.tape.nodes.borrow();
            cmul_forward(
                &nodes[self.idx].value,
                &nodes[wre.idx].value,
                &nodes[wim.idx].value,
            )
        };
        let needs = self.tape.needs(self.idx) || self.tape.needs(wre.idx) || self.tape.needs(wim.idx);
        let op = Op::CmulModes {
            v: self.idx,
            wre: wre.idx,
            wim: wim.idx,
        };
        Var {
            tape: self.tape,
            idx: self.tape.push(out, op, needs),
        }
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self, o, |a, b| zip_broadcast(a, b, |x, y| x + y), Op::Add(self.idx, o.idx))
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self, o, |a, b| zip_broadcast(a, b, |x, y| x - y), Op::Sub(self.idx, o.idx))
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self, o, |a, b| zip_broadcast(a, b, |x, y| x * y), Op::Mul(self.idx, o.idx))
    }
}

impl<'t> std::ops::Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self, o, |a, b| zip_broadcast(a, b, |x, y| x / y), Op::Div(self.idx, o.idx))
    }
}

impl<'t> std::ops::Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, s: f64) -> Var<'t> {
        self.add_scalar(s)
    }
}

impl<'t> std::ops::Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, s: f64) -> Var<'t> {
        self.add_scalar(-s)
    }
}

impl<'t> std::ops::Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, s: f64) -> Var<'t> {
        self.scale(s)
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![2], vec![2.0, 3.0]), true);
        let b = tape.leaf(Tensor::new(vec![2], vec![5.0, 7.0]), true);
        let loss = (a * b).sum_all();
        tape.backward(loss);
        assert_eq!(tape.grad(a).unwrap().data(), &[5.0, 7.0]);
        assert_eq!(tape.grad(b).unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0), true);
        let y = (x + x).sum_all();
        tape.backward(y);
        assert_eq!(tape.grad(x).unwrap().item(), 2.0);
    }

    #[test]
    fn tanh_grad_at_zero_is_one() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0), true);
        let y = x.tanh().sum_all();
        tape.backward(y);
        assert!((tape.grad(x).unwrap().item() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matmul_grads_match_hand_result() {
        // loss = sum(A B), dA = ones @ B^T, dB = A^T @ ones
        let tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]), true);
        let b = tape.leaf(Tensor::new(vec![2, 2], vec![5.0, 6.0, 7.0, 8.0]), true);
        let loss = a.matmul(b).sum_all();
        tape.backward(loss);
        assert_eq!(tape.grad(a).unwrap().data(), &[11.0, 15.0, 11.0, 15.0]);
        assert_eq!(tape.grad(b).unwrap().data(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn broadcast_bias_grad_reduces() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[3, 2]), true);
        let b = tape.leaf(Tensor::new(vec![2], vec![1.0, -1.0]), true);
        let loss = (x + b).sum_all();
        tape.backward(loss);
        assert_eq!(tape.grad(b).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn rfft_irfft_roundtrip_on_tape() {
        let tape = Tape::new();
        let vals: Vec<f64> = (0..64).map(|i| ((i * 13 + 5) % 17) as f64 / 5.0).collect();
        let x = tape.leaf(Tensor::new(vec![1, 64], vals.clone()), true);
        let y = x.rfft().irfft();
        let out = y.value();
        for (a, b) in vals.iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let loss = y.sum_all();
        tape.backward(loss);
        // d(irfft(rfft(x)))/dx = identity, so the grad of sum is all ones
        for v in tape.grad(x).unwrap().data() {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn concat_splits_gradient() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::new(vec![1, 2], vec![1.0, 2.0]), true);
        let b = tape.leaf(Tensor::new(vec![1, 3], vec![3.0, 4.0, 5.0]), true);
        let c = tape.concat(&[a, b], 1);
        assert_eq!(c.value().data(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let w = tape.constant(Tensor::new(vec![1, 5], vec![1.0, 2.0, 3.0, 4.0, 5.0]));
        let loss = (c * w).sum_all();
        tape.backward(loss);
        assert_eq!(tape.grad(a).unwrap().data(), &[1.0, 2.0]);
        assert_eq!(tape.grad(b).unwrap().data(), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn slice_scatter_grad() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]), true);
        let y = x.slice_axis(1, 1, 2).sum_all();
        tape.backward(y);
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "non-finite")]
    fn non_finite_output_panics() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(1.0), false);
        let b = tape.leaf(Tensor::scalar(0.0), false);
        let _ = a / b;
    }

    #[test]
    fn swap_last2_transposes() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![2, 3], (1..=6).map(f64::from).collect()), true);
        let y = x.swap_last2();
        assert_eq!(y.shape(), vec![3, 2]);
        assert_eq!(y.value().data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let w = tape.constant(Tensor::new(vec![3, 2], (1..=6).map(f64::from).collect()));
        tape.backward((y * w).sum_all());
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
    }
}
