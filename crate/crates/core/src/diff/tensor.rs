//! Dense row-major f64 tensors with trailing-axis broadcasting.
//!
//! Shapes are runtime vectors; rank 0 is a scalar with one element. Binary
//! ops align shapes from the right, and each pair of dimensions must be equal
//! or 1. All reductions run in a fixed left-to-right element order so results
//! never depend on scheduling.

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            numel(&shape),
            data.len(),
            "shape {:?} does not hold {} elements",
            shape,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel(shape)],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; numel(shape)],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: (0..numel(shape)).map(f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Single element of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshaped(&self, shape: &[usize]) -> Tensor {
        assert_eq!(
            numel(shape),
            self.data.len(),
            "reshape {:?} -> {:?} changes element count",
            self.shape,
            shape
        );
        Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum of squares, accumulated in index order.
    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Broadcast result shape, or None if the shapes are incompatible.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < a.len() { a[a.len() - 1 - i] } else { 1 };
        let db = if i < b.len() { b[b.len() - 1 - i] } else { 1 };
        out[rank - 1 - i] = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return None;
        };
    }
    Some(out)
}

/// Row-major strides of `shape` aligned to `out`'s rank, with stride 0 on
/// broadcast (size-1 or missing) axes.
fn bcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let mut natural = vec![0usize; shape.len()];
    let mut s = 1usize;
    for i in (0..shape.len()).rev() {
        natural[i] = s;
        s *= shape[i];
    }
    let mut strides = vec![0usize; out.len()];
    let offset = out.len() - shape.len();
    for i in 0..shape.len() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { natural[i] };
    }
    strides
}

/// Elementwise binary op with broadcasting.
pub fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape == b.shape {
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        return Tensor {
            shape: a.shape.clone(),
            data,
        };
    }
    let out_shape = broadcast_shape(&a.shape, &b.shape)
        .unwrap_or_else(|| panic!("cannot broadcast {:?} with {:?}", a.shape, b.shape));
    let rank = out_shape.len();
    let n = numel(&out_shape);
    let sa = bcast_strides(&a.shape, &out_shape);
    let sb = bcast_strides(&b.shape, &out_shape);
    let mut data = Vec::with_capacity(n);
    if rank == 0 {
        data.push(f(a.data[0], b.data[0]));
        return Tensor {
            shape: out_shape,
            data,
        };
    }
    let inner = out_shape[rank - 1];
    let (sal, sbl) = (sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank - 1];
    let (mut oa, mut ob) = (0usize, 0usize);
    for _ in 0..n / inner {
        for j in 0..inner {
            data.push(f(a.data[oa + j * sal], b.data[ob + j * sbl]));
        }
        for ax in (0..rank - 1).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
            oa -= sa[ax] * out_shape[ax];
            ob -= sb[ax] * out_shape[ax];
        }
    }
    Tensor {
        shape: out_shape,
        data,
    }
}

/// Sum `g` down to `target` shape, undoing a broadcast. Inverse of the
/// expansion that `zip_broadcast` performs on the smaller operand.
pub fn reduce_to_shape(g: &Tensor, target: &[usize]) -> Tensor {
    if g.shape() == target {
        return g.clone();
    }
    let mut out = Tensor::zeros(target);
    let rank = g.shape.len();
    let st = bcast_strides(target, &g.shape);
    if rank == 0 {
        out.data[0] += g.data[0];
        return out;
    }
    let inner = g.shape[rank - 1];
    let stl = st[rank - 1];
    let mut idx = vec![0usize; rank - 1];
    let mut ot = 0usize;
    let mut pos = 0usize;
    for _ in 0..g.data.len() / inner {
        for j in 0..inner {
            out.data[ot + j * stl] += g.data[pos + j];
        }
        pos += inner;
        for ax in (0..rank - 1).rev() {
            idx[ax] += 1;
            ot += st[ax];
            if idx[ax] < g.shape[ax] {
                break;
            }
            idx[ax] = 0;
            ot -= st[ax] * g.shape[ax];
        }
    }
    out
}

/// Materialize `g` at the broadcast shape `target`.
pub fn expand_to(g: &Tensor, target: &[usize]) -> Tensor {
    if g.shape() == target {
        return g.clone();
    }
    zip_broadcast(&Tensor::zeros(target), g, |_, y| y)
}

pub fn add_assign(a: &mut Tensor, b: &Tensor) {
    assert_eq!(a.shape, b.shape, "add_assign shape mismatch");
    for (x, y) in a.data.iter_mut().zip(&b.data) {
        *x += y;
    }
}

// Inner matrix kernels. All accumulate into `c`, which callers zero or reuse
// deliberately (gradient accumulation relies on the += semantics).

/// c[m,n] += a[m,k] b[k,n]
pub(crate) fn mm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                crow[j] += aik * brow[j];
            }
        }
    }
}

/// c[m,n] += a[m,k] b[n,k]^T
pub(crate) fn mm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for kk in 0..k {
                acc += arow[kk] * brow[kk];
            }
            crow[j] += acc;
        }
    }
}

/// c[k,n] += a[m,k]^T b[m,n]
pub(crate) fn mm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            let crow = &mut c[kk * n..(kk + 1) * n];
            for j in 0..n {
                crow[j] += aik * brow[j];
            }
        }
    }
}

/// Batched matrix product. The last two axes are matrix dimensions, leading
/// axes broadcast. Both operands must have rank >= 2.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (ar, br) = (a.rank(), b.rank());
    assert!(ar >= 2 && br >= 2, "matmul needs rank >= 2, got {:?} x {:?}", a.shape, b.shape);
    let (m, ka) = (a.shape[ar - 2], a.shape[ar - 1]);
    let (kb, n) = (b.shape[br - 2], b.shape[br - 1]);
    assert_eq!(ka, kb, "matmul inner dims differ: {:?} x {:?}", a.shape, b.shape);
    let lead = broadcast_shape(&a.shape[..ar - 2], &b.shape[..br - 2])
        .unwrap_or_else(|| panic!("matmul batch dims incompatible: {:?} x {:?}", a.shape, b.shape));
    let mut out_shape = lead.clone();
    out_shape.extend_from_slice(&[m, n]);
    let mut out = Tensor::zeros(&out_shape);
    for_each_batch(&lead, &a.shape[..ar - 2], &b.shape[..br - 2], |bi, oa, ob| {
        mm_nn(
            &a.data[oa * m * ka..],
            &b.data[ob * kb * n..],
            &mut out.data[bi * m * n..(bi + 1) * m * n],
            m,
            ka,
            n,
        );
    });
    out
}

/// Walk the broadcast batch index space, yielding (flat out batch, a batch,
/// b batch) offsets in units of one matrix.
pub(crate) fn for_each_batch(
    lead: &[usize],
    a_lead: &[usize],
    b_lead: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let count = numel(lead);
    let sa = bcast_batch_strides(a_lead, lead);
    let sb = bcast_batch_strides(b_lead, lead);
    let rank = lead.len();
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    for bi in 0..count {
        f(bi, oa, ob);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < lead[ax] {
                break;
            }
            idx[ax] = 0;
            oa -= sa[ax] * lead[ax];
            ob -= sb[ax] * lead[ax];
        }
    }
}

/// Strides over whole matrices for broadcast batch walking.
fn bcast_batch_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    bcast_strides(shape, out)
}

/// Sum over the given axes. Kept axes of the output have size 1 when
/// `keepdims`, otherwise the axes are dropped (a full reduction yields a
/// scalar of rank 0).
pub fn sum_axes(x: &Tensor, axes: &[usize], keepdims: bool) -> Tensor {
    let rank = x.rank();
    for &ax in axes {
        assert!(ax < rank, "axis {} out of range for shape {:?}", ax, x.shape);
    }
    let mut kept = x.shape.clone();
    for &ax in axes {
        kept[ax] = 1;
    }
    let mut out = Tensor::zeros(&kept);
    let st = bcast_strides(&kept, &x.shape);
    if rank == 0 {
        out.data[0] = x.data[0];
    } else {
        let inner = x.shape[rank - 1];
        let stl = st[rank - 1];
        let mut idx = vec![0usize; rank - 1];
        let mut ot = 0usize;
        let mut pos = 0usize;
        for _ in 0..x.data.len() / inner {
            for j in 0..inner {
                out.data[ot + j * stl] += x.data[pos + j];
            }
            pos += inner;
            for ax in (0..rank - 1).rev() {
                idx[ax] += 1;
                ot += st[ax];
                if idx[ax] < x.shape[ax] {
                    break;
                }
                idx[ax] = 0;
                ot -= st[ax] * x.shape[ax];
            }
        }
    }
    if keepdims {
        out
    } else {
        let squeezed: Vec<usize> = (0..rank)
            .filter(|i| !axes.contains(i))
            .map(|i| x.shape[i])
            .collect();
        out.reshaped(&squeezed)
    }
}
