//! Transport cost on pairs of discretized fields.
//!
//! Squared Euclidean distance on the concatenated (k, u) vector, divided by
//! the total number of entries so the weight hyperparameters keep their
//! meaning across resolutions.

use crate::diff::{Tensor, Var};
use crate::pde::grid::SamplePair;

/// Dimension-normalized squared L2 between two pairs.
pub fn transport_cost(x: &SamplePair, y: &SamplePair) -> f64 {
    assert_eq!(x.k.domain, y.k.domain, "input grids differ");
    assert_eq!(x.u.domain, y.u.domain, "solution grids differ");
    let n = (x.k.values.numel() + x.u.values.numel()) as f64;
    let sq = |a: &Tensor, b: &Tensor| {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
    };
    (sq(&x.k.values, &y.k.values) + sq(&x.u.values, &y.u.values)) / n
}

/// Mean transport cost between batched rows, host side.
/// All four tensors are [n, width] with matching widths per component.
pub fn batch_cost(k_a: &Tensor, u_a: &Tensor, k_b: &Tensor, u_b: &Tensor) -> f64 {
    assert_eq!(k_a.shape(), k_b.shape(), "input rows differ in shape");
    assert_eq!(u_a.shape(), u_b.shape(), "solution rows differ in shape");
    assert_eq!(k_a.shape()[0], u_a.shape()[0], "row counts differ across components");
    let rows = k_a.shape()[0] as f64;
    let n = (k_a.shape()[1] + u_a.shape()[1]) as f64;
    let sq = |a: &Tensor, b: &Tensor| {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
    };
    (sq(k_a, k_b) + sq(u_a, u_b)) / (n * rows)
}

/// Mean transport cost between on-tape batches, as a scalar node. Rows are
/// [batch, n_k] and [batch, n_u]; gradients flow into all four arguments.
pub fn batch_cost_var<'t>(k_a: Var<'t>, u_a: Var<'t>, k_b: Var<'t>, u_b: Var<'t>) -> Var<'t> {
    let nk = k_a.shape()[1];
    let nu = u_a.shape()[1];
    let dk = (k_a - k_b).square().sum_axes(&[1], false);
    let du = (u_a - u_b).square().sum_axes(&[1], false);
    (dk + du).scale(1.0 / (nk + nu) as f64).mean_all()
}
