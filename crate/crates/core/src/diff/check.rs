//! Finite-difference validation of tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Identity helper that pins a closure to the higher-ranked signature the
/// checker needs; lets callers write plain closures at the call site.
pub fn loss_fn<F>(f: F) -> F
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    f
}

/// Max relative error between tape gradients and central differences, over
/// every coordinate of every input. `f` builds a scalar loss from leaves
/// handed to it in input order.
pub fn finite_diff_check<F>(f: F, inputs: &[Tensor], h: f64) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let eval = |points: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = points.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        f(&tape, &vars).item()
    };

    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = f(&tape, &vars);
    assert_eq!(
        loss.shape().iter().product::<usize>(),
        1,
        "check needs a scalar loss"
    );
    tape.backward(loss);

    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let grad = tape
            .grad(vars[i])
            .unwrap_or_else(|| Tensor::zeros(input.shape()));
        for c in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[c] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[c] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let ad = grad.data()[c];
            let scale = fd.abs().max(ad.abs()).max(1.0);
            worst = worst.max((fd - ad).abs() / scale);
        }
    }
    worst
}
