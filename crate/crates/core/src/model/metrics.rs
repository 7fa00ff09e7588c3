//! The evaluation metric: squared relative L2 error, averaged over samples.

use crate::diff::{Tape, Tensor, Var};

/// Per-sample squared relative error |pred - gt|^2 / |gt|^2.
pub fn rmse(pred: &[f64], gt: &[f64]) -> f64 {
    assert_eq!(pred.len(), gt.len(), "metric shape mismatch");
    let den: f64 = gt.iter().map(|v| v * v).sum();
    assert!(den > 0.0, "relative error undefined for zero ground truth");
    let num: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g) * (p - g)).sum();
    num / den
}

/// Mean per-sample relative error over stacked rows [n, width].
pub fn batch_rmse(pred: &Tensor, gt: &Tensor) -> f64 {
    assert_eq!(pred.shape(), gt.shape(), "metric shape mismatch");
    let n = pred.shape()[0];
    let w = pred.numel() / n;
    let mut acc = 0.0;
    for i in 0..n {
        acc += rmse(&pred.data()[i * w..(i + 1) * w], &gt.data()[i * w..(i + 1) * w]);
    }
    acc / n as f64
}

/// The same mean relative error as a tape node, for use as a training loss.
/// `pred` is [batch, width]; `gt` is constant.
pub fn rmse_loss<'t>(tape: &'t Tape, pred: Var<'t>, gt: &Tensor) -> Var<'t> {
    let shape = pred.shape();
    assert_eq!(shape.as_slice(), gt.shape(), "loss shape mismatch");
    let n = shape[0];
    let w: usize = shape[1..].iter().product();
    let mut inv = Tensor::zeros(&[n]);
    for i in 0..n {
        let den: f64 = gt.data()[i * w..(i + 1) * w].iter().map(|v| v * v).sum();
        assert!(den > 0.0, "relative error undefined for zero ground truth");
        inv.data_mut()[i] = 1.0 / den;
    }
    let gt = tape.constant(gt.clone());
    let diff = pred - gt;
    let per = diff.square().reshape(&[n, w]).sum_axes(&[1], false);
    (per * tape.constant(inv)).mean_all()
}
