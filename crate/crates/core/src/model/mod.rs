//! Neural operator surrogates and their shared training loop.
//!
//! Two architectures cover the benchmark tasks: a spectral network for
//! periodic 1-d problems and a branch-trunk network for everything else.
//! `OperatorModel` is the arch-erased handle the training loop, transfer
//! stage, and CLI all work through.

pub mod deeponet;
pub mod fno;
pub mod metrics;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::diff::{Tape, Tensor, Var};
use crate::pde::grid::{Dataset, Domain, GridFunction};

pub use deeponet::{DeepOnet, DeepOnetHyper, DeepOnetVars};
pub use fno::{ChanAffine, Fno1d, FnoHyper, FnoVars, SpectralBlock};
pub use metrics::{batch_rmse, rmse, rmse_loss};
pub use train::{train_supervised, LrSchedule, ReplaySource, TrainConfig, TrainReport};

/// Scalar input normalization, fit once on the pretraining inputs and kept
/// frozen through transfer so source and target fields share one scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mu: f64,
    pub sigma: f64,
    pub fitted: bool,
}

impl Standardizer {
    pub fn identity() -> Standardizer {
        Standardizer {
            mu: 0.0,
            sigma: 1.0,
            fitted: false,
        }
    }

    /// Mean and population standard deviation over every entry.
    pub fn fit(&mut self, values: &Tensor) {
        let n = values.numel() as f64;
        assert!(n > 0.0, "cannot fit a standardizer on no data");
        let mu = values.data().iter().sum::<f64>() / n;
        let var = values.data().iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        self.mu = mu;
        self.sigma = var.sqrt().max(1e-12);
        self.fitted = true;
    }
}

/// Rows predicted per tape when evaluating without gradients; bounds the
/// intermediate-activation footprint.
const EVAL_CHUNK: usize = 16;

#[derive(Clone, Debug)]
pub enum OperatorModel {
    Fno(Fno1d),
    DeepOnet(DeepOnet),
}

impl OperatorModel {
    pub fn arch(&self) -> &'static str {
        match self {
            OperatorModel::Fno(_) => "fno1d",
            OperatorModel::DeepOnet(_) => "deeponet",
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            OperatorModel::Fno(m) => m.params(),
            OperatorModel::DeepOnet(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            OperatorModel::Fno(m) => m.params_mut(),
            OperatorModel::DeepOnet(m) => m.params_mut(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            OperatorModel::Fno(m) => m.param_names(),
            OperatorModel::DeepOnet(m) => m.param_names(),
        }
    }

    /// True at head parameters, the ones finetuning keeps at full rate.
    pub fn head_mask(&self) -> Vec<bool> {
        match self {
            OperatorModel::Fno(m) => m.head_mask(),
            OperatorModel::DeepOnet(m) => m.head_mask(),
        }
    }

    pub fn stats(&self) -> &Standardizer {
        match self {
            OperatorModel::Fno(m) => &m.stats,
            OperatorModel::DeepOnet(m) => &m.stats,
        }
    }

    pub fn stats_mut(&mut self) -> &mut Standardizer {
        match self {
            OperatorModel::Fno(m) => &mut m.stats,
            OperatorModel::DeepOnet(m) => &mut m.stats,
        }
    }

    /// Fit input normalization on a training split. Called when training from
    /// fresh weights; transfer keeps the source statistics instead.
    pub fn fit_standardizer(&mut self, train: &Dataset) {
        let k = train.stack_k();
        self.stats_mut().fit(&k);
    }

    pub fn k_domain(&self) -> Domain {
        match self {
            OperatorModel::Fno(m) => Domain::Interval { n: m.hyper.nx },
            OperatorModel::DeepOnet(m) => m.hyper.k_domain,
        }
    }

    pub fn u_domain(&self) -> Domain {
        match self {
            OperatorModel::Fno(m) => Domain::Interval { n: m.hyper.nx },
            OperatorModel::DeepOnet(m) => m.hyper.u_domain,
        }
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundModel<'t> {
        match self {
            OperatorModel::Fno(m) => BoundModel::Fno(m.bind(tape, trainable)),
            OperatorModel::DeepOnet(m) => BoundModel::DeepOnet(m.bind(tape, trainable)),
        }
    }

    pub fn predict(&self, k: &GridFunction) -> GridFunction {
        match self {
            OperatorModel::Fno(m) => m.predict(k),
            OperatorModel::DeepOnet(m) => m.predict(k),
        }
    }

    /// Gradient-free batched prediction, chunked to bound memory.
    /// Input [n, k width], output [n, output width].
    pub fn predict_rows(&self, rows: &Tensor) -> Tensor {
        let n = rows.shape()[0];
        let kw = rows.shape()[1];
        let uw = self.u_domain().numel();
        let mut out = Vec::with_capacity(n * uw);
        let mut start = 0;
        while start < n {
            let len = EVAL_CHUNK.min(n - start);
            let chunk = Tensor::from_fn(&[len, kw], |i| rows.data()[start * kw + i]);
            let tape = Tape::new();
            let pred = self.bind(&tape, false).forward_rows(&chunk).value();
            out.extend_from_slice(pred.data());
            start += len;
        }
        Tensor::new(vec![n, uw], out)
    }

    /// Mean relative squared error over a dataset.
    pub fn dataset_rmse(&self, ds: &Dataset) -> f64 {
        assert!(!ds.is_empty(), "cannot score an empty dataset");
        let pred = self.predict_rows(&ds.stack_k());
        batch_rmse(&pred, &ds.stack_u())
    }
}

pub enum BoundModel<'t> {
    Fno(FnoVars<'t>),
    DeepOnet(DeepOnetVars<'t>),
}

impl<'t> BoundModel<'t> {
    /// Prediction from a plain [batch, k width] tensor of raw inputs.
    pub fn forward_rows(&self, k_rows: &Tensor) -> Var<'t> {
        match self {
            BoundModel::Fno(m) => m.forward_rows(k_rows),
            BoundModel::DeepOnet(m) => m.forward_rows(k_rows),
        }
    }

    /// Prediction from on-tape input rows; gradients flow into the input.
    pub fn forward(&self, k_rows: Var<'t>) -> Var<'t> {
        match self {
            BoundModel::Fno(m) => m.forward(k_rows),
            BoundModel::DeepOnet(m) => m.forward(k_rows),
        }
    }

    /// Gradients in canonical parameter order after a backward pass.
    pub fn grads(&self) -> Vec<Tensor> {
        match self {
            BoundModel::Fno(m) => m.grads(),
            BoundModel::DeepOnet(m) => m.grads(),
        }
    }
}
