//! 1-d spectral neural operator on periodic grids.
//!
//! Lift [k(x), x] pointwise to `width` channels, run `blocks` spectral mixer
//! blocks (truncated-mode complex multiply in frequency space plus a
//! pointwise affine bypass, gelu after each), then project back to a scalar
//! field through a small pointwise head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Tape, Tensor, Var};
use crate::model::Standardizer;
use crate::pde::grid::{Domain, GridFunction};

/// Pointwise affine over the channel axis: w [co, ci], b [co, 1], applied to
/// values shaped [batch, ci, nx].
#[derive(Clone, Debug, PartialEq)]
pub struct ChanAffine {
    pub w: Tensor,
    pub b: Tensor,
}

impl ChanAffine {
    pub fn init(ci: usize, co: usize, rng: &mut ChaCha8Rng) -> ChanAffine {
        let s = (1.0 / ci as f64).sqrt();
        let w = Tensor::from_fn(&[co, ci], |_| rng.gen_range(-s..s));
        let b = Tensor::from_fn(&[co, 1], |_| rng.gen_range(-s..s));
        ChanAffine { w, b }
    }
}

struct ChanAffineVars<'t> {
    w: Var<'t>,
    b: Var<'t>,
}

impl<'t> ChanAffineVars<'t> {
    fn apply(&self, v: Var<'t>) -> Var<'t> {
        self.w.matmul(v) + self.b
    }
}

/// One frequency-domain mixing block: complex weights on the lowest `modes`
/// bins plus a pointwise affine bypass.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBlock {
    pub wre: Tensor,
    pub wim: Tensor,
    pub pw: ChanAffine,
}

impl SpectralBlock {
    fn init(width: usize, modes: usize, rng: &mut ChaCha8Rng) -> SpectralBlock {
        // the reference convention: uniform on [0, 1/(ci*co))
        let s = 1.0 / (width * width) as f64;
        let shape = [width, width, modes];
        let wre = Tensor::from_fn(&shape, |_| rng.gen_range(0.0..s));
        let wim = Tensor::from_fn(&shape, |_| rng.gen_range(0.0..s));
        SpectralBlock {
            wre,
            wim,
            pw: ChanAffine::init(width, width, rng),
        }
    }
}

/// Fixed hyperparameters of a built network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnoHyper {
    pub nx: usize,
    pub width: usize,
    pub modes: usize,
    pub depth: usize,
    pub head_hidden: usize,
    pub coord_channel: bool,
}

impl FnoHyper {
    pub fn preset(nx: usize) -> FnoHyper {
        FnoHyper {
            nx,
            width: 32,
            modes: 16,
            depth: 4,
            head_hidden: 128,
            coord_channel: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fno1d {
    pub hyper: FnoHyper,
    pub lift: ChanAffine,
    pub blocks: Vec<SpectralBlock>,
    pub proj1: ChanAffine,
    pub proj2: ChanAffine,
    pub stats: Standardizer,
}

impl Fno1d {
    pub fn init(hyper: FnoHyper, rng: &mut ChaCha8Rng) -> Fno1d {
        assert!(hyper.nx.is_power_of_two(), "grid length {} not a power of two", hyper.nx);
        assert!(
            hyper.modes <= hyper.nx / 2,
            "{} modes overflow the {} real spectrum bins",
            hyper.modes,
            hyper.nx / 2 + 1
        );
        let cin = if hyper.coord_channel { 2 } else { 1 };
        Fno1d {
            hyper,
            lift: ChanAffine::init(cin, hyper.width, rng),
            blocks: (0..hyper.depth)
                .map(|_| SpectralBlock::init(hyper.width, hyper.modes, rng))
                .collect(),
            proj1: ChanAffine::init(hyper.width, hyper.head_hidden, rng),
            proj2: ChanAffine::init(hyper.head_hidden, 1, rng),
            stats: Standardizer::identity(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = vec![&self.lift.w, &self.lift.b];
        for blk in &self.blocks {
            p.extend([&blk.wre, &blk.wim, &blk.pw.w, &blk.pw.b]);
        }
        p.extend([&self.proj1.w, &self.proj1.b, &self.proj2.w, &self.proj2.b]);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = vec![&mut self.lift.w, &mut self.lift.b];
        for blk in &mut self.blocks {
            p.extend([&mut blk.wre, &mut blk.wim, &mut blk.pw.w, &mut blk.pw.b]);
        }
        p.extend([&mut self.proj1.w, &mut self.proj1.b, &mut self.proj2.w, &mut self.proj2.b]);
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut n = vec!["lift.w".into(), "lift.b".into()];
        for i in 0..self.blocks.len() {
            n.push(format!("block{}.wre", i));
            n.push(format!("block{}.wim", i));
            n.push(format!("block{}.pw.w", i));
            n.push(format!("block{}.pw.b", i));
        }
        n.extend(["proj1.w".into(), "proj1.b".into(), "proj2.w".into(), "proj2.b".into()]);
        n
    }

    /// True for parameters of the projection head, the "last two layers" that
    /// keep the full learning rate during finetuning.
    pub fn head_mask(&self) -> Vec<bool> {
        let total = 2 + 4 * self.blocks.len() + 4;
        (0..total).map(|i| i >= total - 4).collect()
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> FnoVars<'t> {
        let aff = |a: &ChanAffine| ChanAffineVars {
            w: tape.leaf(a.w.clone(), trainable),
            b: tape.leaf(a.b.clone(), trainable),
        };
        FnoVars {
            tape,
            hyper: self.hyper,
            mu: self.stats.mu,
            sigma: self.stats.sigma,
            lift: aff(&self.lift),
            blocks: self
                .blocks
                .iter()
                .map(|blk| BlockVars {
                    wre: tape.leaf(blk.wre.clone(), trainable),
                    wim: tape.leaf(blk.wim.clone(), trainable),
                    pw: aff(&blk.pw),
                })
                .collect(),
            proj1: aff(&self.proj1),
            proj2: aff(&self.proj2),
        }
    }

    pub fn predict(&self, k: &GridFunction) -> GridFunction {
        let nx = self.hyper.nx;
        assert_eq!(
            k.domain,
            Domain::Interval { n: nx },
            "input resolution does not match the model"
        );
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let rows = k.values.reshaped(&[1, nx]);
        let out = bound.forward_rows(&rows).value();
        GridFunction::new(k.domain, out.reshaped(&[nx]))
    }
}

struct BlockVars<'t> {
    wre: Var<'t>,
    wim: Var<'t>,
    pw: ChanAffineVars<'t>,
}

pub struct FnoVars<'t> {
    tape: &'t Tape,
    hyper: FnoHyper,
    mu: f64,
    sigma: f64,
    lift: ChanAffineVars<'t>,
    blocks: Vec<BlockVars<'t>>,
    proj1: ChanAffineVars<'t>,
    proj2: ChanAffineVars<'t>,
}

impl<'t> FnoVars<'t> {
    /// Prediction from a plain [batch, nx] tensor of raw inputs.
    pub fn forward_rows(&self, k_rows: &Tensor) -> Var<'t> {
        let k = self.tape.constant(k_rows.clone());
        self.forward(k)
    }

    /// Prediction from on-tape rows [batch, nx]; gradients flow back into the
    /// input, which is what the transport stage differentiates through.
    pub fn forward(&self, k_rows: Var<'t>) -> Var<'t> {
        let shape = k_rows.shape();
        assert_eq!(shape.len(), 2, "expected [batch, nx] input rows");
        let (bsz, nx) = (shape[0], shape[1]);
        assert_eq!(nx, self.hyper.nx, "input resolution does not match the model");
        let std = k_rows
            .add_scalar(-self.mu)
            .scale(1.0 / self.sigma)
            .reshape(&[bsz, 1, nx]);
        let mut v = if self.hyper.coord_channel {
            let coords = Tensor::from_fn(&[bsz, 1, nx], |i| (i % nx) as f64 / nx as f64);
            let c = self.tape.constant(coords);
            self.tape.concat(&[std, c], 1)
        } else {
            std
        };
        v = self.lift.apply(v);
        let nf = nx / 2 + 1;
        let m = self.hyper.modes;
        for blk in &self.blocks {
            let spec = v.rfft();
            let mixed = spec.slice_axis(2, 0, m).cmul_modes(blk.wre, blk.wim);
            let pad = self
                .tape
                .constant(Tensor::zeros(&[bsz, self.hyper.width, nf - m, 2]));
            let conv = self.tape.concat(&[mixed, pad], 2).irfft();
            v = (conv + blk.pw.apply(v)).gelu();
        }
        let h = self.proj1.apply(v).gelu();
        self.proj2.apply(h).reshape(&[bsz, nx])
    }

    pub fn vars(&self) -> Vec<Var<'t>> {
        let mut v = vec![self.lift.w, self.lift.b];
        for blk in &self.blocks {
            v.extend([blk.wre, blk.wim, blk.pw.w, blk.pw.b]);
        }
        v.extend([self.proj1.w, self.proj1.b, self.proj2.w, self.proj2.b]);
        v
    }

    /// Gradients in canonical parameter order, zeros where a parameter was
    /// never touched by the loss.
    pub fn grads(&self) -> Vec<Tensor> {
        self.vars()
            .iter()
            .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(&v.shape())))
            .collect()
    }
}
