//! Small fully connected building blocks shared by the operator surrogates,
//! the transport maps, and the dual potential.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Act {
    Tanh,
    Relu,
    Gelu,
}

impl Act {
    pub fn apply<'t>(self, x: Var<'t>) -> Var<'t> {
        match self {
            Act::Tanh => x.tanh(),
            Act::Relu => x.relu(),
            Act::Gelu => x.gelu(),
        }
    }
}

/// Dense layer, weights [fan_in, fan_out], bias [fan_out].
#[derive(Clone, Debug)]
pub struct Affine {
    pub w: Tensor,
    pub b: Tensor,
}

impl Affine {
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Affine {
        let bound = (1.0 / fan_in as f64).sqrt();
        let w = Tensor::from_fn(&[fan_in, fan_out], |_| rng.gen_range(-bound..bound));
        let b = Tensor::from_fn(&[fan_out], |_| rng.gen_range(-bound..bound));
        Affine { w, b }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Affine {
        Affine {
            w: Tensor::zeros(&[fan_in, fan_out]),
            b: Tensor::zeros(&[fan_out]),
        }
    }
}

/// Plain multilayer perceptron; activation between layers, linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Affine>,
    pub act: Act,
}

impl Mlp {
    pub fn init(dims: &[usize], act: Act, rng: &mut ChaCha8Rng) -> Mlp {
        assert!(dims.len() >= 2, "mlp needs at least one layer");
        let layers = dims
            .windows(2)
            .map(|w| Affine::init(w[0], w[1], rng))
            .collect();
        Mlp { layers, act }
    }

    /// Zero the final layer so the network starts as the zero map; the
    /// residual transport parameterization uses this to start at identity.
    pub fn zero_last(&mut self) {
        let last = self.layers.last_mut().expect("mlp has layers");
        let (wi, wo) = (last.w.shape()[0], last.w.shape()[1]);
        *last = Affine::zeros(wi, wo);
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.layers.iter().map(|l| l.w.shape()[0]).collect();
        d.push(self.layers.last().unwrap().w.shape()[1]);
        d
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("{}.{}.w", prefix, i), format!("{}.{}.b", prefix, i)])
            .collect()
    }

    pub fn set_params(&mut self, flat: &[Tensor]) {
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.w = it.next().expect("weight tensor").clone();
            l.b = it.next().expect("bias tensor").clone();
        }
        assert!(it.next().is_none(), "extra parameter tensors");
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> MlpVars<'t> {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.leaf(l.w.clone(), trainable), tape.leaf(l.b.clone(), trainable)))
                .collect(),
            act: self.act,
        }
    }
}

pub struct MlpVars<'t> {
    pub layers: Vec<(Var<'t>, Var<'t>)>,
    act: Act,
}

impl<'t> MlpVars<'t> {
    /// x [batch, fan_in] -> [batch, fan_out]
    pub fn forward(&self, x: Var<'t>) -> Var<'t> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = h.matmul(*w) + *b;
            if i != last {
                h = self.act.apply(h);
            }
        }
        h
    }

    pub fn vars(&self) -> Vec<Var<'t>> {
        self.layers.iter().flat_map(|(w, b)| [*w, *b]).collect()
    }

    /// Gradients in the same order as `Mlp::params`, zeros where a parameter
    /// never touched the loss.
    pub fn grads(&self) -> Vec<Tensor> {
        self.vars()
            .iter()
            .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(&v.shape())))
            .collect()
    }
}
