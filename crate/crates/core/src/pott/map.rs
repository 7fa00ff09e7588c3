//! Componentwise residual transport map T = (T_k, T_u).
//!
//! Each component is an MLP acting on one flattened field, wired residually
//! as T(x) = x + delta(x) with a zero-initialized last layer, so a fresh map
//! is exactly the identity. The two components never read each other's
//! input.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Act, Mlp, MlpVars, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub hidden: usize,
    pub depth: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { hidden: 128, depth: 2 }
    }
}

fn residual_net(n: usize, cfg: MapConfig, rng: &mut ChaCha8Rng) -> Mlp {
    let mut dims = vec![n];
    dims.extend(std::iter::repeat(cfg.hidden).take(cfg.depth));
    dims.push(n);
    let mut net = Mlp::init(&dims, Act::Gelu, rng);
    net.zero_last();
    net
}

#[derive(Clone, Debug)]
pub struct TransportMap {
    pub t_k: Mlp,
    pub t_u: Mlp,
}

impl TransportMap {
    /// Identity-initialized map for fields of `n_k` and `n_u` entries.
    pub fn init(n_k: usize, n_u: usize, cfg: MapConfig, rng: &mut ChaCha8Rng) -> TransportMap {
        TransportMap {
            t_k: residual_net(n_k, cfg, rng),
            t_u: residual_net(n_u, cfg, rng),
        }
    }

    pub fn n_k(&self) -> usize {
        self.t_k.dims()[0]
    }

    pub fn n_u(&self) -> usize {
        self.t_u.dims()[0]
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.t_k.params();
        p.extend(self.t_u.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.t_k.params_mut();
        p.extend(self.t_u.params_mut());
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut n = self.t_k.param_names("t_k");
        n.extend(self.t_u.param_names("t_u"));
        n
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> TransportMapVars<'t> {
        TransportMapVars {
            k: self.t_k.bind(tape, trainable),
            u: self.t_u.bind(tape, trainable),
        }
    }

    /// Gradient-free batched transport of input rows [n, n_k].
    pub fn push_k(&self, rows: &Tensor) -> Tensor {
        apply_residual(&self.t_k, rows)
    }

    /// Gradient-free batched transport of solution rows [n, n_u].
    pub fn push_u(&self, rows: &Tensor) -> Tensor {
        apply_residual(&self.t_u, rows)
    }
}

/// Rows transported per tape in the gradient-free path.
const PUSH_CHUNK: usize = 16;

fn apply_residual(net: &Mlp, rows: &Tensor) -> Tensor {
    let n = rows.shape()[0];
    let w = rows.shape()[1];
    assert_eq!(w, net.dims()[0], "row width {} does not match the map", w);
    let mut out = Vec::with_capacity(n * w);
    let mut start = 0;
    while start < n {
        let len = PUSH_CHUNK.min(n - start);
        let chunk = Tensor::from_fn(&[len, w], |i| rows.data()[start * w + i]);
        let tape = Tape::new();
        let x = tape.constant(chunk);
        let y = x + net.bind(&tape, false).forward(x);
        out.extend_from_slice(y.value().data());
        start += len;
    }
    Tensor::new(vec![n, w], out)
}

pub struct TransportMapVars<'t> {
    pub k: MlpVars<'t>,
    pub u: MlpVars<'t>,
}

impl<'t> TransportMapVars<'t> {
    pub fn map_k(&self, k_rows: Var<'t>) -> Var<'t> {
        k_rows + self.k.forward(k_rows)
    }

    pub fn map_u(&self, u_rows: Var<'t>) -> Var<'t> {
        u_rows + self.u.forward(u_rows)
    }

    pub fn vars(&self) -> Vec<Var<'t>> {
        let mut v = self.k.vars();
        v.extend(self.u.vars());
        v
    }

    pub fn grads(&self) -> Vec<Tensor> {
        self.vars()
            .iter()
            .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(&v.shape())))
            .collect()
    }
}
