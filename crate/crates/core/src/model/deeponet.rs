//! Branch-trunk operator network for non-periodic or space-time outputs.
//!
//! The branch encodes the flattened input field, the trunk encodes output
//! coordinates, and the prediction at x is the inner product of the two
//! codes plus a scalar offset. The trunk runs once per forward pass over the
//! full query grid.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Act, Mlp, MlpVars, Tape, Tensor, Var};
use crate::model::Standardizer;
use crate::pde::grid::{Domain, GridFunction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepOnetHyper {
    pub k_domain: Domain,
    pub u_domain: Domain,
    pub hidden: usize,
    pub latent: usize,
    pub depth: usize,
}

impl DeepOnetHyper {
    pub fn preset(k_domain: Domain, u_domain: Domain) -> DeepOnetHyper {
        DeepOnetHyper {
            k_domain,
            u_domain,
            hidden: 128,
            latent: 64,
            depth: 2,
        }
    }

    fn branch_dims(&self) -> Vec<usize> {
        let mut d = vec![self.k_domain.numel()];
        d.extend(std::iter::repeat(self.hidden).take(self.depth));
        d.push(self.latent);
        d
    }

    fn trunk_dims(&self) -> Vec<usize> {
        let mut d = vec![self.u_domain.coord_matrix().shape()[1]];
        d.extend(std::iter::repeat(self.hidden).take(self.depth));
        d.push(self.latent);
        d
    }
}

#[derive(Clone, Debug)]
pub struct DeepOnet {
    pub hyper: DeepOnetHyper,
    pub branch: Mlp,
    pub trunk: Mlp,
    pub bias: Tensor,
    pub stats: Standardizer,
}

impl DeepOnet {
    pub fn init(hyper: DeepOnetHyper, rng: &mut ChaCha8Rng) -> DeepOnet {
        let branch = Mlp::init(&hyper.branch_dims(), Act::Gelu, rng);
        let trunk = Mlp::init(&hyper.trunk_dims(), Act::Gelu, rng);
        DeepOnet {
            hyper,
            branch,
            trunk,
            bias: Tensor::zeros(&[1]),
            stats: Standardizer::identity(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.branch.params();
        p.extend(self.trunk.params());
        p.push(&self.bias);
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.branch.params_mut();
        p.extend(self.trunk.params_mut());
        p.push(&mut self.bias);
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut n = self.branch.param_names("branch");
        n.extend(self.trunk.param_names("trunk"));
        n.push("bias".into());
        n
    }

    /// True for the final branch and trunk affines plus the output offset,
    /// the parameters that keep the full learning rate during finetuning.
    pub fn head_mask(&self) -> Vec<bool> {
        let nb = self.branch.params().len();
        let nt = self.trunk.params().len();
        let mut mask = vec![false; nb + nt + 1];
        mask[nb - 2] = true;
        mask[nb - 1] = true;
        mask[nb + nt - 2] = true;
        mask[nb + nt - 1] = true;
        mask[nb + nt] = true;
        mask
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> DeepOnetVars<'t> {
        DeepOnetVars {
            tape,
            mu: self.stats.mu,
            sigma: self.stats.sigma,
            k_width: self.hyper.k_domain.numel(),
            coords: self.hyper.u_domain.coord_matrix(),
            branch: self.branch.bind(tape, trainable),
            trunk: self.trunk.bind(tape, trainable),
            bias: tape.leaf(self.bias.clone(), trainable),
        }
    }

    pub fn predict(&self, k: &GridFunction) -> GridFunction {
        assert_eq!(
            k.domain, self.hyper.k_domain,
            "input resolution does not match the model"
        );
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let rows = k.values.reshaped(&[1, self.hyper.k_domain.numel()]);
        let out = bound.forward_rows(&rows).value();
        GridFunction::new(
            self.hyper.u_domain,
            out.reshaped(&self.hyper.u_domain.value_shape()),
        )
    }
}

pub struct DeepOnetVars<'t> {
    tape: &'t Tape,
    mu: f64,
    sigma: f64,
    k_width: usize,
    coords: Tensor,
    pub branch: MlpVars<'t>,
    pub trunk: MlpVars<'t>,
    pub bias: Var<'t>,
}

impl<'t> DeepOnetVars<'t> {
    /// Prediction from a plain [batch, k_width] tensor of raw inputs.
    pub fn forward_rows(&self, k_rows: &Tensor) -> Var<'t> {
        let k = self.tape.constant(k_rows.clone());
        self.forward(k)
    }

    /// Prediction from on-tape rows [batch, k_width]; output is
    /// [batch, query points] flattened row-major over the output domain.
    pub fn forward(&self, k_rows: Var<'t>) -> Var<'t> {
        let shape = k_rows.shape();
        assert_eq!(shape.len(), 2, "expected [batch, k] input rows");
        assert_eq!(shape[1], self.k_width, "input resolution does not match the model");
        let std = k_rows.add_scalar(-self.mu).scale(1.0 / self.sigma);
        let bv = self.branch.forward(std);
        let tv = self.trunk.forward(self.tape.constant(self.coords.clone()));
        bv.matmul(tv.swap_last2()) + self.bias
    }

    pub fn vars(&self) -> Vec<Var<'t>> {
        let mut v = self.branch.vars();
        v.extend(self.trunk.vars());
        v.push(self.bias);
        v
    }

    pub fn grads(&self) -> Vec<Tensor> {
        self.vars()
            .iter()
            .map(|v| v.grad().unwrap_or_else(|| Tensor::zeros(&v.shape())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zeroed_branch_head_collapses_to_the_offset() {
        let hyper = DeepOnetHyper {
            k_domain: Domain::Interval { n: 10 },
            u_domain: Domain::SpaceTime { nx: 10, nt: 4 },
            hidden: 16,
            latent: 8,
            depth: 2,
        };
        let mut m = DeepOnet::init(hyper, &mut stream(5, "don-test", 0));
        m.branch.zero_last();
        m.bias = Tensor::new(vec![1], vec![3.25]);
        let k = GridFunction::from_vec(
            Domain::Interval { n: 10 },
            (0..10).map(|i| i as f64).collect(),
        );
        let u = m.predict(&k);
        assert_eq!(u.domain, Domain::SpaceTime { nx: 10, nt: 4 });
        assert!(u.values.data().iter().all(|&v| (v - 3.25).abs() < 1e-15));
    }

    #[test]
    fn output_shapes_follow_the_query_domain() {
        let cases = [
            (Domain::Interval { n: 12 }, Domain::SpaceTime { nx: 12, nt: 5 }),
            (Domain::Square { n: 8 }, Domain::Square { n: 8 }),
        ];
        for (kd, ud) in cases {
            let hyper = DeepOnetHyper {
                k_domain: kd,
                u_domain: ud,
                hidden: 8,
                latent: 4,
                depth: 1,
            };
            let m = DeepOnet::init(hyper, &mut stream(6, "don-test", 1));
            let k = GridFunction::from_vec(kd, vec![0.5; kd.numel()]);
            let u = m.predict(&k);
            assert_eq!(u.domain, ud);
            assert_eq!(u.values.shape(), ud.value_shape().as_slice());
        }
    }

    #[test]
    fn hand_evaluated_single_unit_network_matches() {
        // branch: 2 -> 1 -> 1 with gelu between, trunk: 1 -> 1, offset 0.1
        let hyper = DeepOnetHyper {
            k_domain: Domain::Interval { n: 2 },
            u_domain: Domain::Interval { n: 3 },
            hidden: 1,
            latent: 1,
            depth: 1,
        };
        let mut m = DeepOnet::init(hyper, &mut stream(7, "don-test", 2));
        m.branch.set_params(&[
            Tensor::new(vec![2, 1], vec![0.4, -0.3]),
            Tensor::new(vec![1], vec![0.2]),
            Tensor::new(vec![1, 1], vec![1.5]),
            Tensor::new(vec![1], vec![-0.05]),
        ]);
        m.trunk.set_params(&[
            Tensor::new(vec![1, 1], vec![0.8]),
            Tensor::new(vec![1], vec![0.1]),
            Tensor::new(vec![1, 1], vec![-1.2]),
            Tensor::new(vec![1], vec![0.3]),
        ]);
        m.bias = Tensor::new(vec![1], vec![0.1]);
        let k = GridFunction::from_vec(Domain::Interval { n: 2 }, vec![0.7, -0.2]);
        let u = m.predict(&k);

        let gelu = |x: f64| {
            0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
        };
        let b = 1.5 * gelu(0.4 * 0.7 + (-0.3) * (-0.2) + 0.2) - 0.05;
        for (j, x) in [0.0, 1.0 / 3.0, 2.0 / 3.0].into_iter().enumerate() {
            let t = -1.2 * gelu(0.8 * x + 0.1) + 0.3;
            let want = b * t + 0.1;
            assert!(
                (u.values.data()[j] - want).abs() < 1e-12,
                "query {}: {} vs {}",
                j,
                u.values.data()[j],
                want
            );
        }
    }

    #[test]
    fn batched_forward_matches_per_sample_prediction() {
        let hyper = DeepOnetHyper {
            k_domain: Domain::Interval { n: 6 },
            u_domain: Domain::Interval { n: 4 },
            hidden: 8,
            latent: 4,
            depth: 2,
        };
        let mut m = DeepOnet::init(hyper, &mut stream(8, "don-test", 3));
        m.stats = Standardizer { mu: 0.3, sigma: 1.7, fitted: true };
        let rows = Tensor::from_fn(&[3, 6], |i| (i as f64 * 0.17).sin());
        let tape = Tape::new();
        let batched = m.bind(&tape, false).forward_rows(&rows).value();
        for s in 0..3 {
            let k = GridFunction::from_vec(
                Domain::Interval { n: 6 },
                rows.data()[s * 6..(s + 1) * 6].to_vec(),
            );
            let u = m.predict(&k);
            for j in 0..4 {
                assert!((batched.data()[s * 4 + j] - u.values.data()[j]).abs() < 1e-13);
            }
        }
    }
}
