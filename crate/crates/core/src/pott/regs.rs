//! Physical penalties on the transported solution fields.
//!
//! `conservation_reg` penalizes drift of the spatial integral across time
//! slices (mass conservation on space-time grids). `generic_reg` penalizes
//! disagreement between the transported solution and the frozen source
//! operator applied to the transported input. Both are differentiable in the
//! map parameters; the source operator's own parameters receive no gradient.

use crate::diff::{Tape, Tensor, Var};
use crate::model::OperatorModel;
use crate::pde::grid::Domain;

/// Batch-mean variance of the per-time-slice spatial integrals of `tu_rows`
/// ([batch, nx*nt], row-major space-outer). Trapezoidal quadrature on the
/// periodic grid reduces to uniform weights 1/nx.
pub fn conservation_reg<'t>(tu_rows: Var<'t>, dom: &Domain) -> Var<'t> {
    let (nx, nt) = match *dom {
        Domain::SpaceTime { nx, nt } => (nx, nt),
        _ => panic!("conservation penalty needs a space-time solution grid, got {:?}", dom),
    };
    let b = tu_rows.shape()[0];
    assert_eq!(tu_rows.shape()[1], nx * nt, "row width does not match the grid");
    let integrals = tu_rows
        .reshape(&[b, nx, nt])
        .sum_axes(&[1], false)
        .scale(1.0 / nx as f64);
    let centered = integrals - integrals.mean_axis(1, true);
    centered.square().mean_axis(1, false).mean_all()
}

/// Loop-reference evaluation of the conservation penalty, for held-out
/// scoring and as an oracle against the tape version.
pub fn conservation_value(rows: &Tensor, dom: &Domain) -> f64 {
    let (nx, nt) = match *dom {
        Domain::SpaceTime { nx, nt } => (nx, nt),
        _ => panic!("conservation penalty needs a space-time solution grid, got {:?}", dom),
    };
    let b = rows.shape()[0];
    assert_eq!(rows.shape()[1], nx * nt, "row width does not match the grid");
    let mut total = 0.0;
    for s in 0..b {
        let row = &rows.data()[s * nx * nt..(s + 1) * nx * nt];
        let mut integrals = vec![0.0; nt];
        for i in 0..nx {
            for j in 0..nt {
                integrals[j] += row[i * nt + j] / nx as f64;
            }
        }
        let mean = integrals.iter().sum::<f64>() / nt as f64;
        total += integrals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nt as f64;
    }
    total / b as f64
}

/// Batch-mean dimension-normalized squared L2 between the frozen source
/// operator applied to the transported inputs and the transported solutions.
/// Gradients flow into `tk_rows` and `tu_rows` only.
pub fn generic_reg<'t>(
    tape: &'t Tape,
    g_src: &OperatorModel,
    tk_rows: Var<'t>,
    tu_rows: Var<'t>,
) -> Var<'t> {
    let n_u = tu_rows.shape()[1];
    let pred = g_src.bind(tape, false).forward(tk_rows);
    (pred - tu_rows)
        .square()
        .sum_axes(&[1], false)
        .scale(1.0 / n_u as f64)
        .mean_all()
}

/// Gradient-free evaluation of the generic penalty on plain rows.
pub fn generic_value(g_src: &OperatorModel, tk_rows: &Tensor, tu_rows: &Tensor) -> f64 {
    let n = tk_rows.shape()[0];
    let n_u = tu_rows.shape()[1];
    assert_eq!(n, tu_rows.shape()[0], "row counts differ across components");
    let pred = g_src.predict_rows(tk_rows);
    let mut total = 0.0;
    for (p, t) in pred.data().iter().zip(tu_rows.data()) {
        total += (p - t) * (p - t);
    }
    total / (n_u as f64 * n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DeepOnet, DeepOnetHyper};
    use crate::pde::datagen::{Family, GenSpec, Subdomain};
    use crate::rng::stream;

    #[test]
    fn exact_advection_data_has_negligible_drift() {
        let spec = GenSpec {
            equation: Family::Advection,
            subdomain: Subdomain::D1,
            n_train: Some(4),
            n_val: 0,
            n_test: 0,
            seed: 77,
            custom: None,
        };
        let splits = crate::pde::datagen::generate(&spec).unwrap();
        let rows = splits.train.stack_u();
        let dom = splits.train.u_domain();
        let tape = Tape::new();
        let reg = conservation_reg(tape.constant(rows.clone()), &dom).item();
        assert!(reg < 1e-6, "drift {} on exactly conserved data", reg);
        assert!((reg - conservation_value(&rows, &dom)).abs() < 1e-12);
    }

    #[test]
    fn linear_in_time_drift_matches_the_hand_variance() {
        // u(x, t_j) = sin-ish base + j*delta: slice integrals are I0 + j*delta,
        // whose variance is delta^2 (nt^2 - 1) / 12
        let (nx, nt) = (16usize, 9usize);
        let delta = 0.37;
        let rows = Tensor::from_fn(&[1, nx * nt], |i| {
            let (x, j) = (i / nt, i % nt);
            (x as f64 * 0.9).sin() + j as f64 * delta
        });
        let dom = Domain::SpaceTime { nx, nt };
        let want = delta * delta * ((nt * nt - 1) as f64) / 12.0;
        let tape = Tape::new();
        let got = conservation_reg(tape.constant(rows.clone()), &dom).item();
        assert!((got - want).abs() < 1e-10, "{} vs {}", got, want);
        assert!((conservation_value(&rows, &dom) - want).abs() < 1e-10);
    }

    #[test]
    fn constant_in_time_fields_have_zero_variance() {
        let (nx, nt) = (8usize, 5usize);
        let rows = Tensor::from_fn(&[3, nx * nt], |i| ((i / nt) as f64 * 0.31).cos());
        let tape = Tape::new();
        let got = conservation_reg(tape.constant(rows.clone()), &Domain::SpaceTime { nx, nt }).item();
        assert!(got < 1e-28, "{}", got);
    }

    #[test]
    #[should_panic(expected = "space-time")]
    fn flat_grids_are_rejected() {
        let tape = Tape::new();
        conservation_reg(tape.constant(Tensor::zeros(&[1, 8])), &Domain::Interval { n: 8 });
    }

    #[test]
    fn conservation_gradient_reaches_the_input() {
        let (nx, nt) = (6usize, 4usize);
        let rows = Tensor::from_fn(&[2, nx * nt], |i| (i as f64 * 0.21).sin());
        let tape = Tape::new();
        let v = tape.leaf(rows, true);
        let reg = conservation_reg(v, &Domain::SpaceTime { nx, nt });
        tape.backward(reg);
        let g = v.grad().expect("gradient");
        assert!(g.data().iter().any(|&x| x != 0.0));
    }

    fn linear_g() -> OperatorModel {
        // single-affine branch and trunk: fully linear operator on k
        let hyper = DeepOnetHyper {
            k_domain: Domain::Interval { n: 2 },
            u_domain: Domain::Interval { n: 3 },
            hidden: 1,
            latent: 1,
            depth: 0,
        };
        let mut g = DeepOnet::init(hyper, &mut stream(9, "regs-test", 0));
        g.branch.set_params(&[
            Tensor::new(vec![2, 1], vec![0.6, -0.4]),
            Tensor::new(vec![1], vec![0.05]),
        ]);
        g.trunk.set_params(&[
            Tensor::new(vec![1, 1], vec![0.9]),
            Tensor::new(vec![1], vec![-0.2]),
        ]);
        g.bias = Tensor::new(vec![1], vec![0.02]);
        OperatorModel::DeepOnet(g)
    }

    #[test]
    fn consistent_pairs_zero_the_generic_penalty() {
        let g = linear_g();
        let k = Tensor::from_fn(&[4, 2], |i| (i as f64 * 0.4).sin());
        let u = g.predict_rows(&k);
        let tape = Tape::new();
        let reg = generic_reg(&tape, &g, tape.constant(k.clone()), tape.constant(u.clone())).item();
        assert_eq!(reg, 0.0);
        assert_eq!(generic_value(&g, &k, &u), 0.0);
    }

    #[test]
    fn two_sample_linear_case_matches_the_hand_formula() {
        // G(k)(x_j) = (0.6 k0 - 0.4 k1 + 0.05)(0.9 x_j - 0.2) + 0.02 at
        // x_j = j/3; shifted inputs and solutions keep everything linear
        let g = linear_g();
        let k = Tensor::new(vec![2, 2], vec![0.3, -0.1, -0.7, 0.5]);
        let u = Tensor::new(vec![2, 3], vec![0.1, 0.0, -0.2, 0.4, 0.25, 0.1]);
        let dk = 0.15; // constant shift applied by a toy T_k
        let du = -0.1; // constant shift applied by a toy T_u
        let mut want = 0.0;
        for s in 0..2 {
            let (k0, k1) = (k.data()[2 * s] + dk, k.data()[2 * s + 1] + dk);
            let code = 0.6 * k0 - 0.4 * k1 + 0.05;
            for j in 0..3 {
                let x = j as f64 / 3.0;
                let pred = code * (0.9 * x - 0.2) + 0.02;
                let diff = pred - (u.data()[3 * s + j] + du);
                want += diff * diff / 3.0;
            }
        }
        want /= 2.0;
        let tk = k.map(|v| v + dk);
        let tu = u.map(|v| v + du);
        let tape = Tape::new();
        let got = generic_reg(&tape, &g, tape.constant(tk.clone()), tape.constant(tu.clone())).item();
        assert!((got - want).abs() < 1e-14, "{} vs {}", got, want);
        assert!((generic_value(&g, &tk, &tu) - want).abs() < 1e-14);
    }

    #[test]
    fn generic_gradient_reaches_both_transported_inputs() {
        let g = linear_g();
        let k = Tensor::from_fn(&[3, 2], |i| (i as f64 * 0.2).cos());
        let u = Tensor::from_fn(&[3, 3], |i| (i as f64 * 0.3).sin());
        let tape = Tape::new();
        let kv = tape.leaf(k, true);
        let uv = tape.leaf(u, true);
        let reg = generic_reg(&tape, &g, kv, uv);
        tape.backward(reg);
        let gk = kv.grad().expect("transported input gradient");
        let gu = uv.grad().expect("transported solution gradient");
        assert!(gk.data().iter().any(|&v| v != 0.0));
        assert!(gu.data().iter().any(|&v| v != 0.0));
    }
}
