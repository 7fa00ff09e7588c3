//! Steady Darcy flow -div(k grad u) = 1 on the unit square with homogeneous
//! Dirichlet walls, five-point finite volumes with harmonic-mean face
//! coefficients, solved by plain conjugate gradients.
//!
//! The grid is node-centered inclusive, x_i = i/(n-1). A mask selects the
//! active region; nodes outside it (and the outer ring) hold u = 0, which
//! keeps the output a fixed-size [n, n] field on every mask.

use serde::{Deserialize, Serialize};

use crate::error::SolveError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DarcyMask {
    /// whole open square
    Square,
    /// triangle with vertices (0,0), (0,1), (0.5,1): the part of the square
    /// above the line y = 2x
    Triangle,
}

impl DarcyMask {
    fn contains(self, x: f64, y: f64) -> bool {
        match self {
            DarcyMask::Square => true,
            DarcyMask::Triangle => y > 2.0 * x,
        }
    }
}

pub struct DarcySolution {
    /// full [n, n] field, zeros outside the active region
    pub u: Vec<f64>,
    pub cg_iters: usize,
    /// final |r| / |b|
    pub rel_residual: f64,
}

const CG_TOL: f64 = 1e-10;

pub fn solve(k: &[f64], n: usize, mask: DarcyMask) -> Result<DarcySolution, SolveError> {
    assert_eq!(k.len(), n * n, "coefficient field must cover the {0}x{0} grid", n);
    assert!(n >= 4, "grid too small");
    let kmin = k.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(kmin > 0.0) {
        return Err(SolveError::NonPositiveCoefficient { found: kmin });
    }
    let h = 1.0 / (n - 1) as f64;

    // active = interior of the square and inside the mask; everything else
    // is a Dirichlet zero
    let mut index = vec![usize::MAX; n * n];
    let mut nodes = Vec::new();
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let (x, y) = (i as f64 * h, j as f64 * h);
            if mask.contains(x, y) {
                index[i * n + j] = nodes.len();
                nodes.push((i, j));
            }
        }
    }
    let m = nodes.len();
    assert!(m > 0, "mask excludes every interior node");

    let face = |a: usize, b: usize| 2.0 * k[a] * k[b] / (k[a] + k[b]);
    let inv_h2 = 1.0 / (h * h);
    let apply = |x: &[f64], out: &mut [f64]| {
        for (p, &(i, j)) in nodes.iter().enumerate() {
            let c = i * n + j;
            let mut acc = 0.0;
            for nb in [c - n, c + n, c - 1, c + 1] {
                let kf = face(c, nb);
                let unb = if index[nb] == usize::MAX { 0.0 } else { x[index[nb]] };
                acc += kf * (x[p] - unb);
            }
            out[p] = acc * inv_h2;
        }
    };

    // CG from zero on A u = 1
    let b = vec![1.0; m];
    let bnorm = (m as f64).sqrt();
    let mut x = vec![0.0; m];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; m];
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let max_iters = 10 * m;
    let mut iters = 0;
    while rs.sqrt() > CG_TOL * bnorm {
        if iters >= max_iters {
            return Err(SolveError::CgStall {
                iters,
                residual: rs.sqrt() / bnorm,
                target: CG_TOL,
            });
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rs / pap;
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        for i in 0..m {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
        iters += 1;
    }

    let mut u = vec![0.0; n * n];
    for (p, &(i, j)) in nodes.iter().enumerate() {
        u[i * n + j] = x[p];
    }
    Ok(DarcySolution {
        u,
        cg_iters: iters,
        rel_residual: rs.sqrt() / bnorm,
    })
}

/// Sample a fine inclusive-grid field at the nodes of a coarse one.
pub fn bilinear_restrict(fine: &[f64], nf: usize, nc: usize) -> Vec<f64> {
    assert_eq!(fine.len(), nf * nf);
    let scale = (nf - 1) as f64 / (nc - 1) as f64;
    let mut out = vec![0.0; nc * nc];
    for i in 0..nc {
        for j in 0..nc {
            let (px, py) = (i as f64 * scale, j as f64 * scale);
            let i0 = (px.floor() as usize).min(nf - 2);
            let j0 = (py.floor() as usize).min(nf - 2);
            let (wx, wy) = (px - i0 as f64, py - j0 as f64);
            let f = |a: usize, b: usize| fine[a * nf + b];
            out[i * nc + j] = (1.0 - wx) * (1.0 - wy) * f(i0, j0)
                + wx * (1.0 - wy) * f(i0 + 1, j0)
                + (1.0 - wx) * wy * f(i0, j0 + 1)
                + wx * wy * f(i0 + 1, j0 + 1);
        }
    }
    out
}
