//! Linear advection on the periodic unit interval, solved exactly by
//! characteristics: u(x, t) = u0((x - c t) mod 1), with the initial data
//! known at grid nodes and evaluated between them by periodic linear
//! interpolation. Output is the full space-time field at times (j+1)/nt.

/// Returns u on the [nx, nt] grid, row-major with space outermost.
pub fn advect(u0: &[f64], speed: f64, nt: usize) -> Vec<f64> {
    let nx = u0.len();
    assert!(nx >= 2 && nt >= 1, "degenerate advection grid {}x{}", nx, nt);
    let mut out = vec![0.0; nx * nt];
    for j in 0..nt {
        let t = (j + 1) as f64 / nt as f64;
        let shift = speed * t;
        for i in 0..nx {
            let pos = (i as f64 / nx as f64 - shift).rem_euclid(1.0) * nx as f64;
            let i0 = pos.floor() as usize % nx;
            let w = pos - pos.floor();
            let a = u0[i0];
            let b = u0[(i0 + 1) % nx];
            out[i * nt + j] = (1.0 - w) * a + w * b;
        }
    }
    out
}
