//! Viscous Burgers on the periodic unit interval, pseudo-spectral in space
//! with 2/3-rule dealiasing, classical RK4 in time.
//!
//! u_t + u u_x = nu u_xx, advanced from t = 0 to t_end with the adaptive
//! step dt = 0.5 * dt_scale * min(dx / max|u|, 0.282 dx^2 / nu). The 0.282
//! comes from the RK4 real-axis stability bound |lambda| dt <= 2.785 applied
//! to the stiffest diffusive mode lambda = nu (pi n)^2; the advective half is
//! the usual CFL count. The final step is truncated to land on t_end exactly.

use rustfft::num_complex::Complex;

use crate::diff::fft;
use crate::error::SolveError;

#[derive(Clone, Copy, Debug)]
pub struct BurgersConfig {
    pub nu: f64,
    pub t_end: f64,
    pub dt_scale: f64,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        BurgersConfig {
            nu: 0.01,
            t_end: 1.0,
            dt_scale: 1.0,
        }
    }
}

const DIFFUSIVE_STABILITY: f64 = 0.282;
const SAFETY: f64 = 0.5;

struct Spectral {
    n: usize,
    k: Vec<f64>,
    dealias: Vec<f64>,
}

impl Spectral {
    fn new(n: usize) -> Spectral {
        let half = n / 2;
        let k: Vec<f64> = (0..=half).map(|j| 2.0 * std::f64::consts::PI * j as f64).collect();
        // zero every mode above n/3, and the Nyquist mode outright
        let dealias: Vec<f64> = (0..=half)
            .map(|j| if 3 * j <= n && j != half { 1.0 } else { 0.0 })
            .collect();
        Spectral { n, k, dealias }
    }

    /// d/dt of the spectrum: -1/2 d/dx (u^2) - nu k^2 u, dealiased.
    fn rhs(&self, spec: &[Complex<f64>], nu: f64, out: &mut [Complex<f64>]) {
        let u = fft::irfft(spec, self.n);
        let w: Vec<f64> = u.iter().map(|&v| v * v).collect();
        let what = fft::rfft(&w);
        for j in 0..spec.len() {
            let ik = Complex::new(0.0, self.k[j]);
            let conv = ik * what[j] * (-0.5) * self.dealias[j];
            let diff = spec[j] * (-self.nu_k2(nu, j));
            out[j] = conv + diff;
        }
    }

    fn nu_k2(&self, nu: f64, j: usize) -> f64 {
        nu * self.k[j] * self.k[j]
    }
}

pub fn solve(u0: &[f64], cfg: &BurgersConfig) -> Result<Vec<f64>, SolveError> {
    let n = u0.len();
    assert!(n.is_power_of_two() && n >= 8, "grid size {} must be a power of two >= 8", n);
    assert!(cfg.nu > 0.0, "viscosity must be positive");
    let sp = Spectral::new(n);
    let dx = 1.0 / n as f64;
    let blow = 1e3 * (1.0 + u0.iter().fold(0.0f64, |a, &v| a.max(v.abs())));

    let mut spec = fft::rfft(u0);
    for (s, d) in spec.iter_mut().zip(&sp.dealias) {
        *s *= d;
    }

    let nf = spec.len();
    let mut k1 = vec![Complex::new(0.0, 0.0); nf];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut stage = k1.clone();

    let dt_diff = DIFFUSIVE_STABILITY * dx * dx / cfg.nu;
    let mut t = 0.0;
    let mut step = 0usize;
    while t < cfg.t_end {
        let u = fft::irfft(&spec, n);
        let umax = u.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if umax > blow || !umax.is_finite() {
            return Err(SolveError::Blowup {
                step,
                amplitude: umax,
            });
        }
        let dt_adv = if umax > 0.0 { dx / umax } else { f64::INFINITY };
        let mut dt = SAFETY * cfg.dt_scale * dt_adv.min(dt_diff);
        if t + dt > cfg.t_end {
            dt = cfg.t_end - t;
        }

        sp.rhs(&spec, cfg.nu, &mut k1);
        for j in 0..nf {
            stage[j] = spec[j] + k1[j] * (dt / 2.0);
        }
        sp.rhs(&stage, cfg.nu, &mut k2);
        for j in 0..nf {
            stage[j] = spec[j] + k2[j] * (dt / 2.0);
        }
        sp.rhs(&stage, cfg.nu, &mut k3);
        for j in 0..nf {
            stage[j] = spec[j] + k3[j] * dt;
        }
        sp.rhs(&stage, cfg.nu, &mut k4);
        for j in 0..nf {
            spec[j] += (k1[j] + (k2[j] + k3[j]) * 2.0 + k4[j]) * (dt / 6.0);
        }
        t += dt;
        step += 1;
    }
    Ok(fft::irfft(&spec, n))
}
