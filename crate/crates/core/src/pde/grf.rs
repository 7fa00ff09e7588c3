//! Periodic Gaussian random fields on [0,1) by spectral synthesis.
//!
//! Fields are drawn from N(mean, scale * (-laplacian + tau^2 I)^(-alpha)) on
//! the torus. Each Fourier mode j carries variance
//! lambda_j = scale * (4 pi^2 j^2 + tau^2)^(-alpha), and the field is the
//! truncated Karhunen-Loeve sum over the real trigonometric basis, realized
//! with one inverse FFT.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::diff::fft;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrfParams {
    pub mean: f64,
    pub scale: f64,
    pub tau: f64,
    pub alpha: f64,
}

pub fn mode_variance(j: usize, p: &GrfParams) -> f64 {
    let w2 = 4.0 * std::f64::consts::PI.powi(2) * (j * j) as f64 + p.tau * p.tau;
    p.scale * w2.powf(-p.alpha)
}

/// Stationary pointwise variance of the synthesized field: the constant mode
/// plus two of each paired cos/sin mode plus the unpaired Nyquist mode.
pub fn pointwise_variance(n: usize, p: &GrfParams) -> f64 {
    let mut v = mode_variance(0, p);
    for j in 1..n / 2 {
        v += 2.0 * mode_variance(j, p);
    }
    v + mode_variance(n / 2, p)
}

/// One field on the n-point periodic grid. Draw order is fixed (constant
/// mode, then cos/sin pairs by frequency, then Nyquist) so a sample depends
/// only on its own stream.
pub fn sample(n: usize, p: &GrfParams, rng: &mut ChaCha8Rng) -> Vec<f64> {
    assert!(n.is_power_of_two() && n >= 4, "grf length {} must be a power of two >= 4", n);
    let half = n / 2;
    let mut spec = vec![Complex::new(0.0, 0.0); half + 1];
    let normal = StandardNormal;
    let xi0: f64 = normal.sample(rng);
    spec[0] = Complex::new(n as f64 * mode_variance(0, p).sqrt() * xi0, 0.0);
    for j in 1..half {
        let amp = 0.5 * n as f64 * (2.0 * mode_variance(j, p)).sqrt();
        let xi: f64 = normal.sample(rng);
        let eta: f64 = normal.sample(rng);
        spec[j] = Complex::new(amp * xi, -amp * eta);
    }
    let xin: f64 = normal.sample(rng);
    spec[half] = Complex::new(n as f64 * mode_variance(half, p).sqrt() * xin, 0.0);
    let mut field = fft::irfft(&spec, n);
    for v in &mut field {
        *v += p.mean;
    }
    field
}
