//! FFT kernels with a global plan cache.
//!
//! Convention: forward transforms are unnormalized, inverse transforms carry
//! the full 1/n factor. Real transforms keep the n/2 + 1 non-redundant bins.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

pub fn fft_forward(buf: &mut [Complex<f64>]) {
    plan(buf.len(), false).process(buf);
}

pub fn fft_inverse(buf: &mut [Complex<f64>]) {
    let n = buf.len();
    plan(n, true).process(buf);
    let s = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= s;
    }
}

/// Real-to-complex forward transform: n reals to n/2 + 1 bins.
pub fn rfft(x: &[f64]) -> Vec<Complex<f64>> {
    let n = x.len();
    assert!(n >= 2 && n % 2 == 0, "rfft needs even length >= 2, got {}", n);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    buf.truncate(n / 2 + 1);
    buf
}

/// Complex-to-real inverse of `rfft`. The spectrum is completed by conjugate
/// symmetry; imaginary parts of bins 0 and n/2 are ignored.
pub fn irfft(spec: &[Complex<f64>], n: usize) -> Vec<f64> {
    assert_eq!(spec.len(), n / 2 + 1, "irfft expects {} bins for length {}", n / 2 + 1, n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    buf[..spec.len()].copy_from_slice(spec);
    for j in 1..n / 2 {
        buf[n - j] = spec[j].conj();
    }
    fft_inverse(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfft_of_single_cosine_is_one_bin() {
        let n = 64;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * 3.0 * i as f64 / n as f64).cos()).collect();
        let spec = rfft(&x);
        for (j, c) in spec.iter().enumerate() {
            let want = if j == 3 { n as f64 / 2.0 } else { 0.0 };
            assert!((c.re - want).abs() < 1e-9, "bin {} re {}", j, c.re);
            assert!(c.im.abs() < 1e-9, "bin {} im {}", j, c.im);
        }
    }

    #[test]
    fn irfft_inverts_rfft() {
        let n = 128;
        let x: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 23) as f64 / 7.0 - 1.0).collect();
        let back = irfft(&rfft(&x), n);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
