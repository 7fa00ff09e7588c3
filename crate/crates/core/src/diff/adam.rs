//! Adam optimizer with bias correction.

use super::tensor::Tensor;
use crate::error::TrainError;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    lr_scale: Vec<f64>,
    names: Vec<String>,
}

impl Adam {
    pub fn new(shapes: &[Vec<usize>], cfg: AdamConfig) -> Adam {
        Adam {
            cfg,
            t: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            lr_scale: vec![1.0; shapes.len()],
            names: (0..shapes.len()).map(|i| format!("param{}", i)).collect(),
        }
    }

    pub fn for_params(params: &[&Tensor], cfg: AdamConfig) -> Adam {
        let shapes: Vec<Vec<usize>> = params.iter().map(|p| p.shape().to_vec()).collect();
        Adam::new(&shapes, cfg)
    }

    /// Per-parameter learning-rate multipliers, e.g. a damped backbone.
    pub fn set_lr_scales(&mut self, scales: Vec<f64>) {
        assert_eq!(scales.len(), self.m.len(), "one scale per parameter");
        self.lr_scale = scales;
    }

    pub fn set_names(&mut self, names: Vec<String>) {
        assert_eq!(names.len(), self.m.len(), "one name per parameter");
        self.names = names;
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update with the stored base rate.
    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<(), TrainError> {
        let lr = self.cfg.lr;
        self.step_with_lr(params, grads, lr)
    }

    /// One update at an explicit base rate (for schedules). Moments persist
    /// across calls; gradients are consumed, not retained.
    pub fn step_with_lr(
        &mut self,
        mut params: Vec<&mut Tensor>,
        grads: &[Tensor],
        lr: f64,
    ) -> Result<(), TrainError> {
        assert_eq!(params.len(), self.m.len(), "parameter count changed under the optimizer");
        assert_eq!(grads.len(), self.m.len(), "one gradient per parameter");
        for (i, g) in grads.iter().enumerate() {
            if !g.all_finite() {
                return Err(TrainError::NonFiniteGrad {
                    param: self.names[i].clone(),
                });
            }
        }
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            assert_eq!(p.shape(), self.m[i].shape(), "parameter {} shape drift", self.names[i]);
            let rate = lr * self.lr_scale[i];
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = grads[i].data();
            for ((theta, (mj, vj)), &gj) in p.data_mut().iter_mut().zip(m.iter_mut().zip(v.iter_mut())).zip(g) {
                *mj = b1 * *mj + (1.0 - b1) * gj;
                *vj = b2 * *vj + (1.0 - b2) * gj * gj;
                let mhat = *mj / bc1;
                let vhat = *vj / bc2;
                *theta -= rate * mhat / (vhat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}
