//! AMSGrad with Adam-style bias correction, and the step learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Running maximum of `v`.
    pub v_max: Vec<f64>,
}

impl OptimizerState {
    pub fn new(num_params: usize) -> Self {
        Self::with_constants(num_params, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(num_params: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            v_max: vec![0.0; num_params],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Applies one update to parameters given as consecutive slices whose
    /// concatenation matches the state layout.
    pub fn update_slices(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        let total: usize = params.iter().map(|p| p.len()).sum();
        ensure_len("optimizer state", self.len(), total)?;
        if params.len() != grads.len() {
            return Err(Error::invalid("parameter and gradient slice counts differ"));
        }
        for (p, g) in params.iter().zip(grads) {
            ensure_len("gradient slice", p.len(), g.len())?;
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (x, &gi) in p.iter_mut().zip(g.iter()) {
                let m = self.beta1 * self.m[k] + (1.0 - self.beta1) * gi;
                let v = self.beta2 * self.v[k] + (1.0 - self.beta2) * gi * gi;
                let v_max = self.v_max[k].max(v);
                self.m[k] = m;
                self.v[k] = v;
                self.v_max[k] = v_max;
                let m_hat = m / bc1;
                let v_hat = v_max / bc2;
                *x -= lr * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
        Ok(())
    }
}

/// One AMSGrad step on a single parameter vector.
pub fn amsgrad_update(param: &mut [f64], grad: &[f64], state: &mut OptimizerState, lr: f64) -> Result<()> {
    state.update_slices(&mut [param], &[grad], lr)
}

/// Step decay: the rate is divided by `factor` at the start of each milestone
/// epoch (epochs are 1-indexed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            milestones: vec![20, 40],
            factor: 10.0,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0 && self.factor.is_finite()) {
            return Err(Error::Config("schedule factor must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize, base: f64) -> f64 {
        let decays = self.milestones.iter().filter(|&&m| epoch >= m).count() as i32;
        base / self.factor.powi(decays)
    }
}

/// Default schedule: `base` before epoch 20, `base/10` until 40, then `base/100`.
pub fn lr_schedule(epoch: usize, base: f64) -> f64 {
    LrSchedule::default().lr_at(epoch, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = OptimizerState::new(2);
        amsgrad_update(&mut p, &[0.0, 0.0], &mut s, 1e-3).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [0.5, 3.0, -7.0] {
            let mut p = vec![0.0];
            let mut s = OptimizerState::new(1);
            amsgrad_update(&mut p, &[g], &mut s, 1e-3).unwrap();
            let expected = -1e-3 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15, "{} vs {expected}", p[0]);
        }
    }

    #[test]
    fn zero_lr_is_noop() {
        let mut p = vec![0.3];
        let mut s = OptimizerState::new(1);
        amsgrad_update(&mut p, &[2.0], &mut s, 0.0).unwrap();
        assert_eq!(p, vec![0.3]);
    }

    #[test]
    fn running_max_is_monotone() {
        let mut rng = RngStream::new(1);
        let n = 16;
        let mut p = vec![0.0; n];
        let mut s = OptimizerState::new(n);
        let mut prev = s.v_max.clone();
        for step in 0..1000 {
            let scale = if step % 100 < 50 { 10.0 } else { 0.01 };
            let g: Vec<f64> = (0..n).map(|_| scale * rng.normal()).collect();
            amsgrad_update(&mut p, &g, &mut s, 1e-3).unwrap();
            for k in 0..n {
                assert!(s.v_max[k] >= s.v[k]);
                assert!(s.v_max[k] >= prev[k]);
            }
            prev.clone_from(&s.v_max);
        }
    }

    #[test]
    fn shape_errors() {
        let mut s = OptimizerState::new(2);
        assert!(amsgrad_update(&mut [0.0; 3], &[0.0; 3], &mut s, 1e-3).is_err());
        assert!(amsgrad_update(&mut [0.0; 2], &[0.0; 1], &mut s, 1e-3).is_err());
    }

    #[test]
    fn schedule_boundaries() {
        let base = 5e-4;
        assert_eq!(lr_schedule(1, base), 5e-4);
        assert_eq!(lr_schedule(19, base), 5e-4);
        assert!((lr_schedule(20, base) - 5e-5).abs() < 1e-20);
        assert!((lr_schedule(39, base) - 5e-5).abs() < 1e-20);
        assert!((lr_schedule(40, base) - 5e-6).abs() < 1e-21);
        assert!((lr_schedule(300, base) - 5e-6).abs() < 1e-21);
    }
}
