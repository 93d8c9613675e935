//! AdamW with decoupled weight decay:
//! `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 0.01 }
    }
}

pub struct AdamW<T: Scalar> {
    params: Vec<Tensor<T>>,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    pub step_count: u64,
    pub config: AdamWConfig,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: Vec<Tensor<T>>, config: AdamWConfig) -> Self {
        let m = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        let v = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        AdamW { params, m, v, step_count: 0, config }
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    /// One update with the given learning rate. Every parameter must carry a
    /// gradient (a zero gradient is fine; a missing one is a state error).
    pub fn step(&mut self, lr: f64) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count as i32;
        let c = self.config;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one = T::one();
        let bc1 = T::from_f64(1.0 - c.beta1.powi(t));
        let bc2 = T::from_f64(1.0 - c.beta2.powi(t));
        let lr_t = T::from_f64(lr);
        let eps = T::from_f64(c.epsilon);
        let wd = T::from_f64(c.weight_decay);
        for (idx, p) in self.params.iter().enumerate() {
            let grad = p.grad().ok_or_else(|| {
                Error::State(format!("parameter {idx} has no gradient at optimizer step"))
            })?;
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            p.update_values(|vals| {
                for i in 0..vals.len() {
                    let g = grad[i];
                    m[i] = b1 * m[i] + (one - b1) * g;
                    v[i] = b2 * v[i] + (one - b2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    vals[i] = vals[i] - lr_t * (m_hat / (v_hat.sqrt() + eps) + wd * vals[i]);
                }
            });
        }
        Ok(())
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    /// Moment buffers and step counter for checkpointing, in parameter order.
    pub fn export_state(&self) -> (u64, Vec<Vec<T>>, Vec<Vec<T>>) {
        (self.step_count, self.m.clone(), self.v.clone())
    }

    pub fn import_state(&mut self, step: u64, m: Vec<Vec<T>>, v: Vec<Vec<T>>) -> Result<()> {
        if m.len() != self.params.len() || v.len() != self.params.len() {
            return Err(Error::State("optimizer state does not match parameter list".into()));
        }
        for (i, p) in self.params.iter().enumerate() {
            if m[i].len() != p.numel() || v[i].len() != p.numel() {
                return Err(Error::State(format!("optimizer state {i} has wrong size")));
            }
        }
        self.step_count = step;
        self.m = m;
        self.v = v;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_no_decay_leaves_params() {
        let p = Tensor::new(vec![1.0f64, -2.0], &[2], true);
        let mut opt = AdamW::new(vec![p.clone()], AdamWConfig { weight_decay: 0.0, ..Default::default() });
        p.accumulate_grad(&[0.0, 0.0]);
        opt.step(0.1).unwrap();
        assert_eq!(p.to_vec(), vec![1.0, -2.0]);
    }

    #[test]
    fn decay_only_update() {
        let p = Tensor::new(vec![1.0f64], &[1], true);
        let mut opt = AdamW::new(vec![p.clone()], AdamWConfig { weight_decay: 0.01, ..Default::default() });
        p.accumulate_grad(&[0.0]);
        opt.step(0.1).unwrap();
        assert!((p.to_vec()[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn first_step_with_unit_grad_moves_by_lr() {
        let p = Tensor::new(vec![0.5f64], &[1], true);
        let mut opt = AdamW::new(vec![p.clone()], AdamWConfig { weight_decay: 0.0, ..Default::default() });
        p.accumulate_grad(&[1.0]);
        let lr = 0.01;
        opt.step(lr).unwrap();
        // bias-corrected first step: m_hat = 1, v_hat = 1 -> delta = lr/(1+eps)
        let expected = 0.5 - lr * (1.0 / (1.0 + 1e-8));
        assert!((p.to_vec()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn missing_gradient_is_a_state_error() {
        let p = Tensor::new(vec![1.0f64], &[1], true);
        let mut opt = AdamW::new(vec![p.clone()], AdamWConfig::default());
        assert!(matches!(opt.step(0.1), Err(Error::State(_))));
    }
}
