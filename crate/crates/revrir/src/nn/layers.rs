//! Trainable layers: linear, batch normalization, dropout, and the
//! feed-forward block (Linear -> ReLU -> BatchNorm) used by both encoders.

use rand::Rng as _;

use super::tensor::{as_2d, Tensor};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Xavier-uniform init: +/- sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform<T: Scalar>(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Vec<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out)
        .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
        .collect()
}

pub struct Linear<T: Scalar> {
    /// `[in x out]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let weight = Tensor::new(xavier_uniform(in_dim, out_dim, rng), &[in_dim, out_dim], true);
        let bias = Tensor::new(vec![T::zero(); out_dim], &[out_dim], true);
        Linear { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        x.matmul(&self.weight).add_row_broadcast(&self.bias)
    }

    pub fn params(&self) -> Vec<Tensor<T>> {
        vec![self.weight.clone(), self.bias.clone()]
    }

    pub fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

pub struct BatchNorm<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta_shift: Tensor<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub epsilon: f64,
    pub features: usize,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            gamma: Tensor::new(vec![T::one(); features], &[features], true),
            beta_shift: Tensor::new(vec![T::zero(); features], &[features], true),
            running_mean: vec![T::zero(); features],
            running_var: vec![T::one(); features],
            momentum: 0.1,
            epsilon: 1e-5,
            features,
        }
    }

    /// Train mode normalizes by batch statistics and updates the running
    /// buffers; eval mode uses the running buffers only.
    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let (b, f) = as_2d(&x.shape());
        assert_eq!(f, self.features, "batchnorm feature mismatch");
        let eps = T::from_f64(self.epsilon);
        let (mean, var) = if train {
            let xv = x.values();
            let inv_b = T::from_f64(1.0 / b as f64);
            let mut mean = vec![T::zero(); f];
            for i in 0..b {
                for j in 0..f {
                    mean[j] += xv[i * f + j] * inv_b;
                }
            }
            let mut var = vec![T::zero(); f];
            for i in 0..b {
                for j in 0..f {
                    let d = xv[i * f + j] - mean[j];
                    var[j] += d * d * inv_b;
                }
            }
            drop(xv);
            let mom = T::from_f64(self.momentum);
            let keep = T::one() - mom;
            for j in 0..f {
                self.running_mean[j] = keep * self.running_mean[j] + mom * mean[j];
                self.running_var[j] = keep * self.running_var[j] + mom * var[j];
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };

        let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
        let xv = x.to_vec();
        let mut xhat = vec![T::zero(); b * f];
        for i in 0..b {
            for j in 0..f {
                xhat[i * f + j] = (xv[i * f + j] - mean[j]) * inv_std[j];
            }
        }
        let gv = self.gamma.to_vec();
        let bv = self.beta_shift.to_vec();
        let out: Vec<T> = xhat
            .iter()
            .enumerate()
            .map(|(i, v)| gv[i % f] * *v + bv[i % f])
            .collect();

        let x_c = x.clone();
        let gamma_c = self.gamma.clone();
        let beta_c = self.beta_shift.clone();
        let xhat_c = xhat;
        let inv_std_c = inv_std;
        let backward: Box<dyn Fn(&[T])> = if train {
            Box::new(move |g: &[T]| {
                let inv_b = T::from_f64(1.0 / b as f64);
                let mut dgamma = vec![T::zero(); f];
                let mut dbeta = vec![T::zero(); f];
                let mut g_mean = vec![T::zero(); f];
                let mut gx_mean = vec![T::zero(); f];
                for i in 0..b {
                    for j in 0..f {
                        let gi = g[i * f + j];
                        dgamma[j] += gi * xhat_c[i * f + j];
                        dbeta[j] += gi;
                        g_mean[j] += gi * inv_b;
                        gx_mean[j] += gi * xhat_c[i * f + j] * inv_b;
                    }
                }
                if x_c_requires(&x_c) {
                    let gv = gamma_c.to_vec();
                    let mut dx = vec![T::zero(); b * f];
                    for i in 0..b {
                        for j in 0..f {
                            let gi = g[i * f + j];
                            dx[i * f + j] = gv[j]
                                * inv_std_c[j]
                                * (gi - g_mean[j] - xhat_c[i * f + j] * gx_mean[j]);
                        }
                    }
                    x_c.accumulate_grad(&dx);
                }
                gamma_c.accumulate_grad(&dgamma);
                beta_c.accumulate_grad(&dbeta);
            })
        } else {
            Box::new(move |g: &[T]| {
                let mut dgamma = vec![T::zero(); f];
                let mut dbeta = vec![T::zero(); f];
                for i in 0..b {
                    for j in 0..f {
                        dgamma[j] += g[i * f + j] * xhat_c[i * f + j];
                        dbeta[j] += g[i * f + j];
                    }
                }
                if x_c_requires(&x_c) {
                    let gv = gamma_c.to_vec();
                    let dx: Vec<T> = g
                        .iter()
                        .enumerate()
                        .map(|(i, gi)| *gi * gv[i % f] * inv_std_c[i % f])
                        .collect();
                    x_c.accumulate_grad(&dx);
                }
                gamma_c.accumulate_grad(&dgamma);
                beta_c.accumulate_grad(&dbeta);
            })
        };

        Tensor::graph_op(out, &[b, f], vec![x.clone(), self.gamma.clone(), self.beta_shift.clone()], backward)
    }

    pub fn params(&self) -> Vec<Tensor<T>> {
        vec![self.gamma.clone(), self.beta_shift.clone()]
    }

    pub fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta_shift.clone()));
    }

    /// Running buffers are model state but not optimizer parameters.
    pub fn buffers(&self) -> Vec<(String, Vec<T>)> {
        vec![
            ("running_mean".to_string(), self.running_mean.clone()),
            ("running_var".to_string(), self.running_var.clone()),
        ]
    }
}

fn x_c_requires<T: Scalar>(t: &Tensor<T>) -> bool {
    // gradient only needs to flow into x when something upstream is trainable
    t.grad_path()
}

/// Inverted dropout: surviving activations are scaled by 1/(1-rate) in train
/// mode; eval mode and rate 0 are the identity.
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Dropout { rate }
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor<T>, train: bool, rng: &mut Rng) -> Tensor<T> {
        if !train || self.rate == 0.0 {
            return x.clone();
        }
        let keep = 1.0 - self.rate;
        let scale = T::from_f64(1.0 / keep);
        let mask: Vec<T> = (0..x.numel())
            .map(|_| if rng.gen::<f64>() < keep { scale } else { T::zero() })
            .collect();
        let out: Vec<T> = x.values().iter().zip(mask.iter()).map(|(v, m)| *v * *m).collect();
        let x_c = x.clone();
        Tensor::graph_op(
            out,
            &x.shape(),
            vec![x.clone()],
            Box::new(move |g| {
                let dx: Vec<T> = g.iter().zip(mask.iter()).map(|(gi, m)| *gi * *m).collect();
                x_c.accumulate_grad(&dx);
            }),
        )
    }
}

/// Linear -> ReLU -> BatchNorm.
pub struct FeedForwardBlock<T: Scalar> {
    pub linear: Linear<T>,
    pub norm: BatchNorm<T>,
}

impl<T: Scalar> FeedForwardBlock<T> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        FeedForwardBlock {
            linear: Linear::new(in_dim, out_dim, rng),
            norm: BatchNorm::new(out_dim),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let h = self.linear.forward(x).relu();
        self.norm.forward(&h, train)
    }

    pub fn params(&self) -> Vec<Tensor<T>> {
        let mut p = self.linear.params();
        p.extend(self.norm.params());
        p
    }

    pub fn named(&self, prefix: &str, out: &mut Vec<(String, Tensor<T>)>) {
        self.linear.named(&format!("{prefix}.linear"), out);
        self.norm.named(&format!("{prefix}.norm"), out);
    }
}
