//! Central finite differences against a re-evaluated forward pass. Lives in
//! the library so integration suites can drive it, but it deliberately knows
//! nothing about how analytic gradients are computed.

use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Numerical d(loss)/d(param[i]) for every element of `param`, where `eval`
/// re-runs the forward pass from scratch and returns the scalar loss.
pub fn numerical_grad<T: Scalar>(
    param: &Tensor<T>,
    h: f64,
    mut eval: impl FnMut() -> f64,
) -> Vec<f64> {
    let n = param.numel();
    let mut grads = Vec::with_capacity(n);
    let step = T::from_f64(h);
    for i in 0..n {
        let orig = param.value_at(i);
        param.set_value_at(i, orig + step);
        let plus = eval();
        param.set_value_at(i, orig - step);
        let minus = eval();
        param.set_value_at(i, orig);
        grads.push((plus - minus) / (2.0 * h));
    }
    grads
}

/// Max relative error between analytic and numerical gradients,
/// `|a - n| / max(1, |a|, |n|)`.
pub fn max_relative_error(analytic: &[f64], numerical: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numerical.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}
