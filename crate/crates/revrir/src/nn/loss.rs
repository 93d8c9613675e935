//! Classification and contrastive objectives as fused, differentiable ops.

use super::tensor::{as_2d, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-wise log-softmax with max-subtraction; returns (log-probs, probs).
fn log_softmax_rows<T: Scalar>(logits: &[T], rows: usize, cols: usize) -> (Vec<T>, Vec<T>) {
    let mut logp = vec![T::zero(); rows * cols];
    let mut p = vec![T::zero(); rows * cols];
    for i in 0..rows {
        let row = &logits[i * cols..(i + 1) * cols];
        let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row {
            sum += (*v - m).exp();
        }
        let lse = m + sum.ln();
        for j in 0..cols {
            let lp = row[j] - lse;
            logp[i * cols + j] = lp;
            p[i * cols + j] = lp.exp();
        }
    }
    (logp, p)
}

/// Mean negative log-likelihood of integer labels under softmax(logits).
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
    let (b, c) = as_2d(&logits.shape());
    if labels.len() != b {
        return Err(Error::Validation(format!(
            "labels length {} does not match batch {b}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Validation(format!("label {bad} out of range for {c} classes")));
    }
    let lv = logits.to_vec();
    let (logp, p) = log_softmax_rows(&lv, b, c);
    let inv_b = T::from_f64(1.0 / b as f64);
    let mut loss = T::zero();
    for (i, &l) in labels.iter().enumerate() {
        loss -= logp[i * c + l] * inv_b;
    }
    let labels_c = labels.to_vec();
    let logits_c = logits.clone();
    Ok(Tensor::graph_op(
        vec![loss],
        &[1],
        vec![logits.clone()],
        Box::new(move |g| {
            let scale = g[0] * inv_b;
            let mut dl = vec![T::zero(); b * c];
            for i in 0..b {
                for j in 0..c {
                    let onehot = if labels_c[i] == j { T::one() } else { T::zero() };
                    dl[i * c + j] = scale * (p[i * c + j] - onehot);
                }
            }
            logits_c.accumulate_grad(&dl);
        }),
    ))
}

/// Class-aware multi-positive contrastive term over a `[B x B]` similarity
/// logit matrix: every batch index sharing row `i`'s label is a positive.
///
/// `loss = (1/B) sum_i [ lse_i - (1/|N_i|) sum_{j in N_i} z_ij ]`
///
/// With all-distinct labels this reduces to standard InfoNCE with diagonal
/// positives.
pub fn multi_positive_nce<T: Scalar>(logits: &Tensor<T>, labels: &[u32]) -> Result<Tensor<T>> {
    let (b, c) = as_2d(&logits.shape());
    if b != c {
        return Err(Error::Validation(format!("similarity matrix must be square, got {b}x{c}")));
    }
    if labels.len() != b {
        return Err(Error::Validation(format!(
            "labels length {} does not match batch {b}",
            labels.len()
        )));
    }
    if b == 0 {
        return Err(Error::Validation("empty batch".into()));
    }
    let lv = logits.to_vec();
    let (logp, p) = log_softmax_rows(&lv, b, b);
    let positives: Vec<Vec<usize>> = (0..b)
        .map(|i| (0..b).filter(|&j| labels[j] == labels[i]).collect())
        .collect();
    let inv_b = T::from_f64(1.0 / b as f64);
    let mut loss = T::zero();
    for (i, pos) in positives.iter().enumerate() {
        let inv_n = T::from_f64(1.0 / pos.len() as f64);
        for &j in pos {
            loss -= logp[i * b + j] * inv_n * inv_b;
        }
    }
    let logits_c = logits.clone();
    Ok(Tensor::graph_op(
        vec![loss],
        &[1],
        vec![logits.clone()],
        Box::new(move |g| {
            let scale = g[0] * inv_b;
            let mut dl = vec![T::zero(); b * b];
            for (i, pos) in positives.iter().enumerate() {
                let inv_n = T::from_f64(1.0 / pos.len() as f64);
                for j in 0..b {
                    let member = if labels_contains(pos, j) { inv_n } else { T::zero() };
                    dl[i * b + j] = scale * (p[i * b + j] - member);
                }
            }
            logits_c.accumulate_grad(&dl);
        }),
    ))
}

fn labels_contains(sorted: &[usize], j: usize) -> bool {
    sorted.binary_search(&j).is_ok()
}
