//! Reverse-mode automatic differentiation on dense row-major tensors.
//!
//! A [`Tensor`] is a shared handle to a value buffer plus an optional
//! gradient buffer. Operations on tensors that (transitively) require
//! gradients record a backward closure; [`Tensor::backward`] runs the tape in
//! reverse topological order and accumulates gradients into every
//! `requires_grad` tensor reachable from the loss.

use std::cell::{Ref, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::scalar::Scalar;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

struct Node<T: Scalar> {
    parents: Vec<Tensor<T>>,
    /// Receives this node's gradient, accumulates into the parents.
    backward: Box<dyn Fn(&[T])>,
}

struct Inner<T: Scalar> {
    values: Vec<T>,
    shape: Vec<usize>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    node: Option<Node<T>>,
    id: u64,
}

pub struct Tensor<T: Scalar> {
    inner: Rc<RefCell<Inner<T>>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor { inner: Rc::clone(&self.inner) }
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    pub fn new(values: Vec<T>, shape: &[usize], requires_grad: bool) -> Self {
        assert_eq!(values.len(), numel(shape), "shape/value length mismatch");
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                values,
                shape: shape.to_vec(),
                grad: None,
                requires_grad,
                node: None,
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            })),
        }
    }

    pub fn scalar(v: T, requires_grad: bool) -> Self {
        Tensor::new(vec![v], &[1], requires_grad)
    }

    pub fn zeros(shape: &[usize], requires_grad: bool) -> Self {
        Tensor::new(vec![T::zero(); numel(shape)], shape, requires_grad)
    }

    /// Build an op output: records the backward closure only when some
    /// parent lies on a gradient path.
    pub fn graph_op(values: Vec<T>, shape: &[usize], parents: Vec<Tensor<T>>, backward: Box<dyn Fn(&[T])>) -> Self {
        let needs = parents.iter().any(|p| p.grad_path());
        let out = Tensor::new(values, shape, false);
        if needs {
            out.inner.borrow_mut().node = Some(Node { parents, backward });
        }
        out
    }

    fn result(values: Vec<T>, shape: &[usize], parents: Vec<Tensor<T>>, backward: Box<dyn Fn(&[T])>) -> Self {
        Tensor::graph_op(values, shape, parents, backward)
    }

    /// True if gradients must flow through this tensor.
    pub fn grad_path(&self) -> bool {
        let b = self.inner.borrow();
        b.requires_grad || b.node.is_some()
    }

    pub fn id(&self) -> u64 {
        self.inner.borrow().id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn values(&self) -> Ref<'_, Vec<T>> {
        Ref::map(self.inner.borrow(), |i| &i.values)
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.borrow().values.clone()
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> T {
        let b = self.inner.borrow();
        assert_eq!(b.values.len(), 1, "item() on non-scalar tensor");
        b.values[0]
    }

    pub fn is_finite(&self) -> bool {
        self.inner.borrow().values.iter().all(|v| v.is_finite())
    }

    pub fn set_values(&self, values: &[T]) {
        let mut b = self.inner.borrow_mut();
        assert_eq!(b.values.len(), values.len());
        b.values.copy_from_slice(values);
    }

    /// Overwrite one element; used by finite-difference checks.
    pub fn set_value_at(&self, idx: usize, v: T) {
        self.inner.borrow_mut().values[idx] = v;
    }

    pub fn value_at(&self, idx: usize) -> T {
        self.inner.borrow().values[idx]
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    pub fn accumulate_grad(&self, delta: &[T]) {
        let mut b = self.inner.borrow_mut();
        match &mut b.grad {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta.iter()) {
                    *gi += *di;
                }
            }
            None => b.grad = Some(delta.to_vec()),
        }
    }

    /// Apply `f` to the raw value buffer (optimizer updates).
    pub fn update_values(&self, f: impl FnOnce(&mut [T])) {
        f(&mut self.inner.borrow_mut().values);
    }

    /// Drop the recorded tape node, keeping values. Detached tensors act as
    /// constants in later graphs.
    pub fn detach(&self) -> Tensor<T> {
        Tensor::new(self.to_vec(), &self.shape(), false)
    }

    /// Reverse-mode sweep from a scalar output.
    pub fn backward(&self) {
        assert_eq!(self.numel(), 1, "backward() requires a scalar loss");
        // post-order DFS, then reverse for the sweep
        let mut order: Vec<Tensor<T>> = Vec::new();
        let mut visited: std::collections::HashSet<u64> = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            let b = t.inner.borrow();
            if let Some(node) = &b.node {
                for p in &node.parents {
                    if !visited.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        self.accumulate_grad(&[T::one()]);
        for t in order.iter().rev() {
            let (grad, has_node) = {
                let b = t.inner.borrow();
                (b.grad.clone(), b.node.is_some())
            };
            if !has_node {
                continue;
            }
            let Some(grad) = grad else { continue };
            let b = t.inner.borrow();
            if let Some(node) = &b.node {
                (node.backward)(&grad);
            }
        }
    }

    // ---- operations ----

    pub fn matmul(&self, rhs: &Tensor<T>) -> Tensor<T> {
        let (m, k) = as_2d(&self.shape());
        let (k2, n) = as_2d(&rhs.shape());
        assert_eq!(k, k2, "matmul inner dimensions differ: {k} vs {k2}");
        let out = mm(&self.values(), &rhs.values(), m, k, n);
        let lhs_c = self.clone();
        let rhs_c = rhs.clone();
        let lhs_vals = self.to_vec();
        let rhs_vals = rhs.to_vec();
        Tensor::result(
            out,
            &[m, n],
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                if lhs_c.grad_path() {
                    lhs_c.accumulate_grad(&mm_abt(g, &rhs_vals, m, n, k));
                }
                if rhs_c.grad_path() {
                    rhs_c.accumulate_grad(&mm_atb(&lhs_vals, g, m, k, n));
                }
            }),
        )
    }

    pub fn transpose(&self) -> Tensor<T> {
        let (m, n) = as_2d(&self.shape());
        let vals = self.values();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = vals[i * n + j];
            }
        }
        drop(vals);
        let src = self.clone();
        Tensor::result(
            out,
            &[n, m],
            vec![self.clone()],
            Box::new(move |g| {
                let mut gt = vec![T::zero(); m * n];
                for j in 0..n {
                    for i in 0..m {
                        gt[i * n + j] = g[j * m + i];
                    }
                }
                src.accumulate_grad(&gt);
            }),
        )
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Tensor<T> {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        let out: Vec<T> = self
            .values()
            .iter()
            .zip(rhs.values().iter())
            .map(|(a, b)| *a + *b)
            .collect();
        let a = self.clone();
        let b = rhs.clone();
        Tensor::result(
            out,
            &self.shape(),
            vec![self.clone(), rhs.clone()],
            Box::new(move |g| {
                if a.grad_path() {
                    a.accumulate_grad(g);
                }
                if b.grad_path() {
                    b.accumulate_grad(g);
                }
            }),
        )
    }

    /// `[m x n] + [n]` with the bias broadcast over rows.
    pub fn add_row_broadcast(&self, bias: &Tensor<T>) -> Tensor<T> {
        let (m, n) = as_2d(&self.shape());
        assert_eq!(bias.numel(), n, "bias length mismatch");
        let bv = bias.to_vec();
        let out: Vec<T> = self
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| *v + bv[i % n])
            .collect();
        let x = self.clone();
        let b = bias.clone();
        Tensor::result(
            out,
            &[m, n],
            vec![self.clone(), bias.clone()],
            Box::new(move |g| {
                if x.grad_path() {
                    x.accumulate_grad(g);
                }
                if b.grad_path() {
                    let mut db = vec![T::zero(); n];
                    for (i, gi) in g.iter().enumerate() {
                        db[i % n] += *gi;
                    }
                    b.accumulate_grad(&db);
                }
            }),
        )
    }

    pub fn relu(&self) -> Tensor<T> {
        let vals = self.to_vec();
        let out: Vec<T> = vals.iter().map(|v| if *v > T::zero() { *v } else { T::zero() }).collect();
        let x = self.clone();
        Tensor::result(
            out,
            &self.shape(),
            vec![self.clone()],
            Box::new(move |g| {
                let dx: Vec<T> = g
                    .iter()
                    .zip(vals.iter())
                    .map(|(gi, v)| if *v > T::zero() { *gi } else { T::zero() })
                    .collect();
                x.accumulate_grad(&dx);
            }),
        )
    }

    pub fn exp(&self) -> Tensor<T> {
        let out: Vec<T> = self.values().iter().map(|v| v.exp()).collect();
        let x = self.clone();
        let out_c = out.clone();
        Tensor::result(
            out,
            &self.shape(),
            vec![self.clone()],
            Box::new(move |g| {
                let dx: Vec<T> = g.iter().zip(out_c.iter()).map(|(gi, yi)| *gi * *yi).collect();
                x.accumulate_grad(&dx);
            }),
        )
    }

    pub fn mul_const(&self, c: f64) -> Tensor<T> {
        let k = T::from_f64(c);
        let out: Vec<T> = self.values().iter().map(|v| *v * k).collect();
        let x = self.clone();
        Tensor::result(
            out,
            &self.shape(),
            vec![self.clone()],
            Box::new(move |g| {
                let dx: Vec<T> = g.iter().map(|gi| *gi * k).collect();
                x.accumulate_grad(&dx);
            }),
        )
    }

    /// Elementwise division by a one-element tensor (the temperature).
    pub fn div_by_scalar(&self, s: &Tensor<T>) -> Tensor<T> {
        assert_eq!(s.numel(), 1, "div_by_scalar needs a scalar divisor");
        let sv = s.item();
        let xv = self.to_vec();
        let out: Vec<T> = xv.iter().map(|v| *v / sv).collect();
        let x = self.clone();
        let sc = s.clone();
        Tensor::result(
            out,
            &self.shape(),
            vec![self.clone(), s.clone()],
            Box::new(move |g| {
                if x.grad_path() {
                    let dx: Vec<T> = g.iter().map(|gi| *gi / sv).collect();
                    x.accumulate_grad(&dx);
                }
                if sc.grad_path() {
                    let mut ds = T::zero();
                    for (gi, vi) in g.iter().zip(xv.iter()) {
                        ds += -(*gi) * *vi / (sv * sv);
                    }
                    sc.accumulate_grad(&[ds]);
                }
            }),
        )
    }

    /// Row-wise L2 normalization of a `[m x n]` matrix.
    pub fn l2_normalize_rows(&self) -> Tensor<T> {
        let (m, n) = as_2d(&self.shape());
        let xv = self.to_vec();
        let mut out = vec![T::zero(); m * n];
        let mut norms = vec![T::zero(); m];
        let tiny = T::from_f64(1e-30);
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let norm = row.iter().map(|v| *v * *v).sum::<T>().sqrt().max(tiny);
            norms[i] = norm;
            for j in 0..n {
                out[i * n + j] = row[j] / norm;
            }
        }
        let x = self.clone();
        let yv = out.clone();
        Tensor::result(
            out,
            &[m, n],
            vec![self.clone()],
            Box::new(move |g| {
                let mut dx = vec![T::zero(); m * n];
                for i in 0..m {
                    let gr = &g[i * n..(i + 1) * n];
                    let yr = &yv[i * n..(i + 1) * n];
                    let dot = gr.iter().zip(yr.iter()).map(|(a, b)| *a * *b).sum::<T>();
                    for j in 0..n {
                        dx[i * n + j] = (gr[j] - dot * yr[j]) / norms[i];
                    }
                }
                x.accumulate_grad(&dx);
            }),
        )
    }

    /// Mean over consecutive groups of `group` rows: `[g*b x n] -> [b x n]`.
    pub fn mean_pool_rows(&self, group: usize) -> Tensor<T> {
        let (rows, n) = as_2d(&self.shape());
        assert!(group > 0 && rows % group == 0, "rows {rows} not divisible by group {group}");
        let b = rows / group;
        let xv = self.values();
        let inv = T::from_f64(1.0 / group as f64);
        let mut out = vec![T::zero(); b * n];
        for i in 0..rows {
            let o = i / group;
            for j in 0..n {
                out[o * n + j] += xv[i * n + j] * inv;
            }
        }
        drop(xv);
        let x = self.clone();
        Tensor::result(
            out,
            &[b, n],
            vec![self.clone()],
            Box::new(move |g| {
                let mut dx = vec![T::zero(); rows * n];
                for i in 0..rows {
                    let o = i / group;
                    for j in 0..n {
                        dx[i * n + j] = g[o * n + j] * inv;
                    }
                }
                x.accumulate_grad(&dx);
            }),
        )
    }
}

pub fn as_2d(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => panic!("expected rank <= 2, got {shape:?}"),
    }
}

/// `a [m x k] * b [k x n]`.
pub fn mm<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// `a [m x n] * b^T [n x k]` where `b` is `[k x n]`.
fn mm_abt<T: Scalar>(a: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b[j * n..(j + 1) * n];
            let mut acc = T::zero();
            for p in 0..n {
                acc += arow[p] * brow[p];
            }
            out[i * k + j] = acc;
        }
    }
    out
}

/// `a^T [k x m] * b [m x n]` where `a` is `[m x k]`.
fn mm_atb<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = arow[p];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_values_and_grads() {
        let a = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2], true);
        let b = Tensor::new(vec![5.0, 6.0, 7.0, 8.0], &[2, 2], true);
        let c = a.matmul(&b);
        assert_eq!(c.to_vec(), vec![19.0, 22.0, 43.0, 50.0]);
        let loss = c.mul_const(1.0); // keep graph
        // sum all entries via mean_pool + scale to make a scalar
        let s = loss.mean_pool_rows(2).matmul(&Tensor::new(vec![1.0, 1.0], &[2, 1], false));
        s.backward();
        // d(sum/2)/dA = (1/2) * ones * B^T
        let ga = a.grad().unwrap();
        assert_eq!(ga, vec![5.5, 7.5, 5.5, 7.5]);
    }

    #[test]
    fn relu_masks_gradient() {
        let x = Tensor::new(vec![-1.0, 0.0, 2.0], &[1, 3], true);
        let y = x.relu();
        assert_eq!(y.to_vec(), vec![0.0, 0.0, 2.0]);
        let s = y.matmul(&Tensor::new(vec![1.0, 1.0, 1.0], &[3, 1], false));
        s.backward();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn gradient_accumulates_across_uses() {
        let x = Tensor::scalar(3.0, true);
        let y = x.add(&x); // 2x
        y.backward();
        assert_eq!(x.grad().unwrap(), vec![2.0]);
    }

    #[test]
    fn normalize_rows_is_unit_norm() {
        let x = Tensor::new(vec![3.0f64, 4.0, 1.0, 0.0], &[2, 2], true);
        let y = x.l2_normalize_rows();
        let v = y.to_vec();
        assert!((v[0] - 0.6).abs() < 1e-12 && (v[1] - 0.8).abs() < 1e-12);
        assert!((v[2] - 1.0).abs() < 1e-12 && v[3].abs() < 1e-12);
    }

    #[test]
    fn detach_blocks_gradient() {
        let x = Tensor::scalar(2.0, true);
        let y = x.mul_const(3.0).detach();
        let z = y.mul_const(2.0);
        z.backward();
        assert!(x.grad().is_none());
    }
}
