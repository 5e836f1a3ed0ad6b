//! Named trainable tensors with optimizer state.

use std::cell::RefCell;
use std::rc::Rc;

use super::Tensor;

struct ParamInner {
    name: String,
    tensor: Tensor,
    /// Adam first/second moment estimates, lazily meaningful once training starts.
    moment1: RefCell<Vec<f64>>,
    moment2: RefCell<Vec<f64>>,
}

/// A leaf [`Tensor`] with a stable name and optimizer slots.
///
/// Clones share storage, so tied modules can reuse one parameter under a
/// single name.
#[derive(Clone)]
pub struct Parameter {
    inner: Rc<ParamInner>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Parameter {
        let len = tensor.len();
        Parameter {
            inner: Rc::new(ParamInner {
                name: name.into(),
                tensor,
                moment1: RefCell::new(vec![0.0; len]),
                moment2: RefCell::new(vec![0.0; len]),
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    /// The underlying leaf tensor. Use it directly in forward passes so
    /// gradients accumulate here.
    pub fn tensor(&self) -> &Tensor {
        &self.inner.tensor
    }

    pub fn zero_grad(&self) {
        self.inner.tensor.zero_grad();
    }

    /// True when both parameters share the same storage.
    pub fn same_storage(&self, other: &Parameter) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// One Adam update for this parameter. `step` is 1-based for bias correction.
    pub fn adam_update(&self, lr: f64, beta1: f64, beta2: f64, eps: f64, step: u64) {
        let grad = self.inner.tensor.grad();
        let mut m = self.inner.moment1.borrow_mut();
        let mut v = self.inner.moment2.borrow_mut();
        let bc1 = 1.0 - beta1.powi(step as i32);
        let bc2 = 1.0 - beta2.powi(step as i32);
        let mut values = self.inner.tensor.values();
        for i in 0..values.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        self.inner.tensor.set_values(&values);
    }

    pub fn moment1(&self) -> Vec<f64> {
        self.inner.moment1.borrow().clone()
    }

    pub fn moment2(&self) -> Vec<f64> {
        self.inner.moment2.borrow().clone()
    }

    pub fn set_moments(&self, m1: &[f64], m2: &[f64]) {
        self.inner.moment1.borrow_mut().copy_from_slice(m1);
        self.inner.moment2.borrow_mut().copy_from_slice(m2);
    }
}
