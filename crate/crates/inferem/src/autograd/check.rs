//! Finite-difference verification of backward rules.

use super::{Op, Result, Tensor, TensorError};

const STEP: f64 = 1e-5;
/// Fallback steps for coordinates whose first estimate looks noisy. A kink
/// (ReLU) within `STEP` of the evaluation point or pure roundoff can spoil a
/// single central difference; a genuinely wrong backward rule disagrees at
/// every step size, so taking the best estimate never masks one.
const RETRY_STEPS: [f64; 2] = [1.25e-6, 8e-5];
const RETRY_THRESHOLD: f64 = 3e-5;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare the analytic gradient of `f` at `point` against central finite
/// differences, returning the max relative error over all coordinates.
///
/// `point` must be a leaf; its values are perturbed in place and restored.
pub fn gradient_check<F>(f: F, point: &Tensor) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    point.zero_grad();
    let out = f(point)?;
    if !out.shape().is_empty() {
        return Err(TensorError::NotScalar {
            shape: out.shape().to_vec(),
        });
    }
    out.backward()?;
    let analytic = point.grad();
    let central = |i: usize, step: f64| -> Result<f64> {
        let orig = point.value_at(i);
        point.set_value_at(i, orig + step);
        let hi = f(point)?.item();
        point.set_value_at(i, orig - step);
        let lo = f(point)?.item();
        point.set_value_at(i, orig);
        Ok((hi - lo) / (2.0 * step))
    };
    let mut max_err: f64 = 0.0;
    #[allow(clippy::needless_range_loop)]
    for i in 0..point.len() {
        let numeric = central(i, STEP)?;
        if !numeric.is_finite() || !analytic[i].is_finite() {
            return Err(TensorError::NonFinite { op: "gradient_check" });
        }
        let mut err = relative_error(analytic[i], numeric);
        if err > RETRY_THRESHOLD {
            for step in RETRY_STEPS {
                err = err.min(relative_error(analytic[i], central(i, step)?));
            }
        }
        max_err = max_err.max(err);
    }
    Ok(max_err)
}

/// Gradient check for a closure over ambient state (a model forward pass)
/// with respect to one of its leaf parameters.
pub fn gradient_check_params<F>(f: F, param: &Tensor) -> Result<f64>
where
    F: Fn() -> Result<Tensor>,
{
    gradient_check(|_| f(), param)
}

/// Elementwise square with a deliberately wrong backward rule (3x instead of
/// 2x). Exists so the checker itself can be shown to catch bad rules.
pub fn sabotaged_square(x: &Tensor) -> Tensor {
    let out: Vec<f64> = x.values().iter().map(|v| v * v).collect();
    Tensor::new_node(
        x.shape().to_vec(),
        out,
        Some(Op {
            parents: vec![x.clone()],
            backward: Box::new(|grad, parents| {
                let dx: Vec<f64> = {
                    let v = parents[0].node.values.borrow();
                    grad.iter().zip(v.iter()).map(|(g, x)| 3.0 * x * g).collect()
                };
                parents[0].accumulate_grad(&dx);
            }),
        }),
    )
}
