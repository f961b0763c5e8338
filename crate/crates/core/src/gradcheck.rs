//! Central-difference gradient estimates used to verify analytic backward passes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Default finite-difference step.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Default pass threshold for [`relative_error`].
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Estimates `df/dx` with `(f(x + eps) - f(x - eps)) / (2 eps)` per element.
pub fn numeric_gradient<S, F>(mut f: F, x: &Tensor<S>, eps: S) -> Result<Tensor<S>>
where
    S: Scalar,
    F: FnMut(&Tensor<S>) -> Result<S>,
{
    if !(eps > S::zero()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Evaluation(format!(
                "non-finite function value while perturbing element {i}"
            )));
        }
        grad.push((plus - minus) / (S::of(2.0) * eps));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// `||a - b|| / max(||a||, ||b||, 1e-12)`, the norm-wise relative error between an
/// analytic and a numeric gradient.
pub fn relative_error<S: Scalar>(analytic: &Tensor<S>, numeric: &Tensor<S>) -> Result<f64> {
    if analytic.shape() != numeric.shape() {
        return Err(Error::Dimension(format!(
            "gradient shapes differ: {:?} vs {:?}",
            analytic.shape(),
            numeric.shape()
        )));
    }
    let diff: f64 = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a.as_f64() - n.as_f64()).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = analytic.norm().as_f64().max(numeric.norm().as_f64()).max(1e-12);
    Ok(diff / scale)
}
