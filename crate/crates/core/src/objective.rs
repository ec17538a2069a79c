//! The reduced-objective abstraction.
//!
//! A reduced objective is `x ↦ min_z f(x, z)`. When the inner minimizer is
//! unique, the reduced function is differentiable and its gradient is the
//! partial gradient `∇_x f(x, z̄)` at the inner minimizer `z̄`. Every
//! evaluator in this crate therefore returns the inner solution together with
//! the value and gradient, so callers can inspect or warm-start from it.

use nalgebra::DVector;

use crate::error::{invalid, Error, Result};

/// Value, gradient and inner minimizer of a reduced objective at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    /// Inner minimizer `z̄(x)`. Empty for plain smooth objectives.
    pub inner: DVector<f64>,
}

impl Evaluation {
    pub fn smooth(value: f64, gradient: DVector<f64>) -> Self {
        Self {
            value,
            gradient,
            inner: DVector::zeros(0),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }
}

/// A parameter-to-(value, gradient, inner solution) evaluator.
///
/// Implementations must be deterministic: evaluating twice at the same `x`
/// with the same configuration returns identical results, unless the
/// implementor documents an explicit warm-start mode.
pub trait ReducedObjective {
    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation>;
}

impl<T: ReducedObjective + ?Sized> ReducedObjective for &T {
    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        (**self).evaluate(x)
    }
}

/// Adapts a closure returning `(value, gradient)` into a [`ReducedObjective`].
pub struct FnObjective<F>(pub F);

impl<F> ReducedObjective for FnObjective<F>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        let (value, gradient) = (self.0)(x);
        if gradient.len() != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "gradient has {} entries, point has {}",
                gradient.len(),
                x.len()
            )));
        }
        Ok(Evaluation::smooth(value, gradient))
    }
}

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Compares the analytic gradient against central differences.
///
/// Returns `max_i |d_i − ∇_i| / max(1, |∇_i|)` where
/// `d_i = (f(x + h e_i) − f(x − h e_i)) / 2h`.
pub fn fd_gradient_check<O: ReducedObjective + ?Sized>(
    obj: &O,
    x: &DVector<f64>,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let analytic = obj.evaluate(x)?.gradient;
    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = obj.evaluate(&probe)?.value;
        probe[i] = x[i] - h;
        let fm = obj.evaluate(&probe)?.value;
        probe[i] = x[i];
        let fd = (fp - fm) / (2.0 * h);
        let err = (fd - analytic[i]).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
