use nalgebra::DVector;

use super::{Minimum, RunTrace, SolverOptions, Status};
use crate::error::{Error, Result};
use crate::lasso::soft_threshold_in_place;
use crate::objective::ReducedObjective;

/// A proper closed convex term `r` handled through its proximal operator.
pub trait ProximalTerm {
    /// `argmin_z r(z) + ‖z − v‖² / (2 step)`.
    fn prox(&self, v: &DVector<f64>, step: f64) -> DVector<f64>;

    /// `r(x)`; used only for reporting the composite objective.
    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
}

impl<F> ProximalTerm for F
where
    F: Fn(&DVector<f64>, f64) -> DVector<f64>,
{
    fn prox(&self, v: &DVector<f64>, step: f64) -> DVector<f64> {
        self(v, step)
    }
}

/// `r = 0`: the proximal step is plain gradient descent.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl ProximalTerm for Identity {
    fn prox(&self, v: &DVector<f64>, _step: f64) -> DVector<f64> {
        v.clone()
    }
}

/// `λ‖x[start..]‖₁`, optionally with `x[start..] ≥ 0`. Entries before
/// `start` are left unpenalized.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub lambda: f64,
    pub nonneg: bool,
    pub start: usize,
}

impl L1Norm {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            nonneg: false,
            start: 0,
        }
    }
}

impl ProximalTerm for L1Norm {
    fn prox(&self, v: &DVector<f64>, step: f64) -> DVector<f64> {
        let mut out = v.clone();
        let start = self.start.min(v.len());
        soft_threshold_in_place(out.as_mut_slice()[start..].iter_mut(), self.lambda * step, self.nonneg);
        out
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let tail = &x.as_slice()[self.start.min(x.len())..];
        if self.nonneg && tail.iter().any(|&v| v < 0.0) {
            return f64::INFINITY;
        }
        self.lambda * tail.iter().map(|v| v.abs()).sum::<f64>()
    }
}

const STEP_FLOOR: f64 = 1e-20;

/// Proximal gradient with backtracking on the step.
///
/// Each iteration tries twice the previous step and halves it until the
/// quadratic upper model holds at the proximal point and the secant curvature
/// along the step does not exceed `1/step`. Optimality is the
/// gradient-mapping norm `‖x⁺ − x‖ / step`, relative to `max(1, its value at x0)`.
pub fn prox_gradient_minimize<O, P>(
    smooth_part: &O,
    prox_op: &P,
    x0: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<Minimum>
where
    O: ReducedObjective + ?Sized,
    P: ProximalTerm + ?Sized,
{
    opts.validate()?;
    let mut x = x0.clone();
    let mut cur = smooth_part.evaluate(&x)?;
    if !cur.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let mut trace = RunTrace::new();
    let mut scale = None;
    let mut step = 1.0;

    loop {
        // Backtrack until the majorization condition holds.
        let mut accepted = None;
        let mut t = step * 2.0;
        while t >= STEP_FLOOR {
            let candidate = prox_op.prox(&(&x - t * &cur.gradient), t);
            let diff = &candidate - &x;
            if let Ok(e) = smooth_part.evaluate(&candidate) {
                let bound = cur.value + cur.gradient.dot(&diff) + diff.norm_squared() / (2.0 * t);
                // The curvature test stays meaningful once value differences drop below rounding.
                let curvature = (&e.gradient - &cur.gradient).dot(&diff);
                if e.is_finite()
                    && e.value <= bound + 1e-12 * cur.value.abs()
                    && curvature <= diff.norm_squared() / t
                {
                    accepted = Some((t, candidate, e, diff.norm() / t));
                    break;
                }
            }
            t *= 0.5;
        }

        let Some((t, candidate, next, mapping)) = accepted else {
            if trace.records.is_empty() {
                trace.push(cur.value + prox_op.value(&x), f64::NAN, 0.0);
            }
            trace.status = Status::LineSearchFailure;
            break;
        };

        let scale = *scale.get_or_insert(mapping.max(1.0));
        let optimality = mapping / scale;
        if trace.records.is_empty() {
            trace.push(cur.value + prox_op.value(&x), optimality, 0.0);
        } else if let Some(last) = trace.records.last_mut() {
            // The mapping at the current iterate is only known now.
            last.optimality = optimality;
        }
        if optimality <= opts.grad_tol {
            trace.status = Status::Converged;
            break;
        }
        if trace.iterations() >= opts.max_iters {
            trace.status = Status::MaxIters;
            break;
        }

        step = t;
        x = candidate;
        cur = next;
        trace.push(cur.value + prox_op.value(&x), f64::NAN, t);
    }

    if trace.records.last().is_some_and(|r| r.optimality.is_nan()) && trace.records.len() > 1 {
        // Line search failed at an iterate whose mapping was never measured.
        let n = trace.records.len();
        trace.records[n - 1].optimality = trace.records[n - 2].optimality;
    }
    let value = cur.value + prox_op.value(&x);
    Ok(Minimum {
        x,
        value,
        inner: cur.inner,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::FnObjective;
    use crate::solve::lbfgs_minimize;

    #[test]
    fn soft_threshold_fixed_point() {
        let c = DVector::from_vec(vec![3.0, 0.1]);
        let obj = FnObjective(|x: &DVector<f64>| (0.5 * (x - &c).norm_squared(), x - &c));
        let opts = SolverOptions::default().with_grad_tol(1e-12);
        let min = prox_gradient_minimize(&obj, &L1Norm::new(1.0), &DVector::zeros(2), &opts).unwrap();
        assert_eq!(min.trace.status, Status::Converged);
        assert!((min.x[0] - 2.0).abs() < 1e-10);
        assert_eq!(min.x[1], 0.0);
        // composite objective: ½(1² + 0.1²) + 2
        assert!((min.value - (0.5 * 1.01 + 2.0)).abs() < 1e-10);
    }

    #[test]
    fn identity_prox_is_gradient_descent() {
        let obj = FnObjective(|x: &DVector<f64>| (0.5 * x.norm_squared(), x.clone()));
        let min = prox_gradient_minimize(&obj, &Identity, &DVector::from_element(1, 1.0), &SolverOptions::default())
            .unwrap();
        assert!(min.trace.converged());
        assert!(min.x[0].abs() < 1e-6);
    }

    #[test]
    fn closure_prox() {
        let obj = FnObjective(|x: &DVector<f64>| (0.5 * x.norm_squared(), x.clone()));
        // projection onto x ≥ 1
        let proj = |v: &DVector<f64>, _t: f64| v.map(|e| e.max(1.0));
        let min = prox_gradient_minimize(&obj, &proj, &DVector::from_element(2, 3.0), &SolverOptions::default())
            .unwrap();
        assert!(min.trace.converged());
        assert!((min.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_lbfgs_on_strongly_convex_quadratic() {
        // f(x) = ½ xᵀAx − bᵀx with A = [[3,1],[1,2]]
        let obj = FnObjective(|x: &DVector<f64>| {
            let ax = DVector::from_vec(vec![3.0 * x[0] + x[1], x[0] + 2.0 * x[1]]);
            let b = DVector::from_vec(vec![1.0, -1.0]);
            (0.5 * x.dot(&ax) - b.dot(x), ax - b)
        });
        let opts = SolverOptions::default().with_grad_tol(1e-10).with_max_iters(5000);
        let x0 = DVector::from_vec(vec![4.0, -3.0]);
        let a = prox_gradient_minimize(&obj, &Identity, &x0, &opts).unwrap();
        let b = lbfgs_minimize(&obj, &x0, &opts).unwrap();
        assert!(a.trace.converged() && b.trace.converged());
        assert!((&a.x - &b.x).norm() <= 1e-8);
    }

    #[test]
    fn unusable_gradient_gives_line_search_failure() {
        let obj = FnObjective(|x: &DVector<f64>| (x[0], DVector::from_element(1, -1.0)));
        let min = prox_gradient_minimize(&obj, &Identity, &DVector::zeros(1), &SolverOptions::default()).unwrap();
        assert_eq!(min.trace.status, Status::LineSearchFailure);
    }

    #[test]
    fn l1_on_tail_only() {
        let p = L1Norm {
            lambda: 1.0,
            nonneg: true,
            start: 1,
        };
        let out = p.prox(&DVector::from_vec(vec![-5.0, 3.0, -2.0]), 0.5);
        assert_eq!(out.as_slice(), &[-5.0, 2.5, 0.0]);
        assert_eq!(p.value(&DVector::from_vec(vec![-5.0, 2.0, 1.0])), 3.0);
        assert!(p.value(&DVector::from_vec(vec![0.0, -1.0])).is_infinite());
    }
}
