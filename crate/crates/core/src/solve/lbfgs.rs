use std::collections::VecDeque;

use nalgebra::DVector;

use super::{LineSearch, Minimum, RunTrace, SolverOptions, Status};
use crate::error::{Error, Result};
use crate::objective::{Evaluation, ReducedObjective};

/// Limited-memory BFGS with a weak-Wolfe bracketing line search.
///
/// Stops when `‖∇f(x)‖ / max(1, ‖∇f(x0)‖) ≤ grad_tol`. Trial points whose
/// evaluation fails or is non-finite are treated as rejected steps.
pub fn lbfgs_minimize<O: ReducedObjective + ?Sized>(
    obj: &O,
    x0: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<Minimum> {
    opts.validate()?;
    let mut x = x0.clone();
    let mut cur = obj.evaluate(&x)?;
    if !cur.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    if cur.gradient.len() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "gradient has {} entries, point has {}",
            cur.gradient.len(),
            x.len()
        )));
    }

    let scale = cur.gradient.norm().max(1.0);
    let mut trace = RunTrace::new();
    trace.push(cur.value, cur.gradient.norm() / scale, 0.0);

    let mut memory = Memory::new(opts.history_size);
    let mut first_step = true;

    while trace.final_optimality() > opts.grad_tol {
        if trace.iterations() >= opts.max_iters {
            trace.status = Status::MaxIters;
            return Ok(finish(x, cur, trace));
        }

        let mut dir = memory.direction(&cur.gradient);
        let mut slope = cur.gradient.dot(&dir);
        if !(slope < 0.0) || memory.is_empty() {
            memory.clear();
            dir = -&cur.gradient;
            slope = -cur.gradient.norm_squared();
            first_step = true;
        }
        let t0 = if first_step {
            (1.0 / cur.gradient.norm()).min(1.0)
        } else {
            1.0
        };

        let mut found = weak_wolfe(obj, &x, &cur, &dir, slope, t0, &opts.line_search);
        if found.is_none() && !memory.is_empty() {
            // Quasi-Newton direction failed; retry once along steepest descent.
            memory.clear();
            dir = -&cur.gradient;
            slope = -cur.gradient.norm_squared();
            let t = (1.0 / cur.gradient.norm()).min(1.0);
            found = weak_wolfe(obj, &x, &cur, &dir, slope, t, &opts.line_search);
        }
        let Some((t, next)) = found else {
            trace.status = Status::LineSearchFailure;
            return Ok(finish(x, cur, trace));
        };

        let x_next = &x + t * &dir;
        let s = &x_next - &x;
        let y = &next.gradient - &cur.gradient;
        memory.push(s, y);
        first_step = false;

        x = x_next;
        cur = next;
        trace.push(cur.value, cur.gradient.norm() / scale, t);
    }

    trace.status = Status::Converged;
    Ok(finish(x, cur, trace))
}

fn finish(x: DVector<f64>, cur: Evaluation, trace: RunTrace) -> Minimum {
    Minimum {
        x,
        value: cur.value,
        inner: cur.inner,
        trace,
    }
}

const ROUNDING_BAND: f64 = 1e-12;

/// Bracketing search for a step satisfying
/// `f(x + t d) ≤ f(x) + c1 t g·d` and `∇f(x + t d)·d ≥ c2 g·d`.
fn weak_wolfe<O: ReducedObjective + ?Sized>(
    obj: &O,
    x: &DVector<f64>,
    cur: &Evaluation,
    dir: &DVector<f64>,
    slope: f64,
    t_init: f64,
    ls: &LineSearch,
) -> Option<(f64, Evaluation)> {
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let mut t = t_init;
    for _ in 0..ls.max_evals {
        let trial = x + t * dir;
        match obj.evaluate(&trial) {
            Ok(e) if e.is_finite() => {
                let dphi = e.gradient.dot(dir);
                let armijo = e.value <= cur.value + ls.c1 * t * slope && e.value < cur.value;
                // Once value differences are at rounding level, fall back to the
                // approximate-Wolfe slope test (Hager–Zhang), never allowing an increase.
                let approx = e.value <= cur.value
                    && cur.value - e.value <= ROUNDING_BAND * cur.value.abs().max(1.0)
                    && dphi <= (2.0 * ls.c1 - 1.0) * slope;
                if !(armijo || approx) {
                    hi = t;
                } else if dphi < ls.c2 * slope {
                    lo = t;
                } else {
                    return Some((t, e));
                }
            }
            _ => hi = t,
        }
        t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
        if hi.is_finite() && hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    None
}

/// Two-loop recursion state.
struct Memory {
    cap: usize,
    pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)>,
}

impl Memory {
    fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            pairs: VecDeque::with_capacity(cap.max(1)),
        }
    }

    fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        let sy = s.dot(&y);
        if !(sy > 1e-12 * s.norm() * y.norm()) || !sy.is_finite() {
            return;
        }
        if self.pairs.len() == self.cap {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    fn direction(&self, g: &DVector<f64>) -> DVector<f64> {
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            q *= s.dot(y) / y.norm_squared();
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        -q
    }
}
