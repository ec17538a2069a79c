//! Multiple kernel learning with the kernel weights projected out.
//!
//! The dual SVM variable `α` is the outer variable. For fixed `α` the kernel
//! weights solve a smoothed minimum over the unit simplex,
//! `f̃_β(α) = min_{w ∈ Δ₁} Σ w_i h_i(α) + (β/2)‖w‖²` with `h_i = ½αᵀK_iα`,
//! and the outer problem `min f̃_β(α) − 1ᵀα` over the SVM feasible set is
//! solved by SQP with Hessian `Σ w̄_i K_i`.

mod kernels;
mod qp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objective::{Evaluation, ReducedObjective};
use crate::projections::{smoothed_weighted_min, CappedSimplex};
use crate::solve::{RunTrace, Status};

pub use kernels::{standard_bank, Kernel, KernelBank};
pub use qp::{solve_box_qp, BoxQp, QpSolution};

/// A point of the SVM dual feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmDualState {
    pub alpha: DVector<f64>,
    pub bound: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SvmDualState {
    /// `|Σ α_i y_i|`.
    pub fn equality_residual(&self, labels: &DVector<f64>) -> f64 {
        self.alpha.dot(labels).abs()
    }
}

/// Standard SVM dual `min ½αᵀKα − 1ᵀα` over `α ∈ [0, C]^m, yᵀα = 0`
/// for a labeled kernel `K`.
pub fn solve_svm_dual(labeled: &DMatrix<f64>, labels: &DVector<f64>, bound: f64, tol: f64, max_iters: usize) -> Result<SvmDualState> {
    let ones = DVector::from_element(labels.len(), -1.0);
    let qp = BoxQp {
        hessian: labeled,
        linear: &ones,
        labels,
        bound,
    };
    let s = solve_box_qp(&qp, &DVector::zeros(labels.len()), tol, max_iters)?;
    Ok(SvmDualState {
        alpha: s.z,
        bound,
        objective: s.objective,
        kkt_residual: s.kkt_residual,
        iterations: s.iterations,
        converged: s.converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MklEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub weights: DVector<f64>,
}

/// `f̃_β(α)`, its gradient `Σ w̄_i K_iα`, and `w̄`.
pub fn mkl_value_grad(alpha: &DVector<f64>, bank: &KernelBank, beta: f64) -> Result<MklEval> {
    if alpha.len() != bank.size() {
        return Err(Error::DimensionMismatch(format!(
            "alpha has {} entries, bank has {} samples",
            alpha.len(),
            bank.size()
        )));
    }
    let products: Vec<DVector<f64>> = bank.labeled.iter().map(|k| k * alpha).collect();
    let h = DVector::from_iterator(products.len(), products.iter().map(|ka| 0.5 * ka.dot(alpha)));
    let sm = smoothed_weighted_min(&h, beta, &CappedSimplex::unit_simplex(bank.len())?)?;
    let mut gradient = DVector::zeros(alpha.len());
    for (w, ka) in sm.weights.iter().zip(&products) {
        if *w != 0.0 {
            gradient.axpy(*w, ka, 1.0);
        }
    }
    Ok(MklEval {
        value: sm.value,
        gradient,
        weights: sm.weights,
    })
}

/// [`mkl_value_grad`] as a reduced objective over `α`; the inner solution is `w̄`.
pub struct MklObjective<'a> {
    pub bank: &'a KernelBank,
    pub beta: f64,
}

impl ReducedObjective for MklObjective<'_> {
    fn evaluate(&self, alpha: &DVector<f64>) -> Result<Evaluation> {
        let e = mkl_value_grad(alpha, self.bank, self.beta)?;
        Ok(Evaluation {
            value: e.value,
            gradient: e.gradient,
            inner: e.weights,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MklOptions {
    pub bound: f64,
    pub beta: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Iteration cap of each QP subproblem.
    pub qp_max_iters: usize,
}

impl Default for MklOptions {
    fn default() -> Self {
        Self {
            bound: 10.0,
            beta: 1.0,
            tol: 1e-6,
            max_iters: 500,
            qp_max_iters: 20_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MklSolution {
    pub alpha: DVector<f64>,
    pub weights: DVector<f64>,
    pub intercept: f64,
    /// `f̃_β(α) − 1ᵀα` at the solution.
    pub objective: f64,
    pub iterations: usize,
    pub trace: RunTrace,
}

impl MklSolution {
    /// Index of the largest kernel weight (first on ties).
    pub fn dominant_kernel(&self) -> usize {
        self.weights
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &w)| if w > best.1 { (i, w) } else { best })
            .0
    }
}

/// SQP on `f̃_β(α) − 1ᵀα` over the SVM feasible set, starting at `α = 0`.
///
/// Each step solves the QP model with Hessian `H = Σ w̄_i K_i` exactly (up to
/// `tol / 10`) and backtracks on the true objective. The trace records the
/// objective and the KKT residual `‖α − P(α − ∇)‖∞` per iteration.
pub fn sqp_solve_mkl(bank: &KernelBank, opts: &MklOptions) -> Result<MklSolution> {
    if !(opts.bound > 0.0) {
        return Err(invalid(format!("box bound C must be positive, got {}", opts.bound)));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid("SQP tolerance must be positive"));
    }
    let m = bank.size();
    let labels = &bank.labels;
    let total = |alpha: &DVector<f64>| -> Result<(MklEval, f64)> {
        let e = mkl_value_grad(alpha, bank, opts.beta)?;
        let f = e.value - alpha.sum();
        Ok((e, f))
    };

    let mut alpha = DVector::zeros(m);
    let (mut eval, mut f) = total(&alpha)?;
    let mut trace = RunTrace::new();
    let mut step = 0.0;

    loop {
        let grad = eval.gradient.add_scalar(-1.0);
        let hessian = bank.combined(&eval.weights);
        let linear = &grad - &hessian * &alpha;
        let qp = BoxQp {
            hessian: &hessian,
            linear: &linear,
            labels,
            bound: opts.bound,
        };
        let kkt = qp.kkt_residual(&alpha);
        trace.push(f, kkt, step);
        if kkt <= opts.tol {
            trace.status = Status::Converged;
            break;
        }
        if trace.iterations() >= opts.max_iters {
            trace.status = Status::MaxIters;
            break;
        }

        let sub = solve_box_qp(&qp, &alpha, 0.1 * opts.tol, opts.qp_max_iters)?;
        let dir = &sub.z - &alpha;
        let slope = grad.dot(&dir);
        let mut t = 1.0;
        let mut accepted = None;
        while t >= 1e-10 {
            let trial = &alpha + t * &dir;
            let (e, ft) = total(&trial)?;
            if ft <= f + 1e-4 * t * slope {
                accepted = Some((trial, e, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((next, e, ft)) = accepted else {
            trace.status = Status::LineSearchFailure;
            break;
        };
        alpha = next;
        eval = e;
        f = ft;
        step = t;
    }

    let combined = bank.combined(&eval.weights);
    let intercept = intercept(&alpha, &combined, labels, opts.bound);
    Ok(MklSolution {
        iterations: trace.iterations(),
        alpha,
        weights: eval.weights,
        intercept,
        objective: f,
        trace,
    })
}

/// Intercept from the margin conditions, given the labeled combined kernel.
///
/// Averages `y_i − Σ_j α_j y_j k_ij` over free support vectors
/// (`0 < α_i < C`). Without free vectors, takes the midpoint of the interval
/// allowed by the bound-active margins.
pub fn intercept(alpha: &DVector<f64>, labeled: &DMatrix<f64>, labels: &DVector<f64>, bound: f64) -> f64 {
    // (Kα)_i = y_i Σ_j α_j y_j k_ij
    let ka = labeled * alpha;
    let eps = 1e-8 * bound;
    let residual = |i: usize| labels[i] - labels[i] * ka[i];
    let free: Vec<f64> = (0..alpha.len())
        .filter(|&i| alpha[i] > eps && alpha[i] < bound - eps)
        .map(residual)
        .collect();
    if !free.is_empty() {
        return free.iter().sum::<f64>() / free.len() as f64;
    }
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..alpha.len() {
        let r = residual(i);
        // α_i = 0 needs y_i(s_i + b) ≥ 1; α_i = C needs ≤ 1.
        let lower_side = (alpha[i] <= eps) == (labels[i] > 0.0);
        if lower_side {
            lo = lo.max(r);
        } else {
            hi = hi.min(r);
        }
    }
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

/// `Σ_i α_i y_i k_w(x_i, x) + b` for each row `x` of `points`.
pub fn decision_function(sol: &MklSolution, bank: &KernelBank, points: &DMatrix<f64>) -> DVector<f64> {
    let coef = sol.alpha.component_mul(&bank.labels);
    let mut score = DVector::from_element(points.nrows(), sol.intercept);
    for (kernel, &w) in bank.kernels.iter().zip(sol.weights.iter()) {
        if w != 0.0 {
            let cross = kernel.gram(points, &bank.samples);
            score += w * (cross * &coef);
        }
    }
    score
}
