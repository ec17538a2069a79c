//! Outer solvers for reduced objectives.

mod lbfgs;
mod prox;

use std::io;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use lbfgs::lbfgs_minimize;
pub use prox::{prox_gradient_minimize, Identity, L1Norm, ProximalTerm};

/// Weak-Wolfe line-search parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Trial points before the search gives up.
    pub max_evals: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_evals: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative optimality threshold, measured against `max(1, initial optimality)`.
    pub grad_tol: f64,
    /// Quasi-Newton memory.
    pub history_size: usize,
    pub line_search: LineSearch,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-6,
            history_size: 10,
            line_search: LineSearch::default(),
        }
    }
}

impl SolverOptions {
    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_grad_tol(mut self, grad_tol: f64) -> Self {
        self.grad_tol = grad_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let LineSearch { c1, c2, max_evals } = self.line_search;
        if !(0.0 < c1 && c1 < c2 && c2 < 1.0) {
            return Err(invalid(format!(
                "line search requires 0 < c1 < c2 < 1, got c1 = {c1}, c2 = {c2}"
            )));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(invalid(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        if max_evals == 0 {
            return Err(invalid("line search needs at least one trial point"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIters,
    LineSearchFailure,
}

/// One accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    /// Relative optimality measure (gradient norm or prox-gradient mapping norm).
    pub optimality: f64,
    /// Step length that produced this iterate; zero for the starting point.
    pub step: f64,
}

/// Per-iteration convergence history. Record 0 is the starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<IterRecord>,
    pub status: Status,
}

impl RunTrace {
    pub(crate) fn new() -> Self {
        Self {
            records: Vec::new(),
            status: Status::MaxIters,
        }
    }

    pub(crate) fn push(&mut self, objective: f64, optimality: f64, step: f64) {
        let iter = self.records.len();
        self.records.push(IterRecord {
            iter,
            objective,
            optimality,
            step,
        });
    }

    /// Number of iterations taken (records minus the starting point).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_optimality(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.optimality)
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    /// Writes `iter,objective,optimality,step` rows with a header line.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iter,objective,optimality,step")?;
        for r in &self.records {
            writeln!(out, "{},{:e},{:e},{:e}", r.iter, r.objective, r.optimality, r.step)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

/// Result of an outer solve.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: DVector<f64>,
    pub value: f64,
    /// Inner solution reported by the objective at `x`.
    pub inner: DVector<f64>,
    pub trace: RunTrace,
}
