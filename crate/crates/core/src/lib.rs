//! Nonsmooth variable projection.
//!
//! Problems of the form `min_{x,z} f(x, z)` are solved by eliminating `z`
//! through an inner solve and optimizing the reduced function
//! `f̃(x) = min_z f(x, z)` with a smooth outer method. The crate provides the
//! outer solvers, the inner LASSO and QP solvers, the capped-simplex
//! smoothing used when the eliminated variable ranges over a constrained set,
//! and reduced objectives for exponential fitting, trimmed estimation,
//! multiple kernel learning and a linear-system inverse problem.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expfit;
pub mod lasso;
pub mod mkl;
pub mod objective;
pub mod pde;
mod par;
pub mod projections;
pub mod solve;
pub mod trimmed;

pub use error::{Error, Result};
pub use objective::{fd_gradient_check, Evaluation, FnObjective, ReducedObjective};
pub use solve::{lbfgs_minimize, prox_gradient_minimize, Minimum, RunTrace, SolverOptions, Status};
