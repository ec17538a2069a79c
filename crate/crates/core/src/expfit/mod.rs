//! Exponential data fitting: `y = Φ(θ) a + ε` with `Φ_ij = exp(−φ_ij(θ))`.
//!
//! Complex models are handled by stacking real and imaginary rows, keeping
//! the amplitudes real. Several snapshots may share one `Φ(θ)`, each with its
//! own amplitude vector.

mod blob;
mod doa;

use std::cell::{Cell, RefCell};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{solve_lasso_from, LassoProblem};
use crate::objective::{Evaluation, ReducedObjective};
use crate::par;

pub use blob::{pick_peaks, render_blobs, BlobGrid};
pub use doa::{music_spectrum, wrap_angle, DoaArray, MusicResult};

/// Real `2m × n` stack `[Re Φ; Im Φ]` of a complex `m × n` model matrix (or
/// the `m × n` matrix itself for real models), with column partials.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedDesignMatrix {
    pub matrix: DMatrix<f64>,
    /// `partials[k]` holds, in column `j`, the derivative of column `j` with
    /// respect to that column's `k`-th parameter.
    pub partials: Vec<DMatrix<f64>>,
    pub complex: bool,
}

impl StackedDesignMatrix {
    pub fn columns(&self) -> usize {
        self.matrix.ncols()
    }

    /// Rows of the underlying (possibly complex) matrix.
    pub fn complex_rows(&self) -> usize {
        if self.complex {
            self.matrix.nrows() / 2
        } else {
            self.matrix.nrows()
        }
    }

    /// Imaginary block, empty for real models.
    pub fn imag_block(&self) -> DMatrix<f64> {
        let m = self.complex_rows();
        if self.complex {
            self.matrix.rows(m, m).into_owned()
        } else {
            DMatrix::zeros(0, self.matrix.ncols())
        }
    }
}

/// A parametrized exponential model. Parameters are laid out kind-major:
/// entry `k * columns + j` is the `k`-th parameter of column `j`.
pub trait ExpModel {
    fn columns(&self) -> usize;
    fn params_per_column(&self) -> usize;
    /// Rows of the stacked matrix.
    fn stacked_rows(&self) -> usize;
    fn build(&self, theta: &DVector<f64>) -> StackedDesignMatrix;

    fn param_len(&self) -> usize {
        self.columns() * self.params_per_column()
    }
}

/// Settings shared by the reduced and joint exponential-fit objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub lambda: f64,
    pub nonneg: bool,
    pub ridge: f64,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            nonneg: false,
            ridge: 0.0,
            inner_tol: 1e-10,
            inner_max_iters: 50_000,
        }
    }
}

fn check_dims<M: ExpModel>(model: &M, data: &DMatrix<f64>, theta_len: usize) -> Result<()> {
    if data.nrows() != model.stacked_rows() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} rows, model stacks {}",
            data.nrows(),
            model.stacked_rows()
        )));
    }
    if theta_len != model.param_len() {
        return Err(Error::DimensionMismatch(format!(
            "parameter vector has {theta_len} entries, model expects {}",
            model.param_len()
        )));
    }
    Ok(())
}

/// `θ`-gradient of `Σ_t ‖Φ(θ) a_t − y_t‖²` given the residuals `R = ΦA − Y`.
fn theta_gradient(design: &StackedDesignMatrix, amps: &DMatrix<f64>, resid: &DMatrix<f64>) -> DVector<f64> {
    let n = design.columns();
    let mut grad = DVector::zeros(n * design.partials.len());
    for (k, partial) in design.partials.iter().enumerate() {
        let proj = partial.tr_mul(resid);
        for j in 0..n {
            grad[k * n + j] = 2.0 * proj.row(j).dot(&amps.row(j));
        }
    }
    grad
}

/// Reduced objective `f̃(θ) = Σ_t min_a ‖Φ(θ)a − y_t‖² + λ‖a‖₁ (+ ridge‖a‖²)`.
///
/// The gradient is `∇_θ f(θ, ā)`; the penalty does not depend on `θ`. The
/// inner solution is the amplitude matrix `Ā` (columns are snapshots),
/// flattened column-major. With warm starts enabled, each inner solve starts
/// from the previous evaluation's amplitudes.
pub struct ReducedExpFit<M> {
    model: M,
    data: DMatrix<f64>,
    settings: FitSettings,
    warm_start: bool,
    warm: RefCell<Option<DMatrix<f64>>>,
    inner_failures: Cell<usize>,
    inner_iterations: Cell<usize>,
}

/// One evaluation of the reduced exponential objective.
#[derive(Debug, Clone)]
pub struct ReducedFit {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub amplitudes: DMatrix<f64>,
    pub inner_converged: bool,
}

impl<M: ExpModel + Sync> ReducedExpFit<M> {
    pub fn new(model: M, data: DMatrix<f64>, settings: FitSettings) -> Result<Self> {
        check_dims(&model, &data, model.param_len())?;
        Ok(Self {
            model,
            data,
            settings,
            warm_start: false,
            warm: RefCell::new(None),
            inner_failures: Cell::new(0),
            inner_iterations: Cell::new(0),
        })
    }

    pub fn with_warm_start(mut self, on: bool) -> Self {
        self.warm_start = on;
        self
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn settings(&self) -> &FitSettings {
        &self.settings
    }

    /// Inner solves that hit their iteration cap so far.
    pub fn inner_failures(&self) -> usize {
        self.inner_failures.get()
    }

    /// Total inner iterations so far.
    pub fn inner_iterations(&self) -> usize {
        self.inner_iterations.get()
    }

    /// Value, gradient and amplitudes at `theta`.
    pub fn value_grad(&self, theta: &DVector<f64>) -> Result<ReducedFit> {
        check_dims(&self.model, &self.data, theta.len())?;
        let design = self.model.build(theta);
        let n = design.columns();
        let snapshots = self.data.ncols();
        let start = if self.warm_start {
            self.warm.borrow().clone()
        } else {
            None
        };
        let s = &self.settings;
        let data = &self.data;

        let solves = par::map_range(snapshots, |t| {
            let y = data.column(t).into_owned();
            let p = LassoProblem::new(&design.matrix, &y, s.lambda)
                .nonneg(s.nonneg)
                .ridge(s.ridge);
            let a0 = start.as_ref().map_or_else(|| DVector::zeros(n), |w| w.column(t).into_owned());
            solve_lasso_from(&p, &a0, s.inner_tol, s.inner_max_iters)
        });

        let mut amps = DMatrix::zeros(n, snapshots);
        let mut value = 0.0;
        let mut converged = true;
        let mut iterations = 0;
        for (t, sol) in solves.into_iter().enumerate() {
            let sol = sol?;
            value += sol.objective;
            converged &= sol.converged;
            iterations += sol.iterations;
            amps.set_column(t, &sol.a_hat);
        }
        if !converged {
            self.inner_failures.set(self.inner_failures.get() + 1);
        }
        self.inner_iterations.set(self.inner_iterations.get() + iterations);
        if self.warm_start {
            *self.warm.borrow_mut() = Some(amps.clone());
        }

        let resid = &design.matrix * &amps - &self.data;
        let gradient = theta_gradient(&design, &amps, &resid);
        Ok(ReducedFit {
            value,
            gradient,
            amplitudes: amps,
            inner_converged: converged,
        })
    }
}

impl<M: ExpModel + Sync> ReducedObjective for ReducedExpFit<M> {
    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        let fit = self.value_grad(x)?;
        Ok(Evaluation {
            value: fit.value,
            gradient: fit.gradient,
            inner: DVector::from_column_slice(fit.amplitudes.as_slice()),
        })
    }
}

/// Smooth part of the joint objective over `z = [θ; vec(A)]`:
/// `Σ_t ‖Φ(θ) a_t − y_t‖² (+ ridge‖A‖²)`. The `λ‖A‖₁` part is left to a
/// proximal term acting on the entries after `θ`.
pub struct JointExpFit<M> {
    model: M,
    data: DMatrix<f64>,
    ridge: f64,
}

impl<M: ExpModel> JointExpFit<M> {
    pub fn new(model: M, data: DMatrix<f64>, ridge: f64) -> Result<Self> {
        check_dims(&model, &data, model.param_len())?;
        Ok(Self { model, data, ridge })
    }

    pub fn theta_len(&self) -> usize {
        self.model.param_len()
    }

    /// Packs `θ` and the amplitude matrix into one vector.
    pub fn pack(&self, theta: &DVector<f64>, amps: &DMatrix<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(theta.len() + amps.len());
        z.rows_mut(0, theta.len()).copy_from(theta);
        z.rows_mut(theta.len(), amps.len()).copy_from_slice(amps.as_slice());
        z
    }

    pub fn unpack(&self, z: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.theta_len();
        let theta = z.rows(0, p).into_owned();
        let amps = DMatrix::from_column_slice(self.model.columns(), self.data.ncols(), &z.as_slice()[p..]);
        (theta, amps)
    }

    /// Value and gradient with respect to `(θ, A)`.
    pub fn value_grad(&self, theta: &DVector<f64>, amps: &DMatrix<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        check_dims(&self.model, &self.data, theta.len())?;
        if amps.nrows() != self.model.columns() || amps.ncols() != self.data.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "amplitudes are {}x{}, expected {}x{}",
                amps.nrows(),
                amps.ncols(),
                self.model.columns(),
                self.data.ncols()
            )));
        }
        let design = self.model.build(theta);
        let resid = &design.matrix * amps - &self.data;
        let value = resid.norm_squared() + self.ridge * amps.norm_squared();
        let g_theta = theta_gradient(&design, amps, &resid);
        let g_amps = 2.0 * (design.matrix.tr_mul(&resid) + self.ridge * amps);
        Ok((value, g_theta, g_amps))
    }
}

impl<M: ExpModel> ReducedObjective for JointExpFit<M> {
    fn evaluate(&self, z: &DVector<f64>) -> Result<Evaluation> {
        if z.len() != self.theta_len() + self.model.columns() * self.data.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "joint vector has {} entries, expected {}",
                z.len(),
                self.theta_len() + self.model.columns() * self.data.ncols()
            )));
        }
        let (theta, amps) = self.unpack(z);
        let (value, g_theta, g_amps) = self.value_grad(&theta, &amps)?;
        let gradient = self.pack(&g_theta, &g_amps);
        Ok(Evaluation::smooth(value, gradient))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::fd_gradient_check;

    fn doa_setup() -> (DoaArray, DVector<f64>, DMatrix<f64>) {
        let array = DoaArray::line(5, std::f64::consts::PI).with_sources(3);
        let truth = DVector::from_vec(vec![0.8, 1.6, 2.3]);
        let amps = DMatrix::from_row_slice(3, 2, &[1.0, -0.7, 0.6, 0.9, 0.3, 0.2]);
        let data = &array.build(&truth).matrix * &amps;
        (array, truth, data)
    }

    #[test]
    fn large_lambda_gives_zero_amplitudes() {
        let (array, _, data) = doa_setup();
        let theta = DVector::from_vec(vec![0.5, 1.0, 2.0, 2.8]);
        let settings = FitSettings {
            lambda: 1e3,
            ..FitSettings::default()
        };
        let fit = ReducedExpFit::new(array.with_sources(4), data.clone(), settings).unwrap();
        let r = fit.value_grad(&theta).unwrap();
        assert_eq!(r.amplitudes, DMatrix::zeros(4, 2));
        assert!((r.value - data.norm_squared()).abs() < 1e-12);
        assert_eq!(r.gradient, DVector::zeros(4));
    }

    #[test]
    fn noiseless_truth_is_a_global_minimum() {
        let (array, truth, data) = doa_setup();
        let fit = ReducedExpFit::new(array, data, FitSettings::default()).unwrap();
        let r = fit.value_grad(&truth).unwrap();
        assert!(r.value < 1e-18, "value {}", r.value);
        assert!(r.gradient.amax() < 1e-8, "gradient {}", r.gradient);
    }

    #[test]
    fn reduced_doa_gradient_matches_differences() {
        let (array, _, data) = doa_setup();
        let settings = FitSettings {
            lambda: 0.05,
            ..FitSettings::default()
        };
        let fit = ReducedExpFit::new(array.with_sources(7), data, settings).unwrap();
        let theta = DVector::from_vec(vec![0.7, 1.1, 1.5, 1.9, 2.2, 2.6, 2.9]);
        let err = fd_gradient_check(&fit, &theta, 1e-6).unwrap();
        assert!(err <= 1e-5, "err = {err}");
    }

    #[test]
    fn joint_objective_gradient_and_consistency() {
        let (array, _, data) = doa_setup();
        let joint = JointExpFit::new(array.clone(), data.clone(), 0.0).unwrap();
        let theta = DVector::from_vec(vec![0.6, 1.7, 2.4]);
        let amps = DMatrix::from_row_slice(3, 2, &[0.5, -0.2, 0.1, 0.8, 0.4, 0.0]);
        let z = joint.pack(&theta, &amps);
        assert!(fd_gradient_check(&joint, &z, 1e-6).unwrap() <= 1e-6);

        let (v0, g0, _) = joint.value_grad(&theta, &DMatrix::zeros(3, 2)).unwrap();
        assert!((v0 - data.norm_squared()).abs() < 1e-12);
        assert_eq!(g0, DVector::zeros(3));

        // θ-block of the joint gradient at (θ, Ā) equals the reduced gradient.
        let lambda = 0.05;
        let reduced = ReducedExpFit::new(
            array,
            data,
            FitSettings {
                lambda,
                ..FitSettings::default()
            },
        )
        .unwrap();
        let r = reduced.value_grad(&theta).unwrap();
        let (v, g_theta, _) = joint.value_grad(&theta, &r.amplitudes).unwrap();
        assert!((&g_theta - &r.gradient).amax() <= 1e-6);
        let l1: f64 = r.amplitudes.iter().map(|a| a.abs()).sum();
        assert!((v + lambda * l1 - r.value).abs() < 1e-9);
        // Projection is a minimum over amplitudes.
        assert!(r.value <= joint.value_grad(&theta, &amps).unwrap().0 + lambda * amps.iter().map(|a| a.abs()).sum::<f64>());
    }

    #[test]
    fn warm_start_reaches_the_same_objective() {
        let (array, _, data) = doa_setup();
        let settings = FitSettings {
            lambda: 0.05,
            ..FitSettings::default()
        };
        let cold = ReducedExpFit::new(array.clone(), data.clone(), settings).unwrap();
        let warm = ReducedExpFit::new(array, data, settings).unwrap().with_warm_start(true);
        let a = DVector::from_vec(vec![0.7, 1.5, 2.2]);
        let b = DVector::from_vec(vec![0.75, 1.55, 2.25]);
        warm.value_grad(&a).unwrap();
        let vw = warm.value_grad(&b).unwrap().value;
        let vc = cold.value_grad(&b).unwrap().value;
        assert!((vw - vc).abs() <= 1e-8);
    }

    #[test]
    fn dimension_errors() {
        let (array, _, data) = doa_setup();
        let fit = ReducedExpFit::new(array.clone(), data, FitSettings::default()).unwrap();
        assert!(fit.evaluate(&DVector::zeros(2)).is_err());
        assert!(ReducedExpFit::new(array, DMatrix::zeros(3, 1), FitSettings::default()).is_err());
    }
}
