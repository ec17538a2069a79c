//! Inner LASSO solver for `min_a ‖Φa − y‖² + λ‖a‖₁ + ridge·‖a‖²`.
//!
//! The misfit carries no ½ factor, so the smooth gradient is
//! `2Φᵀ(Φa − y) + 2·ridge·a`. The solver is monotone FISTA with
//! backtracking and momentum restarts. Once the support settles, a Newton
//! polish on the current sign pattern is attempted; it is accepted only when
//! the polished point satisfies the full optimality conditions, which makes
//! tight tolerances cheap on sparse solutions.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// A LASSO instance. `design` may be a stacked real/imaginary matrix.
#[derive(Debug, Clone, Copy)]
pub struct LassoProblem<'a> {
    pub design: &'a DMatrix<f64>,
    pub observations: &'a DVector<f64>,
    pub lambda: f64,
    pub nonneg: bool,
    pub ridge: f64,
}

impl<'a> LassoProblem<'a> {
    pub fn new(design: &'a DMatrix<f64>, observations: &'a DVector<f64>, lambda: f64) -> Self {
        Self {
            design,
            observations,
            lambda,
            nonneg: false,
            ridge: 0.0,
        }
    }

    pub fn nonneg(mut self, nonneg: bool) -> Self {
        self.nonneg = nonneg;
        self
    }

    pub fn ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(invalid(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.ridge >= 0.0) {
            return Err(invalid(format!("ridge must be nonnegative, got {}", self.ridge)));
        }
        if self.design.nrows() != self.observations.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows, observations have {} entries",
                self.design.nrows(),
                self.observations.len()
            )));
        }
        Ok(())
    }

    fn smooth_part(&self, a: &DVector<f64>, fit: &DVector<f64>) -> f64 {
        (fit - self.observations).norm_squared() + self.ridge * a.norm_squared()
    }

    fn penalty(&self, a: &DVector<f64>) -> f64 {
        self.lambda * a.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// `‖Φa − y‖² + λ‖a‖₁ + ridge‖a‖²`.
    pub fn objective(&self, a: &DVector<f64>) -> f64 {
        self.smooth_part(a, &(self.design * a)) + self.penalty(a)
    }

    /// Gradient of the smooth part.
    pub fn smooth_gradient(&self, a: &DVector<f64>) -> DVector<f64> {
        let resid = self.design * a - self.observations;
        2.0 * (self.design.tr_mul(&resid) + self.ridge * a)
    }

    /// Largest distance between `−∇smooth(a)` and `λ ∂‖·‖₁(a)` (with the
    /// nonnegativity cone folded in when `nonneg` is set).
    pub fn optimality_residual(&self, a: &DVector<f64>) -> f64 {
        let q = self.smooth_gradient(a);
        residual_from_gradient(a, &q, self.lambda, self.nonneg)
    }
}

fn residual_from_gradient(a: &DVector<f64>, q: &DVector<f64>, lambda: f64, nonneg: bool) -> f64 {
    a.iter()
        .zip(q.iter())
        .map(|(&ai, &qi)| {
            if nonneg {
                if ai > 0.0 {
                    (qi + lambda).abs()
                } else if ai == 0.0 {
                    (-qi - lambda).max(0.0)
                } else {
                    f64::INFINITY
                }
            } else if ai != 0.0 {
                (qi + lambda * ai.signum()).abs()
            } else {
                (qi.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub a_hat: DVector<f64>,
    pub objective: f64,
    pub optimality: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `sign(z)·max(|z| − τ, 0)`, or `max(z − τ, 0)` with `nonneg`.
pub fn soft_threshold(z: &DVector<f64>, tau: f64, nonneg: bool) -> DVector<f64> {
    let mut out = z.clone();
    soft_threshold_in_place(out.iter_mut(), tau, nonneg);
    out
}

pub(crate) fn soft_threshold_in_place<'a>(z: impl Iterator<Item = &'a mut f64>, tau: f64, nonneg: bool) {
    for v in z {
        *v = if nonneg {
            (*v - tau).max(0.0)
        } else {
            v.signum() * (v.abs() - tau).max(0.0)
        };
    }
}

/// Solves from the zero vector.
pub fn solve_lasso(p: &LassoProblem<'_>, tol: f64, max_iters: usize) -> Result<LassoSolution> {
    solve_lasso_from(p, &DVector::zeros(p.design.ncols()), tol, max_iters)
}

/// Solves from a warm start.
pub fn solve_lasso_from(
    p: &LassoProblem<'_>,
    start: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<LassoSolution> {
    p.validate()?;
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    let n = p.design.ncols();
    if start.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "warm start has {} entries, design has {n} columns",
            start.len()
        )));
    }
    let phi = p.design;
    let y = p.observations;

    let mut x = start.clone();
    if p.nonneg {
        x.apply(|v| *v = v.max(0.0));
    }
    let mut fit_x = phi * &x;
    let mut f_x = p.smooth_part(&x, &fit_x) + p.penalty(&x);

    // σ_max(Φ)² ≥ largest squared column norm; backtracking raises it as needed.
    let col_max = phi.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max);
    let mut lip = 2.0 * (col_max + p.ridge).max(f64::MIN_POSITIVE);

    let mut momentum = 1.0_f64;
    let mut extrap = x.clone();
    let mut fit_extrap = fit_x.clone();
    let mut last_support: Vec<bool> = Vec::new();
    let mut stable_support = 0usize;

    for iter in 0..max_iters {
        let grad_x = 2.0 * (phi.tr_mul(&(&fit_x - y)) + p.ridge * &x);
        let optimality = residual_from_gradient(&x, &grad_x, p.lambda, p.nonneg);
        if optimality <= tol {
            return Ok(LassoSolution {
                objective: f_x,
                a_hat: x,
                optimality,
                iterations: iter,
                converged: true,
            });
        }

        let support: Vec<bool> = x.iter().map(|&v| v != 0.0).collect();
        if support == last_support {
            stable_support += 1;
        } else {
            stable_support = 0;
            last_support = support;
        }
        if stable_support >= 5 && stable_support.is_multiple_of(5) {
            if let Some(polished) = polish(p, &x) {
                let q = p.smooth_gradient(&polished);
                let opt = residual_from_gradient(&polished, &q, p.lambda, p.nonneg);
                if opt <= tol {
                    return Ok(LassoSolution {
                        objective: p.objective(&polished),
                        a_hat: polished,
                        optimality: opt,
                        iterations: iter + 1,
                        converged: true,
                    });
                }
            }
        }

        // Proximal step from the extrapolated point, with backtracking on L.
        let smooth_extrap = p.smooth_part(&extrap, &fit_extrap);
        let grad_extrap = 2.0 * (phi.tr_mul(&(&fit_extrap - y)) + p.ridge * &extrap);
        let (z, fit_z, smooth_z) = loop {
            let mut z = &extrap - &grad_extrap / lip;
            soft_threshold_in_place(z.iter_mut(), p.lambda / lip, p.nonneg);
            let fit_z = phi * &z;
            let smooth_z = p.smooth_part(&z, &fit_z);
            let d = &z - &extrap;
            let model = smooth_extrap + grad_extrap.dot(&d) + 0.5 * lip * d.norm_squared();
            if smooth_z <= model + 1e-13 * smooth_extrap.abs().max(1.0) || !lip.is_finite() {
                break (z, fit_z, smooth_z);
            }
            lip *= 2.0;
        };
        let f_z = smooth_z + p.penalty(&z);

        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        if f_z <= f_x {
            let x_prev = std::mem::replace(&mut x, z);
            fit_x = fit_z;
            f_x = f_z;
            extrap = &x + ((momentum - 1.0) / next_momentum) * (&x - &x_prev);
            momentum = next_momentum;
        } else {
            // Monotone step: keep x, restart momentum from it.
            extrap = x.clone();
            momentum = 1.0;
        }
        if p.nonneg {
            extrap.apply(|v| *v = v.max(0.0));
        }
        fit_extrap = phi * &extrap;
    }

    let grad_x = p.smooth_gradient(&x);
    let optimality = residual_from_gradient(&x, &grad_x, p.lambda, p.nonneg);
    Ok(LassoSolution {
        objective: f_x,
        a_hat: x,
        optimality,
        iterations: max_iters,
        converged: optimality <= tol,
    })
}

/// Solves the optimality conditions on the current sign pattern:
/// `(Φ_Sᵀ Φ_S + ridge·I) a_S = Φ_Sᵀ y − (λ/2) sign(a_S)`.
fn polish(p: &LassoProblem<'_>, a: &DVector<f64>) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..a.len()).filter(|&i| a[i] != 0.0).collect();
    if support.is_empty() || (p.ridge == 0.0 && support.len() > p.design.nrows()) {
        return None;
    }
    let cols = p.design.select_columns(support.iter());
    let mut gram = cols.tr_mul(&cols);
    for i in 0..support.len() {
        gram[(i, i)] += p.ridge;
    }
    let mut rhs = cols.tr_mul(p.observations);
    for (r, &i) in rhs.iter_mut().zip(&support) {
        *r -= 0.5 * p.lambda * a[i].signum();
    }
    let sol = gram.cholesky()?.solve(&rhs);
    let mut out = DVector::zeros(a.len());
    for (v, &i) in sol.iter().zip(&support) {
        if v.signum() != a[i].signum() {
            return None;
        }
        out[i] = *v;
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_examples() {
        let z = DVector::from_vec(vec![2.0, -2.0, 0.5]);
        assert_eq!(soft_threshold(&z, 1.0, false).as_slice(), &[1.0, -1.0, 0.0]);
        assert_eq!(soft_threshold(&z, 0.0, false), z);
        let z = DVector::from_vec(vec![2.0, -2.0]);
        assert_eq!(soft_threshold(&z, 1.0, true).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn identity_design_is_separable() {
        let phi = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![3.0, 0.1, -2.0]);
        let sol = solve_lasso(&LassoProblem::new(&phi, &y, 2.0), 1e-12, 1000).unwrap();
        assert!(sol.converged);
        assert!((sol.a_hat - DVector::from_vec(vec![2.0, 0.0, -1.0])).amax() < 1e-12);
    }

    #[test]
    fn zero_above_critical_lambda() {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 0.3, 1.0]);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let critical: f64 = (phi.tr_mul(&y) * 2.0).amax();
        let sol = solve_lasso(&LassoProblem::new(&phi, &y, critical), 1e-10, 100).unwrap();
        assert_eq!(sol.a_hat, DVector::zeros(2));
        assert_eq!(sol.iterations, 0);
        assert!((sol.objective - y.norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let phi = DMatrix::identity(2, 2);
        let y = DVector::zeros(2);
        assert!(solve_lasso(&LassoProblem::new(&phi, &y, -1.0), 1e-8, 10).is_err());
    }

    #[test]
    fn max_iters_returns_best_iterate_with_flag() {
        let phi = DMatrix::from_fn(20, 8, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let y = DVector::from_fn(20, |i, _| (i as f64).sin());
        let p = LassoProblem::new(&phi, &y, 1.0);
        let sol = solve_lasso(&p, 1e-14, 2).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
        assert!((p.objective(&sol.a_hat) - sol.objective).abs() < 1e-9 * sol.objective);
    }

    #[test]
    fn nonneg_solution_is_nonnegative() {
        let phi = DMatrix::from_fn(12, 5, |i, j| ((i + 1) as f64 * (j + 2) as f64).cos());
        let y = DVector::from_fn(12, |i, _| (i as f64 * 0.7).sin());
        let p = LassoProblem::new(&phi, &y, 0.1).nonneg(true);
        let sol = solve_lasso(&p, 1e-10, 20_000).unwrap();
        assert!(sol.converged);
        assert!(sol.a_hat.iter().all(|&v| v >= 0.0));
        assert!((p.optimality_residual(&sol.a_hat) - sol.optimality).abs() < 1e-12);
    }
}
