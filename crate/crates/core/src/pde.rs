//! A linear-system inverse problem `H(x)u = q`, `H(x) = A + diag(Bx)`, with
//! misfit `‖Ru − d‖²`, handled by the adjoint-state gradient and by the
//! quadratic-penalty reduced function.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objective::{Evaluation, ReducedObjective};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: DMatrix<f64>,
    pub data: DVector<f64>,
}

impl ToySystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DVector<f64>, r: DMatrix<f64>, data: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || q.len() != n || r.ncols() != n || data.len() != r.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "A {}x{}, B {}x{}, q {}, R {}x{}, data {}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                q.len(),
                r.nrows(),
                r.ncols(),
                data.len()
            )));
        }
        Ok(Self { a, b, q, r, data })
    }

    /// `A = tridiag(−1, 2 + shift, −1)` of size `n`; `B` maps parameter `p` onto
    /// the `p`-th of `d` contiguous diagonal blocks; `R` selects `observed`.
    pub fn standard(n: usize, d: usize, shift: f64, observed: &[usize], q: DVector<f64>) -> Result<Self> {
        if d == 0 || d > n || observed.iter().any(|&i| i >= n) {
            return Err(invalid("need 1 <= d <= n and observed indices below n"));
        }
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                2.0 + shift
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        });
        let b = DMatrix::from_fn(n, d, |i, p| if i * d / n == p { 1.0 } else { 0.0 });
        let r = DMatrix::from_fn(observed.len(), n, |k, i| if observed[k] == i { 1.0 } else { 0.0 });
        let data = DVector::zeros(observed.len());
        Self::new(a, b, q, r, data)
    }

    pub fn with_data(mut self, data: DVector<f64>) -> Result<Self> {
        if data.len() != self.r.nrows() {
            return Err(Error::DimensionMismatch("data length differs from observation count".into()));
        }
        self.data = data;
        Ok(self)
    }

    pub fn params(&self) -> usize {
        self.b.ncols()
    }

    pub fn operator(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = self.a.clone();
        let diag = &self.b * x;
        for i in 0..h.nrows() {
            h[(i, i)] += diag[i];
        }
        h
    }

    /// `R H(x)⁻¹ q`: noiseless data at `x`.
    pub fn observe(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.r * solve(&self.operator(x), &self.q, "state equation")?)
    }

    /// 2-norm condition number of `H(x)`.
    pub fn condition(&self, x: &DVector<f64>) -> f64 {
        condition(&self.operator(x))
    }

    fn check(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.params() {
            return Err(Error::DimensionMismatch(format!(
                "parameter has {} entries, system expects {}",
                x.len(),
                self.params()
            )));
        }
        Ok(())
    }

    /// `⟨v, (∂H/∂x_p) u⟩ = Σ_i B_ip v_i u_i` for every `p`.
    fn sensitivity(&self, v: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.b.tr_mul(&v.component_mul(u))
    }
}

fn condition(h: &DMatrix<f64>) -> f64 {
    let s = h.clone().singular_values();
    s.max() / s.min()
}

fn solve(h: &DMatrix<f64>, rhs: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let lu = h.clone().lu();
    let u = lu.u();
    let diag = u.diagonal().map(f64::abs);
    if diag.min() <= 1e-14 * diag.max() {
        return Err(Error::SingularSystem {
            context: context.into(),
            condition: condition(h),
        });
    }
    lu.solve(rhs).ok_or_else(|| Error::SingularSystem {
        context: context.into(),
        condition: f64::INFINITY,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub state: DVector<f64>,
    pub adjoint: DVector<f64>,
    pub solves: usize,
}

/// `f̃(x) = ‖R H(x)⁻¹q − d‖²` with gradient `⟨v̄, (∂H/∂x_p)ū⟩`, where
/// `H(x)ū = q` and `H(x)ᵀv̄ = −2Rᵀ(Rū − d)`.
pub fn adjoint_value_grad(sys: &ToySystem, x: &DVector<f64>) -> Result<AdjointEval> {
    sys.check(x)?;
    let h = sys.operator(x);
    let state = solve(&h, &sys.q, "state equation")?;
    let resid = &sys.r * &state - &sys.data;
    let adjoint = solve(&h.transpose(), &(-2.0 * sys.r.tr_mul(&resid)), "adjoint equation")?;
    Ok(AdjointEval {
        value: resid.norm_squared(),
        gradient: sys.sensitivity(&adjoint, &state),
        state,
        adjoint,
        solves: 2,
    })
}

/// Residuals of the stationarity conditions of `‖Ru − d‖² + ⟨v, H(x)u − q⟩`
/// in `u` and in `v`, as max-norms.
pub fn saddle_residuals(sys: &ToySystem, x: &DVector<f64>, state: &DVector<f64>, adjoint: &DVector<f64>) -> (f64, f64) {
    let h = sys.operator(x);
    let du = 2.0 * sys.r.tr_mul(&(&sys.r * state - &sys.data)) + h.tr_mul(adjoint);
    let dv = &h * state - &sys.q;
    (du.amax(), dv.amax())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub state: DVector<f64>,
    pub solves: usize,
}

/// `g̃(x) = min_u ‖Ru − d‖² + (λ/2)‖H(x)u − q‖²` with gradient
/// `λ⟨H(x)ū − q, (∂H/∂x_p)ū⟩`; `ū` comes from one solve of the normal
/// equations `(2RᵀR + λHᵀH)u = 2Rᵀd + λHᵀq`.
pub fn penalty_value_grad(sys: &ToySystem, x: &DVector<f64>, lambda: f64) -> Result<PenaltyEval> {
    sys.check(x)?;
    if !(lambda > 0.0) {
        return Err(invalid(format!("penalty weight must be positive, got {lambda}")));
    }
    let h = sys.operator(x);
    let normal = 2.0 * sys.r.tr_mul(&sys.r) + lambda * h.tr_mul(&h);
    let rhs = 2.0 * sys.r.tr_mul(&sys.data) + lambda * h.tr_mul(&sys.q);
    let state = solve(&normal, &rhs, "penalty normal equations")?;
    let misfit = &sys.r * &state - &sys.data;
    let defect = &h * &state - &sys.q;
    Ok(PenaltyEval {
        value: misfit.norm_squared() + 0.5 * lambda * defect.norm_squared(),
        gradient: lambda * sys.sensitivity(&defect, &state),
        state,
        solves: 1,
    })
}

/// [`adjoint_value_grad`] as a reduced objective, counting linear solves.
pub struct AdjointObjective<'a> {
    pub system: &'a ToySystem,
    solves: Cell<usize>,
    gradients: Cell<usize>,
}

impl<'a> AdjointObjective<'a> {
    pub fn new(system: &'a ToySystem) -> Self {
        Self {
            system,
            solves: Cell::new(0),
            gradients: Cell::new(0),
        }
    }

    /// Linear solves per gradient evaluation so far.
    pub fn solves_per_gradient(&self) -> f64 {
        self.solves.get() as f64 / self.gradients.get().max(1) as f64
    }
}

impl ReducedObjective for AdjointObjective<'_> {
    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        let e = adjoint_value_grad(self.system, x)?;
        self.solves.set(self.solves.get() + e.solves);
        self.gradients.set(self.gradients.get() + 1);
        Ok(Evaluation {
            value: e.value,
            gradient: e.gradient,
            inner: e.state,
        })
    }
}

/// [`penalty_value_grad`] as a reduced objective, counting linear solves.
pub struct PenaltyObjective<'a> {
    pub system: &'a ToySystem,
    pub lambda: f64,
    solves: Cell<usize>,
    gradients: Cell<usize>,
}

impl<'a> PenaltyObjective<'a> {
    pub fn new(system: &'a ToySystem, lambda: f64) -> Self {
        Self {
            system,
            lambda,
            solves: Cell::new(0),
            gradients: Cell::new(0),
        }
    }

    pub fn solves_per_gradient(&self) -> f64 {
        self.solves.get() as f64 / self.gradients.get().max(1) as f64
    }
}

impl ReducedObjective for PenaltyObjective<'_> {
    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        let e = penalty_value_grad(self.system, x, self.lambda)?;
        self.solves.set(self.solves.get() + e.solves);
        self.gradients.set(self.gradients.get() + 1);
        Ok(Evaluation {
            value: e.value,
            gradient: e.gradient,
            inner: e.state,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::fd_gradient_check;

    fn instance() -> (ToySystem, DVector<f64>) {
        let q = DVector::from_fn(20, |i, _| 1.0 + (i as f64 * 0.7).sin());
        let sys = ToySystem::standard(20, 4, 0.5, &[1, 4, 7, 10, 13, 16, 19], q).unwrap();
        let truth = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1]);
        let clean = sys.observe(&truth).unwrap();
        let noise = DVector::from_fn(7, |i, _| 0.01 * ((i * 37 % 11) as f64 - 5.0));
        (sys.with_data(clean + noise).unwrap(), truth)
    }

    #[test]
    fn consistent_data_gives_zero() {
        let (sys, truth) = instance();
        let clean = sys.observe(&truth).unwrap();
        let sys = sys.with_data(clean).unwrap();
        let e = adjoint_value_grad(&sys, &truth).unwrap();
        assert!(e.value < 1e-28);
        assert!(e.adjoint.amax() < 1e-13 && e.gradient.amax() < 1e-13);
        let p = penalty_value_grad(&sys, &truth, 1e4).unwrap();
        // λ amplifies the rounding-level defect in the gradient.
        assert!(p.value < 1e-24 && p.gradient.amax() < 1e4 * 1e-12);
        let direct = solve(&sys.operator(&truth), &sys.q, "test").unwrap();
        assert!((p.state - direct).amax() < 1e-12);
    }

    #[test]
    fn two_by_two_symbolic() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let b = DMatrix::from_element(2, 1, 1.0);
        let q = DVector::from_vec(vec![1.0, 0.0]);
        let r = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let d = 0.1;
        let sys = ToySystem::new(a, b, q, r, DVector::from_element(1, d)).unwrap();
        let x = 0.4;
        let s = 2.0 + x;
        let det = s * s - 1.0;
        let u1 = s / det;
        let du1 = -(s * s + 1.0) / (det * det);
        let e = adjoint_value_grad(&sys, &DVector::from_element(1, x)).unwrap();
        assert!((e.value - (u1 - d).powi(2)).abs() < 1e-15);
        assert!((e.gradient[0] - 2.0 * (u1 - d) * du1).abs() < 1e-14);
    }

    #[test]
    fn gradients_match_differences() {
        let (sys, _) = instance();
        let x = DVector::from_vec(vec![0.1, 0.4, -0.3, 0.2]);
        assert!(fd_gradient_check(&AdjointObjective::new(&sys), &x, 1e-6).unwrap() <= 1e-6);
        for lambda in [1.0, 1e2, 1e4] {
            assert!(fd_gradient_check(&PenaltyObjective::new(&sys, lambda), &x, 1e-6).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn penalty_state_approaches_constraint() {
        let (sys, _) = instance();
        let x = DVector::from_vec(vec![0.1, 0.4, -0.3, 0.2]);
        let direct = solve(&sys.operator(&x), &sys.q, "test").unwrap();
        let mut prev = f64::INFINITY;
        for lambda in [1e2, 1e4, 1e6] {
            let dist = (penalty_value_grad(&sys, &x, lambda).unwrap().state - &direct).norm();
            assert!(dist < prev);
            prev = dist;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn saddle_point_residuals() {
        let (sys, _) = instance();
        let x = DVector::from_vec(vec![0.1, 0.4, -0.3, 0.2]);
        let e = adjoint_value_grad(&sys, &x).unwrap();
        let (du, dv) = saddle_residuals(&sys, &x, &e.state, &e.adjoint);
        assert!(du <= 1e-8 && dv <= 1e-8);
    }

    #[test]
    fn solve_counts() {
        let (sys, _) = instance();
        let x = DVector::zeros(4);
        let adj = AdjointObjective::new(&sys);
        let pen = PenaltyObjective::new(&sys, 1e2);
        for _ in 0..3 {
            adj.evaluate(&x).unwrap();
            pen.evaluate(&x).unwrap();
        }
        assert_eq!(adj.solves_per_gradient(), 2.0);
        assert_eq!(pen.solves_per_gradient(), 1.0);
    }

    #[test]
    fn singular_operator_is_reported() {
        let (sys, _) = instance();
        let a = DMatrix::zeros(2, 2);
        let sing = ToySystem::new(a, DMatrix::from_element(2, 1, 1.0), DVector::from_element(2, 1.0), DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let err = adjoint_value_grad(&sing, &DVector::zeros(1)).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { .. }));
        assert!(penalty_value_grad(&sys, &DVector::zeros(4), 0.0).is_err());
        assert!(sys.condition(&DVector::zeros(4)).is_finite());
    }
}
