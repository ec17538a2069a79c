//! Smoothed trimmed estimation: `g̃_β(x) = min_{w ∈ Δ_k ∩ [0,1]^m} wᵀg(x) + (β/2)‖w‖²`
//! for separable losses, with a logistic-regression instantiation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objective::{Evaluation, ReducedObjective};
use crate::projections::{smoothed_weighted_min, CappedSimplex};
use crate::solve::{lbfgs_minimize, Minimum, SolverOptions};

/// Per-sample losses `g(x) ∈ ℝ^m` and the action `v ↦ J_g(x)ᵀv`.
pub trait SeparableLoss {
    fn samples(&self) -> usize;
    fn dim(&self) -> usize;
    fn losses(&self, x: &DVector<f64>) -> DVector<f64>;
    fn weighted_gradient(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
}

/// `log(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + e^{−t})` without overflow.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `g_i(θ) = log(1 + exp(−y_i x_iᵀθ))`, samples in the rows of `features`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticLoss<'a> {
    features: &'a DMatrix<f64>,
    labels: &'a DVector<f64>,
}

impl<'a> LogisticLoss<'a> {
    pub fn new(features: &'a DMatrix<f64>, labels: &'a DVector<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(invalid("labels must be -1 or +1"));
        }
        Ok(Self { features, labels })
    }

    fn margins(&self, theta: &DVector<f64>) -> DVector<f64> {
        (self.features * theta).component_mul(self.labels)
    }
}

impl SeparableLoss for LogisticLoss<'_> {
    fn samples(&self) -> usize {
        self.features.nrows()
    }

    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn losses(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.margins(theta).map(|z| softplus(-z))
    }

    fn weighted_gradient(&self, theta: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let margins = self.margins(theta);
        let coef = DVector::from_fn(margins.len(), |i, _| -v[i] * self.labels[i] * sigmoid(-margins[i]));
        self.features.tr_mul(&coef)
    }
}

/// `g_i(x) = ‖x − c_i‖²` for centers in the rows of `centers`.
#[derive(Debug, Clone)]
pub struct SquaredDistances {
    pub centers: DMatrix<f64>,
}

impl SeparableLoss for SquaredDistances {
    fn samples(&self) -> usize {
        self.centers.nrows()
    }

    fn dim(&self) -> usize {
        self.centers.ncols()
    }

    fn losses(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.samples(), |i, _| (x - self.centers.row(i).transpose()).norm_squared())
    }

    fn weighted_gradient(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        for i in 0..self.samples() {
            g += 2.0 * v[i] * (x - self.centers.row(i).transpose());
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimmedConfig {
    /// Number of samples kept.
    pub k: usize,
    pub beta: f64,
    /// Weight of `‖x‖²` added to the objective.
    pub ridge: f64,
}

impl TrimmedConfig {
    pub fn new(k: usize) -> Self {
        Self { k, beta: 1.0, ridge: 1e-3 }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.k == 0 || self.k > m {
            return Err(Error::InfeasibleSet {
                budget: self.k as f64,
                dim: m,
            });
        }
        if !(self.beta > 0.0) {
            return Err(invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.ridge >= 0.0) {
            return Err(invalid(format!("ridge must be nonnegative, got {}", self.ridge)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimmedEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub weights: DVector<f64>,
}

/// `g̃_β(x) + ridge‖x‖²` with gradient `J_g(x)ᵀw̄ + 2·ridge·x`.
pub fn trimmed_value_grad<L: SeparableLoss + ?Sized>(loss: &L, x: &DVector<f64>, cfg: &TrimmedConfig) -> Result<TrimmedEval> {
    let m = loss.samples();
    cfg.validate(m)?;
    if x.len() != loss.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point has {} entries, loss expects {}",
            x.len(),
            loss.dim()
        )));
    }
    let g = loss.losses(x);
    let set = CappedSimplex::new(m, cfg.k as f64)?;
    let sm = smoothed_weighted_min(&g, cfg.beta, &set)?;
    let mut gradient = loss.weighted_gradient(x, &sm.weights);
    gradient.axpy(2.0 * cfg.ridge, x, 1.0);
    Ok(TrimmedEval {
        value: sm.value + cfg.ridge * x.norm_squared(),
        gradient,
        weights: sm.weights,
    })
}

/// [`trimmed_value_grad`] as a reduced objective; the inner solution is `w̄`.
pub struct TrimmedObjective<L> {
    pub loss: L,
    pub cfg: TrimmedConfig,
}

impl<L: SeparableLoss> ReducedObjective for TrimmedObjective<L> {
    fn evaluate(&self, x: &DVector<f64>) -> Result<Evaluation> {
        let e = trimmed_value_grad(&self.loss, x, &self.cfg)?;
        Ok(Evaluation {
            value: e.value,
            gradient: e.gradient,
            inner: e.weights,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrimmedFit {
    pub theta: DVector<f64>,
    pub weights: DVector<f64>,
    pub minimum: Minimum,
}

/// Fits trimmed logistic regression from `θ = 0` with L-BFGS.
pub fn fit_trimmed_logistic(
    features: &DMatrix<f64>,
    labels: &DVector<f64>,
    cfg: &TrimmedConfig,
    opts: &SolverOptions,
) -> Result<TrimmedFit> {
    if features.nrows() == 0 || features.ncols() == 0 {
        return Err(invalid("empty training data"));
    }
    let obj = TrimmedObjective {
        loss: LogisticLoss::new(features, labels)?,
        cfg: *cfg,
    };
    cfg.validate(features.nrows())?;
    let minimum = lbfgs_minimize(&obj, &DVector::zeros(features.ncols()), opts)?;
    Ok(TrimmedFit {
        theta: minimum.x.clone(),
        weights: minimum.inner.clone(),
        minimum,
    })
}

/// Sign of `x_iᵀθ`, with zero scores mapped to `+1`.
pub fn classify(theta: &DVector<f64>, features: &DMatrix<f64>) -> DVector<f64> {
    (features * theta).map(|s| if s >= 0.0 { 1.0 } else { -1.0 })
}

/// Fraction of matching labels.
pub fn accuracy(predicted: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    if truth.is_empty() {
        return f64::NAN;
    }
    let hits = predicted.iter().zip(truth.iter()).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}
