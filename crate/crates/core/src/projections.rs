//! Euclidean projections onto the scaled simplex and the capped simplex, and
//! the smoothed weighted minimum built on them.
//!
//! The capped simplex `{w : 0 ≤ w_i ≤ 1, Σ w_i = k}` is the feasible set of
//! trimmed estimation: minimizing `Σ w_i g_i` over it selects the `k` smallest
//! `g_i`. Adding `(β/2)‖w‖²` turns that piecewise-linear minimum into a
//! differentiable function whose minimizer is a projection:
//!
//! ```text
//! min_{w ∈ S} Σ w_i g_i + (β/2)‖w‖² = (β/2) dist²_S(−g/β) − ‖g‖²/(2β)
//! ```

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `{w ∈ ℝ^dim : 0 ≤ w_i ≤ 1, Σ w_i = budget}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CappedSimplex {
    dim: usize,
    budget: f64,
}

impl CappedSimplex {
    pub fn new(dim: usize, budget: f64) -> Result<Self> {
        if !(0.0..=dim as f64).contains(&budget) || dim == 0 {
            return Err(Error::InfeasibleSet { budget, dim });
        }
        Ok(Self { dim, budget })
    }

    /// The unit simplex `Δ_1`; the unit caps are inactive there.
    pub fn unit_simplex(dim: usize) -> Result<Self> {
        Self::new(dim, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Largest bound or sum violation of `w`.
    pub fn violation(&self, w: &DVector<f64>) -> f64 {
        let box_viol = w.iter().map(|&v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max);
        box_viol.max((w.sum() - self.budget).abs())
    }
}

/// Projection onto `{w ≥ 0 : Σ w_i = k}` by sorting.
pub fn project_simplex(v: &DVector<f64>, k: f64) -> Result<DVector<f64>> {
    if !(k > 0.0) {
        return Err(invalid(format!("simplex budget must be positive, got {k}")));
    }
    if v.is_empty() {
        return Err(invalid("cannot project an empty vector"));
    }
    let n = v.len() as f64;
    if v.iter().all(|&e| e >= 0.0) && (v.sum() - k).abs() <= 4.0 * n * f64::EPSILON * (v.sum() + k) {
        return Ok(v.clone());
    }
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - k) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    Ok(v.map(|e| (e - tau).max(0.0)))
}

/// Projection onto the capped simplex.
pub fn project_capped_simplex(v: &DVector<f64>, set: &CappedSimplex) -> Result<DVector<f64>> {
    if v.len() != set.dim {
        return Err(Error::DimensionMismatch(format!(
            "vector has {} entries, set has dimension {}",
            v.len(),
            set.dim
        )));
    }
    let n = v.len();
    let ones = vec![1.0; n];
    let lower = vec![0.0; n];
    let upper = vec![1.0; n];
    project_box_hyperplane(v.as_slice(), &ones, &lower, &upper, set.budget).map(DVector::from_vec)
}

/// Projection onto `{z : lower ≤ z ≤ upper, aᵀz = b}`.
///
/// The solution is `z(τ) = clip(v − τ a, lower, upper)` where `τ` solves the
/// monotone piecewise-linear equation `aᵀz(τ) = b`. Breakpoints are sorted and
/// bisected; on the final linear piece `τ` is solved in closed form.
/// Upper bounds may be `+∞`.
pub fn project_box_hyperplane(v: &[f64], a: &[f64], lower: &[f64], upper: &[f64], b: f64) -> Result<Vec<f64>> {
    let n = v.len();
    if a.len() != n || lower.len() != n || upper.len() != n {
        return Err(Error::DimensionMismatch("projection inputs differ in length".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(invalid("box lower bound exceeds upper bound"));
    }

    // Attainable range of aᵀz over the box.
    let (mut lo_sum, mut hi_sum) = (0.0, 0.0);
    for i in 0..n {
        let (p, q) = (a[i] * lower[i], a[i] * upper[i]);
        lo_sum += p.min(q);
        hi_sum += p.max(q);
    }
    let slack = 1e-12 * (1.0 + b.abs());
    if b < lo_sum - slack || b > hi_sum + slack {
        return Err(Error::InfeasibleSet {
            budget: b,
            dim: n,
        });
    }

    // Already feasible up to rounding: return unchanged so projection is idempotent.
    let residual: f64 = (0..n).map(|i| a[i] * v[i]).sum::<f64>() - b;
    let scale: f64 = (0..n).map(|i| (a[i] * v[i]).abs()).sum::<f64>() + b.abs();
    if (0..n).all(|i| lower[i] <= v[i] && v[i] <= upper[i]) && residual.abs() <= 4.0 * (n as f64) * f64::EPSILON * scale {
        return Ok(v.to_vec());
    }

    let clip = |tau: f64| -> Vec<f64> { (0..n).map(|i| (v[i] - tau * a[i]).clamp(lower[i], upper[i])).collect() };
    let level = |tau: f64| -> f64 { (0..n).map(|i| a[i] * (v[i] - tau * a[i]).clamp(lower[i], upper[i])).sum() };

    let mut knots: Vec<f64> = Vec::with_capacity(2 * n);
    for i in 0..n {
        if a[i] != 0.0 {
            knots.push((v[i] - lower[i]) / a[i]);
            if upper[i].is_finite() {
                knots.push((v[i] - upper[i]) / a[i]);
            }
        }
    }
    if knots.is_empty() {
        return Ok(clip(0.0));
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    // level(τ) is nonincreasing. Find adjacent knots bracketing b.
    let first = level(knots[0]);
    let last = level(knots[knots.len() - 1]);
    let (left, right) = if b >= first {
        (f64::NEG_INFINITY, knots[0])
    } else if b <= last {
        (knots[knots.len() - 1], f64::INFINITY)
    } else {
        let (mut i, mut j) = (0, knots.len() - 1);
        while j - i > 1 {
            let mid = (i + j) / 2;
            if level(knots[mid]) >= b {
                i = mid;
            } else {
                j = mid;
            }
        }
        (knots[i], knots[j])
    };

    // Classify coordinates on the open piece, then solve for τ exactly.
    let probe = match (left.is_finite(), right.is_finite()) {
        (true, true) => 0.5 * (left + right),
        (false, true) => right - 1.0,
        (true, false) => left + 1.0,
        (false, false) => 0.0,
    };
    let (mut fixed, mut free_av, mut free_aa) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let r = v[i] - probe * a[i];
        if a[i] == 0.0 || r <= lower[i] || r >= upper[i] {
            fixed += a[i] * r.clamp(lower[i], upper[i]);
        } else {
            free_av += a[i] * v[i];
            free_aa += a[i] * a[i];
        }
    }
    let tau = if free_aa > 0.0 {
        ((free_av + fixed - b) / free_aa).clamp(left.min(right), right.max(left))
    } else if left.is_finite() {
        left
    } else {
        right
    };
    let mut z = clip(tau);

    // One correction on the free coordinates removes cancellation error in τ.
    let res: f64 = (0..n).map(|i| a[i] * z[i]).sum::<f64>() - b;
    let free: Vec<usize> = (0..n).filter(|&i| a[i] != 0.0 && lower[i] < z[i] && z[i] < upper[i]).collect();
    let aa: f64 = free.iter().map(|&i| a[i] * a[i]).sum();
    if aa > 0.0 && res != 0.0 {
        for &i in &free {
            z[i] = (z[i] - res * a[i] / aa).clamp(lower[i], upper[i]);
        }
    }
    Ok(z)
}

/// Feasible sets accepted by [`brute_force_projection`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjectionSet {
    Simplex { budget: f64 },
    Capped(CappedSimplex),
}

/// Largest dimension [`brute_force_projection`] will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Exact projection by enumerating every active-set pattern.
///
/// Each coordinate is at its lower bound, at its upper bound, or free; for a
/// pattern the equality-constrained least-squares point is closed form. The
/// nearest feasible candidate over all patterns is the projection. Intended
/// as a test oracle.
pub fn brute_force_projection(v: &DVector<f64>, set: ProjectionSet) -> Result<DVector<f64>> {
    let m = v.len();
    if m > BRUTE_FORCE_LIMIT {
        return Err(Error::DimensionTooLarge {
            dim: m,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let (budget, capped) = match set {
        ProjectionSet::Simplex { budget } => {
            if !(budget > 0.0) {
                return Err(invalid(format!("simplex budget must be positive, got {budget}")));
            }
            (budget, false)
        }
        ProjectionSet::Capped(s) => {
            if s.dim != m {
                return Err(Error::DimensionMismatch(format!(
                    "vector has {m} entries, set has dimension {}",
                    s.dim
                )));
            }
            (s.budget, true)
        }
    };
    let states: usize = if capped { 3 } else { 2 };
    let patterns = states.pow(m as u32);
    let tol = 1e-12 * (1.0 + budget);

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut code = vec![0u8; m];
    for p in 0..patterns {
        let mut rem = p;
        for c in code.iter_mut() {
            *c = (rem % states) as u8;
            rem /= states;
        }
        // 0 = lower bound, 1 = free, 2 = upper bound
        let n_upper = code.iter().filter(|&&c| c == 2).count() as f64;
        let free: Vec<usize> = (0..m).filter(|&i| code[i] == 1).collect();
        let mut z = DVector::zeros(m);
        for i in 0..m {
            if code[i] == 2 {
                z[i] = 1.0;
            }
        }
        if free.is_empty() {
            if (n_upper - budget).abs() > tol {
                continue;
            }
        } else {
            let tau = (free.iter().map(|&i| v[i]).sum::<f64>() + n_upper - budget) / free.len() as f64;
            for &i in &free {
                z[i] = v[i] - tau;
            }
            let upper_ok = !capped || free.iter().all(|&i| z[i] <= 1.0 + tol);
            if !upper_ok || free.iter().any(|&i| z[i] < -tol) {
                continue;
            }
        }
        let d = (&z - v).norm_squared();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, z));
        }
    }
    best.map(|(_, z)| z).ok_or(Error::InfeasibleSet { budget, dim: m })
}

/// Value and minimizer of `min_{w ∈ S} Σ w_i g_i + (β/2)‖w‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedMin {
    pub value: f64,
    /// The minimizing weights, which are also the multipliers applied to the
    /// per-component gradients.
    pub weights: DVector<f64>,
}

impl SmoothedMin {
    /// The same value through `(β/2) dist²_S(−g/β) − ‖g‖²/(2β)`.
    pub fn distance_form(&self, g: &DVector<f64>, beta: f64) -> f64 {
        let target = -g / beta;
        0.5 * beta * (&self.weights - target).norm_squared() - g.norm_squared() / (2.0 * beta)
    }
}

/// Smoothed weighted minimum over the capped simplex.
///
/// The weights are the projection of `−g/β`. The value is evaluated by direct
/// substitution, which avoids the cancellation in the distance form when
/// `‖g‖²/β` is large.
pub fn smoothed_weighted_min(g: &DVector<f64>, beta: f64, set: &CappedSimplex) -> Result<SmoothedMin> {
    if !(beta > 0.0) {
        return Err(invalid(format!("smoothing parameter must be positive, got {beta}")));
    }
    let weights = project_capped_simplex(&(-g / beta), set)?;
    let value = weights.dot(g) + 0.5 * beta * weights.norm_squared();
    Ok(SmoothedMin { value, weights })
}

/// Sum of the `k` smallest entries: the unsmoothed (β = 0) weighted minimum
/// for integer budgets.
pub fn k_smallest_sum(g: &DVector<f64>, k: usize) -> f64 {
    let mut sorted: Vec<f64> = g.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().take(k).sum()
}
