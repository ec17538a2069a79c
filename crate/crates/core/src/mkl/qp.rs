use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::projections::project_box_hyperplane;

/// `min ½ zᵀHz + qᵀz` over `{z ∈ [0, C]^m, yᵀz = 0}`.
#[derive(Debug, Clone, Copy)]
pub struct BoxQp<'a> {
    pub hessian: &'a DMatrix<f64>,
    pub linear: &'a DVector<f64>,
    pub labels: &'a DVector<f64>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BoxQp<'_> {
    fn validate(&self) -> Result<()> {
        let m = self.labels.len();
        if self.hessian.shape() != (m, m) || self.linear.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "QP with {m} labels has a {}x{} Hessian and {} linear terms",
                self.hessian.nrows(),
                self.hessian.ncols(),
                self.linear.len()
            )));
        }
        if !(self.bound > 0.0) {
            return Err(invalid(format!("box bound C must be positive, got {}", self.bound)));
        }
        Ok(())
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(self.hessian * z)) + self.linear.dot(z)
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        self.hessian * z + self.linear
    }

    /// Euclidean projection onto the feasible set.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = v.len();
        let lower = vec![0.0; m];
        let upper = vec![self.bound; m];
        let z = project_box_hyperplane(v.as_slice(), self.labels.as_slice(), &lower, &upper, 0.0)
            .expect("zero is always feasible");
        DVector::from_vec(z)
    }

    /// `‖z − P(z − ∇)‖∞`, zero exactly at a solution.
    pub fn kkt_residual(&self, z: &DVector<f64>) -> f64 {
        kkt_residual_with(self, z, &self.gradient(z))
    }

    /// Solves the equality-constrained problem on the face fixed by the
    /// bound pattern of `z`. Returns `None` if the face solution leaves the box.
    fn face_solve(&self, z: &DVector<f64>) -> Option<DVector<f64>> {
        let c = self.bound;
        let eps = 1e-10 * c;
        let free: Vec<usize> = (0..z.len()).filter(|&i| z[i] > eps && z[i] < c - eps).collect();
        let mut out = z.map(|v| if v <= eps { 0.0 } else if v >= c - eps { c } else { v });
        if free.is_empty() {
            return Some(out);
        }
        let mut is_free = vec![false; z.len()];
        for &i in &free {
            is_free[i] = true;
        }
        let nf = free.len();
        let mut kkt = DMatrix::zeros(nf + 1, nf + 1);
        let mut rhs = DVector::zeros(nf + 1);
        let fixed_sum: f64 = (0..z.len())
            .filter(|&i| !is_free[i])
            .map(|i| self.labels[i] * out[i])
            .sum();
        for (a, &i) in free.iter().enumerate() {
            let mut r = -self.linear[i];
            for j in 0..z.len() {
                if !is_free[j] && out[j] != 0.0 {
                    r -= self.hessian[(i, j)] * out[j];
                }
            }
            rhs[a] = r;
            for (b, &j) in free.iter().enumerate() {
                kkt[(a, b)] = self.hessian[(i, j)];
            }
            kkt[(a, nf)] = self.labels[i];
            kkt[(nf, a)] = self.labels[i];
        }
        rhs[nf] = -fixed_sum;
        let scale = kkt.amax().max(1.0);
        let sol = kkt.svd(true, true).solve(&rhs, 1e-13 * scale).ok()?;
        for (a, &i) in free.iter().enumerate() {
            let v = sol[a];
            if !v.is_finite() || v < -eps || v > c + eps {
                return None;
            }
            out[i] = v.clamp(0.0, c);
        }
        Some(out)
    }
}

fn kkt_residual_with(qp: &BoxQp<'_>, z: &DVector<f64>, grad: &DVector<f64>) -> f64 {
    (z - qp.project(&(z - grad))).amax()
}

/// Largest eigenvalue estimate of a symmetric PSD matrix by power iteration.
fn spectral_bound(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i % 7) as f64 * 0.1);
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..50 {
        let w = h * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    lambda
}

const FACE_EVERY: usize = 10;

/// Accelerated projected gradient with periodic face solves.
///
/// Every few iterations the bound pattern of the iterate defines a face; the
/// equality-constrained minimizer on that face is taken whenever it stays in
/// the box and lowers the objective. Stops at KKT residual `≤ tol`.
pub fn solve_box_qp(qp: &BoxQp<'_>, start: &DVector<f64>, tol: f64, max_iters: usize) -> Result<QpSolution> {
    qp.validate()?;
    if !(tol > 0.0) {
        return Err(invalid("QP tolerance must be positive"));
    }
    let mut z = qp.project(start);
    let mut f = qp.objective(&z);
    let mut lip = (spectral_bound(qp.hessian) * 1.05).max(1e-12);
    let mut y = z.clone();
    let mut momentum = 1.0_f64;
    let mut iterations = 0;

    loop {
        let grad = qp.gradient(&z);
        let kkt = kkt_residual_with(qp, &z, &grad);
        if kkt <= tol || iterations >= max_iters {
            return Ok(QpSolution {
                objective: f,
                kkt_residual: kkt,
                iterations,
                converged: kkt <= tol,
                z,
            });
        }
        iterations += 1;

        if iterations % FACE_EVERY == 0 {
            if let Some(p) = qp.face_solve(&z) {
                let fp = qp.objective(&p);
                if fp <= f {
                    z = p;
                    f = fp;
                    y = z.clone();
                    momentum = 1.0;
                    continue;
                }
            }
        }

        let gy = qp.gradient(&y);
        let fy = qp.objective(&y);
        let next = loop {
            let cand = qp.project(&(&y - &gy / lip));
            let d = &cand - &y;
            if qp.objective(&cand) <= fy + gy.dot(&d) + 0.5 * lip * d.norm_squared() + 1e-14 * fy.abs().max(1.0) {
                break cand;
            }
            lip *= 2.0;
        };
        let f_next = qp.objective(&next);
        if f_next > f {
            // Restart momentum from the last iterate.
            y = z.clone();
            momentum = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &next + ((momentum - 1.0) / t_next) * (&next - &z);
        momentum = t_next;
        z = next;
        f = f_next;
    }
}
