use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::par;

/// Kernel functions; samples are rows of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    /// `(1 + xᵀx')^p`
    Polynomial { degree: u32 },
    /// `exp(−‖x − x'‖² / a²)`
    Gaussian { width: f64 },
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Polynomial { degree: 0 } => Err(invalid("polynomial degree must be at least 1")),
            Kernel::Gaussian { width } if !(width > 0.0) => Err(invalid(format!("Gaussian width must be positive, got {width}"))),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            Kernel::Polynomial { degree } => {
                let dot: f64 = x.iter().zip(z).map(|(a, b)| a * b).sum();
                (1.0 + dot).powi(degree as i32)
            }
            Kernel::Gaussian { width } => {
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (width * width)).exp()
            }
        }
    }

    /// `G_pq = k(a_p, b_q)` for rows `a_p`, `b_q`.
    pub fn gram(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let rows_a: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().copied().collect()).collect();
        let rows_b: Vec<Vec<f64>> = b.row_iter().map(|r| r.iter().copied().collect()).collect();
        let data = par::map_range(rows_a.len(), |p| rows_b.iter().map(|bq| self.eval(&rows_a[p], bq)).collect::<Vec<_>>());
        DMatrix::from_fn(rows_a.len(), rows_b.len(), |p, q| data[p][q])
    }

    pub fn label(&self) -> String {
        match *self {
            Kernel::Polynomial { degree } => format!("poly(p={degree})"),
            Kernel::Gaussian { width } => format!("gauss(a={width})"),
        }
    }
}

/// Polynomial degrees `1..=max_degree` followed by Gaussian widths.
pub fn standard_bank(max_degree: u32, widths: &[f64]) -> Vec<Kernel> {
    (1..=max_degree)
        .map(|degree| Kernel::Polynomial { degree })
        .chain(widths.iter().map(|&width| Kernel::Gaussian { width }))
        .collect()
}

/// Gram matrices of several kernels on one training set, with their labeled
/// versions `K_i = yyᵀ ∘ G_i`.
#[derive(Debug, Clone)]
pub struct KernelBank {
    pub kernels: Vec<Kernel>,
    pub samples: DMatrix<f64>,
    pub labels: DVector<f64>,
    pub grams: Vec<DMatrix<f64>>,
    pub labeled: Vec<DMatrix<f64>>,
}

impl KernelBank {
    pub fn new(kernels: Vec<Kernel>, samples: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(invalid("kernel bank is empty"));
        }
        if samples.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples but {} labels",
                samples.nrows(),
                labels.len()
            )));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(invalid("labels must be -1 or +1"));
        }
        let mut grams = Vec::with_capacity(kernels.len());
        let mut labeled = Vec::with_capacity(kernels.len());
        let yy = &labels * labels.transpose();
        for k in &kernels {
            k.validate()?;
            let g = k.gram(&samples, &samples);
            labeled.push(g.component_mul(&yy));
            grams.push(g);
        }
        Ok(Self {
            kernels,
            samples,
            labels,
            grams,
            labeled,
        })
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    /// Keeps only kernel `i`.
    pub fn single(&self, i: usize) -> Self {
        Self {
            kernels: vec![self.kernels[i]],
            samples: self.samples.clone(),
            labels: self.labels.clone(),
            grams: vec![self.grams[i].clone()],
            labeled: vec![self.labeled[i].clone()],
        }
    }

    /// `Σ_i w_i K_i`.
    pub fn combined(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.size(), self.size());
        for (wi, k) in w.iter().zip(&self.labeled) {
            if *wi != 0.0 {
                h += *wi * k;
            }
        }
        h
    }

    /// Smallest eigenvalue of each raw Gram matrix.
    pub fn min_eigenvalues(&self) -> Vec<f64> {
        self.grams
            .iter()
            .map(|g| g.clone().symmetric_eigenvalues().min())
            .collect()
    }
}
