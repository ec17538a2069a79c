use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ExpModel, StackedDesignMatrix};
use crate::error::{Error, Result};

/// Gaussian blobs `Φ_ij = exp(−s_j²‖x_i − r_j‖²)` sampled on a pixel grid.
///
/// Parameters are `[r_x; r_y; s]`, each of length `blobs`. Pixel `(row, col)`
/// of a `rows × cols` image sits at `(row, col)` and has index
/// `col * rows + row`, matching column-major image storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobGrid {
    pub rows: usize,
    pub cols: usize,
    pub blobs: usize,
}

impl BlobGrid {
    pub fn new(rows: usize, cols: usize, blobs: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("blob grid must be nonempty".into()));
        }
        Ok(Self { rows, cols, blobs })
    }

    pub fn with_blobs(mut self, blobs: usize) -> Self {
        self.blobs = blobs;
        self
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn pixel(&self, k: usize) -> [f64; 2] {
        [(k % self.rows) as f64, (k / self.rows) as f64]
    }

    /// Packs centers and scales into a parameter vector.
    pub fn pack(centers: &[[f64; 2]], scales: &[f64]) -> DVector<f64> {
        let n = centers.len();
        let mut theta = DVector::zeros(3 * n);
        for (j, (c, &s)) in centers.iter().zip(scales).enumerate() {
            theta[j] = c[0];
            theta[n + j] = c[1];
            theta[2 * n + j] = s;
        }
        theta
    }

    /// Image of `Σ_j a_j Φ_{:,j}` as a `rows × cols` matrix.
    pub fn render(&self, theta: &DVector<f64>, amps: &DVector<f64>) -> DMatrix<f64> {
        let v = self.build(theta).matrix * amps;
        DMatrix::from_column_slice(self.rows, self.cols, v.as_slice())
    }
}

impl ExpModel for BlobGrid {
    fn columns(&self) -> usize {
        self.blobs
    }

    fn params_per_column(&self) -> usize {
        3
    }

    fn stacked_rows(&self) -> usize {
        self.pixels()
    }

    fn build(&self, theta: &DVector<f64>) -> StackedDesignMatrix {
        let n = theta.len() / 3;
        let m = self.pixels();
        let mut matrix = DMatrix::zeros(m, n);
        let mut d_rx = DMatrix::zeros(m, n);
        let mut d_ry = DMatrix::zeros(m, n);
        let mut d_s = DMatrix::zeros(m, n);
        for j in 0..n {
            let (rx, ry, s) = (theta[j], theta[n + j], theta[2 * n + j]);
            let s2 = s * s;
            for i in 0..m {
                let [px, py] = self.pixel(i);
                let (dx, dy) = (px - rx, py - ry);
                let dist2 = dx * dx + dy * dy;
                let phi = (-s2 * dist2).exp();
                matrix[(i, j)] = phi;
                d_rx[(i, j)] = 2.0 * s2 * dx * phi;
                d_ry[(i, j)] = 2.0 * s2 * dy * phi;
                d_s[(i, j)] = -2.0 * s * dist2 * phi;
            }
        }
        StackedDesignMatrix {
            matrix,
            partials: vec![d_rx, d_ry, d_s],
            complex: false,
        }
    }
}

/// Render helper for arbitrary centers, scales and amplitudes.
pub fn render_blobs(grid: &BlobGrid, centers: &[[f64; 2]], scales: &[f64], amps: &[f64]) -> DMatrix<f64> {
    grid.render(&BlobGrid::pack(centers, scales), &DVector::from_column_slice(amps))
}

/// The `count` largest local maxima over the 8-neighborhood, as
/// `(row, col)`. Ties in value go to the lexicographically smaller pixel.
pub fn pick_peaks(image: &DMatrix<f64>, count: usize) -> Vec<(usize, usize)> {
    let (rows, cols) = image.shape();
    let mut peaks = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = image[(r, c)];
            let mut is_max = true;
            'nb: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if (dr, dc) == (0, 0) || nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                        continue;
                    }
                    let w = image[(nr as usize, nc as usize)];
                    // On plateaus only the lexicographically first pixel counts.
                    let earlier = (nr, nc) < (r as i64, c as i64);
                    if w > v || (earlier && w == v) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                peaks.push((r, c));
            }
        }
    }
    peaks.sort_by(|&a, &b| image[b].total_cmp(&image[a]).then(a.cmp(&b)));
    peaks.truncate(count);
    peaks
}
