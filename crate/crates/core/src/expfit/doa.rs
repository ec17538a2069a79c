use std::f64::consts::TAU;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ExpModel, StackedDesignMatrix};
use crate::error::{Error, Result};

/// Receivers in the plane; columns are plane waves `exp(−ı θ_j·x_i)` with
/// `θ_j = (cos φ_j, sin φ_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaArray {
    pub receivers: Vec<[f64; 2]>,
    /// Number of components `n`.
    pub sources: usize,
}

/// Maps an angle into `[0, 2π)`.
pub fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl DoaArray {
    pub fn new(receivers: Vec<[f64; 2]>, sources: usize) -> Result<Self> {
        if receivers.is_empty() || sources == 0 {
            return Err(Error::InvalidParameter("DOA model needs m >= 1 receivers and n >= 1 components".into()));
        }
        Ok(Self { receivers, sources })
    }

    /// `m` receivers on the first axis at `spacing` apart, with `sources`
    /// components set later through [`with_sources`](Self::with_sources).
    pub fn line(m: usize, spacing: f64) -> Self {
        Self {
            receivers: (0..m).map(|i| [spacing * i as f64, 0.0]).collect(),
            sources: 0,
        }
    }

    pub fn with_sources(mut self, n: usize) -> Self {
        self.sources = n;
        self
    }

    pub fn m(&self) -> usize {
        self.receivers.len()
    }

    fn phase(&self, i: usize, phi: f64) -> (f64, f64) {
        let [x, y] = self.receivers[i];
        let (s, c) = phi.sin_cos();
        (c * x + s * y, -s * x + c * y)
    }

    /// Steering vector for direction `φ`: the model column `exp(−ı θ(φ)·x_i)`.
    pub fn steering(&self, phi: f64) -> DVector<Complex<f64>> {
        DVector::from_fn(self.m(), |i, _| {
            let (p, _) = self.phase(i, phi);
            Complex::new(p.cos(), -p.sin())
        })
    }
}

impl ExpModel for DoaArray {
    fn columns(&self) -> usize {
        self.sources
    }

    fn params_per_column(&self) -> usize {
        1
    }

    fn stacked_rows(&self) -> usize {
        2 * self.m()
    }

    /// Sizes the model to the angle vector, so one array serves any `n`.
    fn build(&self, theta: &DVector<f64>) -> StackedDesignMatrix {
        let (m, n) = (self.m(), theta.len());
        let mut matrix = DMatrix::zeros(2 * m, n);
        let mut partial = DMatrix::zeros(2 * m, n);
        for (j, &phi) in theta.iter().enumerate() {
            for i in 0..m {
                let (p, dp) = self.phase(i, phi);
                let (s, c) = p.sin_cos();
                matrix[(i, j)] = c;
                matrix[(m + i, j)] = -s;
                partial[(i, j)] = -s * dp;
                partial[(m + i, j)] = -c * dp;
            }
        }
        StackedDesignMatrix {
            matrix,
            partials: vec![partial],
            complex: true,
        }
    }

    fn param_len(&self) -> usize {
        self.sources
    }
}

/// MUSIC pseudo-spectrum over an angle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicResult {
    pub grid: Vec<f64>,
    pub spectrum: Vec<f64>,
    /// Noise-subspace basis, `m × r`.
    pub noise_basis: DMatrix<Complex<f64>>,
    /// Grid indices of local maxima, strongest first.
    pub peaks: Vec<usize>,
}

impl MusicResult {
    pub fn peak_angles(&self) -> Vec<f64> {
        self.peaks.iter().map(|&i| self.grid[i]).collect()
    }
}

/// MUSIC from stacked snapshots (`2m × N`, real rows over imaginary rows).
///
/// The noise subspace is spanned by the left singular vectors of the sample
/// covariance whose singular values fall below `noise_sigma²`.
pub fn music_spectrum(array: &DoaArray, snapshots: &DMatrix<f64>, grid: &[f64], noise_sigma: f64) -> Result<MusicResult> {
    let m = array.m();
    if snapshots.nrows() != 2 * m {
        return Err(Error::DimensionMismatch(format!(
            "snapshots have {} rows, array stacks {}",
            snapshots.nrows(),
            2 * m
        )));
    }
    if snapshots.ncols() == 0 || grid.is_empty() {
        return Err(Error::InvalidParameter("MUSIC needs at least one snapshot and a nonempty grid".into()));
    }
    let big_n = snapshots.ncols();
    let y = DMatrix::from_fn(m, big_n, |i, t| Complex::new(snapshots[(i, t)], snapshots[(m + i, t)]));
    let cov = (&y * y.adjoint()).unscale(big_n as f64);
    let svd = cov.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let threshold = noise_sigma * noise_sigma;
    let keep: Vec<usize> = (0..m).filter(|&i| svd.singular_values[i] < threshold).collect();
    if keep.is_empty() {
        return Err(Error::EmptyNoiseSubspace { threshold });
    }
    let noise_basis = u.select_columns(&keep);

    let spectrum: Vec<f64> = grid
        .iter()
        .map(|&phi| 1.0 / (noise_basis.adjoint() * array.steering(phi)).norm())
        .collect();
    let peaks = local_maxima(&spectrum);
    Ok(MusicResult {
        grid: grid.to_vec(),
        spectrum,
        noise_basis,
        peaks,
    })
}

/// Indices of strict local maxima (plateaus report their first point),
/// sorted by value, largest first.
fn local_maxima(v: &[f64]) -> Vec<usize> {
    let n = v.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || v[i] > v[i - 1];
            let right = i + 1 == n || v[i] >= v[i + 1];
            left && right && n > 1
        })
        .collect();
    peaks.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn receivers_at_origin_give_ones() {
        let array = DoaArray::new(vec![[0.0, 0.0]; 3], 2).unwrap();
        let d = array.build(&DVector::from_vec(vec![0.3, 2.0]));
        assert_eq!(d.matrix.rows(0, 3), DMatrix::from_element(3, 2, 1.0));
        assert_eq!(d.imag_block(), DMatrix::from_element(3, 2, -0.0));
    }

    #[test]
    fn single_receiver_entry() {
        let array = DoaArray::new(vec![[1.0, 0.0]], 1).unwrap();
        let d = array.build(&DVector::from_element(1, 0.0));
        assert_eq!(d.matrix[(0, 0)], 1f64.cos());
        assert_eq!(d.matrix[(1, 0)], -1f64.sin());
    }

    #[test]
    fn stacked_column_norms_are_moduli() {
        let array = DoaArray::line(5, PI).with_sources(3);
        let d = array.build(&DVector::from_vec(vec![0.1, 1.0, 4.0]));
        for j in 0..3 {
            assert!((d.matrix.column(j).norm_squared() - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn angle_partials_match_differences() {
        let array = DoaArray::new(vec![[0.0, 0.0], [1.3, -0.4], [2.0, 0.7], [-0.5, 3.1]], 3).unwrap();
        let theta = DVector::from_vec(vec![0.4, 2.2, 5.0]);
        let d = array.build(&theta);
        let h = 1e-6;
        for j in 0..3 {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let fd = (array.build(&tp).matrix.column(j) - array.build(&tm).matrix.column(j)) / (2.0 * h);
            assert!((fd - d.partials[0].column(j)).amax() <= 1e-7);
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(-0.5), TAU - 0.5);
        assert!((wrap_angle(7.0) - (7.0 - TAU)).abs() < 1e-15);
        assert_eq!(wrap_angle(-1e-300), 0.0);
    }

    #[test]
    fn music_single_noiseless_source() {
        let array = DoaArray::line(5, PI).with_sources(1);
        let truth = 1.1;
        let mut grid: Vec<f64> = (0..=100).map(|i| PI * i as f64 / 100.0).collect();
        grid.push(truth);
        grid.sort_by(f64::total_cmp);
        let col = array.build(&DVector::from_element(1, truth)).matrix;
        let snaps = DMatrix::from_fn(10, 1, |_, t| 1.0 + 0.1 * t as f64).transpose();
        let y = &col * snaps;
        let res = music_spectrum(&array, &y, &grid, 0.1).unwrap();
        assert_eq!(res.noise_basis.ncols(), 4);
        assert_eq!(res.peak_angles()[0], truth);
        assert!(res.spectrum.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn music_zero_snapshots_is_flat() {
        let array = DoaArray::line(5, PI).with_sources(1);
        let res = music_spectrum(&array, &DMatrix::zeros(10, 4), &[0.0, 1.0, 2.0], 0.1).unwrap();
        assert_eq!(res.noise_basis.ncols(), 5);
        for v in res.spectrum {
            assert!((v - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn music_empty_noise_subspace() {
        let array = DoaArray::line(2, PI).with_sources(1);
        let y = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let err = music_spectrum(&array, &y, &[0.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::EmptyNoiseSubspace { .. }));
    }

    #[test]
    fn local_maxima_order() {
        assert_eq!(local_maxima(&[0.0, 2.0, 1.0, 3.0, 0.5]), vec![3, 1]);
        assert_eq!(local_maxima(&[3.0, 1.0, 1.0, 2.0]), vec![0, 3]);
    }
}
