//! Seeded synthetic data for the experiments.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use nsvp::expfit::{pick_peaks, render_blobs, BlobGrid, DoaArray, ExpModel};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use crate::error::{config_error, Result};
use crate::rng;

/// Planted DOA scene. Receivers sit on the first axis, `π` apart (half a
/// wavelength for unit wavenumber), so directions in `[0, π]` are
/// unambiguous.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoaSpec {
    pub receivers: usize,
    pub snapshots: usize,
    pub angles: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Complex noise standard deviation: `E|ε_i|² = σ²`.
    pub noise: f64,
}

impl Default for DoaSpec {
    fn default() -> Self {
        Self {
            receivers: 5,
            snapshots: 10,
            angles: vec![0.9, 1.6, 2.3],
            amplitudes: vec![1.0, 0.8, 0.3],
            noise: 0.05,
        }
    }
}

/// SNR band (dB) documented for the default scene.
pub const DOA_SNR_BAND: (f64, f64) = (25.0, 32.0);

#[derive(Debug, Clone)]
pub struct DoaData {
    pub array: DoaArray,
    /// Source amplitudes per snapshot, `sources × N`. Each is the nominal
    /// amplitude times a factor drawn uniformly from `[0.5, 1.5]`.
    pub source_amps: DMatrix<f64>,
    pub clean: DMatrix<f64>,
    /// Stacked `[Re; Im]` snapshots, `2m × N`.
    pub data: DMatrix<f64>,
    pub snr_db: f64,
}

pub fn doa_array(receivers: usize) -> DoaArray {
    DoaArray::line(receivers, PI)
}

pub fn generate_doa_data(seed: u64, spec: &DoaSpec) -> Result<DoaData> {
    if spec.receivers == 0 || spec.snapshots == 0 || spec.angles.is_empty() {
        return Err(config_error("DOA scene needs receivers, snapshots and at least one source"));
    }
    if spec.angles.len() != spec.amplitudes.len() {
        return Err(config_error("DOA scene needs one amplitude per source angle"));
    }
    let mut r = rng::stream(seed, 1);
    let array = doa_array(spec.receivers).with_sources(spec.angles.len());
    let design = array.build(&DVector::from_column_slice(&spec.angles)).matrix;
    let source_amps = DMatrix::from_fn(spec.angles.len(), spec.snapshots, |s, _| {
        spec.amplitudes[s] * r.random_range(0.5..1.5)
    });
    let clean = &design * &source_amps;
    let component = spec.noise / 2f64.sqrt();
    let noise = DMatrix::from_fn(clean.nrows(), clean.ncols(), |_, _| {
        let g: f64 = StandardNormal.sample(&mut r);
        component * g
    });
    let snr_db = 10.0 * (clean.norm_squared() / noise.norm_squared()).log10();
    Ok(DoaData {
        data: &clean + &noise,
        array,
        source_amps,
        clean,
        snr_db,
    })
}

/// Evenly spaced angles on `[0, π]`.
pub fn angle_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![PI / 2.0];
    }
    (0..n).map(|i| PI * i as f64 / (n - 1) as f64).collect()
}

/// Random initial angles, uniform on `[0, π]`.
pub fn random_angles(seed: u64, n: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, 2);
    (0..n).map(|_| r.random_range(0.0..PI)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlobSpec {
    pub size: usize,
    pub blobs: usize,
    pub noise: f64,
    pub peaks: usize,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            size: 32,
            blobs: 4,
            noise: 0.05,
            peaks: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlobTruth {
    pub centers: Vec<[f64; 2]>,
    pub scales: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BlobData {
    pub grid: BlobGrid,
    pub truth: BlobTruth,
    pub clean: DMatrix<f64>,
    pub image: DMatrix<f64>,
    /// Local maxima of the noisy image used as initial centers.
    pub peaks: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

/// Blob centers are kept 4 pixels from the border and 6 pixels apart;
/// scales are uniform on `[0.25, 0.4]` and amplitudes on `[1, 2]`.
pub fn generate_blob_image(seed: u64, spec: &BlobSpec) -> Result<BlobData> {
    if spec.size < 12 || spec.blobs == 0 {
        return Err(config_error("blob image needs size >= 12 and at least one blob"));
    }
    let mut r = rng::stream(seed, 3);
    let hi = (spec.size - 5) as f64;
    let mut centers: Vec<[f64; 2]> = Vec::new();
    let mut attempts = 0;
    while centers.len() < spec.blobs {
        attempts += 1;
        if attempts > 10_000 {
            return Err(config_error(format!("cannot place {} separated blobs on a {0}x{0} grid", spec.size)));
        }
        let c = [r.random_range(4.0..hi), r.random_range(4.0..hi)];
        if centers.iter().all(|o| (o[0] - c[0]).hypot(o[1] - c[1]) >= 6.0) {
            centers.push(c);
        }
    }
    let scales: Vec<f64> = (0..spec.blobs).map(|_| r.random_range(0.25..0.4)).collect();
    let amplitudes: Vec<f64> = (0..spec.blobs).map(|_| r.random_range(1.0..2.0)).collect();
    let grid = BlobGrid::new(spec.size, spec.size, spec.blobs)?;
    let clean = render_blobs(&grid, &centers, &scales, &amplitudes);
    let normal = Normal::new(0.0, spec.noise).map_err(|e| config_error(format!("noise level: {e}")))?;
    let image = clean.map(|v| v + normal.sample(&mut r));

    let mut warnings = Vec::new();
    let peaks = pick_peaks(&image, spec.peaks);
    if peaks.len() < spec.peaks {
        warnings.push(format!(
            "image has only {} local maxima; using {} initial peaks instead of {}",
            peaks.len(),
            peaks.len(),
            spec.peaks
        ));
    }
    Ok(BlobData {
        grid: grid.with_blobs(peaks.len()),
        truth: BlobTruth {
            centers,
            scales,
            amplitudes,
        },
        clean,
        image,
        peaks,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LrSpec {
    pub train: usize,
    pub test: usize,
    pub dim: usize,
    pub contamination: f64,
    /// Entry scale of contaminated features relative to clean ones.
    pub scale: f64,
}

impl LrSpec {
    pub fn desk() -> Self {
        Self {
            train: 500,
            test: 500,
            dim: 50,
            contamination: 0.1,
            scale: 10.0,
        }
    }

    pub fn full() -> Self {
        Self {
            train: 2000,
            test: 1000,
            dim: 200,
            ..Self::desk()
        }
    }
}

/// Features are standard normal and labels are `sign(w*ᵀx)` for a random
/// unit direction `w*`. Contaminated training rows get their features
/// replaced by normal noise `scale` times larger; their labels are kept.
#[derive(Debug, Clone)]
pub struct LrData {
    pub train_x: DMatrix<f64>,
    pub train_y: DVector<f64>,
    /// Training features before contamination.
    pub clean_x: DMatrix<f64>,
    pub test_x: DMatrix<f64>,
    pub test_y: DVector<f64>,
    /// Sorted indices of contaminated training rows.
    pub contaminated: Vec<usize>,
    pub direction: DVector<f64>,
}

pub fn generate_lr_data(seed: u64, spec: &LrSpec) -> Result<LrData> {
    if spec.train == 0 || spec.test == 0 || spec.dim == 0 {
        return Err(config_error("logistic data needs positive train, test and dim"));
    }
    if !(0.0..=1.0).contains(&spec.contamination) {
        return Err(config_error(format!("contamination must lie in [0, 1], got {}", spec.contamination)));
    }
    let mut r = rng::stream(seed, 4);
    let mut direction = DVector::from_fn(spec.dim, |_, _| StandardNormal.sample(&mut r));
    direction.normalize_mut();
    let features = |rows: usize, r: &mut rng::Rng| DMatrix::from_fn(rows, spec.dim, |_, _| StandardNormal.sample(r));
    let clean_x: DMatrix<f64> = features(spec.train, &mut r);
    let test_x: DMatrix<f64> = features(spec.test, &mut r);
    let label = |x: &DMatrix<f64>| {
        let s = x * &direction;
        s.map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
    };
    let train_y = label(&clean_x);
    let test_y = label(&test_x);

    let count = (spec.contamination * spec.train as f64).round() as usize;
    let mut contaminated = sample(&mut r, spec.train, count).into_vec();
    contaminated.sort_unstable();
    let mut train_x = clean_x.clone();
    for &i in &contaminated {
        for j in 0..spec.dim {
            let g: f64 = StandardNormal.sample(&mut r);
            train_x[(i, j)] = spec.scale * g;
        }
    }
    Ok(LrData {
        train_x,
        train_y,
        clean_x,
        test_x,
        test_y,
        contaminated,
        direction,
    })
}

/// Points uniform on `[−2, 2]²` labeled `+1` where `x³ − x + 1 ≥ y²`, the
/// region bounded by the elliptic curve `y² = x³ − x + 1`.
pub fn elliptic_curve_data(seed: u64, stream: u64, count: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut r = rng::stream(seed, 10 + stream);
    let x = DMatrix::from_fn(count, 2, |_, _| r.random_range(-2.0..2.0));
    let y = DVector::from_fn(count, |i, _| {
        let (u, v) = (x[(i, 0)], x[(i, 1)]);
        if u * u * u - u + 1.0 >= v * v {
            1.0
        } else {
            -1.0
        }
    });
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_doa_is_in_model_range() {
        let spec = DoaSpec {
            noise: 0.0,
            ..Default::default()
        };
        let d = generate_doa_data(1, &spec).unwrap();
        assert_eq!(d.data, d.clean);
        let design = d.array.build(&DVector::from_column_slice(&spec.angles)).matrix;
        assert!((&design * &d.source_amps - &d.data).amax() == 0.0);
    }

    #[test]
    fn grid_endpoints() {
        let g = angle_grid(101);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[100], PI);
        assert!((g[50] - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_blob_image_is_clean_render() {
        let spec = BlobSpec {
            noise: 0.0,
            ..Default::default()
        };
        let d = generate_blob_image(3, &spec).unwrap();
        assert_eq!(d.image, d.clean);
    }

    #[test]
    fn small_grid_reduces_peak_count() {
        let spec = BlobSpec {
            size: 12,
            blobs: 1,
            noise: 0.0,
            peaks: 50,
        };
        let d = generate_blob_image(0, &spec).unwrap();
        assert!(d.peaks.len() < 50);
        assert_eq!(d.grid.blobs, d.peaks.len());
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn uncontaminated_lr_is_clean() {
        let spec = LrSpec {
            contamination: 0.0,
            ..LrSpec::desk()
        };
        let d = generate_lr_data(2, &spec).unwrap();
        assert!(d.contaminated.is_empty());
        assert_eq!(d.train_x, d.clean_x);
    }

    #[test]
    fn elliptic_labels_follow_curve() {
        let (x, y) = elliptic_curve_data(0, 0, 200);
        for i in 0..200 {
            let (u, v) = (x[(i, 0)], x[(i, 1)]);
            assert_eq!(y[i] > 0.0, u.powi(3) - u + 1.0 >= v * v);
        }
        assert!(y.iter().any(|&l| l > 0.0) && y.iter().any(|&l| l < 0.0));
    }
}
