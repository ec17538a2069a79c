use nalgebra::{DMatrix, DVector};
use nsvp::expfit::{BlobGrid, ExpModel, FitSettings, JointExpFit, ReducedExpFit};
use nsvp::solve::L1Norm;
use nsvp::{lbfgs_minimize, prox_gradient_minimize, RunTrace, SolverOptions};
use serde::Serialize;
use serde_json::json;

use super::{to_value, Outcome};
use crate::config::{at_least, nonnegative, positive, ExperimentConfig};
use crate::data::{generate_blob_image, BlobData, BlobSpec};
use crate::error::Result;
use crate::report::csv_table;

/// A fitted blob within this many pixels of a true center is not superfluous.
pub const CENTER_MATCH: f64 = 1.5;

#[derive(Debug, Clone, Serialize)]
pub struct DeconvParams {
    pub image: BlobSpec,
    pub lambda: f64,
    pub initial_scale: f64,
    pub tol: f64,
    /// Iteration budget shared by both methods.
    pub max_iters: usize,
    pub inner_tol: f64,
}

impl DeconvParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let d = BlobSpec::default();
        Ok(Self {
            image: BlobSpec {
                size: at_least("image_size", cfg.image_size.unwrap_or(d.size), 12)?,
                noise: nonnegative("noise", cfg.noise.unwrap_or(d.noise))?,
                peaks: at_least("peaks", cfg.peaks.unwrap_or(d.peaks), 1)?,
                ..d
            },
            lambda: nonnegative("lambda", cfg.lambda.unwrap_or(2.0))?,
            initial_scale: 0.3,
            tol: positive("tol", cfg.tol.unwrap_or(1e-6))?,
            max_iters: at_least("max_iters", cfg.max_iters.unwrap_or(300), 1)?,
            inner_tol: positive("inner_tol", cfg.inner_tol.unwrap_or(1e-10))?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlobFit {
    pub status: nsvp::Status,
    pub iterations: usize,
    pub final_optimality: f64,
    /// `‖Φa − y‖² + λ‖a‖₁`.
    pub objective: f64,
    /// `‖Φa − y‖²`.
    pub misfit: f64,
    pub active: usize,
    /// Largest amplitude among fitted blobs away from every true center.
    pub max_superfluous_amplitude: f64,
    /// Per true blob, distance to the nearest fitted blob with amplitude above 1e-3.
    pub center_errors: Vec<f64>,
}

fn describe(data: &BlobData, theta: &DVector<f64>, amps: &DVector<f64>, lambda: f64, trace: &RunTrace) -> BlobFit {
    let grid = &data.grid;
    let n = grid.blobs;
    let residual = grid.build(theta).matrix * amps - DVector::from_column_slice(data.image.as_slice());
    let misfit = residual.norm_squared();
    let mut superfluous: f64 = 0.0;
    let mut active = Vec::new();
    for j in 0..n {
        let c = [theta[j], theta[n + j]];
        let near = data
            .truth
            .centers
            .iter()
            .any(|t| (t[0] - c[0]).hypot(t[1] - c[1]) <= CENTER_MATCH);
        if !near {
            superfluous = superfluous.max(amps[j].abs());
        }
        if amps[j].abs() > 1e-3 {
            active.push(c);
        }
    }
    let center_errors = data
        .truth
        .centers
        .iter()
        .map(|t| active.iter().map(|c| (t[0] - c[0]).hypot(t[1] - c[1])).fold(f64::INFINITY, f64::min))
        .collect();
    BlobFit {
        status: trace.status,
        iterations: trace.iterations(),
        final_optimality: trace.final_optimality(),
        objective: misfit + lambda * amps.iter().map(|a| a.abs()).sum::<f64>(),
        misfit,
        active: active.len(),
        max_superfluous_amplitude: superfluous,
        center_errors,
    }
}

fn blob_csv(theta: &DVector<f64>, amps: &DVector<f64>) -> Result<String> {
    let n = amps.len();
    let rows = (0..n).map(|j| vec![theta[j], theta[n + j], theta[2 * n + j], amps[j]]);
    csv_table(&["row", "col", "scale", "amplitude"], rows)
}

fn image_csv(image: &DMatrix<f64>) -> Result<String> {
    let rows = (0..image.ncols()).flat_map(|c| (0..image.nrows()).map(move |r| vec![r as f64, c as f64, image[(r, c)]]));
    csv_table(&["row", "col", "value"], rows)
}

pub(crate) fn run_deconv(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = DeconvParams::from_config(cfg)?;
    let data = generate_blob_image(cfg.seed(), &p.image)?;
    let n = data.peaks.len();
    let centers: Vec<[f64; 2]> = data.peaks.iter().map(|&(r, c)| [r as f64, c as f64]).collect();
    let theta0 = BlobGrid::pack(&centers, &vec![p.initial_scale; n]);
    let y = DMatrix::from_column_slice(data.grid.pixels(), 1, data.image.as_slice());
    let opts = SolverOptions::default()
        .with_grad_tol(p.tol)
        .with_max_iters(p.max_iters);

    let settings = FitSettings {
        lambda: p.lambda,
        nonneg: true,
        inner_tol: p.inner_tol,
        ..FitSettings::default()
    };
    let reduced_obj = ReducedExpFit::new(data.grid.clone(), y.clone(), settings)?.with_warm_start(true);
    let reduced = lbfgs_minimize(&reduced_obj, &theta0, &opts)?;
    let reduced_amps = reduced.inner.clone();

    let joint_obj = JointExpFit::new(data.grid.clone(), y, 0.0)?;
    let z0 = joint_obj.pack(&theta0, &DMatrix::zeros(n, 1));
    let prox = L1Norm {
        lambda: p.lambda,
        nonneg: true,
        start: joint_obj.theta_len(),
    };
    let joint = prox_gradient_minimize(&joint_obj, &prox, &z0, &opts)?;
    let (joint_theta, joint_amps) = joint_obj.unpack(&joint.x);
    let joint_amps = joint_amps.column(0).into_owned();

    let reduced_fit = describe(&data, &reduced.x, &reduced_amps, p.lambda, &reduced.trace);
    let joint_fit = describe(&data, &joint_theta, &joint_amps, p.lambda, &joint.trace);

    let files = vec![
        ("trace_reduced.csv".to_string(), reduced.trace.to_csv()),
        ("trace_joint.csv".to_string(), joint.trace.to_csv()),
        ("image_clean.csv".to_string(), image_csv(&data.clean)?),
        ("image_noisy.csv".to_string(), image_csv(&data.image)?),
        ("image_reduced.csv".to_string(), image_csv(&data.grid.render(&reduced.x, &reduced_amps))?),
        ("image_joint.csv".to_string(), image_csv(&data.grid.render(&joint_theta, &joint_amps))?),
        ("blobs_initial.csv".to_string(), blob_csv(&theta0, &DVector::zeros(n))?),
        ("blobs_reduced.csv".to_string(), blob_csv(&reduced.x, &reduced_amps)?),
        ("blobs_joint.csv".to_string(), blob_csv(&joint_theta, &joint_amps)?),
    ];
    Ok(Outcome {
        params: to_value(&p),
        truth: json!({ "blobs": to_value(&data.truth), "initial_peaks": data.peaks }),
        metrics: json!({
            "reduced": to_value(&reduced_fit),
            "joint": to_value(&joint_fit),
            "inner_failures": reduced_obj.inner_failures(),
        }),
        files,
        converged: reduced.trace.status != nsvp::Status::LineSearchFailure,
        warnings: data.warnings,
    })
}
