use nalgebra::{DMatrix, DVector};
use nsvp::expfit::{music_spectrum, DoaArray, ExpModel, FitSettings, JointExpFit, ReducedExpFit};
use nsvp::solve::L1Norm;
use nsvp::{lbfgs_minimize, prox_gradient_minimize, Minimum, SolverOptions};
use serde::Serialize;
use serde_json::json;

use super::{map_seeds, median, to_value, Outcome};
use crate::config::{at_least, nonnegative, positive, ExperimentConfig};
use crate::data::{angle_grid, generate_doa_data, random_angles, DoaData, DoaSpec};
use crate::error::Result;
use crate::report::csv_table;
use crate::rng::replicate_seed;

/// Angle tolerance for matching a recovered direction to a planted one.
pub const ANGLE_MATCH: f64 = 0.02;
/// Amplitudes at or below this are treated as zero.
pub const ACTIVE_AMPLITUDE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct DoaParams {
    pub scene: DoaSpec,
    pub grid: usize,
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub inner_tol: f64,
    pub restarts: usize,
}

impl DoaParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let defaults = DoaSpec::default();
        let scene = DoaSpec {
            receivers: at_least("receivers", cfg.receivers.unwrap_or(defaults.receivers), 1)?,
            snapshots: at_least("snapshots", cfg.snapshots.unwrap_or(defaults.snapshots), 1)?,
            noise: nonnegative("noise", cfg.noise.unwrap_or(defaults.noise))?,
            ..defaults
        };
        Ok(Self {
            scene,
            grid: at_least("grid", cfg.grid.unwrap_or(101), 1)?,
            lambda: nonnegative("lambda", cfg.lambda.unwrap_or(1.0))?,
            tol: positive("tol", cfg.tol.unwrap_or(1e-6))?,
            max_iters: at_least("max_iters", cfg.max_iters.unwrap_or(1000), 1)?,
            inner_tol: positive("inner_tol", cfg.inner_tol.unwrap_or(1e-10))?,
            restarts: at_least("restarts", cfg.restarts.unwrap_or(100), 1)?,
        })
    }

    fn settings(&self) -> FitSettings {
        FitSettings {
            lambda: self.lambda,
            inner_tol: self.inner_tol,
            ..FitSettings::default()
        }
    }

    fn options(&self) -> SolverOptions {
        SolverOptions::default()
            .with_grad_tol(self.tol)
            .with_max_iters(self.max_iters)
    }
}

/// Angle in `[0, π]` seen by a line array: `φ` and `−φ` are indistinguishable.
pub fn canonical_angle(phi: f64) -> f64 {
    phi.cos().clamp(-1.0, 1.0).acos()
}

/// Active components closer than this are merged into one direction. It is
/// a small fraction of the array's angular resolution (about `2/m` rad).
pub const MERGE_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct Direction {
    /// Amplitude-weighted mean angle of the merged components.
    pub angle: f64,
    /// Mean over snapshots of the merged amplitude.
    pub amplitude: f64,
    pub components: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Recovery {
    pub directions: Vec<Direction>,
    pub active_components: usize,
    /// Per planted direction, distance to the nearest recovered direction.
    pub angle_errors: Vec<f64>,
    /// Largest merged amplitude on directions away from every planted one.
    pub max_spurious_amplitude: f64,
    pub recovered_all: bool,
}

/// Groups active components by angle, merging neighbors within
/// [`MERGE_RADIUS`], and matches the groups to the planted directions.
pub fn analyze_recovery(theta: &DVector<f64>, amps: &DMatrix<f64>, truth: &[f64]) -> Recovery {
    let mut active: Vec<(f64, usize)> = (0..theta.len())
        .filter(|&j| amps.row(j).amax() > ACTIVE_AMPLITUDE)
        .map(|j| (canonical_angle(theta[j]), j))
        .collect();
    active.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut groups: Vec<Vec<(f64, usize)>> = Vec::new();
    for c in &active {
        match groups.last_mut() {
            Some(g) if c.0 - g.last().unwrap().0 <= MERGE_RADIUS => g.push(*c),
            _ => groups.push(vec![*c]),
        }
    }

    let mut directions = Vec::new();
    let mut spurious: f64 = 0.0;
    for g in &groups {
        let mut merged = DVector::zeros(amps.ncols());
        let (mut weighted, mut weight) = (0.0, 0.0);
        for &(phi, j) in g {
            merged += amps.row(j).transpose();
            let w = amps.row(j).amax();
            weighted += w * phi;
            weight += w;
        }
        let angle = weighted / weight;
        if !truth.iter().any(|t| (angle - t).abs() <= ANGLE_MATCH) {
            spurious = spurious.max(merged.amax());
        }
        directions.push(Direction {
            angle,
            amplitude: merged.mean(),
            components: g.len(),
        });
    }
    let angle_errors: Vec<f64> = truth
        .iter()
        .map(|t| directions.iter().map(|d| (d.angle - t).abs()).fold(f64::INFINITY, f64::min))
        .collect();
    Recovery {
        recovered_all: angle_errors.iter().all(|&e| e <= ANGLE_MATCH),
        active_components: active.len(),
        directions,
        angle_errors,
        max_spurious_amplitude: spurious,
    }
}

pub(crate) fn solve_reduced(data: &DoaData, theta0: &DVector<f64>, p: &DoaParams) -> Result<(Minimum, DMatrix<f64>)> {
    let model = data.array.clone().with_sources(theta0.len());
    let obj = ReducedExpFit::new(model, data.data.clone(), p.settings())?.with_warm_start(true);
    let min = lbfgs_minimize(&obj, theta0, &p.options())?;
    let amps = DMatrix::from_column_slice(theta0.len(), data.data.ncols(), min.inner.as_slice());
    Ok((min, amps))
}

pub(crate) fn solve_joint(data: &DoaData, theta0: &DVector<f64>, p: &DoaParams) -> Result<(Minimum, DVector<f64>, DMatrix<f64>)> {
    let model = data.array.clone().with_sources(theta0.len());
    let obj = JointExpFit::new(model, data.data.clone(), 0.0)?;
    let z0 = obj.pack(theta0, &DMatrix::zeros(theta0.len(), data.data.ncols()));
    let prox = L1Norm {
        lambda: p.lambda,
        nonneg: false,
        start: obj.theta_len(),
    };
    let min = prox_gradient_minimize(&obj, &prox, &z0, &p.options())?;
    let (theta, amps) = obj.unpack(&min.x);
    Ok((min, theta, amps))
}

fn truth_value(data: &DoaData, p: &DoaParams) -> serde_json::Value {
    json!({
        "angles": p.scene.angles,
        "amplitudes": p.scene.amplitudes,
        "receivers": data.array.receivers,
        "snr_db": data.snr_db,
    })
}

fn fit_csv(array: &DoaArray, theta: &DVector<f64>, amps: &DMatrix<f64>, data: &DMatrix<f64>) -> Result<String> {
    let fitted = array.clone().with_sources(theta.len()).build(theta).matrix * amps;
    let m = array.m();
    let rows = (0..data.ncols()).flat_map(|t| {
        let fitted = &fitted;
        (0..m).map(move |i| {
            vec![
                t as f64,
                i as f64,
                data[(i, t)],
                data[(m + i, t)],
                fitted[(i, t)],
                fitted[(m + i, t)],
            ]
        })
    });
    csv_table(&["snapshot", "receiver", "observed_re", "observed_im", "fitted_re", "fitted_im"], rows)
}

fn amplitude_csv(theta: &DVector<f64>, amps: &DMatrix<f64>) -> Result<String> {
    let rows = (0..theta.len()).map(|j| vec![canonical_angle(theta[j]), amps.row(j).mean(), amps.row(j).amax()]);
    csv_table(&["angle", "mean_amplitude", "max_abs_amplitude"], rows)
}

pub(crate) fn run_doa(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = DoaParams::from_config(cfg)?;
    let data = generate_doa_data(cfg.seed(), &p.scene)?;
    let theta0 = DVector::from_vec(angle_grid(p.grid));

    let (reduced, amps) = solve_reduced(&data, &theta0, &p)?;
    let (joint, joint_theta, joint_amps) = solve_joint(&data, &theta0, &p)?;
    let rec = analyze_recovery(&reduced.x, &amps, &p.scene.angles);
    let joint_rec = analyze_recovery(&joint_theta, &joint_amps, &p.scene.angles);

    let mut warnings = Vec::new();
    let fine = angle_grid(1801);
    let music = match music_spectrum(&data.array, &data.data, &fine, p.scene.noise) {
        Ok(m) => Some(m),
        Err(e) => {
            warnings.push(format!("MUSIC skipped: {e}"));
            None
        }
    };
    let mut files = vec![
        ("trace_reduced.csv".to_string(), reduced.trace.to_csv()),
        ("trace_joint.csv".to_string(), joint.trace.to_csv()),
        ("fit.csv".to_string(), fit_csv(&data.array, &reduced.x, &amps, &data.data)?),
        ("amplitudes_reduced.csv".to_string(), amplitude_csv(&reduced.x, &amps)?),
        ("amplitudes_joint.csv".to_string(), amplitude_csv(&joint_theta, &joint_amps)?),
    ];
    let music_metrics = music.as_ref().map(|m| {
        let top: Vec<f64> = m.peak_angles().into_iter().take(p.scene.angles.len()).collect();
        json!({ "noise_dimension": m.noise_basis.ncols(), "peak_angles": top })
    });
    if let Some(m) = &music {
        let rows = m.grid.iter().zip(&m.spectrum).map(|(&a, &s)| vec![a, s]);
        files.push(("music_spectrum.csv".to_string(), csv_table(&["angle", "spectrum"], rows)?));
    }

    let metrics = json!({
        "reduced": {
            "status": reduced.trace.status,
            "iterations": reduced.trace.iterations(),
            "final_optimality": reduced.trace.final_optimality(),
            "objective": reduced.value,
            "recovery": to_value(&rec),
        },
        "joint": {
            "status": joint.trace.status,
            "iterations": joint.trace.iterations(),
            "final_optimality": joint.trace.final_optimality(),
            "objective": joint.value,
            "recovery": to_value(&joint_rec),
        },
        "music": music_metrics,
    });
    Ok(Outcome {
        params: to_value(&p),
        truth: truth_value(&data, &p),
        metrics,
        files,
        converged: reduced.trace.converged(),
        warnings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RestartRecord {
    pub restart: usize,
    pub seed: u64,
    pub reduced_iterations: usize,
    pub reduced_optimality: f64,
    pub reduced_converged: bool,
    pub reduced_recovered: bool,
    pub joint_iterations: usize,
    pub joint_optimality: f64,
    pub joint_converged: bool,
    pub joint_recovered: bool,
}

fn restart(data: &DoaData, p: &DoaParams, seed: u64, index: usize) -> Result<RestartRecord> {
    let s = replicate_seed(seed, index as u64);
    let theta0 = DVector::from_vec(random_angles(s, p.grid));
    let (reduced, amps) = solve_reduced(data, &theta0, p)?;
    let (joint, jt, ja) = solve_joint(data, &theta0, p)?;
    Ok(RestartRecord {
        restart: index,
        seed: s,
        reduced_iterations: reduced.trace.iterations(),
        reduced_optimality: reduced.trace.final_optimality(),
        reduced_converged: reduced.trace.converged(),
        reduced_recovered: analyze_recovery(&reduced.x, &amps, &p.scene.angles).recovered_all,
        joint_iterations: joint.trace.iterations(),
        joint_optimality: joint.trace.final_optimality(),
        joint_converged: joint.trace.converged(),
        joint_recovered: analyze_recovery(&jt, &ja, &p.scene.angles).recovered_all,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RestartSummary {
    pub runs: usize,
    pub reduced_successes: usize,
    pub joint_successes: usize,
    pub reduced_median_iterations: f64,
    pub joint_median_iterations: f64,
    pub reduced_median_optimality: f64,
    pub joint_median_optimality: f64,
    pub reduced_recoveries: usize,
    pub joint_recoveries: usize,
}

impl RestartSummary {
    pub fn from_records(r: &[RestartRecord]) -> Self {
        let col = |f: &dyn Fn(&RestartRecord) -> f64| r.iter().map(f).collect::<Vec<_>>();
        Self {
            runs: r.len(),
            reduced_successes: r.iter().filter(|x| x.reduced_converged).count(),
            joint_successes: r.iter().filter(|x| x.joint_converged).count(),
            reduced_median_iterations: median(&col(&|x| x.reduced_iterations as f64)),
            joint_median_iterations: median(&col(&|x| x.joint_iterations as f64)),
            reduced_median_optimality: median(&col(&|x| x.reduced_optimality)),
            joint_median_optimality: median(&col(&|x| x.joint_optimality)),
            reduced_recoveries: r.iter().filter(|x| x.reduced_recovered).count(),
            joint_recoveries: r.iter().filter(|x| x.joint_recovered).count(),
        }
    }
}

/// Iteration counts and final optimality of both methods from random initial
/// angles. Restarts share one data set and differ only in the starting point.
pub(crate) fn run_doa_restarts(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = DoaParams::from_config(cfg)?;
    let seed = cfg.seed();
    let data = generate_doa_data(seed, &p.scene)?;
    let records = map_seeds(p.restarts, |i| restart(&data, &p, seed, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let summary = RestartSummary::from_records(&records);

    let rows = records.iter().map(|r| {
        vec![
            r.restart as f64,
            r.reduced_iterations as f64,
            r.reduced_optimality,
            f64::from(u8::from(r.reduced_converged)),
            r.joint_iterations as f64,
            r.joint_optimality,
            f64::from(u8::from(r.joint_converged)),
        ]
    });
    let csv = csv_table(
        &[
            "restart",
            "reduced_iterations",
            "reduced_optimality",
            "reduced_converged",
            "joint_iterations",
            "joint_optimality",
            "joint_converged",
        ],
        rows,
    )?;
    Ok(Outcome {
        params: to_value(&p),
        truth: truth_value(&data, &p),
        metrics: json!({ "summary": to_value(&summary), "runs": to_value(&records) }),
        files: vec![("restarts.csv".to_string(), csv)],
        converged: summary.reduced_successes > 0,
        warnings: Vec::new(),
    })
}
