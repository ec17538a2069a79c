//! Experiment runners. Each returns a [`RunOutput`] without touching the
//! filesystem; the caller decides where to write it.

mod deconv;
mod doa;
mod fig1;
mod lr;
mod mkl;
mod pde;

use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{config_error, Result};
use crate::report::{RngInfo, RunOutput, RunReport, SCHEMA_VERSION};

pub(crate) use deconv::run_deconv;
pub(crate) use doa::{run_doa, run_doa_restarts};
pub(crate) use fig1::run_fig1;
pub(crate) use lr::run_trimmed_lr;
pub(crate) use mkl::{run_mkl, run_mkl_bank};
pub(crate) use pde::run_pde;

/// What an experiment produces before it is wrapped into a report.
pub(crate) struct Outcome {
    pub params: Value,
    pub truth: Value,
    pub metrics: Value,
    pub files: Vec<(String, String)>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

pub(crate) fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("experiment records serialize")
}

/// Runs the configured experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let kind = config
        .experiment
        .ok_or_else(|| config_error("no experiment selected"))?;
    let seed = config.seed();
    let start = Instant::now();
    let outcome = match kind {
        ExperimentKind::Doa => run_doa(config)?,
        ExperimentKind::DoaRestarts => run_doa_restarts(config)?,
        ExperimentKind::Deconv => run_deconv(config)?,
        ExperimentKind::TrimmedLr => run_trimmed_lr(config)?,
        ExperimentKind::Mkl => run_mkl(config)?,
        ExperimentKind::MklBank => run_mkl_bank(config)?,
        ExperimentKind::Pde => run_pde(config)?,
        ExperimentKind::Fig1 => run_fig1(config)?,
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    let mut echo = config.clone();
    echo.out = None;
    let report = RunReport {
        schema: SCHEMA_VERSION,
        experiment: kind,
        seed,
        rng: RngInfo::pinned(),
        config: echo,
        params: outcome.params,
        truth: outcome.truth,
        metrics: outcome.metrics,
        files: outcome.files.iter().map(|(n, _)| n.clone()).collect(),
        converged: outcome.converged,
        warnings: outcome.warnings,
    };
    Ok(RunOutput {
        report,
        files: outcome.files,
        wall_seconds,
    })
}

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
pub(crate) fn map_seeds<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_spread() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn missing_experiment_is_a_config_error() {
        let err = run(&ExperimentConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
