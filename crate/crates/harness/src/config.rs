//! Experiment configuration: a flat JSON object whose keys override the
//! defaults of the chosen experiment.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{config_error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Single DOA fit with MUSIC comparison.
    Doa,
    /// Reduced vs joint DOA over many initial guesses.
    DoaRestarts,
    /// Blind deconvolution of a blob image.
    Deconv,
    /// Clean, contaminated and trimmed logistic regression.
    TrimmedLr,
    /// Single-kernel MKL against the SVM dual.
    Mkl,
    /// Twelve-kernel MKL on the elliptic-curve data.
    MklBank,
    /// Adjoint and penalty gradients on the toy linear system.
    Pde,
    /// Naive and smoothed minimum of two quadratics.
    Fig1,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Doa => "doa",
            ExperimentKind::DoaRestarts => "doa-restarts",
            ExperimentKind::Deconv => "deconv",
            ExperimentKind::TrimmedLr => "trimmed-lr",
            ExperimentKind::Mkl => "mkl",
            ExperimentKind::MklBank => "mkl-bank",
            ExperimentKind::Pde => "pde",
            ExperimentKind::Fig1 => "fig1",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Overrides for one run. Every key is optional; unknown keys are rejected.
/// Keys an experiment does not use are ignored by it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_scale: Option<bool>,

    // problem sizes
    #[serde(skip_serializing_if = "Option::is_none")]
    pub receivers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peaks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contamination: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,

    // solver settings
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inner_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_error(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn full_scale(&self) -> bool {
        self.full_scale.unwrap_or(false)
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(config_error(format!("{name} must be positive, got {v}")))
    }
}

pub(crate) fn nonnegative(name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(config_error(format!("{name} must be nonnegative, got {v}")))
    }
}

pub(crate) fn at_least(name: &str, v: usize, min: usize) -> Result<usize> {
    if v >= min {
        Ok(v)
    } else {
        Err(config_error(format!("{name} must be at least {min}, got {v}")))
    }
}
