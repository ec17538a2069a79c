use nsvp::trimmed::{accuracy, classify, fit_trimmed_logistic, TrimmedConfig};
use nsvp::SolverOptions;
use serde::Serialize;
use serde_json::json;

use super::{map_seeds, mean_std, to_value, Outcome};
use crate::config::{at_least, nonnegative, positive, ExperimentConfig};
use crate::data::{generate_lr_data, LrSpec};
use crate::error::{config_error, Result};
use crate::report::csv_table;
use crate::rng::replicate_seed;

#[derive(Debug, Clone, Serialize)]
pub struct LrParams {
    pub data: LrSpec,
    /// Samples kept by the trimmed fit.
    pub k: usize,
    pub beta: f64,
    pub ridge: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub replicates: usize,
}

impl LrParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let base = if cfg.full_scale() { LrSpec::full() } else { LrSpec::desk() };
        let data = LrSpec {
            train: at_least("train", cfg.train.unwrap_or(base.train), 2)?,
            test: at_least("test", cfg.test.unwrap_or(base.test), 1)?,
            dim: at_least("dim", cfg.dim.unwrap_or(base.dim), 1)?,
            contamination: nonnegative("contamination", cfg.contamination.unwrap_or(base.contamination))?,
            ..base
        };
        let k = cfg.k.unwrap_or(data.train / 2);
        if k == 0 || k > data.train {
            return Err(config_error(format!("k must lie in [1, {}], got {k}", data.train)));
        }
        Ok(Self {
            k,
            beta: positive("beta", cfg.beta.unwrap_or(1.0))?,
            ridge: nonnegative("ridge", cfg.ridge.unwrap_or(1e-3))?,
            tol: positive("tol", cfg.tol.unwrap_or(1e-6))?,
            max_iters: at_least("max_iters", cfg.max_iters.unwrap_or(500), 1)?,
            replicates: at_least("replicates", cfg.replicates.unwrap_or(20), 1)?,
            data,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Replicate {
    pub replicate: usize,
    pub seed: u64,
    pub clean: f64,
    pub standard: f64,
    pub robust: f64,
    /// Mean trimmed weight on contaminated and on clean training rows.
    pub weight_contaminated: f64,
    pub weight_clean: f64,
    pub all_converged: bool,
}

fn replicate(p: &LrParams, seed: u64, index: usize) -> Result<Replicate> {
    let s = replicate_seed(seed, index as u64);
    let d = generate_lr_data(s, &p.data)?;
    let m = p.data.train;
    let opts = SolverOptions::default().with_grad_tol(p.tol).with_max_iters(p.max_iters);
    // k = m keeps every sample with weight one: plain logistic regression.
    let plain = TrimmedConfig {
        k: m,
        beta: p.beta,
        ridge: p.ridge,
    };
    let trimmed = TrimmedConfig { k: p.k, ..plain };
    let clean = fit_trimmed_logistic(&d.clean_x, &d.train_y, &plain, &opts)?;
    let standard = fit_trimmed_logistic(&d.train_x, &d.train_y, &plain, &opts)?;
    let robust = fit_trimmed_logistic(&d.train_x, &d.train_y, &trimmed, &opts)?;
    let test_acc = |theta| accuracy(&classify(theta, &d.test_x), &d.test_y);

    let mut is_bad = vec![false; m];
    for &i in &d.contaminated {
        is_bad[i] = true;
    }
    let mean_weight = |bad: bool| {
        let w: Vec<f64> = (0..m).filter(|&i| is_bad[i] == bad).map(|i| robust.weights[i]).collect();
        if w.is_empty() {
            f64::NAN
        } else {
            w.iter().sum::<f64>() / w.len() as f64
        }
    };
    Ok(Replicate {
        replicate: index,
        seed: s,
        clean: test_acc(&clean.theta),
        standard: test_acc(&standard.theta),
        robust: test_acc(&robust.theta),
        weight_contaminated: mean_weight(true),
        weight_clean: mean_weight(false),
        all_converged: [&clean, &standard, &robust].iter().all(|f| f.minimum.trace.converged()),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub scenario: &'static str,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Test accuracy of plain logistic regression on clean and contaminated
/// training data and of the trimmed fit on contaminated data.
pub(crate) fn run_trimmed_lr(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = LrParams::from_config(cfg)?;
    let seed = cfg.seed();
    let reps = map_seeds(p.replicates, |i| replicate(&p, seed, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let scenario = |name, f: fn(&Replicate) -> f64| {
        let (mean, std) = mean_std(&reps.iter().map(f).collect::<Vec<_>>());
        Scenario {
            scenario: name,
            mean_accuracy: mean,
            std_accuracy: std,
        }
    };
    let table = vec![
        scenario("no contamination", |r| r.clean),
        scenario("contaminated, standard", |r| r.standard),
        scenario("contaminated, robust", |r| r.robust),
    ];
    let converged = reps.iter().all(|r| r.all_converged);
    let mut warnings = Vec::new();
    if !converged {
        let n = reps.iter().filter(|r| !r.all_converged).count();
        warnings.push(format!("{n} replicates had a fit stop before tolerance"));
    }

    let rows = reps.iter().map(|r| {
        vec![
            r.replicate as f64,
            r.clean,
            r.standard,
            r.robust,
            r.weight_contaminated,
            r.weight_clean,
        ]
    });
    let csv = csv_table(
        &["replicate", "clean", "standard", "robust", "weight_contaminated", "weight_clean"],
        rows,
    )?;
    Ok(Outcome {
        params: to_value(&p),
        truth: json!({
            "labels": "sign of a random unit direction applied to standard normal features",
            "contaminated_rows_per_replicate": (p.data.contamination * p.data.train as f64).round(),
        }),
        metrics: json!({ "table": to_value(&table), "replicates": to_value(&reps) }),
        files: vec![("replicates.csv".to_string(), csv)],
        converged,
        warnings,
    })
}
