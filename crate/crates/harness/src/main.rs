use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nsvp_harness::{run, ExperimentConfig, ExperimentKind, HarnessError};

/// Run one experiment and write report.json, timing.json and CSV plot data.
#[derive(Debug, Parser)]
#[command(name = "nsvp", version)]
struct Cli {
    experiment: ExperimentKind,
    /// Flat JSON object of overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Paper-scale problem sizes where they differ from the defaults.
    #[arg(long)]
    full_scale: bool,
}

fn execute(cli: Cli) -> Result<bool, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(kind) = cfg.experiment {
        if kind != cli.experiment {
            return Err(HarnessError::Config(format!(
                "config names experiment {kind} but {} was requested",
                cli.experiment
            )));
        }
    }
    cfg.experiment = Some(cli.experiment);
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.full_scale {
        cfg.full_scale = Some(true);
    }
    let out = cli
        .out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cli.experiment.name()));

    let output = run(&cfg)?;
    output.write(&out)?;
    for w in &output.report.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", serde_json::to_string_pretty(&output.report.metrics)?);
    eprintln!("wrote {} ({:.2} s)", out.display(), output.wall_seconds);
    Ok(output.report.converged)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("solver did not converge; see report.json");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
