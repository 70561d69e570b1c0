//! Experiment runner: config parsing, experiments and CSV/JSON output.

pub mod config;
pub mod experiments;
pub mod output;

use serde_json::json;
use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::Report;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Io(#[from] anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}

/// Exit status for a finished run: 0 when every row succeeded, 2 otherwise.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub failures: usize,
    pub headline: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures > 0 {
            2
        } else {
            0
        }
    }
}

/// Validates the config and runs its experiment.
pub fn execute(cfg: &ExperimentConfig) -> Result<(ExperimentConfig, Report), RunError> {
    let cfg = cfg.validate()?;
    let report = match cfg.kind()? {
        ExperimentKind::ScanFamily => experiments::scan_family(&cfg)?.report(),
        ExperimentKind::ScanDegeneration => experiments::scan_degeneration(&cfg)?.report(),
        ExperimentKind::DegenerateLocus => experiments::degenerate_locus(&cfg)?.report(),
        ExperimentKind::TangencyReport => experiments::tangency_report(&cfg)?.report(&cfg.grid_values()?),
        ExperimentKind::DimensionTable => experiments::dimension_table(&cfg)?.report(),
        ExperimentKind::LineTangencyCount => experiments::line_tangency_count(&cfg)?.report(),
    };
    Ok((cfg, report))
}

/// Runs the experiment and writes `<stem>.csv` and the `<stem>.json` sidecar
/// into `out` (default: the config's output dir, else the working directory).
pub fn run_config(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Outcome, RunError> {
    let (resolved, report) = execute(cfg)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| resolved.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let stem = resolved
        .output
        .stem
        .clone()
        .unwrap_or_else(|| report.kind.name().to_string());
    let csv = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let sidecar = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": report.kind.name(),
        "config": resolved,
        "columns": report.table.header,
        "failures": report.failures,
        "summary": report.summary,
    });
    output::write_atomic(&csv, &report.table.to_csv()?)?;
    let mut js = serde_json::to_vec_pretty(&sidecar).map_err(anyhow::Error::from)?;
    js.push(b'\n');
    output::write_atomic(&json_path, &js)?;
    Ok(Outcome {
        csv,
        json: json_path,
        failures: report.failures,
        headline: format!("{}: {}", report.kind.name(), report.headline),
    })
}

/// Loads a TOML config. A subcommand-supplied kind fills a missing `kind`
/// and must agree with a present one; `seed` overrides the config's.
pub fn load_config(path: &Path, kind: Option<ExperimentKind>, seed: Option<u64>) -> Result<ExperimentConfig, RunError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(k) = kind {
        match cfg.kind {
            Some(c) if c != k => {
                return Err(RunError::Config(format!(
                    "kind: config says {} but the subcommand is {}",
                    c.name(),
                    k.name()
                )))
            }
            _ => cfg.kind = Some(k),
        }
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Full command-line flow; returns the process exit code.
pub fn run(path: &Path, kind: Option<ExperimentKind>, out: Option<&Path>, seed: Option<u64>) -> i32 {
    match load_config(path, kind, seed).and_then(|c| run_config(&c, out)) {
        Ok(o) => {
            println!("{} -> {}", o.headline, o.csv.display());
            o.exit_code()
        }
        Err(e) => {
            eprintln!("henon-lab: {e}");
            e.exit_code()
        }
    }
}
