//! Configuration-driven runs of the impulse-lorenz experiments.

pub mod config;
pub mod experiments;
pub mod tables;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use config::{ExperimentConfig, SchemaError};
use tables::Results;

pub const VERSION: &str = concat!("impulse-lorenz ", env!("CARGO_PKG_VERSION"));

#[derive(Debug)]
pub enum RunError {
    /// Exit status 2.
    Schema(String),
    /// Exit status 1.
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Schema(_) => 2,
            RunError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Schema(m) => write!(f, "config error: {m}"),
            RunError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<SchemaError> for RunError {
    fn from(e: SchemaError) -> Self {
        RunError::Schema(e.0)
    }
}

impl From<impulse_lorenz::Error> for RunError {
    fn from(e: impulse_lorenz::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |e| RunError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    experiment: &'a str,
    config: &'a ExperimentConfig,
    files: Vec<String>,
}

pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed_override: Option<u64>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Schema(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(|e| RunError::Schema(format!("{}: {e}", path.display())))
}

/// Run the configured experiment and write its artifacts; returns the output directory.
pub fn run(config_path: &Path, opts: &RunOptions) -> Result<(PathBuf, Vec<String>), RunError> {
    let mut cfg = load_config(config_path)?;
    if let Some(s) = opts.seed_override {
        cfg.apply_seed_override(s);
    }
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.experiment.name()));
    let output = experiments::run_experiment(&cfg)?;
    fs::create_dir_all(&out).map_err(io_err(&out))?;

    let mut files = Vec::new();
    let mut write = |name: &str, bytes: &[u8]| -> Result<(), RunError> {
        let p = out.join(name);
        fs::write(&p, bytes).map_err(io_err(&p))?;
        files.push(name.to_string());
        Ok(())
    };
    write("config.resolved.toml", cfg.to_toml().as_bytes())?;
    write("VERSION", format!("{VERSION}\n").as_bytes())?;
    for t in &output.tables {
        write(&format!("{}.csv", t.name), t.to_csv().as_bytes())?;
    }
    for (name, bytes) in &output.files {
        write(name, bytes)?;
    }
    let results = Results {
        schema_version: config::SCHEMA_VERSION,
        experiment: cfg.experiment.name().into(),
        version: VERSION.into(),
        tables: output.tables,
    };
    write("results.json", results.to_json().as_bytes())?;
    let mut summary = format!("{VERSION}\nexperiment: {}\n", cfg.experiment.name());
    for line in &output.summary {
        summary.push_str(line);
        summary.push('\n');
    }
    write("summary.txt", summary.as_bytes())?;
    let manifest = Manifest { version: VERSION, experiment: cfg.experiment.name(), config: &cfg, files: files.clone() };
    let m = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::Runtime(e.to_string()))?;
    let p = out.join("manifest.json");
    fs::write(&p, m + "\n").map_err(io_err(&p))?;
    Ok((out, output.summary))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
    GnuplotData,
}

/// Re-render a finished run into `<run-dir>/report`; returns the written files.
pub fn report(run_dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, RunError> {
    let src = run_dir.join("results.json");
    let text =
        fs::read_to_string(&src).map_err(|e| RunError::Runtime(format!("no results in {}: {e}", run_dir.display())))?;
    let results = Results::from_json(&text).map_err(|e| RunError::Runtime(format!("{}: {e}", src.display())))?;
    let dir = run_dir.join("report");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut out = Vec::new();
    let mut emit = |name: String, body: String| -> Result<(), RunError> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io_err(&p))?;
        out.push(p);
        Ok(())
    };
    match format {
        ReportFormat::Json => emit("results.json".into(), results.to_json())?,
        ReportFormat::Csv => {
            for t in &results.tables {
                emit(format!("{}.csv", t.name), t.to_csv())?;
            }
        }
        ReportFormat::GnuplotData => {
            for t in &results.tables {
                emit(format!("{}.dat", t.name), t.to_gnuplot())?;
            }
        }
    }
    Ok(out)
}
