//! `casimir`: Casimir energies, sweeps, torques and eigenvalue scans from a
//! JSON run configuration or a built-in preset.

mod config;
mod error;
mod output;
mod presets;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use config::{load_config, Task};
use error::CliError;
use output::{output_paths, write_metadata, write_table, Metadata, ARTIFACT};
use presets::{Job, Preset};

#[derive(Debug, Parser)]
#[command(name = "casimir", version, about = "Casimir energies by the point-matching method")]
struct Args {
    /// JSON run configuration (a metadata sidecar also works).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the task named in the configuration.
    #[arg(long, value_enum)]
    task: Option<Task>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    verbose: bool,
}

fn jobs(args: &Args) -> Result<Vec<Job>, CliError> {
    if let Some(p) = args.preset {
        if args.task.is_some() {
            return Err(CliError::config("--task cannot be combined with --preset"));
        }
        return Ok(presets::jobs(p));
    }
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("either --config or --preset is required"))?;
    let mut config = load_config(path)?;
    if let Some(t) = args.task {
        config.task = t;
    }
    Ok(vec![Job {
        stem: config.task.name().to_string(),
        config,
        echo: None,
    }])
}

/// Runs one job and writes its table and sidecar. Returns the numerical
/// failure, if any, after the files are written.
fn run_job(job: &Job, out: &Path) -> Result<Option<CliError>, CliError> {
    let start = Instant::now();
    let report = run::execute(&job.config)?;
    let wall = start.elapsed().as_secs_f64();
    let (csv_path, json_path) = output_paths(out, &job.stem);
    write_table(&csv_path, &report.table)?;
    let scene = job.config.scene.as_ref();
    let meta = Metadata {
        artifact: ARTIFACT,
        version: env!("CARGO_PKG_VERSION"),
        task: job.config.task,
        table: format!("{}.csv", job.stem),
        preset: job.echo.as_ref(),
        truncation: scene.map(|s| s.truncation).or(job.config.eigen.as_ref().map(|e| e.truncation)),
        points: scene
            .map(|s| s.points_per_curve)
            .or(job.config.eigen.as_ref().map(|e| 2 * e.truncation + 1)),
        quadrature: job.config.quadrature,
        angular: job.config.angular,
        wall_time_seconds: wall,
        results: report.results,
        diagnostics: report.diagnostics,
        config: &job.config,
    };
    write_metadata(&json_path, &meta)?;
    log::info!("{}: {} rows in {wall:.2} s", job.stem, report.table.rows.len());
    Ok(report.failure)
}

fn main_inner(args: &Args) -> Result<(), CliError> {
    let jobs = jobs(args)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", args.out.display())))?;
    let mut failure = None;
    for job in &jobs {
        if let Some(f) = run_job(job, &args.out)? {
            failure.get_or_insert(f);
        }
    }
    failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::new()
        .filter_level(if args.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    if args.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global() {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    }
    match main_inner(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
