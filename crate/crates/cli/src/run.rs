use std::path::Path;

use casimir_core::energy::cos_fit_values;
use casimir_core::{
    eigen_scan_mfs, eigen_scan_pmm, energy, torque, BoundaryCondition, EigenMethod, EnergyResult, InnerKind,
    SceneConfig,
};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{RunConfig, Task};
use crate::error::{CliError, ErrorKind};
use crate::output::Table;

/// What a task produced. A numerical failure at some sweep points still
/// yields a table (those rows hold NaN) and is reported through `failure`.
#[derive(Debug)]
pub struct Report {
    pub table: Table,
    pub results: serde_json::Value,
    pub diagnostics: Vec<String>,
    pub failure: Option<CliError>,
}

impl Report {
    fn complete(table: Table, results: serde_json::Value) -> Self {
        Report {
            table,
            results,
            diagnostics: Vec::new(),
            failure: None,
        }
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Report, CliError> {
    match cfg.task {
        Task::Energy => run_energy(cfg),
        Task::Sweep => run_sweep(cfg),
        Task::Torque => run_torque(cfg),
        Task::Eigen => run_eigen(cfg),
        Task::Fit => run_fit(cfg),
    }
}

fn run_energy(cfg: &RunConfig) -> Result<Report, CliError> {
    let r = energy(cfg.scene()?, &cfg.quadrature, &cfg.angular)?;
    let mut table = Table::new(&["energy", "error"]);
    table.rows.push(vec![r.energy, r.error_estimate]);
    Ok(Report::complete(table, serde_json::to_value(&r)?))
}

fn run_torque(cfg: &RunConfig) -> Result<Report, CliError> {
    let t = cfg
        .torque
        .ok_or_else(|| CliError::config("task `torque` needs a `torque` section"))?;
    let r = torque(cfg.scene()?, t.phi0, t.delta, &cfg.quadrature, &cfg.angular)?;
    let mut table = Table::new(&["phi0", "torque", "error"]);
    table.rows.push(vec![t.phi0, r.torque, r.error_estimate]);
    Ok(Report::complete(table, serde_json::to_value(r)?))
}

fn run_eigen(cfg: &RunConfig) -> Result<Report, CliError> {
    let e = cfg
        .eigen
        .as_ref()
        .ok_or_else(|| CliError::config("task `eigen` needs an `eigen` section"))?;
    let range = (e.range[0], e.range[1]);
    let list = match e.method {
        EigenMethod::Pmm => eigen_scan_pmm(&e.curve, e.bc, range, e.truncation, &e.scan)?,
        EigenMethod::Mfs => {
            if e.bc != BoundaryCondition::Dirichlet {
                return Err(CliError::config("the mfs scan supports Dirichlet only"));
            }
            eigen_scan_mfs(&e.curve, range, e.truncation, &e.scan)?
        }
    };
    let mut table = Table::new(&["lambda", "residual"]);
    for (l, r) in list.values.iter().zip(&list.residuals) {
        table.rows.push(vec![*l, *r]);
    }
    let results = json!({
        "method": list.method,
        "count": list.values.len(),
        "conditioning_warning": list.conditioning_warning,
    });
    Ok(Report::complete(table, results))
}

fn with_bc(scene: &SceneConfig, bc: BoundaryCondition) -> Result<SceneConfig, CliError> {
    if !scene.inner_kind.is_conductor() {
        return Err(CliError::config("`boundary_conditions` needs a conductor scene"));
    }
    let mut s = scene.clone();
    s.bc_outer = bc;
    s.inner_kind = match bc {
        BoundaryCondition::Dirichlet => InnerKind::PerfectConductorDirichlet,
        BoundaryCondition::Neumann => InnerKind::PerfectConductorNeumann,
    };
    Ok(s)
}

fn column_prefix(bc: BoundaryCondition) -> &'static str {
    match bc {
        BoundaryCondition::Dirichlet => "tm",
        BoundaryCondition::Neumann => "te",
    }
}

struct SweepRun {
    parameter: &'static str,
    grid: Vec<f64>,
    labels: Vec<String>,
    /// `cells[i][j]`: grid point `i`, scene variant `j`.
    cells: Vec<Vec<Result<EnergyResult, CliError>>>,
}

/// Builds and validates every scene before evaluating any of them, so a bad
/// grid is a config error rather than a partial table.
fn evaluate_sweep(cfg: &RunConfig) -> Result<SweepRun, CliError> {
    let scene = cfg.scene()?;
    let sw = cfg.sweep()?;
    let grid = sw.grid()?;
    let variants: Vec<(String, SceneConfig)> = match &sw.boundary_conditions {
        None => vec![(String::new(), scene.clone())],
        Some(list) if list.is_empty() => return Err(CliError::config("`boundary_conditions` is empty")),
        Some(list) => list
            .iter()
            .map(|&bc| Ok((column_prefix(bc).to_string(), with_bc(scene, bc)?)))
            .collect::<Result<_, CliError>>()?,
    };
    let name = sw.parameter.name();
    let mut scenes = Vec::with_capacity(grid.len());
    for &v in &grid {
        let mut row = Vec::with_capacity(variants.len());
        for (_, base) in &variants {
            let s = sw
                .parameter
                .apply(base, v)
                .map_err(|e| CliError::config(format!("{name} = {v}: {e}")))?;
            s.validate()
                .map_err(|e| CliError::config(format!("{name} = {v}: {e}")))?;
            row.push(s);
        }
        scenes.push(row);
    }
    let cells = scenes
        .par_iter()
        .map(|row| {
            row.par_iter()
                .map(|s| energy(s, &cfg.quadrature, &cfg.angular).map_err(CliError::from))
                .collect()
        })
        .collect();
    Ok(SweepRun {
        parameter: name,
        grid,
        labels: variants.into_iter().map(|v| v.0).collect(),
        cells,
    })
}

fn column(label: &str, what: &str) -> String {
    if label.is_empty() {
        what.to_string()
    } else {
        format!("{label}_{what}")
    }
}

fn run_sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let run = evaluate_sweep(cfg)?;
    let mut header = vec![run.parameter.to_string()];
    for l in &run.labels {
        header.push(column(l, "energy"));
        header.push(column(l, "error"));
    }
    let mut table = Table {
        header,
        rows: Vec::new(),
    };
    let mut diagnostics = Vec::new();
    let mut failure: Option<CliError> = None;
    let mut max_log_q = f64::NEG_INFINITY;
    for (v, row) in run.grid.iter().zip(&run.cells) {
        let mut out = vec![*v];
        for (l, cell) in run.labels.iter().zip(row) {
            match cell {
                Ok(r) => {
                    out.extend([r.energy, r.error_estimate]);
                    max_log_q = max_log_q.max(r.flags.max_log_q);
                }
                Err(e) if e.kind == ErrorKind::Config => return Err(e.clone()),
                Err(e) => {
                    out.extend([f64::NAN, f64::NAN]);
                    let tag = if l.is_empty() { String::new() } else { format!(" ({l})") };
                    diagnostics.push(format!("{} = {v}{tag}: {}", run.parameter, e.message));
                    failure.get_or_insert_with(|| e.clone());
                }
            }
        }
        table.rows.push(out);
    }
    let mut results = serde_json::Map::new();
    results.insert("parameter".into(), json!(run.parameter));
    results.insert("count".into(), json!(run.grid.len()));
    results.insert("failed_points".into(), json!(diagnostics.len()));
    results.insert("max_log_q".into(), json!(max_log_q));
    if run.parameter == "phi0" {
        for (j, l) in run.labels.iter().enumerate() {
            let e: Vec<f64> = run.cells.iter().map(|row| row[j].as_ref().map_or(f64::NAN, |r| r.energy)).collect();
            if e.iter().all(|v| v.is_finite()) {
                if let Ok(fit) = cos_fit_values(&run.grid, &e) {
                    results.insert(column(l, "fit"), fit_json(&fit));
                }
            }
        }
    }
    Ok(Report {
        table,
        results: serde_json::Value::Object(results),
        diagnostics,
        failure,
    })
}

fn fit_json(fit: &casimir_core::CosFit) -> serde_json::Value {
    json!({
        "amplitude": fit.amplitude,
        "offset": fit.offset,
        "residual_rms": fit.residual_rms,
        "relative_residual": fit.residual_rms / fit.amplitude.abs(),
    })
}

/// `phi0` and `energy` columns of a sweep table.
fn read_phi0_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::config(format!("{} has no `{name}` column", path.display())))
    };
    let (ip, ie) = (find("phi0")?, find("energy")?);
    let (mut phi, mut e) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| CliError::config(format!("bad number in {}", path.display())))
        };
        phi.push(parse(ip)?);
        e.push(parse(ie)?);
    }
    Ok((phi, e))
}

fn run_fit(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut diagnostics = Vec::new();
    let mut failure = None;
    let (phi, e) = match cfg.fit.as_ref().and_then(|f| f.input.as_ref()) {
        Some(path) => read_phi0_table(path)?,
        None => {
            let sw = cfg.sweep()?;
            if sw.parameter.name() != "phi0" || sw.boundary_conditions.is_some() {
                return Err(CliError::config("task `fit` needs a plain phi0 sweep"));
            }
            let rep = run_sweep(cfg)?;
            diagnostics = rep.diagnostics;
            failure = rep.failure;
            (
                rep.table.rows.iter().map(|r| r[0]).collect(),
                rep.table.rows.iter().map(|r| r[1]).collect(),
            )
        }
    };
    let mut table = Table::new(&["amplitude", "offset", "residual_rms"]);
    if e.iter().any(|v| !v.is_finite()) {
        let f = failure.unwrap_or_else(|| CliError::numerical("non-finite energies in the fit input"));
        table.rows.push(vec![f64::NAN; 3]);
        return Ok(Report {
            table,
            results: json!({}),
            diagnostics,
            failure: Some(f),
        });
    }
    let fit = cos_fit_values(&phi, &e)?;
    table.rows.push(vec![fit.amplitude, fit.offset, fit.residual_rms]);
    Ok(Report {
        table,
        results: fit_json(&fit),
        diagnostics,
        failure,
    })
}
