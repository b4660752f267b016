use std::path::{Path, PathBuf};

use casimir_core::{AngularSpec, QuadratureSpec};
use serde::Serialize;

use crate::config::{RunConfig, Task};
use crate::error::CliError;

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

/// 17 significant digits; non-finite values as `NaN`, `inf`, `-inf`.
pub fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn write_table(path: &Path, table: &Table) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| format_value(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Preset parameters echoed in the metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PresetEcho {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b2: Option<f64>,
    /// Focal distance of the ellipse, `sqrt(b2^2 - b1^2)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
}

/// JSON sidecar written next to each table. Field order is the key order.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata<'a> {
    pub artifact: &'static str,
    pub version: &'static str,
    pub task: Task,
    pub table: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<&'a PresetEcho>,
    pub truncation: Option<usize>,
    pub points: Option<usize>,
    pub quadrature: QuadratureSpec,
    pub angular: AngularSpec,
    pub wall_time_seconds: f64,
    pub results: serde_json::Value,
    pub diagnostics: Vec<String>,
    pub config: &'a RunConfig,
}

pub const ARTIFACT: &str = "casimir";

pub fn write_metadata(path: &Path, meta: &Metadata<'_>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn output_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.json")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_keep_seventeen_digits() {
        let v = 0.1f64 + 0.2;
        let s = format_value(v);
        assert_eq!(s, "3.0000000000000004e-1");
        assert_eq!(s.parse::<f64>().unwrap(), v);
        assert_eq!(format_value(f64::NAN), "NaN");
        assert_eq!(format_value(-2.5), "-2.5000000000000000e0");
    }
}
