//! CSV tables, graph JSON and the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

/// A named table; written as `<name>.csv` with a `name [unit]` header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[(&str, &str)]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|(n, u)| Column { name: n.to_string(), unit: u.to_string() }).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_columns(name: &str, columns: Vec<Column>) -> Self {
        Table { name: name.to_string(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c.name == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn col(name: impl Into<String>, unit: &str) -> Column {
    Column { name: name.into(), unit: unit.to_string() }
}

/// Header cell text, e.g. `t [s]`.
pub fn header_cell(c: &Column) -> String {
    format!("{} [{}]", c.name, c.unit)
}

/// Column name from a header cell.
pub fn column_name(cell: &str) -> &str {
    cell.split(" [").next().unwrap_or(cell)
}

pub fn write_table(dir: &Path, table: &Table) -> Result<PathBuf, CliError> {
    let path = dir.join(format!("{}.csv", table.name));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(table.columns.iter().map(header_cell))?;
    for row in &table.rows {
        // shortest round-trip formatting: deterministic, '.' decimal
        w.write_record(row.iter().map(|x| format!("{x}")))?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(path.to_path_buf())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// How value relates to threshold when passing, e.g. "<".
    pub relation: String,
    pub passed: bool,
}

impl Assertion {
    pub fn below(name: &str, value: f64, threshold: f64) -> Self {
        Assertion { name: name.into(), value, threshold, relation: "<".into(), passed: value < threshold }
    }

    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Assertion { name: name.into(), value, threshold, relation: "<=".into(), passed: value <= threshold }
    }

    pub fn above(name: &str, value: f64, threshold: f64) -> Self {
        Assertion { name: name.into(), value, threshold, relation: ">".into(), passed: value > threshold }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:.6e} {} {:.6e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.relation,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub columns: Vec<Column>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub preset: Option<String>,
    pub config_path: Option<String>,
    /// Fully resolved runs, in execution order.
    pub configs: Vec<Config>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<OutputFile>,
    pub assertions: Vec<Assertion>,
    pub tool_version: String,
    pub wall_clock_s: f64,
    /// Anything a preset reports besides its tables.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(preset: Option<&str>, config_path: Option<&str>) -> Self {
        RunManifest {
            preset: preset.map(str::to_string),
            config_path: config_path.map(str::to_string),
            configs: Vec::new(),
            seeds: Vec::new(),
            outputs: Vec::new(),
            assertions: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_s: 0.0,
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

/// Writes every table plus `manifest.json`; the manifest gains the paths.
pub fn write_outputs(dir: &Path, tables: &[Table], manifest: &mut RunManifest) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    for t in tables {
        let p = write_table(dir, t)?;
        manifest.outputs.push(OutputFile { path: p.display().to_string(), columns: t.columns.clone() });
    }
    write_json(&dir.join("manifest.json"), manifest)
}
