//! Tables, assertions and their serialization to CSV and `report.json`.

use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Self { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(dir.join(self.file_name()))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl Assertion {
    /// `value ≤ tolerance`; NaN fails.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), passed: value <= tolerance, value, tolerance }
    }

    pub fn flag(name: impl Into<String>, passed: bool) -> Self {
        Self { name: name.into(), passed, value: if passed { 0.0 } else { 1.0 }, tolerance: 0.0 }
    }
}

/// Everything one experiment or suite produces.
#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub assertions: Vec<Assertion>,
    pub summary: Map<String, Value>,
    /// Numerical failure that stopped the run early.
    pub error: Option<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.assertions.iter().all(|a| a.passed)
    }

    pub fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    /// Appends another outcome, prefixing summary keys and assertion names.
    pub fn absorb(&mut self, prefix: &str, other: Outcome) {
        self.tables.extend(other.tables);
        for mut a in other.assertions {
            a.name = format!("{prefix}/{}", a.name);
            self.assertions.push(a);
        }
        self.summary.insert(prefix.to_string(), Value::Object(other.summary));
        if let Some(e) = other.error {
            let joined = match self.error.take() {
                Some(prev) => format!("{prev}; {prefix}: {e}"),
                None => format!("{prefix}: {e}"),
            };
            self.error = Some(joined);
        }
    }
}

/// Finite numbers as JSON numbers, the rest as strings.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or_else(|| Value::String(v.to_string()))
}

#[derive(Debug, Serialize)]
struct TableEntry<'a> {
    name: &'a str,
    file: String,
    columns: &'a [&'static str],
    rows: usize,
}

#[derive(Debug, Serialize)]
struct ReportJson<'a> {
    experiment: &'a str,
    library_version: &'a str,
    config_hash: &'a str,
    config: &'a Value,
    seed: Option<u64>,
    passed: bool,
    error: Option<&'a str>,
    assertions: &'a [Assertion],
    tables: Vec<TableEntry<'a>>,
    summary: &'a Map<String, Value>,
    wall_clock_seconds: f64,
}

pub struct RunMeta<'a> {
    pub experiment: &'a str,
    pub config_hash: &'a str,
    pub config: &'a Value,
    pub seed: Option<u64>,
    pub wall_clock_seconds: f64,
}

pub fn write_outputs(dir: &Path, meta: &RunMeta<'_>, outcome: &Outcome) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    for t in &outcome.tables {
        t.write(dir)?;
    }
    let report = ReportJson {
        experiment: meta.experiment,
        library_version: bridgelab::VERSION,
        config_hash: meta.config_hash,
        config: meta.config,
        seed: meta.seed,
        passed: outcome.passed(),
        error: outcome.error.as_deref(),
        assertions: &outcome.assertions,
        tables: outcome
            .tables
            .iter()
            .map(|t| TableEntry { name: &t.name, file: t.file_name(), columns: &t.header, rows: t.rows.len() })
            .collect(),
        summary: &outcome.summary,
        wall_clock_seconds: meta.wall_clock_seconds,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(dir.join("report.json"), text)?;
    Ok(())
}
