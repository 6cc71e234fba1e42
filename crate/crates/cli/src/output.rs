//! Result files: CSV or JSON tables, JSON summaries and the run manifest.
//!
//! Reals are written with 17 significant digits so files round-trip
//! exactly. Files are produced on one thread in a fixed order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rdsw_core::format_real;
use serde::Serialize;
use serde_json::Value;

use crate::config::Format;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(i64::from(v))
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

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Real(v) => format_real(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Real(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Bool(b) => Value::from(*b),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj = self
                    .header
                    .iter()
                    .zip(row)
                    .map(|(h, c)| (h.to_string(), c.json()))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        Value::Array(rows)
    }
}

/// Everything a command produces, in write order.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub summaries: Vec<(&'static str, Value)>,
    pub texts: Vec<(String, String)>,
}

impl Artifacts {
    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }

    pub fn summary<T: Serialize>(&mut self, name: &'static str, v: &T) {
        let value = serde_json::to_value(v).expect("report types serialize");
        self.summaries.push((name, value));
    }

    pub fn text(&mut self, name: String, body: String) {
        self.texts.push((name, body));
    }

    /// Writes every artifact into `dir`; returns the file names.
    pub fn write(&self, dir: &Path, format: Format) -> Result<Vec<String>, CliError> {
        let mut names = Vec::new();
        for t in &self.tables {
            let (name, body) = match format {
                Format::Csv => (format!("{}.csv", t.name), t.to_csv()),
                Format::Json => (format!("{}.json", t.name), to_json_string(&t.to_json())),
            };
            write_file(&dir.join(&name), &body)?;
            names.push(name);
        }
        for (name, v) in &self.summaries {
            let name = format!("{name}.json");
            write_file(&dir.join(&name), &to_json_string(v))?;
            names.push(name);
        }
        for (name, body) in &self.texts {
            write_file(&dir.join(name), body)?;
            names.push(name.clone());
        }
        Ok(names)
    }
}

pub fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(path.to_path_buf())
}

/// Pretty JSON with floats at 17 significant digits and a trailing newline.
pub fn to_json_string(v: &Value) -> String {
    let mut s = String::new();
    write_value(&mut s, v, 0);
    s.push('\n');
    s
}

fn write_value(s: &mut String, v: &Value, depth: usize) {
    let pad = |s: &mut String, d: usize| s.push_str(&"  ".repeat(d));
    match v {
        Value::Null => s.push_str("null"),
        Value::Bool(b) => s.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                s.push_str(&format_real(n.as_f64().expect("f64 number")));
            } else {
                let _ = write!(s, "{n}");
            }
        }
        Value::String(t) => s.push_str(&Value::String(t.clone()).to_string()),
        Value::Array(items) if items.is_empty() => s.push_str("[]"),
        Value::Array(items) => {
            s.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(s, depth + 1);
                write_value(s, item, depth + 1);
                s.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(s, depth);
            s.push(']');
        }
        Value::Object(map) if map.is_empty() => s.push_str("{}"),
        Value::Object(map) => {
            s.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                pad(s, depth + 1);
                s.push_str(&Value::String(k.clone()).to_string());
                s.push_str(": ");
                write_value(s, item, depth + 1);
                s.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(s, depth);
            s.push('}');
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub cli_version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub format: Format,
    pub config_path: Option<String>,
    pub config: Value,
    pub files: Vec<String>,
    /// The only field that differs between identical runs.
    pub wall_time_seconds: f64,
}
