//! Tables and their CSV / JSON / text renderings.
//!
//! A CSV file starts with one `#`-prefixed JSON line holding the resolved
//! configuration, then a header row. Secondary tables go to sibling files
//! named `<stem>.<table>.csv`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) => Value::Null,
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// Shortest round-trip representation; non-finite values spelled out.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Everything a subcommand produces.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: String,
    /// Resolved configuration plus command-specific notes.
    pub metadata: Value,
    pub tables: Vec<Table>,
    /// Number of grid points or rows that failed.
    pub failures: usize,
}

impl Report {
    pub fn new(command: &str, config: &impl Serialize) -> Self {
        let cfg = serde_json::to_value(config).expect("config serializes");
        Self {
            command: command.into(),
            metadata: json!({ "command": command, "version": env!("CARGO_PKG_VERSION"), "config": cfg }),
            tables: Vec::new(),
            failures: 0,
        }
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.metadata[key] = serde_json::to_value(value).expect("note serializes");
    }

    fn header(&self, table: &str) -> String {
        let mut m = self.metadata.clone();
        m["table"] = json!(table);
        format!("# {}\n", serde_json::to_string(&m).expect("metadata serializes"))
    }

    fn csv_table(&self, t: &Table) -> Result<Vec<u8>, CliError> {
        let mut buf = self.header(&t.name).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&t.columns).map_err(CliError::runtime)?;
            for r in &t.rows {
                w.write_record(r.iter().map(Cell::csv)).map_err(CliError::runtime)?;
            }
            w.flush().map_err(CliError::runtime)?;
        }
        Ok(buf)
    }

    fn json_doc(&self) -> Vec<u8> {
        let mut tables = serde_json::Map::new();
        for t in &self.tables {
            let rows: Vec<Value> = t.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
            tables.insert(t.name.clone(), json!({ "columns": t.columns, "rows": rows }));
        }
        let doc = json!({ "metadata": self.metadata, "tables": tables });
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s.into_bytes()
    }

    fn text(&self) -> Vec<u8> {
        let mut s = String::new();
        for (k, t) in self.tables.iter().enumerate() {
            if k > 0 {
                s.push('\n');
            }
            if self.tables.len() > 1 {
                s.push_str(&format!("[{}]\n", t.name));
            }
            if t.rows.len() == 1 {
                let w = t.columns.iter().map(|c| c.len()).max().unwrap_or(0);
                for (c, v) in t.columns.iter().zip(&t.rows[0]) {
                    s.push_str(&format!("{c:<w$} = {}\n", v.csv()));
                }
            } else {
                let cells: Vec<Vec<String>> = t.rows.iter().map(|r| r.iter().map(Cell::csv).collect()).collect();
                let widths: Vec<usize> = (0..t.columns.len())
                    .map(|j| cells.iter().map(|r| r[j].len()).chain([t.columns[j].len()]).max().unwrap_or(0))
                    .collect();
                let line = |vals: Vec<&str>| {
                    vals.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect::<Vec<_>>().join("  ") + "\n"
                };
                s.push_str(&line(t.columns.iter().map(String::as_str).collect()));
                for r in &cells {
                    s.push_str(&line(r.iter().map(String::as_str).collect()));
                }
            }
        }
        s.into_bytes()
    }

    /// Write to `out` (stdout when `None`).
    pub fn emit(&self, format: Format, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::new();
        match format {
            Format::Json => written.extend(write_to(out, &self.json_doc())?),
            Format::Text => written.extend(write_to(out, &self.text())?),
            Format::Csv => {
                for (k, t) in self.tables.iter().enumerate() {
                    let bytes = self.csv_table(t)?;
                    match (k, out) {
                        (0, o) => written.extend(write_to(o, &bytes)?),
                        (_, Some(o)) => written.extend(write_to(Some(&sibling(o, &t.name)), &bytes)?),
                        (_, None) => {
                            let mut so = std::io::stdout().lock();
                            so.write_all(b"\n").and_then(|_| so.write_all(&bytes)).map_err(CliError::runtime)?;
                        }
                    }
                }
            }
        }
        Ok(written)
    }
}

/// `dir/run.csv` + `optima` → `dir/run.optima.csv`.
pub fn sibling(out: &Path, name: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let ext = out.extension().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}.{name}.{ext}"))
}

fn write_to(out: Option<&Path>, bytes: &[u8]) -> Result<Option<PathBuf>, CliError> {
    match out {
        Some(p) => {
            std::fs::write(p, bytes).map_err(|e| CliError::Runtime(anyhow::anyhow!("cannot write {}: {e}", p.display())))?;
            Ok(Some(p.to_path_buf()))
        }
        None => {
            std::io::stdout().lock().write_all(bytes).map_err(CliError::runtime)?;
            Ok(None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(0.1), "0.1");
        assert_eq!(fmt_num(3.0), "3");
        assert_eq!(fmt_num(f64::NAN), "NaN");
        assert_eq!(fmt_num(1e-20), "0.00000000000000000001");
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("/tmp/a/run.csv"), "optima"), PathBuf::from("/tmp/a/run.optima.csv"));
        assert_eq!(sibling(Path::new("run"), "m"), PathBuf::from("run.m.csv"));
    }

    #[test]
    fn csv_has_metadata_line() {
        let mut r = Report::new("x", &json!({"seed": 1}));
        let mut t = Table::new("main", &["a", "b"]);
        t.push(vec![1.5.into(), "ok".into()]);
        r.tables.push(t);
        let s = String::from_utf8(r.csv_table(&r.tables[0]).unwrap()).unwrap();
        let mut lines = s.lines();
        let meta: Value = serde_json::from_str(lines.next().unwrap().strip_prefix("# ").unwrap()).unwrap();
        assert_eq!(meta["config"]["seed"], 1);
        assert_eq!(lines.next(), Some("a,b"));
        assert_eq!(lines.next(), Some("1.5,ok"));
    }
}
