//! Output tables in JSON, CSV and markdown, the run manifest, and
//! cell-by-cell comparison of two output sets.

mod build;
mod compare;
mod verify;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{build_tables, model_summaries, ModelSummary, RISK_ROWS, VALUE_ROWS};
pub use compare::{compare_dirs, golden_compare, read_tables, CellDiff, COMPARE_EPS};
pub use verify::truth_check_table;

/// Version of the table layout; bumped on any change to columns or rows.
pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o failure at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("malformed table {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

impl ReportError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        ReportError::Io { path: path.to_owned(), source }
    }
}

/// One table cell. Non-finite numbers are stored as text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn num(v: f64) -> Self {
        if v.is_finite() {
            Cell::Num(v)
        } else {
            Cell::Text(v.to_string())
        }
    }

    pub fn opt(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::num)
    }

    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }

    /// Full-precision text for CSV: 17 significant digits for reals.
    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn markdown(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(v) => format!("{v:.4}"),
            Cell::Text(s) => escape_md(s),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub label: String,
    pub cells: Vec<Cell>,
}

impl Row {
    pub fn new(label: impl Into<String>, cells: Vec<Cell>) -> Self {
        Self { label: label.into(), cells }
    }
}

/// A header spanning consecutive columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnGroup {
    pub label: String,
    pub span: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub schema_version: u32,
    pub title: String,
    /// Header of the row-label column.
    pub label_header: String,
    pub columns: Vec<String>,
    #[serde(default)]
    pub column_groups: Vec<ColumnGroup>,
    pub rows: Vec<Row>,
    /// Fit statistics and test results accompanying the main rows.
    #[serde(default)]
    pub statistics: Vec<Row>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(name: &str, title: &str, label_header: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            schema_version: SCHEMA_VERSION,
            title: title.to_owned(),
            label_header: label_header.to_owned(),
            columns: columns.iter().map(|c| (*c).to_owned()).collect(),
            column_groups: Vec::new(),
            rows: Vec::new(),
            statistics: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn row(&self, label: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn row_labels(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.label.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }

    fn header_names(&self) -> Vec<String> {
        if self.column_groups.is_empty() {
            return self.columns.clone();
        }
        let mut out = Vec::with_capacity(self.columns.len());
        let mut cols = self.columns.iter();
        for g in &self.column_groups {
            for c in cols.by_ref().take(g.span) {
                out.push(format!("{} {c}", g.label));
            }
        }
        out.extend(cols.cloned());
        out
    }

    /// Header, main rows, then statistics rows; notes are omitted.
    pub fn to_csv(&self) -> String {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header = vec![self.label_header.clone()];
        header.extend(self.header_names());
        wtr.write_record(&header).expect("in-memory csv write");
        for row in self.rows.iter().chain(&self.statistics) {
            let mut rec = vec![row.label.clone()];
            rec.extend(row.cells.iter().map(Cell::csv));
            rec.resize(header.len(), String::new());
            wtr.write_record(&rec).expect("in-memory csv write");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("## {}\n\n", escape_md(&self.title));
        write_md_table(&mut s, self, &self.rows, true);
        if !self.statistics.is_empty() {
            s.push('\n');
            write_md_table(&mut s, self, &self.statistics, false);
        }
        if !self.notes.is_empty() {
            s.push('\n');
            for n in &self.notes {
                let _ = writeln!(s, "- {}", escape_md(n));
            }
        }
        s
    }
}

fn escape_md(s: &str) -> String {
    s.replace('\\', "\\\\").replace('|', "\\|").replace('*', "\\*").replace('_', "\\_")
}

fn write_md_table(s: &mut String, t: &Table, rows: &[Row], main: bool) {
    let width = t.columns.len() + 1;
    let line = |cells: Vec<String>| format!("| {} |\n", cells.join(" | "));
    let column_row = {
        let mut c = vec![escape_md(&t.label_header)];
        c.extend(t.columns.iter().map(|x| escape_md(x)));
        c
    };
    if t.column_groups.is_empty() || !main {
        let header = if main { column_row.clone() } else { {
            let mut c = vec!["Statistic".to_owned()];
            c.extend(t.header_names().iter().map(|x| escape_md(x)));
            c
        } };
        s.push_str(&line(header));
        s.push_str(&line(vec!["---".into(); width]));
    } else {
        // Group labels on the header line, column names on the first body line.
        let mut groups = vec![String::new()];
        for g in &t.column_groups {
            groups.push(escape_md(&g.label));
            groups.extend(std::iter::repeat_n(String::new(), g.span.saturating_sub(1)));
        }
        groups.resize(width, String::new());
        s.push_str(&line(groups));
        s.push_str(&line(vec!["---".into(); width]));
        s.push_str(&line(column_row.iter().map(|c| format!("**{c}**")).collect()));
    }
    for row in rows {
        let mut cells = vec![escape_md(&row.label)];
        cells.extend(row.cells.iter().map(Cell::markdown));
        cells.resize(width, String::new());
        s.push_str(&line(cells));
    }
}

/// Run metadata written alongside the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub config_hash: String,
    pub timestamp: String,
    pub versions: std::collections::BTreeMap<String, String>,
    /// Effective configuration, defaults included.
    pub config: std::collections::BTreeMap<String, String>,
    pub tables: Vec<String>,
    pub files: Vec<String>,
    pub models: Vec<ModelSummary>,
    pub excluded_rows: Vec<ExcludedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRow {
    pub firm_id: String,
    pub year: i32,
    pub reason: String,
}

/// Tables plus run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub tables: Vec<Table>,
    pub manifest: Manifest,
}

pub const FORMATS: [&str; 3] = ["json", "csv", "md"];

/// Writes every table in all three formats plus `manifest.json` into `dir`.
/// Returns the written paths in write order.
pub fn emit(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|e| ReportError::io(dir, e))?;
    let mut written = Vec::new();
    let mut manifest = bundle.manifest.clone();
    manifest.tables = bundle.tables.iter().map(|t| t.name.clone()).collect();
    manifest.files.clear();
    for t in &bundle.tables {
        for (ext, body) in [("json", t.to_json()), ("csv", t.to_csv()), ("md", t.to_markdown())] {
            let name = format!("{}.{ext}", t.name);
            let path = dir.join(&name);
            fs::write(&path, body).map_err(|e| ReportError::io(&path, e))?;
            manifest.files.push(name);
            written.push(path);
        }
    }
    let path = dir.join(MANIFEST_FILE);
    let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    body.push('\n');
    fs::write(&path, body).map_err(|e| ReportError::io(&path, e))?;
    written.push(path);
    Ok(written)
}
