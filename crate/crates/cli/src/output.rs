//! Output artifacts: tabular results in two formats plus resume sidecars.
//!
//! The comma-separated format carries provenance in leading `#` lines and is
//! free of timestamps, so identical configs produce byte-identical files.
//! The JSON document nests the same table under a `meta` block that adds a
//! `generated_at` field.  Probabilities and other floats are printed with 17
//! significant digits, enough to reconstruct the exact double.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One table cell; the only value kinds the commands emit.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(v) => v.clone(),
        }
    }

    fn to_value(&self) -> Value {
        match self {
            Cell::Float(v) => json!(v),
            Cell::Int(v) => json!(v),
            Cell::Bool(v) => json!(v),
            Cell::Text(v) => json!(v),
        }
    }

    fn from_value(value: &Value) -> Result<Self, CliError> {
        match value {
            Value::Bool(b) => Ok(Cell::Bool(*b)),
            Value::Number(n) if n.is_i64() => Ok(Cell::Int(n.as_i64().expect("checked"))),
            Value::Number(n) => n
                .as_f64()
                .map(Cell::Float)
                .ok_or_else(|| CliError::Runtime("non-finite number in sidecar".into())),
            Value::String(s) => Ok(Cell::Text(s.clone())),
            other => Err(CliError::Runtime(format!("unexpected sidecar cell {other}"))),
        }
    }
}

/// A rows-table with fixed columns, the unit every command produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn to_value(&self) -> Value {
        json!({
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::to_value).collect())).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// A complete run result ready for serialization.
pub struct Report {
    pub command: &'static str,
    /// Resolved configuration, embedded verbatim for provenance.
    pub params: Value,
    pub table: Table,
    /// Extra structured results (certificates, boundary reports, raw
    /// distributions); JSON only, summarized as `#` lines in CSV when the
    /// producing command registers a summary.
    pub extra: Map<String, Value>,
    /// Lines appended to the CSV metadata, one `# key: text` entry each.
    pub notes: Vec<(String, String)>,
    /// Grid points that failed, as `(key, error)`.
    pub failures: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &'static str, params: Value, table: Table) -> Self {
        Self {
            command,
            params,
            table,
            extra: Map::new(),
            notes: Vec::new(),
            failures: Vec::new(),
        }
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# photonet {VERSION}\n"));
        out.push_str(&format!("# command: {}\n", self.command));
        out.push_str(&format!(
            "# params: {}\n",
            serde_json::to_string(&self.params).expect("config serializes")
        ));
        for (key, text) in &self.notes {
            out.push_str(&format!("# {key}: {text}\n"));
        }
        for (key, error) in &self.failures {
            out.push_str(&format!("# failed: {key}: {error}\n"));
        }
        out.push_str(&self.table.columns.join(","));
        out.push('\n');
        for row in &self.table.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn to_json(&self) -> String {
        let mut meta = Map::new();
        meta.insert("tool".into(), json!("photonet"));
        meta.insert("version".into(), json!(VERSION));
        meta.insert("command".into(), json!(self.command));
        meta.insert("params".into(), self.params.clone());
        meta.insert("generated_at_unix".into(), json!(unix_now()));
        if !self.failures.is_empty() {
            let list: Vec<Value> = self
                .failures
                .iter()
                .map(|(key, error)| json!({"key": key, "error": error}))
                .collect();
            meta.insert("failures".into(), Value::Array(list));
        }

        let mut data = Map::new();
        data.insert("table".into(), self.table.to_value());
        for (key, value) in &self.extra {
            data.insert(key.clone(), value.clone());
        }

        let document = json!({ "meta": Value::Object(meta), "data": Value::Object(data) });
        let mut text = serde_json::to_string_pretty(&document).expect("document serializes");
        text.push('\n');
        text
    }

    /// Writes the report to `path`, or to stdout when no path is given.
    pub fn write(&self, path: Option<&Path>, format: Format) -> Result<(), CliError> {
        let body = match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        };
        match path {
            Some(path) => write_atomic(path, body.as_bytes()),
            None => {
                std::io::stdout()
                    .write_all(body.as_bytes())
                    .map_err(|e| CliError::Runtime(format!("stdout: {e}")))?;
                Ok(())
            }
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Write-then-rename so readers never observe a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::Runtime(format!("cannot rename to {}: {e}", path.display())))
}

// ── Resume sidecar ─────────────────────────────────────────────────────────

/// Per-sweep checkpoint stored next to the output file.
///
/// The sidecar holds the resolved configuration and every completed row,
/// keyed by grid point.  A rerun with the same output path and configuration
/// reuses completed rows; any configuration change discards the sidecar.
/// The file survives successful runs, so repeating a finished sweep is a
/// cheap replay.
pub struct ResumeState {
    path: Option<PathBuf>,
    config: Value,
    completed: BTreeMap<String, Vec<Cell>>,
}

impl ResumeState {
    /// Loads the sidecar for `output`; `None` disables checkpointing (used
    /// when results go to stdout).
    pub fn load(output: Option<&Path>, config: &Value) -> Self {
        let path = output.map(sidecar_path);
        let mut state =
            Self { path, config: config.clone(), completed: BTreeMap::new() };
        let Some(path) = state.path.clone() else {
            return state;
        };
        let Ok(text) = fs::read_to_string(&path) else {
            return state;
        };
        let Ok(value) = serde_json::from_str::<Value>(&text) else {
            return state;
        };
        if value.get("config") != Some(config) {
            return state;
        }
        let Some(rows) = value.get("completed").and_then(Value::as_object) else {
            return state;
        };
        for (key, row) in rows {
            let Some(cells) = row.as_array() else { continue };
            let Ok(cells) = cells.iter().map(Cell::from_value).collect::<Result<Vec<_>, _>>()
            else {
                continue;
            };
            state.completed.insert(key.clone(), cells);
        }
        state
    }

    pub fn get(&self, key: &str) -> Option<&Vec<Cell>> {
        self.completed.get(key)
    }

    /// Records a finished grid point and flushes the sidecar.
    pub fn record(&mut self, key: &str, row: Vec<Cell>) -> Result<(), CliError> {
        self.completed.insert(key.to_string(), row);
        self.flush()
    }

    fn flush(&self) -> Result<(), CliError> {
        let Some(path) = &self.path else { return Ok(()) };
        let rows: Map<String, Value> = self
            .completed
            .iter()
            .map(|(k, cells)| {
                (k.clone(), Value::Array(cells.iter().map(Cell::to_value).collect()))
            })
            .collect();
        let doc = json!({ "config": self.config, "completed": rows });
        let text = serde_json::to_string(&doc).expect("sidecar serializes");
        write_atomic(path, text.as_bytes())
    }
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".resume.json");
    output.with_file_name(name)
}

/// Runs a sweep: every grid point is either replayed from the sidecar or
/// computed, in declared order, with a checkpoint after each point.
/// Failed points are recorded and do not stop the sweep.
pub fn run_sweep<P, F>(
    table: &mut Table,
    resume: &mut ResumeState,
    points: Vec<(String, P)>,
    mut compute: F,
) -> Result<Vec<(String, String)>, CliError>
where
    F: FnMut(&P) -> Result<Vec<Cell>, String>,
{
    let mut failures = Vec::new();
    for (key, point) in points {
        if let Some(row) = resume.get(&key) {
            table.push(row.clone());
            continue;
        }
        match compute(&point) {
            Ok(row) => {
                resume.record(&key, row.clone())?;
                table.push(row);
            }
            Err(message) => failures.push((key, message)),
        }
    }
    Ok(failures)
}
