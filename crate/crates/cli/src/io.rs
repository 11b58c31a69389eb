//! Input files and the report document.
//!
//! Inputs are headered, comma-separated UTF-8 CSV files plus a JSON value
//! function; the report is a JSON document with a fixed key order and an
//! optional CSV copy of its examples table.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use datavalue::{Dataset, Example, FrequencyQuery, FrequencyValueFunction, KnnQuery, Label, ValueReport};
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Which columns a data or query file carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataMode {
    /// `id,bin,label[,coalition]`; queries `bin,label[,value]`.
    Frequency,
    /// `id,label[,coalition],f0..fd`; queries `label,f0..fd`.
    Knn,
}

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
        let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(file);
        let csv_err = |e: csv::Error| CliError::input(path, e.to_string());
        let headers: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
        if headers.iter().all(String::is_empty) {
            return Err(CliError::input(path, "missing header row"));
        }
        let rows = reader.records().collect::<Result<Vec<_>, _>>().map_err(csv_err)?;
        Ok(Table { path: path.to_owned(), headers, rows })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| self.error(format!("missing required column {name:?}")))
    }

    fn error(&self, message: impl Into<String>) -> CliError {
        CliError::input(&self.path, message)
    }

    /// Row numbers as a user sees them: the header is line 1.
    fn row_error(&self, row: usize, message: impl std::fmt::Display) -> CliError {
        self.error(format!("line {}: {message}", row + 2))
    }

    /// Positions of the `f0..fd` columns, in feature order.
    fn feature_columns(&self) -> Result<Vec<usize>> {
        let mut found: Vec<(usize, usize)> = self
            .headers
            .iter()
            .enumerate()
            .filter_map(|(col, h)| {
                let digits = h.strip_prefix('f')?;
                (!digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
                    .then(|| digits.parse().ok().map(|i| (i, col)))
                    .flatten()
            })
            .collect();
        found.sort_unstable();
        if found.is_empty() {
            return Err(self.error("no feature columns (expected f0, f1, ...)"));
        }
        if let Some((expected, _)) = found.iter().enumerate().find(|(i, (f, _))| i != f) {
            return Err(self.error(format!("feature columns must be f0..f{}; f{expected} is missing", found.len() - 1)));
        }
        Ok(found.into_iter().map(|(_, col)| col).collect())
    }

    /// Feature vector of a row; short, long or blank rows are dimension errors.
    fn features(&self, row: usize, cols: &[usize]) -> Result<Vec<f64>> {
        let record = &self.rows[row];
        let present = cols.iter().filter(|&&c| record.get(c).is_some_and(|v| !v.is_empty())).count();
        if present != cols.len() || record.len() > self.headers.len() {
            let found = present + record.len().saturating_sub(self.headers.len());
            return Err(self.row_error(row, datavalue::Error::DimensionMismatch { expected: cols.len(), found }));
        }
        cols.iter()
            .map(|&c| {
                let raw = &record[c];
                raw.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.row_error(row, format!("feature {raw:?} is not a finite number")))
            })
            .collect()
    }

    fn cell<'r>(&self, row: usize, col: usize, name: &str) -> Result<&str> {
        match self.rows[row].get(col) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(self.row_error(row, format!("empty {name}"))),
        }
    }

    fn optional_cell(&self, row: usize, col: Option<usize>) -> Option<&str> {
        col.and_then(|c| self.rows[row].get(c)).filter(|v| !v.is_empty())
    }

    fn check_width(&self, row: usize) -> Result<()> {
        let width = self.rows[row].len();
        if width != self.headers.len() {
            return Err(self.row_error(row, format!("{width} fields, header has {}", self.headers.len())));
        }
        Ok(())
    }
}

/// Reads and validates a dataset file.
pub fn parse_dataset(path: &Path, mode: DataMode) -> Result<Dataset> {
    let table = Table::read(path)?;
    let id_col = table.require("id")?;
    let label_col = table.require("label")?;
    let coalition_col = table.column("coalition");
    let mut examples = Vec::with_capacity(table.rows.len());
    match mode {
        DataMode::Frequency => {
            let bin_col = table.require("bin")?;
            for row in 0..table.rows.len() {
                table.check_width(row)?;
                let id = parse_id(&table, row, id_col)?;
                let mut e = Example::binned(id, table.cell(row, bin_col, "bin")?, table.cell(row, label_col, "label")?);
                e.coalition = table.optional_cell(row, coalition_col).map(str::to_owned);
                examples.push(e);
            }
        }
        DataMode::Knn => {
            let feature_cols = table.feature_columns()?;
            for row in 0..table.rows.len() {
                let features = table.features(row, &feature_cols)?;
                let id = parse_id(&table, row, id_col)?;
                let mut e = Example::located(id, features, table.cell(row, label_col, "label")?);
                e.coalition = table.optional_cell(row, coalition_col).map(str::to_owned);
                examples.push(e);
            }
        }
    }
    if coalition_col.is_some() {
        if let Some(e) = examples.iter().find(|e| e.coalition.is_none()) {
            return Err(table.error(format!("example {} has an empty coalition", e.id)));
        }
    }
    Dataset::new(examples).map_err(|e| table.error(e.to_string()))
}

fn parse_id(table: &Table, row: usize, col: usize) -> Result<u64> {
    let raw = table.cell(row, col, "id")?;
    raw.parse().map_err(|_| table.row_error(row, format!("id {raw:?} is not a non-negative integer")))
}

/// Reads a two-column `id,coalition` file into coalition → member ids.
pub fn parse_coalitions(path: &Path) -> Result<BTreeMap<String, Vec<u64>>> {
    let table = Table::read(path)?;
    let id_col = table.require("id")?;
    let coalition_col = table.require("coalition")?;
    let mut members: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for row in 0..table.rows.len() {
        table.check_width(row)?;
        let id = parse_id(&table, row, id_col)?;
        members.entry(table.cell(row, coalition_col, "coalition")?.to_owned()).or_default().push(id);
    }
    Ok(members)
}

#[derive(Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
enum ValueDocument {
    Majority {
        correct: f64,
        wrong: f64,
        none: f64,
    },
    Table {
        entries: Vec<TableEntry>,
        #[serde(default)]
        default: Option<f64>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableEntry {
    a: u64,
    b: u64,
    value: f64,
}

/// Reads a JSON value function: `{"family": "majority", "correct", "wrong",
/// "none"}` or `{"family": "table", "entries": [{"a", "b", "value"}],
/// "default"}`.
pub fn parse_value_function(path: &Path) -> Result<FrequencyValueFunction> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
    if text.trim().is_empty() {
        return Err(CliError::input(path, "empty value function document"));
    }
    let doc: ValueDocument = serde_json::from_str(&text).map_err(|e| CliError::input(path, e.to_string()))?;
    let vf = match doc {
        ValueDocument::Majority { correct, wrong, none } => FrequencyValueFunction::majority(correct, wrong, none),
        ValueDocument::Table { entries, default } => {
            let mut table = BTreeMap::new();
            for e in entries {
                if table.insert((e.a, e.b), e.value).is_some() {
                    return Err(CliError::input(path, format!("duplicate entry for a={}, b={}", e.a, e.b)));
                }
            }
            FrequencyValueFunction::table(table, default)
        }
    };
    vf.map_err(|e| CliError::input(path, e.to_string()))
}

/// Reads frequency queries. A non-empty `value` cell names a value-function
/// file (relative to the query file) that replaces the global one for that
/// query.
pub fn parse_frequency_queries(path: &Path) -> Result<Vec<FrequencyQuery>> {
    let table = Table::read(path)?;
    let bin_col = table.require("bin")?;
    let label_col = table.require("label")?;
    let value_col = table.column("value");
    let base = path.parent().unwrap_or(Path::new("."));
    let mut overrides: BTreeMap<&str, FrequencyValueFunction> = BTreeMap::new();
    let mut queries = Vec::with_capacity(table.rows.len());
    for row in 0..table.rows.len() {
        table.check_width(row)?;
        let mut q = FrequencyQuery::new(table.cell(row, bin_col, "bin")?, table.cell(row, label_col, "label")?);
        if let Some(file) = table.optional_cell(row, value_col) {
            if !overrides.contains_key(file) {
                overrides.insert(file, parse_value_function(&base.join(file))?);
            }
            q.value_override = Some(overrides[file].clone());
        }
        queries.push(q);
    }
    Ok(queries)
}

/// Reads k-NN queries (`label,f0..fd`).
pub fn parse_knn_queries(path: &Path) -> Result<Vec<KnnQuery>> {
    let table = Table::read(path)?;
    let label_col = table.require("label")?;
    let feature_cols = table.feature_columns()?;
    (0..table.rows.len())
        .map(|row| {
            let features = table.features(row, &feature_cols)?;
            Ok(KnnQuery { features, label: Label::new(table.cell(row, label_col, "label")?) })
        })
        .collect()
}

/// Serializes a report after re-checking that coalition totals equal their
/// members' sums.
pub fn report_json(report: &ValueReport) -> Result<String> {
    report.check_consistency()?;
    let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::Usage(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn write_report(report: &ValueReport, out: Option<&Path>) -> Result<()> {
    let text = report_json(report)?;
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_owned(), source })
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    }
}

/// Reads a report written by [`write_report`].
pub fn read_report(path: &Path) -> Result<ValueReport> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
    serde_json::from_str(&text).map_err(|e| CliError::input(path, e.to_string()))
}

/// Writes the examples table as CSV: `id,value,exact,standard_error,coalition`.
pub fn write_examples_csv(report: &ValueReport, path: &Path) -> Result<()> {
    let io_err = |source| CliError::Io { path: path.to_owned(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| CliError::input(path, e.to_string());
    writer.write_record(["id", "value", "exact", "standard_error", "coalition"]).map_err(csv_err)?;
    for e in &report.examples {
        writer
            .write_record([
                e.id.to_string(),
                e.value.to_string(),
                e.exact.clone().unwrap_or_default(),
                e.standard_error.map(|s| s.to_string()).unwrap_or_default(),
                e.coalition.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(io_err)
}
