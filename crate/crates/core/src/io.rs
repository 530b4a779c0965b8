//! CSV and JSON ingestion and byte-stable report serialization.
//!
//! CSV files are comma-separated UTF-8 with a mandatory header row. Empty
//! optional cells are treated as absent. JSON documents carry a top-level
//! `"schema_version": "1"`; output keys are sorted and floats are written
//! at 10 significant digits so the same object always yields the same bytes.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::concordance::{Covariate, CurvePoint, RiskRecord};
use crate::design::{DesignError, DesignSpec, SensitivityPoint};
use crate::diagnostics::ChecklistStatuses;
use crate::estimation::{Arm, Source, Stratum, TrialRecord};
use crate::simulator::{SimError, SimScenario, TraceRow};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("{}: missing required column '{column}'", path.display())]
    MissingColumn { path: PathBuf, column: String },
    #[error("{}: duplicate unit_id '{unit_id}' on rows {first_row} and {second_row}", path.display())]
    DuplicateId { path: PathBuf, unit_id: String, first_row: u64, second_row: u64 },
    #[error("{}: row {row}, column '{column}': cannot parse '{value}' ({expected})", path.display())]
    Cell { path: PathBuf, row: u64, column: String, value: String, expected: &'static str },
    #[error("{}: invalid JSON: {message}", path.display())]
    Json { path: PathBuf, message: String },
    #[error("unsupported schema_version '{0}' (expected \"1\")")]
    SchemaVersion(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Scenario(#[from] SimError),
}

impl IoError {
    /// Whether the failure is in reading or writing a file rather than in its content.
    pub fn is_file_error(&self) -> bool {
        matches!(self, IoError::File { .. })
    }
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.to_path_buf(), source }
}

/// Column names for a score file. Columns not named here and not listed
/// as models become covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSchema {
    pub unit_id: String,
    pub patient_id: String,
    pub outcome: String,
    pub arm: String,
    pub trial_tag: String,
    /// Score columns; when `None` every other column is a score column.
    pub models: Option<Vec<String>>,
}

impl Default for ScoreSchema {
    fn default() -> Self {
        ScoreSchema {
            unit_id: "unit_id".into(),
            patient_id: "patient_id".into(),
            outcome: "outcome".into(),
            arm: "arm".into(),
            trial_tag: "trial_tag".into(),
            models: None,
        }
    }
}

impl ScoreSchema {
    pub fn with_models<I: IntoIterator<Item = S>, S: Into<String>>(models: I) -> Self {
        ScoreSchema { models: Some(models.into_iter().map(Into::into).collect()), ..Default::default() }
    }

    /// Schema for covariate-only files: no score columns.
    pub fn covariates_only() -> Self {
        Self::with_models(Vec::<String>::new())
    }
}

struct Table {
    path: PathBuf,
    header: Vec<String>,
    index: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Table, IoError> {
        let file = File::open(path).map_err(file_err(path))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let csv_err = |e: csv::Error| IoError::Csv { path: path.to_path_buf(), message: e.to_string() };
        let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
        if header.iter().all(String::is_empty) {
            return Err(IoError::Csv { path: path.to_path_buf(), message: "header row is empty".into() });
        }
        let mut index = HashMap::new();
        for (i, h) in header.iter().enumerate() {
            if index.insert(h.clone(), i).is_some() {
                return Err(IoError::Csv { path: path.to_path_buf(), message: format!("duplicate column '{h}'") });
            }
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Table { path: path.to_path_buf(), header, index, rows })
    }

    fn require(&self, column: &str) -> Result<usize, IoError> {
        self.index
            .get(column)
            .copied()
            .ok_or_else(|| IoError::MissingColumn { path: self.path.clone(), column: column.into() })
    }

    fn cell_err(&self, row: u64, column: usize, value: &str, expected: &'static str) -> IoError {
        IoError::Cell { path: self.path.clone(), row, column: self.header[column].clone(), value: value.into(), expected }
    }

    fn text<'r>(&self, rec: &'r csv::StringRecord, column: usize) -> &'r str {
        rec.get(column).unwrap_or("").trim()
    }

    fn required_text(&self, row: u64, rec: &csv::StringRecord, column: usize) -> Result<String, IoError> {
        let v = self.text(rec, column);
        if v.is_empty() {
            return Err(self.cell_err(row, column, v, "required value"));
        }
        Ok(v.to_string())
    }

    fn finite(&self, row: u64, rec: &csv::StringRecord, column: usize) -> Result<f64, IoError> {
        let v = self.text(rec, column);
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(self.cell_err(row, column, v, "finite real number")),
        }
    }

    fn binary(&self, row: u64, rec: &csv::StringRecord, column: usize) -> Result<Option<bool>, IoError> {
        match self.text(rec, column) {
            "" => Ok(None),
            "0" => Ok(Some(false)),
            "1" => Ok(Some(true)),
            v => Err(self.cell_err(row, column, v, "0 or 1")),
        }
    }
}

/// Loads a score table. Duplicate unit ids, unparseable cells and missing
/// required columns are errors that name the offending rows and columns.
pub fn load_scores(path: impl AsRef<Path>, schema: &ScoreSchema) -> Result<Vec<RiskRecord>, IoError> {
    let table = Table::read(path.as_ref())?;
    let id_col = table.require(&schema.unit_id)?;
    let optional = |name: &str| table.index.get(name).copied();
    let (patient_col, outcome_col, arm_col, tag_col) =
        (optional(&schema.patient_id), optional(&schema.outcome), optional(&schema.arm), optional(&schema.trial_tag));
    let reserved = [Some(id_col), patient_col, outcome_col, arm_col, tag_col];
    let model_cols: Vec<usize> = match &schema.models {
        Some(models) => models.iter().map(|m| table.require(m)).collect::<Result<_, _>>()?,
        None => (0..table.header.len()).filter(|i| !reserved.contains(&Some(*i))).collect(),
    };
    let covariate_cols: Vec<usize> =
        (0..table.header.len()).filter(|i| !reserved.contains(&Some(*i)) && !model_cols.contains(i)).collect();

    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, rec) in &table.rows {
        let row = *row;
        let unit_id = table.required_text(row, rec, id_col)?;
        if let Some(first) = seen.insert(unit_id.clone(), row) {
            return Err(IoError::DuplicateId { path: table.path.clone(), unit_id, first_row: first, second_row: row });
        }
        let mut r = RiskRecord::new(unit_id);
        for &c in &model_cols {
            r.scores.insert(table.header[c].clone(), table.finite(row, rec, c)?);
        }
        for &c in &covariate_cols {
            let v = table.text(rec, c);
            if v.is_empty() {
                continue;
            }
            let cov = match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Covariate::Numeric(x),
                Ok(_) => return Err(table.cell_err(row, c, v, "finite number or category label")),
                Err(_) => Covariate::Categorical(v.to_string()),
            };
            r.covariates.insert(table.header[c].clone(), cov);
        }
        let text = |c: Option<usize>| c.map(|c| table.text(rec, c)).filter(|v| !v.is_empty()).map(str::to_string);
        r.patient_id = text(patient_col);
        r.trial_tag = text(tag_col);
        if let Some(c) = outcome_col {
            r.outcome = table.binary(row, rec, c)?;
        }
        if let Some(c) = arm_col {
            r.arm = table.binary(row, rec, c)?.map(|t| if t { Arm::Treatment } else { Arm::Control });
        }
        out.push(r);
    }
    Ok(out)
}

/// Loads covariate rows (an id column plus covariates) for balance checks.
pub fn load_covariates(path: impl AsRef<Path>) -> Result<Vec<RiskRecord>, IoError> {
    load_scores(path, &ScoreSchema::covariates_only())
}

/// Loads analysed trial records: `unit_id, stratum (C|D), arm (0|1), outcome (0|1)`
/// and an optional `source (legacy|new)` column defaulting to `new`.
pub fn load_trial_records(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>, IoError> {
    let table = Table::read(path.as_ref())?;
    let [id, stratum, arm, outcome] = ["unit_id", "stratum", "arm", "outcome"].map(|c| table.require(c));
    let (id, stratum, arm, outcome) = (id?, stratum?, arm?, outcome?);
    let source = table.index.get("source").copied();
    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, rec) in &table.rows {
        let row = *row;
        let unit_id = table.required_text(row, rec, id)?;
        if let Some(first) = seen.insert(unit_id.clone(), row) {
            return Err(IoError::DuplicateId { path: table.path.clone(), unit_id, first_row: first, second_row: row });
        }
        let s = match table.text(rec, stratum) {
            "C" | "c" => Stratum::C,
            "D" | "d" => Stratum::D,
            v => return Err(table.cell_err(row, stratum, v, "C or D")),
        };
        let required_binary = |c| table.binary(row, rec, c)?.ok_or_else(|| table.cell_err(row, c, "", "0 or 1"));
        let a = if required_binary(arm)? { Arm::Treatment } else { Arm::Control };
        let y = required_binary(outcome)?;
        let src = match source.map(|c| (c, table.text(rec, c))) {
            None | Some((_, "")) | Some((_, "new")) => Source::New,
            Some((_, "legacy")) => Source::Legacy,
            Some((c, v)) => return Err(table.cell_err(row, c, v, "legacy or new")),
        };
        out.push(TrialRecord { unit_id, stratum: s, arm: a, outcome: y, source: src });
    }
    Ok(out)
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    let mut s = String::new();
    File::open(path).map_err(file_err(path))?.read_to_string(&mut s).map_err(file_err(path))?;
    Ok(s)
}

/// Parses a versioned JSON document, accepting a missing or `"1"` schema version.
pub fn parse_versioned<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if let Value::Object(map) = &mut value {
        match map.remove("schema_version") {
            None => {}
            Some(Value::String(v)) if v == SCHEMA_VERSION => {}
            Some(other) => return Err(format!("unsupported schema_version {other} (expected \"1\")")),
        }
    }
    serde_json::from_value(value).map_err(|e| e.to_string())
}

/// Loads a JSON document of type `T` from `path`.
pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, IoError> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_versioned(&text).map_err(|message| IoError::Json { path: path.to_path_buf(), message })
}

/// Loads and validates a design spec.
pub fn load_design_spec(path: impl AsRef<Path>) -> Result<DesignSpec, IoError> {
    let spec: DesignSpec = load_json(path)?;
    spec.validate()?;
    Ok(spec)
}

/// Loads and validates a simulation scenario.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<SimScenario, IoError> {
    let scenario: SimScenario = load_json(path)?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_checklist_statuses(path: impl AsRef<Path>) -> Result<ChecklistStatuses, IoError> {
    load_json(path)
}

/// Rounds to 10 significant digits.
pub fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.9e}").parse().expect("formatted float parses")
}

fn canonical_number(n: &serde_json::Number) -> String {
    if n.is_f64() {
        let x = round_significant(n.as_f64().expect("f64 number"));
        if x == x.trunc() && x.abs() < 1e15 {
            format!("{x:.1}")
        } else {
            format!("{x}")
        }
    } else {
        n.to_string()
    }
}

fn write_canonical(value: &Value, out: &mut String, indent: usize) {
    let pad = |out: &mut String, n: usize| out.extend(std::iter::repeat_n("  ", n));
    match value {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&value.to_string()),
        Value::Number(n) => out.push_str(&canonical_number(n)),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, v) in items.iter().enumerate() {
                pad(out, indent + 1);
                write_canonical(v, out, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let sorted: BTreeMap<&String, &Value> = map.iter().collect();
            out.push_str("{\n");
            for (i, (k, v)) in sorted.iter().enumerate() {
                pad(out, indent + 1);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_canonical(v, out, indent + 1);
                out.push_str(if i + 1 < sorted.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

/// Canonical JSON text: sorted keys, 10-significant-digit floats, and a
/// top-level `schema_version` when the document is an object.
pub fn to_canonical_json<T: Serialize + ?Sized>(obj: &T) -> String {
    let mut value = serde_json::to_value(obj).expect("report types serialize to JSON");
    if let Value::Object(map) = &mut value {
        map.insert("schema_version".into(), Value::String(SCHEMA_VERSION.into()));
    } else {
        let mut map = Map::new();
        map.insert("schema_version".into(), Value::String(SCHEMA_VERSION.into()));
        map.insert("data".into(), value);
        value = Value::Object(map);
    }
    let mut out = String::new();
    write_canonical(&value, &mut out, 0);
    out.push('\n');
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    File::create(path).and_then(|mut f| f.write_all(bytes)).map_err(file_err(path))
}

/// Writes `obj` as canonical JSON.
pub fn write_report<T: Serialize + ?Sized>(obj: &T, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_bytes(path.as_ref(), to_canonical_json(obj).as_bytes())
}

fn csv_float(x: f64) -> String {
    if x.is_finite() {
        format!("{}", round_significant(x))
    } else {
        String::new()
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| IoError::Csv { path: path.to_path_buf(), message: e.to_string() };
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Csv { path: path.to_path_buf(), message: e.to_string() })?;
    write_bytes(path, &bytes)
}

pub fn write_curve_csv(curve: &[CurvePoint], path: impl AsRef<Path>) -> Result<(), IoError> {
    write_rows(
        path.as_ref(),
        &["q", "cr12", "cr21"],
        curve.iter().map(|p| vec![csv_float(p.q), csv_float(p.cr12.value()), csv_float(p.cr21.value())]),
    )
}

pub fn write_trace_csv(trace: &[TraceRow], path: impl AsRef<Path>) -> Result<(), IoError> {
    let opt = |x: Option<f64>| x.map_or(String::new(), csv_float);
    write_rows(
        path.as_ref(),
        &["replicate", "delta_hat", "variance", "rejected", "reused", "recruited"],
        trace.iter().map(|t| {
            vec![
                t.replicate.to_string(),
                opt(t.delta_hat),
                opt(t.variance),
                (t.rejected as u8).to_string(),
                t.reused.to_string(),
                t.recruited.to_string(),
            ]
        }),
    )
}

pub fn write_sensitivity_csv(points: &[SensitivityPoint], path: impl AsRef<Path>) -> Result<(), IoError> {
    write_rows(
        path.as_ref(),
        &["value", "n2", "n2_prime", "savings"],
        points.iter().map(|p| {
            vec![csv_float(p.value), p.n2.to_string(), p.n2_prime.to_string(), p.savings.map_or(String::new(), csv_float)]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_rounding() {
        assert_eq!(round_significant(20389.645274), 20389.64527);
        assert_eq!(round_significant(0.1 + 0.2), 0.3);
        assert_eq!(round_significant(-1.23456789012e-7), -1.234567890e-7);
    }

    #[test]
    fn canonical_json_is_sorted_and_versioned() {
        #[derive(Serialize)]
        struct Doc {
            zeta: f64,
            alpha: u64,
        }
        let text = to_canonical_json(&Doc { zeta: 0.1 + 0.2, alpha: 3 });
        assert_eq!(text, "{\n  \"alpha\": 3,\n  \"schema_version\": \"1\",\n  \"zeta\": 0.3\n}\n");
    }

    #[test]
    fn integral_floats_keep_a_decimal_point() {
        let text = to_canonical_json(&serde_json::json!({"x": 2851500.0}));
        assert!(text.contains("\"x\": 2851500.0"));
    }

    #[test]
    fn rejects_other_schema_versions() {
        let r: Result<BTreeMap<String, u64>, _> = parse_versioned(r#"{"schema_version": "2"}"#);
        assert!(r.is_err());
    }
}
