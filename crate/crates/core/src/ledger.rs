//! Persistent store of hyperparameter/accuracy observations.
//!
//! On disk a ledger is one JSON document:
//! `{"schema_version": 1, "records": [ {...}, ... ]}` where every record has
//! exactly the keys `uid`, `model_id`, `task`, `epochs`, `learning_rate`,
//! `momentum`, `batch_size`, `accuracy`, `source`, `cycle` and `created_at`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::space::HyperparameterSet;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("duplicate uid `{0}`")]
    DuplicateUid(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("record {index} (uid `{uid}`): {message}")]
    RecordInvariant {
        index: usize,
        uid: String,
        message: String,
    },
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Version { found: u64 },
    #[error("import mapping references field `{source_field}` (for `{target}`) absent from every row")]
    MappingField { target: String, source_field: String },
    #[error("import mapping is missing target field `{0}`")]
    MappingIncomplete(String),
}

impl LedgerError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn parse(err: serde_json::Error) -> Self {
        Self::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ImageClassification,
    TextGeneration,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::ImageClassification => "image_classification",
            Task::TextGeneration => "text_generation",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "image_classification" => Ok(Task::ImageClassification),
            "text_generation" => Ok(Task::TextGeneration),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// Where an observation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Tpe,
    Random,
    /// Validated suggestion from the k-th fine-tuning cycle.
    LlmCycle(u32),
    Manual,
    Import,
}

impl Source {
    fn tag(self) -> &'static str {
        match self {
            Source::Tpe => "tpe",
            Source::Random => "random",
            Source::LlmCycle(_) => "llm_cycle",
            Source::Manual => "manual",
            Source::Import => "import",
        }
    }

    fn cycle(self) -> u32 {
        match self {
            Source::LlmCycle(k) => k,
            _ => 0,
        }
    }

    fn from_parts(tag: &str, cycle: u32) -> Result<Self, String> {
        let source = match tag {
            "tpe" => Source::Tpe,
            "random" => Source::Random,
            "manual" => Source::Manual,
            "import" => Source::Import,
            "llm_cycle" if cycle >= 1 => Source::LlmCycle(cycle),
            "llm_cycle" => return Err("llm_cycle source requires cycle >= 1".into()),
            other => return Err(format!("unknown source `{other}`")),
        };
        if !matches!(source, Source::LlmCycle(_)) && cycle != 0 {
            return Err(format!("cycle must be 0 for source `{tag}`"));
        }
        Ok(source)
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::LlmCycle(k) => write!(f, "llm_cycle_{k}"),
            other => f.write_str(other.tag()),
        }
    }
}

impl std::str::FromStr for Source {
    type Err = String;

    /// Accepts the display form (`tpe`, `llm_cycle_2`, ...).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix("llm_cycle_") {
            Some(k) => {
                let k: u32 = k.parse().map_err(|_| format!("bad cycle in `{s}`"))?;
                Source::from_parts("llm_cycle", k)
            }
            None => Source::from_parts(s, 0),
        }
    }
}

/// One observed (hyperparameters, accuracy) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord", into = "RawRecord")]
pub struct TrialRecord {
    pub uid: String,
    pub model_id: String,
    pub task: Task,
    pub epochs: u32,
    pub params: HyperparameterSet,
    pub accuracy: f64,
    pub source: Source,
    pub created_at: DateTime<Utc>,
}

static UID_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Timestamp plus a process-wide counter.
pub fn generate_uid() -> String {
    let nanos = Utc::now().timestamp_nanos_opt().unwrap_or_default();
    let n = UID_COUNTER.fetch_add(1, Ordering::Relaxed);
    format!("{nanos:016x}-{n:06x}")
}

impl TrialRecord {
    /// A new record with a fresh uid and the current time.
    pub fn new(
        model_id: impl Into<String>,
        task: Task,
        epochs: u32,
        params: HyperparameterSet,
        accuracy: f64,
        source: Source,
    ) -> Self {
        Self {
            uid: generate_uid(),
            model_id: model_id.into(),
            task,
            epochs,
            params,
            accuracy,
            source,
            created_at: Utc::now(),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.uid.is_empty() {
            return Err("uid must be non-empty".into());
        }
        if self.model_id.is_empty() {
            return Err("model_id must be non-empty".into());
        }
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(format!("accuracy {} outside [0, 1]", self.accuracy));
        }
        if self.epochs < 1 {
            return Err("epochs must be >= 1".into());
        }
        let p = &self.params;
        if !(p.learning_rate.is_finite() && p.learning_rate > 0.0) {
            return Err(format!("learning_rate {} must be positive", p.learning_rate));
        }
        if !p.momentum.is_finite() {
            return Err(format!("momentum {} must be finite", p.momentum));
        }
        if p.batch_size < 1 {
            return Err(format!("batch_size {} must be >= 1", p.batch_size));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    uid: String,
    model_id: String,
    task: Task,
    epochs: u32,
    learning_rate: f64,
    momentum: f64,
    batch_size: i64,
    accuracy: f64,
    source: String,
    cycle: u32,
    created_at: String,
}

impl TryFrom<RawRecord> for TrialRecord {
    type Error = String;

    fn try_from(raw: RawRecord) -> Result<Self, Self::Error> {
        let created_at = DateTime::parse_from_rfc3339(&raw.created_at)
            .map_err(|e| format!("created_at `{}`: {e}", raw.created_at))?
            .with_timezone(&Utc);
        Ok(TrialRecord {
            uid: raw.uid,
            model_id: raw.model_id,
            task: raw.task,
            epochs: raw.epochs,
            params: HyperparameterSet::new(raw.learning_rate, raw.momentum, raw.batch_size),
            accuracy: raw.accuracy,
            source: Source::from_parts(&raw.source, raw.cycle)?,
            created_at,
        })
    }
}

impl From<TrialRecord> for RawRecord {
    fn from(r: TrialRecord) -> Self {
        RawRecord {
            uid: r.uid,
            model_id: r.model_id,
            task: r.task,
            epochs: r.epochs,
            learning_rate: r.params.learning_rate,
            momentum: r.params.momentum,
            batch_size: r.params.batch_size,
            accuracy: r.accuracy,
            source: r.source.tag().into(),
            cycle: r.source.cycle(),
            created_at: r.created_at.to_rfc3339_opts(SecondsFormat::AutoSi, true),
        }
    }
}

/// Selects records by model, epochs and optionally source. Unset fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupKey {
    pub model_id: Option<String>,
    pub epochs: Option<u32>,
    pub source: Option<Source>,
}

impl GroupKey {
    pub fn new(model_id: impl Into<String>, epochs: u32) -> Self {
        Self {
            model_id: Some(model_id.into()),
            epochs: Some(epochs),
            source: None,
        }
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = Some(source);
        self
    }

    pub fn matches(&self, r: &TrialRecord) -> bool {
        self.model_id.as_deref().is_none_or(|m| m == r.model_id)
            && self.epochs.is_none_or(|e| e == r.epochs)
            && self.source.is_none_or(|s| s == r.source)
    }
}

/// Append-only list of trial records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ledger {
    records: Vec<TrialRecord>,
    uids: HashSet<String>,
}

#[derive(Serialize)]
struct LedgerDocRef<'a> {
    schema_version: u32,
    records: &'a [TrialRecord],
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn schema_version(&self) -> u32 {
        SCHEMA_VERSION
    }

    pub fn append(&mut self, record: TrialRecord) -> Result<(), LedgerError> {
        record.check().map_err(LedgerError::InvalidRecord)?;
        if self.uids.contains(&record.uid) {
            return Err(LedgerError::DuplicateUid(record.uid));
        }
        self.uids.insert(record.uid.clone());
        self.records.push(record);
        Ok(())
    }

    /// Records matching `key`, in ledger order.
    pub fn filter(&self, key: &GroupKey) -> Vec<&TrialRecord> {
        self.records.iter().filter(|r| key.matches(r)).collect()
    }

    pub fn to_json(&self) -> String {
        let doc = LedgerDocRef {
            schema_version: SCHEMA_VERSION,
            records: &self.records,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("ledger serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, LedgerError> {
        let doc: Value = serde_json::from_str(text).map_err(LedgerError::parse)?;
        let records = match doc {
            // a bare array is accepted as a version-less record list
            Value::Array(items) => items,
            Value::Object(mut map) => {
                match map.get("schema_version").and_then(Value::as_u64) {
                    Some(v) if v == SCHEMA_VERSION as u64 => {}
                    Some(found) => return Err(LedgerError::Version { found }),
                    None => {
                        return Err(LedgerError::Parse {
                            line: 1,
                            column: 1,
                            message: "missing integer field `schema_version`".into(),
                        })
                    }
                }
                match map.remove("records") {
                    Some(Value::Array(items)) => items,
                    _ => {
                        return Err(LedgerError::Parse {
                            line: 1,
                            column: 1,
                            message: "missing array field `records`".into(),
                        })
                    }
                }
            }
            _ => {
                return Err(LedgerError::Parse {
                    line: 1,
                    column: 1,
                    message: "expected a JSON object or array".into(),
                })
            }
        };

        let mut ledger = Ledger::new();
        for (index, item) in records.into_iter().enumerate() {
            let uid = item
                .get("uid")
                .and_then(Value::as_str)
                .unwrap_or("?")
                .to_string();
            let record: TrialRecord =
                serde_json::from_value(item).map_err(|e| LedgerError::RecordInvariant {
                    index,
                    uid: uid.clone(),
                    message: e.to_string(),
                })?;
            record
                .check()
                .map_err(|message| LedgerError::RecordInvariant {
                    index,
                    uid: uid.clone(),
                    message,
                })?;
            ledger.append(record).map_err(|e| LedgerError::RecordInvariant {
                index,
                uid,
                message: e.to_string(),
            })?;
        }
        Ok(ledger)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LedgerError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| LedgerError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| LedgerError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Loads `path`, or returns an empty ledger when the file does not exist.
    pub fn load_or_default(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref();
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }
}

/// Target fields an import mapping must name.
pub const IMPORT_FIELDS: [&str; 6] = [
    "model_id",
    "epochs",
    "learning_rate",
    "momentum",
    "batch_size",
    "accuracy",
];

/// `{"target_field": "source_field", ...}`. Optional target `task` selects the
/// task column; rows without it default to image classification.
pub type FieldMapping = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ImportOutcome {
    pub ledger: Ledger,
    pub rejections: Vec<Rejection>,
}

pub fn import_external(
    path: impl AsRef<Path>,
    mapping: &FieldMapping,
) -> Result<ImportOutcome, LedgerError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| LedgerError::io(path, e))?;
    let rows: Vec<serde_json::Map<String, Value>> =
        serde_json::from_str(&text).map_err(LedgerError::parse)?;
    import_rows(&rows, mapping)
}

pub fn import_rows(
    rows: &[serde_json::Map<String, Value>],
    mapping: &FieldMapping,
) -> Result<ImportOutcome, LedgerError> {
    for target in IMPORT_FIELDS {
        let Some(source_field) = mapping.get(target) else {
            return Err(LedgerError::MappingIncomplete(target.into()));
        };
        if !rows.is_empty() && rows.iter().all(|r| !r.contains_key(source_field)) {
            return Err(LedgerError::MappingField {
                target: target.into(),
                source_field: source_field.clone(),
            });
        }
    }

    let mut out = ImportOutcome::default();
    for (row_index, row) in rows.iter().enumerate() {
        match import_row(row, mapping) {
            Ok(record) => {
                if let Err(e) = out.ledger.append(record) {
                    out.rejections.push(Rejection {
                        row: row_index,
                        reason: e.to_string(),
                    });
                }
            }
            Err(reason) => out.rejections.push(Rejection {
                row: row_index,
                reason,
            }),
        }
    }
    Ok(out)
}

fn import_row(
    row: &serde_json::Map<String, Value>,
    mapping: &FieldMapping,
) -> Result<TrialRecord, String> {
    let field = |target: &str| -> Result<&Value, String> {
        let source = &mapping[target];
        row.get(source)
            .ok_or_else(|| format!("missing field `{source}`"))
    };
    let number = |target: &str| -> Result<f64, String> {
        let v = field(target)?;
        v.as_f64()
            .ok_or_else(|| format!("field `{}` is not a number: {v}", mapping[target]))
    };
    let integer = |target: &str| -> Result<i64, String> {
        let v = field(target)?;
        v.as_i64()
            .ok_or_else(|| format!("field `{}` is not an integer: {v}", mapping[target]))
    };

    let model_id = match field("model_id")? {
        Value::String(s) => s.clone(),
        other => return Err(format!("model field is not a string: {other}")),
    };
    let task = match mapping.get("task").and_then(|src| row.get(src)) {
        Some(Value::String(s)) => s.parse()?,
        Some(other) => return Err(format!("task field is not a string: {other}")),
        None => Task::ImageClassification,
    };
    let epochs = integer("epochs")?;
    let epochs = u32::try_from(epochs).map_err(|_| format!("epochs {epochs} out of range"))?;
    let record = TrialRecord::new(
        model_id,
        task,
        epochs,
        HyperparameterSet::new(
            number("learning_rate")?,
            number("momentum")?,
            integer("batch_size")?,
        ),
        number("accuracy")?,
        Source::Import,
    );
    record.check()?;
    Ok(record)
}
