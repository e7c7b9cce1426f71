//! Instruction-tuning export and feedback-cycle growth of the ledger.
//!
//! The export is JSON Lines, one `{"text": "<rendered example>"}` object per
//! ledger record, LF-terminated. The external fine-tuning step that consumes it
//! used LoRA with rank 32, alpha 16 and dropout 0.05 for 35 epochs; none of
//! those settings affect anything here.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::ledger::{Ledger, Rejection, Source, Task, TrialRecord};
use crate::prompt::{render_training_example, PromptError, PromptTemplate};
use crate::space::{validate, HyperparameterSet, SearchSpace};

#[derive(Debug, Error)]
pub enum FinetuneError {
    #[error("no model code for model_id `{0}`")]
    MissingModelCode(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cycle must be >= 1")]
    BadCycle,
}

#[derive(Serialize)]
struct Line<'a> {
    text: &'a str,
}

/// Renders every record; the result has one line per record.
pub fn render_finetune_dataset(
    ledger: &Ledger,
    model_code: &HashMap<String, String>,
    template: &PromptTemplate,
) -> Result<String, FinetuneError> {
    let mut out = String::new();
    for record in ledger.records() {
        let code = model_code
            .get(&record.model_id)
            .ok_or_else(|| FinetuneError::MissingModelCode(record.model_id.clone()))?;
        let text = render_training_example(record, code, template)?;
        out.push_str(&serde_json::to_string(&Line { text: &text }).expect("string serializes"));
        out.push('\n');
    }
    Ok(out)
}

/// Writes the JSONL export and returns the number of lines.
pub fn export_finetune_dataset(
    ledger: &Ledger,
    model_code: &HashMap<String, String>,
    template: &PromptTemplate,
    out_path: impl AsRef<Path>,
) -> Result<usize, FinetuneError> {
    let path = out_path.as_ref();
    let data = render_finetune_dataset(ledger, model_code, template)?;
    fs::write(path, data).map_err(|source| FinetuneError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(ledger.len())
}

/// A suggestion that has been trained and measured.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSuggestion {
    pub model_id: String,
    pub task: Task,
    pub epochs: u32,
    pub params: HyperparameterSet,
    pub measured_accuracy: f64,
}

/// Appends validated suggestions as `llm_cycle(cycle)` records. Invalid items
/// are reported and skipped; the rest are appended in order.
pub fn expand_cycle(
    ledger: &mut Ledger,
    validated: &[ValidatedSuggestion],
    cycle: u32,
    space: &SearchSpace,
) -> Result<Vec<Rejection>, FinetuneError> {
    if cycle == 0 {
        return Err(FinetuneError::BadCycle);
    }
    let mut rejections = Vec::new();
    for (row, item) in validated.iter().enumerate() {
        if !(0.0..=1.0).contains(&item.measured_accuracy) {
            rejections.push(Rejection {
                row,
                reason: format!("accuracy {} outside [0, 1]", item.measured_accuracy),
            });
            continue;
        }
        let report = validate(&item.params, space);
        if !report.is_valid() {
            rejections.push(Rejection {
                row,
                reason: report.to_string(),
            });
            continue;
        }
        let record = TrialRecord::new(
            item.model_id.clone(),
            item.task,
            item.epochs,
            item.params,
            item.measured_accuracy,
            Source::LlmCycle(cycle),
        );
        if let Err(e) = ledger.append(record) {
            rejections.push(Rejection {
                row,
                reason: e.to_string(),
            });
        }
    }
    Ok(rejections)
}
