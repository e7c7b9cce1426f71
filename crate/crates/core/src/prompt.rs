//! Prompt rendering for fine-tuning data and one-shot queries, and parsing of
//! model responses back into hyperparameters.
//!
//! A rendered document has three sections:
//!
//! ```text
//! <system prompt>
//!
//! ### Input:
//! <instruction with model code and target accuracy>
//!
//! ### Response:
//! <learning rate, momentum and batch size>
//! ```
//!
//! Queries stop right after the `### Response:` line.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::TrialRecord;
use crate::space::{validate, HyperparameterSet, SearchSpace, BATCH_SIZE, LEARNING_RATE, MOMENTUM};

pub const INPUT_HEADER: &str = "### Input:";
pub const RESPONSE_HEADER: &str = "### Response:";

pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a hyperparameter suggestion tool. Given a neural network implementation and a target accuracy, respond with learning rate, momentum, and batch size.";
pub const DEFAULT_INPUT_BODY: &str = "Suggest the learning rate, momentum, and batch size that would let the following model reach an accuracy of {target_accuracy}.\n\n{model_code}";
pub const DEFAULT_RESPONSE_BODY: &str =
    "learning rate: {learning_rate}\nmomentum: {momentum}\nbatch size: {batch_size}";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("template `{template}` is missing placeholder {{{placeholder}}}")]
    MissingPlaceholder {
        template: &'static str,
        placeholder: &'static str,
    },
    #[error("model code is empty")]
    EmptyModelCode,
    #[error("target accuracy {0} outside (0, 1]")]
    TargetOutOfRange(f64),
    #[error("relevance rate of an empty list")]
    NoResponses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplate {
    pub system_prompt: String,
    pub input_body_template: String,
    pub response_body_template: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            system_prompt: DEFAULT_SYSTEM_PROMPT.into(),
            input_body_template: DEFAULT_INPUT_BODY.into(),
            response_body_template: DEFAULT_RESPONSE_BODY.into(),
        }
    }
}

impl PromptTemplate {
    pub fn check(&self) -> Result<(), PromptError> {
        for placeholder in ["model_code", "target_accuracy"] {
            require(&self.input_body_template, "input_body_template", placeholder)?;
        }
        for placeholder in ["learning_rate", "momentum", "batch_size"] {
            require(&self.response_body_template, "response_body_template", placeholder)?;
        }
        Ok(())
    }

    fn head(&self, model_code: &str, target_accuracy: f64) -> String {
        let body = substitute(
            &self.input_body_template,
            &[
                ("model_code", model_code.to_string()),
                ("target_accuracy", format!("{target_accuracy:.4}")),
            ],
        );
        format!(
            "{}\n\n{INPUT_HEADER}\n{body}\n\n{RESPONSE_HEADER}\n",
            self.system_prompt
        )
    }

    pub fn response_body(&self, params: &HyperparameterSet) -> String {
        substitute(
            &self.response_body_template,
            &[
                ("learning_rate", format_learning_rate(params.learning_rate)),
                ("momentum", format!("{:.4}", params.momentum)),
                ("batch_size", params.batch_size.to_string()),
            ],
        )
    }
}

fn require(
    template: &str,
    name: &'static str,
    placeholder: &'static str,
) -> Result<(), PromptError> {
    if template.contains(&format!("{{{placeholder}}}")) {
        Ok(())
    } else {
        Err(PromptError::MissingPlaceholder {
            template: name,
            placeholder,
        })
    }
}

/// Single-pass `{name}` substitution; substituted text is never rescanned and
/// unknown `{...}` sequences are left as they are.
fn substitute(template: &str, values: &[(&str, String)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (v, close))
        });
        match hit {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Plain decimal notation rounded to 10 significant digits, trailing zeros trimmed.
pub fn format_learning_rate(lr: f64) -> String {
    if !lr.is_finite() {
        return lr.to_string();
    }
    let sci = format!("{lr:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    // value = 0.d1d2...d10 * 10^(exp + 1)
    let point = exp + 1;
    let mut s = if point <= 0 {
        format!("0.{}{digits}", "0".repeat((-point) as usize))
    } else if point as usize >= digits.len() {
        format!("{digits}{}", "0".repeat(point as usize - digits.len()))
    } else {
        let (int, frac) = digits.split_at(point as usize);
        format!("{int}.{frac}")
    };
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').trim_end_matches('.').len());
    }
    format!("{sign}{s}")
}

/// Full training document for one ledger record.
pub fn render_training_example(
    record: &TrialRecord,
    model_code: &str,
    template: &PromptTemplate,
) -> Result<String, PromptError> {
    template.check()?;
    if model_code.trim().is_empty() {
        return Err(PromptError::EmptyModelCode);
    }
    let mut doc = template.head(model_code, record.accuracy);
    doc.push_str(&template.response_body(&record.params));
    Ok(doc)
}

/// Query document ending at the response header, ready for completion.
pub fn render_query(
    model_code: &str,
    target_accuracy: f64,
    template: &PromptTemplate,
) -> Result<String, PromptError> {
    template.check()?;
    if model_code.trim().is_empty() {
        return Err(PromptError::EmptyModelCode);
    }
    if !(target_accuracy > 0.0 && target_accuracy <= 1.0) {
        return Err(PromptError::TargetOutOfRange(target_accuracy));
    }
    Ok(template.head(model_code, target_accuracy))
}

/// Text after the last `### Response:` header, or the whole text when absent.
pub fn response_section(document: &str) -> &str {
    match document.rfind(RESPONSE_HEADER) {
        Some(i) => document[i + RESPONSE_HEADER.len()..].trim_start_matches(['\r', '\n']),
        None => document,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSuggestion {
    pub params: HyperparameterSet,
    pub raw_text: String,
    /// Byte ranges of the learning rate, momentum and batch size numbers.
    pub spans: [Range<usize>; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("response lacks numeric values for {}", .missing.iter().cloned().collect::<Vec<_>>().join(", "))]
pub struct ParseFailure {
    pub found: BTreeSet<&'static str>,
    pub missing: BTreeSet<&'static str>,
}

const NUMBER: &str = r"([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)";

fn field_regex(labels: &str) -> Regex {
    Regex::new(&format!(r"(?i)\b(?:{labels})\b\s*(?:[:=]|\bis\b)?\s*{NUMBER}"))
        .expect("static regex")
}

static LR_RE: LazyLock<Regex> = LazyLock::new(|| field_regex(r"learning[ _]rate|lr"));
static MOMENTUM_RE: LazyLock<Regex> = LazyLock::new(|| field_regex(r"momentum"));
static BATCH_RE: LazyLock<Regex> = LazyLock::new(|| field_regex(r"batch[ _]size|batch"));

fn first_number(re: &Regex, text: &str) -> Option<(f64, Range<usize>)> {
    let caps = re.captures(text)?;
    let m = caps.get(1)?;
    let v: f64 = m.as_str().parse().ok()?;
    v.is_finite().then(|| (v, m.range()))
}

/// Extracts the first `label [:|=|is] number` statement for each field.
///
/// Labels are case-insensitive: `learning rate`/`learning_rate`/`lr`,
/// `momentum`, `batch size`/`batch_size`/`batch`. Batch sizes must be whole
/// numbers; a fractional batch counts as missing.
pub fn parse_response(text: &str) -> Result<ParsedSuggestion, ParseFailure> {
    let lr = first_number(&LR_RE, text);
    let momentum = first_number(&MOMENTUM_RE, text);
    let batch = first_number(&BATCH_RE, text)
        .filter(|(v, _)| v.fract() == 0.0 && v.abs() < 9.0e15);

    let mut found = BTreeSet::new();
    let mut missing = BTreeSet::new();
    for (name, present) in [
        (LEARNING_RATE, lr.is_some()),
        (MOMENTUM, momentum.is_some()),
        (BATCH_SIZE, batch.is_some()),
    ] {
        if present {
            found.insert(name);
        } else {
            missing.insert(name);
        }
    }
    match (lr, momentum, batch) {
        (Some((lr, lr_span)), Some((m, m_span)), Some((b, b_span))) => Ok(ParsedSuggestion {
            params: HyperparameterSet::new(lr, m, b as i64),
            raw_text: text.to_string(),
            spans: [lr_span, m_span, b_span],
        }),
        _ => Err(ParseFailure { found, missing }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceClass {
    Relevant,
    MissingNumeric,
    OutOfRange,
    ZeroBatch,
}

impl RelevanceClass {
    pub const ALL: [RelevanceClass; 4] = [
        RelevanceClass::Relevant,
        RelevanceClass::MissingNumeric,
        RelevanceClass::OutOfRange,
        RelevanceClass::ZeroBatch,
    ];
}

impl fmt::Display for RelevanceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelevanceClass::Relevant => "relevant",
            RelevanceClass::MissingNumeric => "missing_numeric",
            RelevanceClass::OutOfRange => "out_of_range",
            RelevanceClass::ZeroBatch => "zero_batch",
        })
    }
}

pub fn classify_parsed(
    parsed: &Result<ParsedSuggestion, ParseFailure>,
    space: &SearchSpace,
) -> RelevanceClass {
    match parsed {
        Err(_) => RelevanceClass::MissingNumeric,
        Ok(p) if p.params.batch_size == 0 => RelevanceClass::ZeroBatch,
        Ok(p) if !validate(&p.params, space).is_valid() => RelevanceClass::OutOfRange,
        Ok(_) => RelevanceClass::Relevant,
    }
}

pub fn classify_relevance(text: &str, space: &SearchSpace) -> RelevanceClass {
    classify_parsed(&parse_response(text), space)
}

pub fn relevance_rate(classes: &[RelevanceClass]) -> Result<f64, PromptError> {
    if classes.is_empty() {
        return Err(PromptError::NoResponses);
    }
    let relevant = classes
        .iter()
        .filter(|c| **c == RelevanceClass::Relevant)
        .count();
    Ok(relevant as f64 / classes.len() as f64)
}
