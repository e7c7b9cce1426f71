//! Objective evaluation and the sequential tuning loops.
//!
//! An external training program is driven through a small process protocol:
//!
//! ```text
//! cmd [fixed_args...] --lr <decimal> --momentum <decimal> --batch-size <int> --epochs <int>
//! ```
//!
//! It must exit with status 0 and print `{"accuracy": <float in [0, 1]>}` as its
//! last non-empty stdout line. Standard error is captured for diagnostics only.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;
use thiserror::Error;

use crate::ledger::{Ledger, LedgerError, Source, Task, TrialRecord};
use crate::space::{paper_search_space, sample_uniform, validate, HyperparameterSet, SearchSpace};
use crate::stats::best_trial;
use crate::tpe::{suggest, TpeConfig, TpeError};

pub const DEFAULT_EVAL_TIMEOUT: Duration = Duration::from_secs(3600);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("hyperparameters outside the search space: {0}")]
    InvalidParams(String),
    #[error("failed to start `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("objective exited with {status}; output: {excerpt}")]
    NonZeroExit { status: String, excerpt: String },
    #[error("objective timed out after {0:?}")]
    Timeout(Duration),
    #[error("unparseable objective output: {excerpt}")]
    BadOutput { excerpt: String },
    #[error("objective reported accuracy {0} outside [0, 1]")]
    AccuracyOutOfRange(f64),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),
    #[error(transparent)]
    Tpe(#[from] TpeError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("invalid budget: {0}")]
    Budget(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    Subprocess {
        command: PathBuf,
        fixed_args: Vec<String>,
        timeout: Duration,
    },
    /// Closed-form accuracy surface with optional seeded Gaussian noise.
    SyntheticValley { noise_sd: f64, seed: u64 },
}

impl ObjectiveSpec {
    pub fn subprocess(command: impl Into<PathBuf>, fixed_args: Vec<String>) -> Self {
        ObjectiveSpec::Subprocess {
            command: command.into(),
            fixed_args,
            timeout: DEFAULT_EVAL_TIMEOUT,
        }
    }

    pub fn synthetic() -> Self {
        ObjectiveSpec::SyntheticValley {
            noise_sd: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub n_trials: usize,
    pub epochs: u32,
}

impl Budget {
    pub fn new(n_trials: usize, epochs: u32) -> Result<Self, RunError> {
        if n_trials == 0 {
            return Err(RunError::Budget("n_trials must be >= 1".into()));
        }
        if epochs == 0 {
            return Err(RunError::Budget("epochs must be >= 1".into()));
        }
        Ok(Self { n_trials, epochs })
    }
}

fn batch_factor(batch_size: i64) -> Option<f64> {
    Some(match batch_size {
        4 => 0.92,
        5 => 0.93,
        8 => 0.96,
        16 => 1.00,
        32 => 0.98,
        64 => 0.95,
        _ => return None,
    })
}

/// Epoch saturation term `1 - exp(-(epochs + 1) / 3)`.
pub fn epoch_factor(epochs: u32) -> f64 {
    1.0 - (-(epochs as f64 + 1.0) / 3.0).exp()
}

/// Noise-free synthetic accuracy: a log-Gaussian bump in learning rate centred
/// on 0.01, a quadratic penalty in momentum around 0.9, a batch-size table
/// peaking at 16 and an epoch saturation term. The optimum is
/// `epoch_factor(epochs)` at (0.01, 0.9, 16).
pub fn synthetic_accuracy(set: &HyperparameterSet, epochs: u32) -> Result<f64, EvalError> {
    let report = validate(set, &paper_search_space());
    if !report.is_valid() {
        return Err(EvalError::InvalidParams(report.to_string()));
    }
    let d = set.learning_rate.ln() - 0.01f64.ln();
    let g_lr = (-(d * d) / (2.0 * 1.5 * 1.5)).exp();
    let g_mom = 1.0 - 0.5 * (set.momentum - 0.9).powi(2);
    let g_batch = batch_factor(set.batch_size).expect("validated batch size");
    Ok((g_lr * g_mom * g_batch * epoch_factor(epochs)).clamp(0.0, 1.0))
}

/// A live objective; owns the noise stream of a noisy synthetic objective.
#[derive(Debug)]
pub struct Objective {
    spec: ObjectiveSpec,
    noise: Option<(Normal<f64>, ChaCha8Rng)>,
}

impl Objective {
    pub fn new(spec: ObjectiveSpec) -> Self {
        let noise = match &spec {
            ObjectiveSpec::SyntheticValley { noise_sd, seed } if *noise_sd > 0.0 => Some((
                Normal::new(0.0, *noise_sd).expect("finite positive sd"),
                ChaCha8Rng::seed_from_u64(*seed),
            )),
            _ => None,
        };
        Self { spec, noise }
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    pub fn evaluate(&mut self, set: &HyperparameterSet, epochs: u32) -> Result<f64, EvalError> {
        match &self.spec {
            ObjectiveSpec::SyntheticValley { .. } => {
                let acc = synthetic_accuracy(set, epochs)?;
                Ok(match &mut self.noise {
                    Some((dist, rng)) => (acc + dist.sample(rng)).clamp(0.0, 1.0),
                    None => acc,
                })
            }
            ObjectiveSpec::Subprocess {
                command,
                fixed_args,
                timeout,
            } => run_subprocess(command, fixed_args, set, epochs, *timeout),
        }
    }
}

fn excerpt(text: &str) -> String {
    const MAX: usize = 400;
    let trimmed = text.trim();
    if trimmed.chars().count() <= MAX {
        trimmed.to_string()
    } else {
        let tail: String = trimmed.chars().rev().take(MAX).collect();
        format!("...{}", tail.chars().rev().collect::<String>())
    }
}

fn drain<R: Read + Send + 'static>(mut pipe: R) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Accuracy from the last non-empty stdout line.
pub fn parse_objective_output(stdout: &str) -> Result<f64, EvalError> {
    let bad = || EvalError::BadOutput {
        excerpt: excerpt(stdout),
    };
    let last = stdout
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(bad)?;
    let doc: Value = serde_json::from_str(last.trim()).map_err(|_| bad())?;
    let acc = doc
        .as_object()
        .and_then(|o| o.get("accuracy"))
        .and_then(Value::as_f64)
        .ok_or_else(bad)?;
    if !(0.0..=1.0).contains(&acc) {
        return Err(EvalError::AccuracyOutOfRange(acc));
    }
    Ok(acc)
}

fn run_subprocess(
    command: &PathBuf,
    fixed_args: &[String],
    set: &HyperparameterSet,
    epochs: u32,
    timeout: Duration,
) -> Result<f64, EvalError> {
    let mut child = Command::new(command)
        .args(fixed_args)
        .arg("--lr")
        .arg(set.learning_rate.to_string())
        .arg("--momentum")
        .arg(set.momentum.to_string())
        .arg("--batch-size")
        .arg(set.batch_size.to_string())
        .arg("--epochs")
        .arg(epochs.to_string())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| EvalError::Spawn {
            command: command.display().to_string(),
            message: e.to_string(),
        })?;
    let stdout = drain(child.stdout.take().expect("piped stdout"));
    let stderr = drain(child.stderr.take().expect("piped stderr"));

    let deadline = Instant::now() + timeout;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(EvalError::Timeout(timeout));
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                return Err(EvalError::Spawn {
                    command: command.display().to_string(),
                    message: e.to_string(),
                })
            }
        }
    };
    let out = stdout.join().unwrap_or_default();
    let err = stderr.join().unwrap_or_default();
    if !status.success() {
        return Err(EvalError::NonZeroExit {
            status: status.to_string(),
            excerpt: excerpt(&format!("{out}\n{err}")),
        });
    }
    parse_objective_output(&out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub index: usize,
    pub params: HyperparameterSet,
    pub error: EvalError,
}

/// Result of one tuning run. Failed trials are kept here, never in the ledger.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub best: TrialRecord,
    pub recorded: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
}

/// Trial metadata shared by every record of a run.
#[derive(Debug, Clone)]
pub struct RunTarget {
    pub model_id: String,
    pub task: Task,
}

impl RunTarget {
    pub fn new(model_id: impl Into<String>, task: Task) -> Self {
        Self {
            model_id: model_id.into(),
            task,
        }
    }
}

fn run_loop(
    objective: &mut Objective,
    budget: Budget,
    ledger: &mut Ledger,
    target: &RunTarget,
    source: Source,
    mut next: impl FnMut(&[(HyperparameterSet, f64)]) -> Result<HyperparameterSet, RunError>,
) -> Result<RunSummary, RunError> {
    let mut history: Vec<(HyperparameterSet, f64)> = Vec::with_capacity(budget.n_trials);
    let mut recorded = Vec::new();
    let mut failures = Vec::new();
    for index in 0..budget.n_trials {
        let params = next(&history)?;
        match objective.evaluate(&params, budget.epochs) {
            Ok(accuracy) => {
                log::info!(
                    "trial {index}: lr={} momentum={} batch={} -> {accuracy:.6}",
                    params.learning_rate,
                    params.momentum,
                    params.batch_size
                );
                let record = TrialRecord::new(
                    target.model_id.clone(),
                    target.task,
                    budget.epochs,
                    params,
                    accuracy,
                    source,
                );
                ledger.append(record.clone())?;
                history.push((params, accuracy));
                recorded.push(record);
            }
            Err(error) => {
                log::warn!("trial {index} failed: {error}");
                failures.push(TrialFailure {
                    index,
                    params,
                    error,
                });
            }
        }
    }
    let best = best_trial(&recorded)
        .map_err(|_| RunError::AllTrialsFailed(budget.n_trials))?
        .clone();
    Ok(RunSummary {
        best,
        recorded,
        failures,
    })
}

/// Sequential TPE loop: suggest from this run's successful trials, evaluate,
/// record with source `tpe`.
pub fn tune(
    objective: &mut Objective,
    space: &SearchSpace,
    config: &TpeConfig,
    budget: Budget,
    ledger: &mut Ledger,
    target: &RunTarget,
) -> Result<RunSummary, RunError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_loop(objective, budget, ledger, target, Source::Tpe, |history| {
        Ok(suggest(history, space, config, &mut rng)?)
    })
}

/// Uniform random search baseline, recorded with source `random`.
pub fn random_search(
    objective: &mut Objective,
    space: &SearchSpace,
    budget: Budget,
    seed: u64,
    ledger: &mut Ledger,
    target: &RunTarget,
) -> Result<RunSummary, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_loop(objective, budget, ledger, target, Source::Random, |_| {
        Ok(sample_uniform(space, &mut rng))
    })
}
