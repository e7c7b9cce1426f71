use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use hpo_core::finetune::{expand_cycle, export_finetune_dataset, FinetuneError, ValidatedSuggestion};
use hpo_core::llmclient::{recommend_one_shot, HttpTransport};
use hpo_core::prompt::{classify_relevance, relevance_rate};
use hpo_core::runner::{random_search, tune};
use hpo_core::space::validate;
use hpo_core::stats::{aggregate_report, parse_group_by, write_csv, ReportTable};
use hpo_core::{
    paper_search_space, Budget, EndpointConfig, HyperparameterSet, Ledger, Objective,
    ObjectiveSpec, RelevanceClass, RunTarget, Task,
};

mod config;

use config::{read_json, FileConfig};

/// Marks errors caused by bad flags or configuration (exit code 2).
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl fmt::Display) -> anyhow::Error {
    anyhow::Error::new(UsageError(e.to_string()))
}

fn usage_chain(e: anyhow::Error) -> anyhow::Error {
    usage(format!("{e:#}"))
}

#[derive(Parser)]
#[command(name = "hpo", version, about = "Hyperparameter tuning, LLM recommendations and accuracy reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a TPE or random-search tuning loop and record every trial.
    Tune(TuneArgs),
    /// Ask a chat-completions endpoint for one-shot hyperparameters.
    Recommend(RecommendArgs),
    /// Evaluate pending suggestions and add them to the ledger as a cycle.
    Validate(ValidateArgs),
    /// Summarise ledger accuracies as RMSE with confidence intervals.
    Evaluate(EvaluateArgs),
    /// Write the ledger as an instruction-tuning JSONL file.
    ExportFinetune(ExportArgs),
    /// Classify raw model responses and report the relevance rate.
    Classify(ClassifyArgs),
}

#[derive(Args)]
struct ObjectiveArgs {
    /// `synthetic` or `cmd:PATH`
    #[arg(long)]
    objective: String,
    /// Extra argument passed before the hyperparameter flags (repeatable).
    #[arg(long = "objective-arg", allow_hyphen_values = true)]
    objective_args: Vec<String>,
    /// Gaussian noise added by the synthetic objective.
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    /// Per-evaluation timeout in seconds for `cmd:` objectives.
    #[arg(long)]
    eval_timeout: Option<f64>,
}

impl ObjectiveArgs {
    fn spec(&self, seed: u64) -> Result<ObjectiveSpec> {
        if self.objective == "synthetic" {
            if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
                return Err(usage(format!("--noise-sd {} must be >= 0", self.noise_sd)));
            }
            return Ok(ObjectiveSpec::SyntheticValley {
                noise_sd: self.noise_sd,
                seed,
            });
        }
        let Some(command) = self.objective.strip_prefix("cmd:").filter(|c| !c.is_empty()) else {
            return Err(usage(format!(
                "--objective `{}` must be `synthetic` or `cmd:PATH`",
                self.objective
            )));
        };
        let mut spec = ObjectiveSpec::subprocess(command, self.objective_args.clone());
        if let Some(secs) = self.eval_timeout {
            let ObjectiveSpec::Subprocess { timeout, .. } = &mut spec else {
                unreachable!()
            };
            *timeout = Duration::try_from_secs_f64(secs)
                .ok()
                .filter(|d| !d.is_zero())
                .ok_or_else(|| usage(format!("--eval-timeout {secs} must be positive")))?;
        }
        Ok(spec)
    }

    fn default_model_id(&self) -> String {
        match self.objective.strip_prefix("cmd:") {
            Some(cmd) => Path::new(cmd)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| cmd.to_string()),
            None => "synthetic".into(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampler {
    Tpe,
    Random,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    objective: ObjectiveArgs,
    /// Defaults to `synthetic` or the command's file stem.
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long, default_value = "image_classification")]
    task: Task,
    #[arg(long, default_value_t = 1)]
    epochs: u32,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Overrides `tpe.seed` from the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ledger: PathBuf,
    #[arg(long, value_enum, default_value = "tpe")]
    sampler: Sampler,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    target_accuracy: f64,
    /// JSON endpoint config; falls back to `endpoint` in --config.
    #[arg(long)]
    endpoint_config: Option<PathBuf>,
    /// Pending-suggestion file (JSON lines) to append to.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to the model file's stem.
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long, default_value = "image_classification")]
    task: Task,
    /// Number of independent queries.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    repeat: u32,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    suggestions: PathBuf,
    #[command(flatten)]
    objective: ObjectiveArgs,
    #[arg(long, default_value_t = 1)]
    epochs: u32,
    #[arg(long)]
    ledger: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    cycle: u32,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    ledger: PathBuf,
    #[arg(long, default_value = "model,epochs,source")]
    group_by: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write the rows as full-precision JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    ledger: PathBuf,
    /// Directory holding `<model_id>.txt` for every model in the ledger.
    #[arg(long)]
    model_codes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    /// JSON lines of the form `{"text": "..."}`.
    #[arg(long)]
    responses: PathBuf,
}

/// One line of the pending-suggestion file written by `recommend`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PendingSuggestion {
    model_id: String,
    #[serde(default = "default_task")]
    task: Task,
    target_accuracy: f64,
    learning_rate: f64,
    momentum: f64,
    batch_size: i64,
}

fn default_task() -> Task {
    Task::ImageClassification
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let config = FileConfig::load(path).map_err(usage_chain)?;
    config.tpe.validate().map_err(usage)?;
    config.template.check().map_err(usage)?;
    Ok(config)
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.tpe.seed = seed;
    }
    let budget = Budget::new(args.trials, args.epochs).map_err(usage)?;
    let spec = args.objective.spec(config.tpe.seed)?;
    let mut ledger = Ledger::load_or_default(&args.ledger)?;
    let space = paper_search_space();
    let target = RunTarget::new(
        args.model_id.unwrap_or_else(|| args.objective.default_model_id()),
        args.task,
    );
    let mut objective = Objective::new(spec);

    let result = match args.sampler {
        Sampler::Tpe => tune(&mut objective, &space, &config.tpe, budget, &mut ledger, &target),
        Sampler::Random => random_search(
            &mut objective,
            &space,
            budget,
            config.tpe.seed,
            &mut ledger,
            &target,
        ),
    };
    let summary = match result {
        Ok(summary) => summary,
        Err(e) => {
            ledger.save(&args.ledger)?;
            return Err(e.into());
        }
    };
    ledger.save(&args.ledger)?;
    for failure in &summary.failures {
        eprintln!("trial {} failed: {}", failure.index, failure.error);
    }

    let mut best = serde_json::to_value(&summary.best)?;
    if let Some(map) = best.as_object_mut() {
        map.remove("uid");
        map.remove("created_at");
    }
    println!("{best}");
    Ok(())
}

fn cmd_recommend(args: RecommendArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let endpoint: EndpointConfig = match (&args.endpoint_config, config.endpoint) {
        (Some(path), _) => read_json(path).map_err(usage_chain)?,
        (None, Some(endpoint)) => endpoint,
        (None, None) => return Err(usage("--endpoint-config is required")),
    };
    endpoint.validate().map_err(usage)?;
    if !(args.target_accuracy > 0.0 && args.target_accuracy <= 1.0) {
        return Err(usage(format!(
            "--target-accuracy {} must be in (0, 1]",
            args.target_accuracy
        )));
    }
    let code = fs::read_to_string(&args.model_file)
        .with_context(|| format!("reading {}", args.model_file.display()))
        .map_err(usage_chain)?;
    if code.trim().is_empty() {
        return Err(usage(format!("{} is empty", args.model_file.display())));
    }
    let model_id = match args.model_id {
        Some(id) => id,
        None => args
            .model_file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| usage("cannot derive --model-id from the model file name"))?,
    };

    let transport = HttpTransport::new()?;
    let space = paper_search_space();
    for _ in 0..args.repeat {
        let rec = recommend_one_shot(
            &transport,
            &code,
            args.target_accuracy,
            &endpoint,
            &config.template,
            &space,
        )?;
        println!("{}", serde_json::to_string(&rec)?);
        if let Some(out) = &args.out {
            let pending = PendingSuggestion {
                model_id: model_id.clone(),
                task: args.task,
                target_accuracy: args.target_accuracy,
                learning_rate: rec.params.learning_rate,
                momentum: rec.params.momentum,
                batch_size: rec.params.batch_size,
            };
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(out)
                .with_context(|| format!("opening {}", out.display()))?;
            writeln!(file, "{}", serde_json::to_string(&pending)?)?;
        }
    }
    Ok(())
}

fn read_pending(path: &Path) -> Result<Vec<PendingSuggestion>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| usage(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let spec = args.objective.spec(0)?;
    if args.epochs == 0 {
        return Err(usage("--epochs must be >= 1"));
    }
    let pending = read_pending(&args.suggestions)?;
    if pending.is_empty() {
        println!("no suggestions");
        return Ok(());
    }
    let mut ledger = Ledger::load_or_default(&args.ledger)?;
    let space = paper_search_space();
    let mut objective = Objective::new(spec);

    let mut evaluated = Vec::new();
    let mut origin = Vec::new();
    for (i, item) in pending.iter().enumerate() {
        let params = HyperparameterSet::new(item.learning_rate, item.momentum, item.batch_size);
        let report = validate(&params, &space);
        if !report.is_valid() {
            println!("#{} {} rejected: {report}", i + 1, item.model_id);
            continue;
        }
        match objective.evaluate(&params, args.epochs) {
            Ok(accuracy) => {
                println!(
                    "#{} {} target {:.4} measured {:.4}",
                    i + 1,
                    item.model_id,
                    item.target_accuracy,
                    accuracy
                );
                evaluated.push(ValidatedSuggestion {
                    model_id: item.model_id.clone(),
                    task: item.task,
                    epochs: args.epochs,
                    params,
                    measured_accuracy: accuracy,
                });
                origin.push(i);
            }
            Err(e) => println!("#{} {} failed: {e}", i + 1, item.model_id),
        }
    }

    let before = ledger.len();
    let rejections = expand_cycle(&mut ledger, &evaluated, args.cycle, &space)?;
    for r in &rejections {
        println!("#{} rejected: {}", origin[r.row] + 1, r.reason);
    }
    let added = ledger.len() - before;
    if added == 0 {
        bail!("all {} suggestions failed", pending.len());
    }
    ledger.save(&args.ledger)?;
    println!("added {added} record(s) as llm_cycle_{}", args.cycle);
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let fields = parse_group_by(&args.group_by).map_err(usage)?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage(format!("--alpha {} must be in (0, 1)", args.alpha)));
    }
    let ledger = Ledger::load(&args.ledger)?;
    let rows = aggregate_report(&ledger, &fields, args.alpha)?;
    if let Some(path) = &args.csv {
        let file =
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_csv(&rows, file)?;
    }
    if let Some(path) = &args.json {
        fs::write(path, serde_json::to_string_pretty(&rows)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{}", ReportTable(&rows));
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let ledger = Ledger::load(&args.ledger)?;
    let models: BTreeSet<&str> = ledger.records().iter().map(|r| r.model_id.as_str()).collect();
    let mut codes = HashMap::new();
    for model in models {
        let path = args.model_codes.join(format!("{model}.txt"));
        let code = fs::read_to_string(&path).map_err(|e| {
            usage(format!("no model code for `{model}` ({}: {e})", path.display()))
        })?;
        codes.insert(model.to_string(), code);
    }
    let count = export_finetune_dataset(&ledger, &codes, &config.template, &args.out)
        .map_err(|e| match e {
            FinetuneError::MissingModelCode(_) | FinetuneError::Prompt(_) => usage(e),
            other => other.into(),
        })?;
    println!("{count}");
    Ok(())
}

#[derive(Deserialize)]
struct ResponseLine {
    text: String,
}

fn cmd_classify(args: ClassifyArgs) -> Result<()> {
    let text = fs::read_to_string(&args.responses)
        .with_context(|| format!("reading {}", args.responses.display()))?;
    let space = paper_search_space();
    let mut classes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let response: ResponseLine = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", args.responses.display(), i + 1))?;
        classes.push(classify_relevance(&response.text, &space));
    }
    let rate = relevance_rate(&classes)
        .map_err(|_| anyhow!("{} holds no responses", args.responses.display()))?;
    let mut histogram: BTreeMap<RelevanceClass, usize> =
        RelevanceClass::ALL.iter().map(|c| (*c, 0)).collect();
    for c in &classes {
        *histogram.entry(*c).or_default() += 1;
    }
    for (class, count) in &histogram {
        println!("{:<16} {count}", class.to_string());
    }
    println!("total            {}", classes.len());
    println!("relevance rate: {rate:.4}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tune(args) => cmd_tune(args),
        Command::Recommend(args) => cmd_recommend(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::ExportFinetune(args) => cmd_export(args),
        Command::Classify(args) => cmd_classify(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
