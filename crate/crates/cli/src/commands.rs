//! Subcommands. Every failure is reported as one JSON line on stderr:
//! `{"error":"<kind>","message":"..."}`; usage errors exit with 2, all
//! other failures with 1.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use factsteer::decoding::DecodeMode;
use factsteer::eval::{
    load_cases, record_baselines, save_cases, write_report, write_sweep_csv, CaseFormat, Harness, HarnessSettings,
    SweepParameter,
};
use factsteer::memory::{MemoryStore, NewFact};
use factsteer::selector::{accuracy, build_training_pairs, split_cases, train, TrainOptions};
use factsteer::synth::{generate, SynthConfig};
use factsteer::{Error, Result};
use serde_json::json;

use crate::config::{EngineConfig, Overrides};
use crate::engine::{build_embedder, build_lm, build_scorer, AskOptions, Engine};

#[derive(Debug, Parser)]
#[command(
    name = "factsteer",
    version,
    about = "Edit facts a language model answers with, without retraining it"
)]
pub struct Cli {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Engine settings; each flag beats the config file.
#[derive(Debug, Args)]
pub struct EngineArgs {
    /// TOML engine configuration.
    #[arg(long, global = true, env = "FACTSTEER_CONFIG")]
    pub config: Option<PathBuf>,
    /// Fact journal (line-delimited JSON).
    #[arg(long, global = true)]
    pub memory: Option<PathBuf>,
    /// Use the toy language model described by this JSON spec.
    #[arg(long, global = true)]
    pub toy_spec: Option<PathBuf>,
    /// Selector parameters produced by `train-selector`.
    #[arg(long, global = true)]
    pub scorer_params: Option<PathBuf>,
    /// Prior-suppression weight.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// contrast-full or target-suppress.
    #[arg(long, global = true)]
    pub mode: Option<DecodeMode>,
    /// Facts retrieved per query.
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    /// Selection threshold in (0, 1).
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Concurrent query evaluations.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub max_answer_tokens: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Append facts to memory and print their ids.
    Edit(EditArgs),
    /// Answer one query with the edited memory.
    Ask(AskArgs),
    /// Run a sequential editing evaluation or a parameter sweep.
    Eval(EvalArgs),
    /// Train selector parameters from evaluation cases.
    TrainSelector(TrainArgs),
    /// Serve the engine over HTTP.
    Serve(ServeArgs),
    /// Write a synthetic toy model and case file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EditArgs {
    #[arg(long, required_unless_present = "import", conflicts_with = "import")]
    pub subject: Option<String>,
    #[arg(long, required_unless_present = "import")]
    pub relation: Option<String>,
    /// Object being replaced, if known.
    #[arg(long)]
    pub old: Option<String>,
    #[arg(long, required_unless_present = "import")]
    pub new: Option<String>,
    /// Sentence stored for retrieval; rendered from the other fields when absent.
    #[arg(long)]
    pub surface: Option<String>,
    /// Line-delimited JSON with subject, relation, old_object, new_object.
    #[arg(long)]
    pub import: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    pub query: String,
    /// Write the full decode trace as JSON to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long, default_value = "canonical")]
    pub format: CaseFormat,
    /// Edit counts at which to record the scaling curve.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Vec<usize>,
    /// Record the curve every N edits.
    #[arg(long, conflicts_with = "checkpoints")]
    pub every: Option<usize>,
    #[arg(long, requires = "values")]
    pub sweep: Option<SweepParameter>,
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Directory for summary.json, records.csv and sweep.csv.
    #[arg(long, default_value = "eval-report")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long, default_value = "canonical")]
    pub format: CaseFormat,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Negative facts sampled per positive query.
    #[arg(long, default_value_t = 1)]
    pub negatives: usize,
    /// Fraction of cases kept out of training for the accuracy report.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub cases: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.3)]
    pub hard: f64,
    #[arg(long, default_value_t = 0.3)]
    pub distractor: f64,
    /// Directory for toy.json and cases.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

impl EngineArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            memory: self.memory.clone(),
            toy_spec: self.toy_spec.clone(),
            scorer_params: self.scorer_params.clone(),
            alpha: self.alpha,
            mode: self.mode,
            top_k: self.top_k,
            threshold: self.threshold,
            workers: self.workers,
            max_answer_tokens: self.max_answer_tokens,
        }
    }

    pub fn resolve(&self) -> Result<EngineConfig> {
        let file = self.config.as_deref().map(EngineConfig::load).transpose()?;
        EngineConfig::resolve(file, &self.overrides())
    }
}

fn report_error(kind: &str, message: &str) {
    let line = json!({ "error": kind, "message": message });
    eprintln!("{line}");
}

/// Parse arguments and run; never panics on bad input.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            report_error("usage", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        // The reader went away (`| head`); nothing left to report to.
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::from(1)
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    writeln!(out, "{text}").map_err(io_err(Path::new("<stdout>")))
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Edit(args) => edit(&cli.engine, args, out),
        Command::Ask(args) => ask(&cli.engine, args, out),
        Command::Eval(args) => eval(&cli.engine, args, out),
        Command::TrainSelector(args) => train_selector(args, out),
        Command::Serve(args) => {
            let engine = Engine::open(cli.engine.resolve()?)?;
            crate::serve::serve_blocking(Arc::new(engine), &args.addr, out)
        }
        Command::Synth(args) => synth(args, out),
    }
}

fn read_facts(path: &Path) -> Result<Vec<NewFact>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                location: format!("{}:{}", path.display(), i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

fn edit(engine: &EngineArgs, args: &EditArgs, out: &mut dyn Write) -> Result<()> {
    let config = engine.resolve()?;
    let path = config
        .memory
        .ok_or_else(|| Error::Config("edit needs a memory journal; pass --memory or set `memory`".into()))?;
    let facts = match &args.import {
        Some(file) => read_facts(file)?,
        None => {
            let mut fact = NewFact::new(
                args.subject.as_deref().unwrap_or_default(),
                args.relation.as_deref().unwrap_or_default(),
                args.old.as_deref(),
                args.new.as_deref().unwrap_or_default(),
            );
            fact.surface_text = args.surface.clone();
            vec![fact]
        }
    };
    let mut store = MemoryStore::open(&path)?;
    for fact in facts {
        let stored = store.append(fact)?;
        write_out(out, &stored.fact_id)?;
    }
    Ok(())
}

fn ask(engine: &EngineArgs, args: &AskArgs, out: &mut dyn Write) -> Result<()> {
    let engine = Engine::open(engine.resolve()?)?;
    let (answer, trace) = engine.ask(&args.query, &AskOptions::default())?;
    if let Some(path) = &args.trace {
        let text = serde_json::to_string_pretty(&trace).expect("trace serializes");
        fs::write(path, text + "\n").map_err(io_err(path))?;
    }
    write_out(out, &answer)
}

fn checkpoints(args: &EvalArgs, cases: usize) -> Result<Vec<usize>> {
    match args.every {
        Some(0) => Err(Error::Config("--every must be at least 1".into())),
        Some(n) => Ok((1..=cases / n).map(|i| i * n).collect()),
        None => Ok(args.checkpoints.clone()),
    }
}

fn eval(engine: &EngineArgs, args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let config = engine.resolve()?;
    let cases = load_cases(&args.cases, args.format)?;
    let lm = build_lm(&config)?;
    let scorer = build_scorer(&config)?;
    let harness = Harness {
        lm: lm.as_ref(),
        embedder: build_embedder(&config)?,
        scorer: scorer.as_ref(),
        settings: HarnessSettings {
            plan: config.decode.clone(),
            top_k: config.top_k,
            threshold: config.threshold,
            workers: config.workers,
        },
    };
    let baselines = record_baselines(lm.as_ref(), &cases, config.decode.max_answer_tokens)?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    match args.sweep {
        Some(parameter) => {
            let rows = harness.sweep(parameter, &args.values, &cases, &baselines)?;
            let path = args.out.join("sweep.csv");
            write_sweep_csv(&rows, &path)?;
            for row in &rows {
                write_out(out, &serde_json::to_string(row).expect("row serializes"))?;
            }
        }
        None => {
            let report = harness.run_sequential(&cases, &baselines, &checkpoints(args, cases.len())?)?;
            let (summary, _) = write_report(&report, &args.out)?;
            let text = fs::read_to_string(&summary).map_err(io_err(&summary))?;
            write_out(out, text.trim_end())?;
        }
    }
    Ok(())
}

fn train_selector(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cases = load_cases(&args.cases, args.format)?;
    let (train_cases, held_cases) = split_cases(&cases, args.holdout, args.seed)?;
    let pairs = build_training_pairs(&train_cases, args.negatives, args.seed)?;
    let options = TrainOptions {
        epochs: args.epochs,
        learning_rate: args.lr,
        batch_size: args.batch_size,
        seed: args.seed,
    };
    let outcome = train(&pairs, &options)?;
    outcome.params.save(&args.out)?;
    let held_accuracy = if held_cases.len() >= 2 {
        let held = build_training_pairs(&held_cases, args.negatives, args.seed)?;
        Some(accuracy(&outcome.params, &held, 0.5)?)
    } else {
        None
    };
    let line = json!({
        "params": args.out,
        "train_pairs": pairs.len(),
        "initial_loss": outcome.initial_loss,
        "final_loss": outcome.final_loss(),
        "train_accuracy": accuracy(&outcome.params, &pairs, 0.5)?,
        "heldout_accuracy": held_accuracy,
    });
    write_out(out, &line.to_string())
}

fn synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let suite = generate(&SynthConfig {
        cases: args.cases,
        hard_fraction: args.hard,
        distractor_fraction: args.distractor,
        seed: args.seed,
    })?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let spec = args.out.join("toy.json");
    suite.spec.save(&spec)?;
    let cases = args.out.join("cases.jsonl");
    save_cases(&cases, &suite.cases)?;
    write_out(out, &spec.display().to_string())?;
    write_out(out, &cases.display().to_string())
}
