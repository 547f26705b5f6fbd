use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use llmgate::{LlmEndpoint, PromptMode};

use crate::benchmark::BenchmarkRecipe;
use crate::commands::*;
use crate::config::{apply_overrides, load_run_config, read_toml, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "ctxclf", version, about = "Entity context classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command that reads a run configuration. Each one
/// overrides the field of the same name in the `--config` file.
#[derive(Debug, Clone, Default, Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    arm: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    augmentation: Option<PathBuf>,
    #[arg(long)]
    review: Option<PathBuf>,
    #[arg(long)]
    cap_fraction: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    peak_lr: Option<f64>,
    #[arg(long)]
    warmup_fraction: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    chunk_size: Option<usize>,
    #[arg(long)]
    target_train_accuracy: Option<f64>,
    #[arg(long)]
    head_hidden_dim: Option<usize>,
    /// Any other field, dotted for nested tables: `--set encoder.layers=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

fn path_value(p: &std::path::Path) -> String {
    quoted(&p.to_string_lossy())
}

fn parse_sets(sets: &[String]) -> Result<Vec<(String, String)>> {
    sets.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Usage(format!("--set {s:?}: expected KEY=VALUE")))
        })
        .collect()
}

impl RunArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut o: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        push("task", self.task.as_deref().map(quoted));
        push("model", self.model.as_deref().map(quoted));
        push("arm", self.arm.as_deref().map(quoted));
        push("seed", self.seed.map(|v| v.to_string()));
        push("corpus", self.corpus.as_deref().map(path_value));
        push("vocab", self.vocab.as_deref().map(path_value));
        push("out", self.out.as_deref().map(path_value));
        push("augmentation", self.augmentation.as_deref().map(path_value));
        push("review", self.review.as_deref().map(path_value));
        push("cap_fraction", self.cap_fraction.map(toml_f64));
        push("max_len", self.max_len.map(|v| v.to_string()));
        push("batch_size", self.batch_size.map(|v| v.to_string()));
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("peak_lr", self.peak_lr.map(toml_f64));
        push("warmup_fraction", self.warmup_fraction.map(toml_f64));
        push("weight_decay", self.weight_decay.map(toml_f64));
        push("chunk_size", self.chunk_size.map(|v| v.to_string()));
        push("target_train_accuracy", self.target_train_accuracy.map(toml_f64));
        push("head_hidden_dim", self.head_hidden_dim.map(|v| v.to_string()));
        o.extend(parse_sets(&self.set)?);
        Ok(o)
    }

    fn load(&self) -> Result<RunConfig> {
        if let Some(a) = &self.arm {
            a.parse::<crate::config::Arm>()?;
        }
        load_run_config(self.config.as_deref(), &self.overrides()?)
    }
}

fn toml_f64(v: f64) -> String {
    toml::Value::Float(v).to_string()
}

#[derive(Debug, Clone, Args)]
struct EndpointArgs {
    /// Base URL of an OpenAI-compatible API, e.g. http://host:8000/v1.
    #[arg(long)]
    endpoint_url: String,
    #[arg(long, default_value = "default")]
    llm_model: String,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long, default_value_t = 4)]
    max_parallel: usize,
    #[arg(long, default_value_t = 60.0)]
    timeout_secs: f64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long, default_value_t = 1000)]
    retry_base_ms: u64,
}

impl EndpointArgs {
    fn endpoint(&self, temperature: f64) -> Result<LlmEndpoint> {
        let mut ep = LlmEndpoint::new(self.endpoint_url.clone(), self.llm_model.clone());
        ep.api_key_env = self.api_key_env.clone();
        ep.max_parallel = self.max_parallel;
        ep.timeout_secs = self.timeout_secs;
        ep.temperature = temperature;
        ep.retry.max_retries = self.max_retries;
        ep.retry.base_delay_ms = self.retry_base_ms;
        ep.validate()?;
        Ok(ep)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate an annotation corpus and print per-task class counts.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Write a synthetic benchmark corpus with controlled imbalance and noise.
    MakeBenchmark {
        /// TOML benchmark recipe.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        cue_noise: Option<f64>,
        /// Label only this task, with --counts per class.
        #[arg(long, requires = "counts")]
        task: Option<String>,
        #[arg(long, value_delimiter = ',', requires = "task")]
        counts: Option<Vec<usize>>,
    },
    /// Write the stratified train/test manifest for a task.
    Split(RunArgs),
    /// Train one arm and write checkpoint and reports into --out.
    Train(RunArgs),
    /// Score a checkpoint on its train or test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic minority candidates; --out names the JSONL file.
    Augment {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        endpoint: EndpointArgs,
        /// Lines requested per prompt.
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        prompts: usize,
    },
    /// Classify the held-out split with an LLM; --out names the report file.
    LlmClassify {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        endpoint: EndpointArgs,
        #[arg(long, default_value = "zero")]
        mode: String,
        /// Keep the first rendered prompt in the report.
        #[arg(long)]
        prompt_audit: bool,
    },
    /// Compare report files of one task.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also write the CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn write_or_print(out: Option<&std::path::Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| crate::error::io_err(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn recipe_from(
    config: Option<&std::path::Path>,
    seed: Option<u64>,
    noise: Option<f64>,
    task: Option<&str>,
    counts: Option<&[usize]>,
) -> Result<BenchmarkRecipe> {
    let mut overrides = Vec::new();
    if let Some(s) = seed {
        overrides.push(("seed".to_string(), s.to_string()));
    }
    if let Some(n) = noise {
        overrides.push(("cue_noise".to_string(), toml_f64(n)));
    }
    let table = apply_overrides(read_toml(config)?, &overrides)?;
    let mut recipe: BenchmarkRecipe = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Input(format!("benchmark recipe: {e}")))?;
    if let (Some(t), Some(c)) = (task, counts) {
        let name: textprep::TaskName = t.parse().map_err(|e: textprep::Error| CliError::Usage(e.to_string()))?;
        recipe = BenchmarkRecipe::single(name, c.to_vec(), recipe.cue_noise, recipe.seed);
    }
    recipe.validate()?;
    Ok(recipe)
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest { corpus } => {
            let report = cmd_ingest(&corpus)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::MakeBenchmark { config, out, seed, cue_noise, task, counts } => {
            let recipe = recipe_from(config.as_deref(), seed, cue_noise, task.as_deref(), counts.as_deref())?;
            let docs = cmd_make_benchmark(&recipe, &out)?;
            println!("wrote {} documents to {}", docs.len(), out.display());
        }
        Command::Split(args) => {
            let cfg = args.load()?;
            let m = cmd_split(&cfg)?;
            if cfg.out.is_none() {
                println!("{}", serde_json::to_string_pretty(&m)?);
            } else {
                println!("train {:?} test {:?}", m.train_counts, m.test_counts);
            }
        }
        Command::Train(args) => {
            let cfg = args.load()?;
            let art = cmd_train(&cfg)?;
            print!("{}", art.table);
            println!("checkpoint {}", art.checkpoint.display());
        }
        Command::Eval { checkpoint, corpus, split, out } => {
            let side: SplitSide = split.parse()?;
            let report = cmd_eval(&checkpoint, corpus.as_deref(), side)?;
            write_or_print(out.as_deref(), &report.to_json())?;
        }
        Command::Augment { run, endpoint, count, prompts } => {
            let cfg = run.load()?;
            let out = cfg.out_dir()?.to_path_buf();
            let ep = endpoint.endpoint(llmgate::GENERATE_TEMPERATURE)?;
            let o = cmd_augment(&cfg, &ep, count, prompts, &out)?;
            println!(
                "{} candidates ({} unparsed lines, {} duplicates, {} failed prompts); review {}",
                o.candidates,
                o.skipped_lines,
                o.duplicates,
                o.failed_prompts,
                o.review_path.display()
            );
        }
        Command::LlmClassify { run, endpoint, mode, prompt_audit } => {
            let cfg = run.load()?;
            let mode: PromptMode = mode.parse()?;
            let ep = endpoint.endpoint(llmgate::CLASSIFY_TEMPERATURE)?;
            let report = cmd_llm_classify(&cfg, &ep, mode, prompt_audit)?;
            write_or_print(cfg.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
            if cfg.out.is_some() {
                print!("{}", trainkit::render_table(&[(report.label.clone(), &report.eval)]));
            }
        }
        Command::Report { reports, csv } => {
            let cmp = cmd_report(&reports)?;
            print!("{}", cmp.table());
            if let Some(p) = csv {
                std::fs::write(&p, cmp.csv()).map_err(|e| crate::error::io_err(&p, e))?;
            }
        }
    }
    Ok(())
}

/// Parses arguments and runs one command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ctxclf: {e}");
            e.exit_code()
        }
    }
}
