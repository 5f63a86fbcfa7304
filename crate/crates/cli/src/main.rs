use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use r2p_core::corpus::TaskKind;
use r2p_core::harness::{
    self, read_results, write_report, ExperimentConfig, ExperimentOutcome, ReportFormat, RunStatus,
    DEFAULT_N_SWEEP,
};
use r2p_core::pipeline::Strategy;
use r2p_core::retrieval::ContextStrategy;

#[derive(Parser)]
#[command(name = "r2p", version, about = "Personalized reasoning experiments over LaMP-style data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration over every instance and repetition.
    Run(ExperimentArgs),
    /// Run the full pipeline and the -hrt, -rpi, -srm variants.
    Ablate(ExperimentArgs),
    /// Run one configuration per candidate count.
    SweepN {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Candidate counts to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_N_SWEEP)]
        n_values: Vec<usize>,
    },
    /// Render a results.jsonl file as CSV or markdown.
    Report {
        /// results.jsonl written by a previous run.
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: String,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Every flag mirrors a key of the JSON config file; flags win.
#[derive(Args)]
struct ExperimentArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<TaskKind>,
    /// rag, pag, self-verify or r2p.
    #[arg(long)]
    strategy: Option<Strategy>,
    /// none, random or bm25.
    #[arg(long)]
    retrieval: Option<ContextStrategy>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    use_hrt: Option<bool>,
    #[arg(long)]
    use_rpi: Option<bool>,
    #[arg(long)]
    use_srm: Option<bool>,
    #[arg(long)]
    classification_vote: Option<bool>,
    #[arg(long)]
    srm_keep_hrt: Option<bool>,
    #[arg(long)]
    max_interventions: Option<u32>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    user_seed: Option<u64>,
    #[arg(long)]
    backend_url: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Treat the model as a non-reasoning model (default temperature 0).
    #[arg(long)]
    reasoning_model: Option<bool>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut map = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                match serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))? {
                    Value::Object(m) => m,
                    _ => bail!("{}: config must be a JSON object", path.display()),
                }
            }
            None => Map::new(),
        };
        let mut set = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                map.insert(key.to_string(), v);
            }
        };
        set("task", self.task.as_ref().map(|v| json!(v)));
        set("strategy", self.strategy.as_ref().map(|v| json!(v)));
        set("retrieval", self.retrieval.as_ref().map(|v| json!(v)));
        set("k", self.k.as_ref().map(|v| json!(v)));
        set("n", self.n.as_ref().map(|v| json!(v)));
        set("use_hrt", self.use_hrt.as_ref().map(|v| json!(v)));
        set("use_rpi", self.use_rpi.as_ref().map(|v| json!(v)));
        set("use_srm", self.use_srm.as_ref().map(|v| json!(v)));
        set("classification_vote", self.classification_vote.as_ref().map(|v| json!(v)));
        set("srm_keep_hrt", self.srm_keep_hrt.as_ref().map(|v| json!(v)));
        set("max_interventions", self.max_interventions.as_ref().map(|v| json!(v)));
        set("max_tokens", self.max_tokens.as_ref().map(|v| json!(v)));
        set("dataset", self.dataset.as_ref().map(|v| json!(v)));
        set("users", self.users.as_ref().map(|v| json!(v)));
        set("user_seed", self.user_seed.as_ref().map(|v| json!(v)));
        set("backend_url", self.backend_url.as_ref().map(|v| json!(v)));
        set("api_key_env", self.api_key_env.as_ref().map(|v| json!(v)));
        set("model", self.model.as_ref().map(|v| json!(v)));
        set("reasoning_model", self.reasoning_model.as_ref().map(|v| json!(v)));
        set("temperature", self.temperature.as_ref().map(|v| json!(v)));
        set("reps", self.reps.as_ref().map(|v| json!(v)));
        set("seed", self.seed.as_ref().map(|v| json!(v)));
        set("workers", self.workers.as_ref().map(|v| json!(v)));
        set("mock_script", self.mock_script.as_ref().map(|v| json!(v)));
        set("out", self.out.as_ref().map(|v| json!(v)));
        let config: ExperimentConfig =
            serde_json::from_value(Value::Object(map)).context("invalid experiment config")?;
        config.validate()?;
        Ok(config)
    }
}

fn summarize(outcome: &ExperimentOutcome) {
    eprintln!(
        "config {}: {} executed, {} resumed, {} failed",
        outcome.config_hash,
        outcome.executed,
        outcome.skipped,
        outcome.failures.len()
    );
    for f in outcome.failures.iter().take(5) {
        eprintln!("  {} rep {}: {}", f.instance_id, f.rep, f.error);
    }
    if let Some(row) = &outcome.row {
        let metrics: Vec<String> = row.metrics.iter().map(|(m, v)| format!("{m}={v:.4}")).collect();
        println!(
            "{} {} k={} n={} [{}] {} mean_tokens={:.2}",
            row.task,
            row.strategy,
            row.k,
            row.n,
            row.flags(),
            metrics.join(" "),
            row.mean_tokens
        );
    }
}

fn exit_status(outcomes: &[ExperimentOutcome]) -> ExitCode {
    if outcomes.iter().all(|o| o.status == RunStatus::Complete) {
        ExitCode::SUCCESS
    } else if outcomes.iter().all(|o| o.status == RunStatus::Failed) {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let outcomes = match cli.command {
        Command::Run(args) => vec![harness::run_experiment(&args.resolve()?)?],
        Command::Ablate(args) => harness::run_ablation(&args.resolve()?)?,
        Command::SweepN { exp, n_values } => harness::run_n_sweep(&exp.resolve()?, &n_values)?,
        Command::Report {
            results,
            format,
            output,
        } => {
            let format: ReportFormat = format.parse()?;
            let rows = read_results(&results)?;
            match output {
                Some(path) => write_report(&rows, format, path)?,
                None => print!("{}", harness::emit_report(&rows, format)?),
            }
            return Ok(ExitCode::SUCCESS);
        }
    };
    outcomes.iter().for_each(summarize);
    Ok(exit_status(&outcomes))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
