//! Experiment runner: config, bounded-concurrency execution over
//! instances × repetitions, resumable run logs, ablations and n-sweeps.
//!
//! Output directory layout:
//!
//! - `runs.jsonl`: append-only run log keyed by (config hash, instance, rep)
//! - `results.jsonl`: one aggregated row per config hash
//! - `results.csv`, `results.md`: reports over every row in `results.jsonl`
//! - `failures.jsonl`: instances that errored in the latest run
//! - `ablation.{csv,md}`, `sweep_n.{csv,md}`: comparison tables

mod report;
mod runlog;

pub use report::{emit_report, read_results, upsert_result, write_report, ReportFormat, ResultRow};
pub use runlog::{read_log, LogLine, RunLog};

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{Backend, BackendError, MockBackend, MockScript, ModelProfile, OpenAiClient};
use crate::corpus::{load_dataset, CorpusError, Dataset, TaskKind};
use crate::metrics::{aggregate, MacroF1Options, MetricError};
use crate::par::{self, Execution};
use crate::pipeline::{gold_map, Module, Pipeline, PipelineConfig, PipelineError, Repetition, Strategy};
use crate::prompting::Prompter;
use crate::retrieval::ContextStrategy;
use crate::rng::derive_seed;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("config: {0}")]
    Config(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

fn default_k() -> usize {
    1
}
fn default_n() -> usize {
    2
}
fn default_true() -> bool {
    true
}
fn default_max_interventions() -> u32 {
    2
}
fn default_ngram() -> usize {
    3
}
fn default_max_tokens() -> u32 {
    4096
}
fn default_model() -> String {
    "deepseek-ai/DeepSeek-R1-Distill-Llama-8B".to_string()
}
fn default_api_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}
fn default_reps() -> u32 {
    3
}
fn default_workers() -> usize {
    4
}
fn default_strategy() -> Strategy {
    Strategy::R2p
}

/// Everything needed to run one experiment. Mirrors the CLI flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    /// Context selection; bm25 when `k > 0` and unset, none when `k == 0`.
    #[serde(default)]
    pub retrieval: Option<ContextStrategy>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub use_hrt: Option<bool>,
    #[serde(default)]
    pub use_rpi: Option<bool>,
    #[serde(default)]
    pub use_srm: Option<bool>,
    #[serde(default)]
    pub classification_vote: bool,
    #[serde(default = "default_true")]
    pub srm_keep_hrt: bool,
    #[serde(default = "default_max_interventions")]
    pub max_interventions: u32,
    #[serde(default = "default_ngram")]
    pub overlap_ngram: usize,
    #[serde(default)]
    pub pag_profile_limit: Option<usize>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_true")]
    pub reasoning_model: bool,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub backend_url: Option<String>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub mock_script: Option<PathBuf>,
    pub dataset: PathBuf,
    /// Number of users to sample; all users when unset.
    #[serde(default)]
    pub users: Option<usize>,
    #[serde(default)]
    pub user_seed: u64,
    #[serde(default = "default_reps")]
    pub reps: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub out: PathBuf,
    #[serde(default = "default_true")]
    pub f1_skip_absent_labels: bool,
}

impl ExperimentConfig {
    pub fn new(task: TaskKind, strategy: Strategy, dataset: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        let mut value = serde_json::json!({
            "task": task,
            "dataset": dataset.into(),
            "out": out.into(),
        });
        value["strategy"] = serde_json::to_value(strategy).expect("strategy serializes");
        serde_json::from_value(value).expect("defaults deserialize")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.reps == 0 {
            return Err(HarnessError::Config("reps must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(HarnessError::Config("workers must be at least 1".into()));
        }
        self.pipeline_config().validate()?;
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let mut p = PipelineConfig::new(self.strategy, self.k, self.n);
        if let Some(r) = self.retrieval {
            p.retrieval = r;
        }
        if let Some(v) = self.use_hrt {
            p.use_hrt = v;
        }
        if let Some(v) = self.use_rpi {
            p.use_rpi = v;
        }
        if let Some(v) = self.use_srm {
            p.use_srm = v;
        }
        p.classification_vote = self.classification_vote;
        p.srm_keep_hrt = self.srm_keep_hrt;
        p.max_interventions = self.max_interventions;
        p.verify.overlap_ngram = self.overlap_ngram;
        p.pag_profile_limit = self.pag_profile_limit;
        p.max_tokens = self.max_tokens;
        p
    }

    pub fn model_profile(&self) -> ModelProfile {
        let m = ModelProfile::new(self.model.clone(), self.reasoning_model);
        match self.temperature {
            Some(t) => m.with_temperature(t),
            None => m,
        }
    }

    pub fn rep_seeds(&self) -> Vec<Repetition> {
        (0..self.reps)
            .map(|i| Repetition {
                index: i,
                seed: derive_seed(self.seed, "rep", u64::from(i)),
            })
            .collect()
    }

    /// Stable identity of everything that affects results. Worker count,
    /// output directory and the API key variable are excluded; the dataset
    /// and mock script enter by content digest.
    pub fn config_hash(&self) -> Result<String, HarnessError> {
        let digest = |p: &Path| -> Result<String, HarnessError> {
            let bytes = std::fs::read(p).map_err(|e| HarnessError::io(p, e))?;
            Ok(hex::encode(Sha256::digest(&bytes)))
        };
        let identity = serde_json::json!({
            "task": self.task,
            "pipeline": self.pipeline_config(),
            "model": self.model_profile(),
            "reps": self.reps,
            "seed": self.seed,
            "users": self.users,
            "user_seed": self.user_seed,
            "f1_skip_absent_labels": self.f1_skip_absent_labels,
            "dataset": digest(&self.dataset)?,
            "backend": match (&self.mock_script, &self.backend_url) {
                (Some(script), _) => format!("mock:{}", digest(script)?),
                (None, Some(url)) => format!("live:{url}"),
                (None, None) => "none".to_string(),
            },
        });
        let bytes = serde_json::to_vec(&identity).expect("config identity serializes");
        Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
    }

    pub fn build_backend(&self) -> Result<Box<dyn Backend>, HarnessError> {
        if let Some(script) = &self.mock_script {
            return Ok(Box::new(MockBackend::new(MockScript::from_file(script)?)));
        }
        if let Some(url) = &self.backend_url {
            let key = std::env::var(&self.api_key_env).ok();
            return Ok(Box::new(OpenAiClient::new(url, key)));
        }
        Err(HarnessError::Config(
            "either a mock script or a backend URL is required".into(),
        ))
    }

    pub fn load_data(&self) -> Result<Dataset, HarnessError> {
        let ds = load_dataset(&self.dataset, self.task)?;
        Ok(match self.users {
            Some(count) => ds.sample_users(count, self.user_seed)?,
            None => ds,
        })
    }

    fn runs_path(&self) -> PathBuf {
        self.out.join("runs.jsonl")
    }

    fn results_path(&self) -> PathBuf {
        self.out.join("results.jsonl")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub config_hash: String,
    pub instance_id: String,
    pub rep: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub config_hash: String,
    /// Present once every instance × rep has a logged record.
    pub row: Option<ResultRow>,
    pub executed: usize,
    pub skipped: usize,
    pub failures: Vec<Failure>,
    pub status: RunStatus,
}

/// Runs `config` with the backend it names.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    let backend = config.build_backend()?;
    run_experiment_with(config, backend.as_ref())
}

/// Runs every missing (instance, rep) pair for `config`, logs each record,
/// and writes the aggregated row once the log is complete.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    backend: &dyn Backend,
) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    let dataset = config.load_data()?;
    if dataset.is_empty() {
        return Err(HarnessError::Config("dataset has no instances".into()));
    }
    let hash = config.config_hash()?;
    let pipeline_cfg = config.pipeline_config();
    let model = config.model_profile();
    let prompter = Prompter::default();
    let pipeline = Pipeline::new(&pipeline_cfg, &prompter, backend, &model)?;

    std::fs::create_dir_all(&config.out).map_err(|e| HarnessError::io(&config.out, e))?;
    let runs_path = config.runs_path();
    let done: HashSet<(String, u32)> = read_log(&runs_path)
        .map_err(|e| HarnessError::io(&runs_path, e))?
        .into_iter()
        .filter(|l| l.config_hash == hash)
        .map(|l| (l.instance_id, l.rep))
        .collect();

    let mut work = Vec::new();
    let mut skipped = 0;
    for rep in config.rep_seeds() {
        for inst in &dataset.instances {
            if done.contains(&(inst.instance_id.clone(), rep.index)) {
                skipped += 1;
            } else {
                work.push((inst, rep));
            }
        }
    }
    log::info!(
        "config {hash}: {} to run, {skipped} already logged, {} workers",
        work.len(),
        config.workers
    );

    let log = RunLog::open(&runs_path).map_err(|e| HarnessError::io(&runs_path, e))?;
    let results = par::map(&work, Execution::with_workers(config.workers), |(inst, rep)| {
        let fail = |error: String| Failure {
            config_hash: hash.clone(),
            instance_id: inst.instance_id.clone(),
            rep: rep.index,
            error,
        };
        match pipeline.run_instance(inst, *rep) {
            Ok(record) => log
                .append(&LogLine {
                    config_hash: hash.clone(),
                    instance_id: inst.instance_id.clone(),
                    rep: rep.index,
                    gold: inst.gold.clone(),
                    record,
                })
                .map_err(|e| fail(format!("writing run log: {e}"))),
            Err(e) => Err(fail(e.to_string())),
        }
    });
    let failures: Vec<Failure> = results.into_iter().filter_map(Result::err).collect();
    if !failures.is_empty() {
        write_failures(&config.out.join("failures.jsonl"), &failures)?;
    }

    let records: Vec<_> = read_log(&runs_path)
        .map_err(|e| HarnessError::io(&runs_path, e))?
        .into_iter()
        .filter(|l| l.config_hash == hash)
        .map(|l| l.record)
        .collect();
    let expected = dataset.len() * config.reps as usize;
    let row = if records.len() == expected {
        let eval = aggregate(
            config.task,
            &records,
            &gold_map(&dataset.instances),
            config.reps,
            MacroF1Options {
                skip_absent_labels: config.f1_skip_absent_labels,
            },
        )?;
        let row = ResultRow {
            config_hash: hash.clone(),
            task: config.task,
            strategy: pipeline_cfg.strategy,
            retrieval: pipeline_cfg.retrieval,
            k: pipeline_cfg.k,
            n: pipeline_cfg.n,
            use_hrt: pipeline_cfg.use_hrt,
            use_rpi: pipeline_cfg.use_rpi,
            use_srm: pipeline_cfg.use_srm,
            classification_vote: pipeline_cfg.classification_vote,
            model: model.name.clone(),
            metrics: eval.per_metric,
            mean_tokens: eval.mean_completion_tokens,
            reps: config.reps,
            n_instances: eval.n_instances,
        };
        upsert_result(config.results_path(), &row)?;
        let all = read_results(config.results_path())?;
        write_report(&all, ReportFormat::Csv, config.out.join("results.csv"))?;
        write_report(&all, ReportFormat::Markdown, config.out.join("results.md"))?;
        Some(row)
    } else {
        None
    };

    let status = match (failures.is_empty(), records.is_empty()) {
        (true, _) => RunStatus::Complete,
        (false, true) => RunStatus::Failed,
        (false, false) => RunStatus::Partial,
    };
    Ok(ExperimentOutcome {
        config_hash: hash,
        row,
        executed: work.len() - failures.len(),
        skipped,
        failures,
        status,
    })
}

fn write_failures(path: &Path, failures: &[Failure]) -> Result<(), HarnessError> {
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    for fail in failures {
        let mut line = serde_json::to_vec(fail).expect("failures serialize");
        line.push(b'\n');
        f.write_all(&line).map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(())
}

/// Variant name and config for the full pipeline and each single-module ablation.
pub fn ablation_variants(base: &ExperimentConfig) -> Result<Vec<(&'static str, ExperimentConfig)>, HarnessError> {
    if base.strategy != Strategy::R2p {
        return Err(HarnessError::Config("ablation needs strategy r2p".into()));
    }
    let mut full = base.clone();
    full.use_hrt = Some(true);
    full.use_rpi = Some(true);
    full.use_srm = Some(true);
    let without = |m: Module| {
        let mut c = full.clone();
        match m {
            Module::Hrt => c.use_hrt = Some(false),
            Module::Rpi => c.use_rpi = Some(false),
            Module::Srm => c.use_srm = Some(false),
        }
        c
    };
    Ok(vec![
        ("full", full.clone()),
        ("-hrt", without(Module::Hrt)),
        ("-rpi", without(Module::Rpi)),
        ("-srm", without(Module::Srm)),
    ])
}

fn comparison_tables(out: &Path, stem: &str, outcomes: &[ExperimentOutcome]) -> Result<(), HarnessError> {
    let rows: Vec<ResultRow> = outcomes.iter().filter_map(|o| o.row.clone()).collect();
    if rows.is_empty() {
        return Ok(());
    }
    write_report(&rows, ReportFormat::Csv, out.join(format!("{stem}.csv")))?;
    write_report(&rows, ReportFormat::Markdown, out.join(format!("{stem}.md")))
}

/// Full pipeline plus −HRT, −RPI and −SRM, in that order.
pub fn run_ablation(base: &ExperimentConfig) -> Result<Vec<ExperimentOutcome>, HarnessError> {
    let backend = base.build_backend()?;
    run_ablation_with(base, backend.as_ref())
}

pub fn run_ablation_with(
    base: &ExperimentConfig,
    backend: &dyn Backend,
) -> Result<Vec<ExperimentOutcome>, HarnessError> {
    let outcomes = ablation_variants(base)?
        .into_iter()
        .map(|(_, cfg)| run_experiment_with(&cfg, backend))
        .collect::<Result<Vec<_>, _>>()?;
    comparison_tables(&base.out, "ablation", &outcomes)?;
    Ok(outcomes)
}

pub const DEFAULT_N_SWEEP: [usize; 4] = [0, 1, 2, 3];

/// One experiment per reference count.
pub fn run_n_sweep(base: &ExperimentConfig, n_values: &[usize]) -> Result<Vec<ExperimentOutcome>, HarnessError> {
    let backend = base.build_backend()?;
    run_n_sweep_with(base, n_values, backend.as_ref())
}

pub fn run_n_sweep_with(
    base: &ExperimentConfig,
    n_values: &[usize],
    backend: &dyn Backend,
) -> Result<Vec<ExperimentOutcome>, HarnessError> {
    if n_values.is_empty() {
        return Err(HarnessError::Config("n sweep needs at least one value".into()));
    }
    let outcomes = n_values
        .iter()
        .map(|&n| {
            let mut cfg = base.clone();
            cfg.n = n;
            run_experiment_with(&cfg, backend)
        })
        .collect::<Result<Vec<_>, _>>()?;
    comparison_tables(&base.out, "sweep_n", &outcomes)?;
    Ok(outcomes)
}
