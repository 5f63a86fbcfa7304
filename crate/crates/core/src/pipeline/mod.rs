//! The per-instance state machine: retrieve, prompt, (template), generate,
//! verify and intervene, self-reference, answer. Baseline strategies share
//! the same session bookkeeping so every backend call lands in the record.

mod checklist;

pub use checklist::{
    derive_checklist, injection_sentence, intervene, verify, ChecklistItem, ChecklistReport,
    Detector, VerifyOptions, PROFILE_INJECTION,
};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    split_reasoning, Backend, BackendError, CallContext, GenRequest, GenResponse, ModelProfile,
    ReasoningOutput,
};
use crate::corpus::{ProfileEntry, TaskInstance};
use crate::prompting::{PromptBundle, PromptError, Prompter};
use crate::retrieval::{select_context, Bm25Params, ContextSelection, ContextStrategy, RetrievalError};
use crate::rng::derive_seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend failed on instance {}: {source}", partial.instance_id)]
    Backend {
        #[source]
        source: BackendError,
        partial: Box<RunRecord>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "rag")]
    Rag,
    #[serde(rename = "pag")]
    Pag,
    #[serde(rename = "self-verify")]
    SelfVerification,
    #[serde(rename = "r2p")]
    R2p,
}

impl Strategy {
    pub fn id(self) -> &'static str {
        match self {
            Strategy::Rag => "rag",
            Strategy::Pag => "pag",
            Strategy::SelfVerification => "self-verify",
            Strategy::R2p => "r2p",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Strategy {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rag" => Ok(Strategy::Rag),
            "pag" => Ok(Strategy::Pag),
            "self-verify" | "self-verification" | "self_verification" => {
                Ok(Strategy::SelfVerification)
            }
            "r2p" => Ok(Strategy::R2p),
            _ => Err(PipelineError::Config(format!("unknown strategy {s:?}"))),
        }
    }
}

/// A module that can be switched off for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Module {
    Hrt,
    Rpi,
    Srm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub strategy: Strategy,
    pub retrieval: ContextStrategy,
    /// Profile entries placed in the prompt.
    pub k: usize,
    /// Self-referencing candidates.
    pub n: usize,
    pub use_hrt: bool,
    pub use_rpi: bool,
    pub use_srm: bool,
    pub max_interventions: u32,
    pub classification_vote: bool,
    /// Keep the reasoning template in the synthesis request.
    pub srm_keep_hrt: bool,
    pub verify: VerifyOptions,
    /// Cap on profile entries summarized by the PAG baseline (top BM25).
    pub pag_profile_limit: Option<usize>,
    pub max_tokens: u32,
    pub bm25: Bm25Params,
}

impl PipelineConfig {
    /// Defaults for a strategy: r2p enables every module, other strategies
    /// none. Retrieval is bm25 when `k > 0`.
    pub fn new(strategy: Strategy, k: usize, n: usize) -> Self {
        let r2p = strategy == Strategy::R2p;
        Self {
            strategy,
            retrieval: if k == 0 {
                ContextStrategy::None
            } else {
                ContextStrategy::Bm25
            },
            k,
            n,
            use_hrt: r2p,
            use_rpi: r2p,
            use_srm: r2p,
            max_interventions: 2,
            classification_vote: false,
            srm_keep_hrt: true,
            verify: VerifyOptions::default(),
            pag_profile_limit: None,
            max_tokens: 4096,
            bm25: Bm25Params::default(),
        }
    }

    pub fn without(mut self, module: Module) -> Self {
        match module {
            Module::Hrt => self.use_hrt = false,
            Module::Rpi => self.use_rpi = false,
            Module::Srm => self.use_srm = false,
        }
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.strategy != Strategy::R2p && (self.use_hrt || self.use_rpi || self.use_srm) {
            return Err(PipelineError::Config(format!(
                "strategy {} does not use template, intervention or self-referencing flags",
                self.strategy
            )));
        }
        if self.max_interventions == 0 {
            return Err(PipelineError::Config("max_interventions must be positive".into()));
        }
        if self.max_tokens == 0 {
            return Err(PipelineError::Config("max_tokens must be positive".into()));
        }
        if self.k == 0 && self.retrieval != ContextStrategy::None {
            return Err(PipelineError::Config(format!(
                "k=0 requires retrieval none, got {}",
                self.retrieval
            )));
        }
        Ok(())
    }

    fn srm_active(&self) -> bool {
        self.use_srm && self.n >= 1
    }
}

/// One repetition of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repetition {
    pub index: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Answer,
    Intervention,
    Candidate,
    Synthesis,
    Summary,
    Verification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub stage: Stage,
    pub request: GenRequest,
    pub response: GenResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunFlag {
    InterventionBudgetExhausted,
    EmptySummary,
    EmptyDraft,
    AllCandidatesEmpty,
    BackendError,
}

/// Full trace of one instance under one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub rep: u32,
    pub seed: u64,
    pub config: PipelineConfig,
    pub model: ModelProfile,
    pub seed_honored: bool,
    pub selection: ContextSelection,
    pub calls: Vec<CallRecord>,
    /// Interventions summed over candidates.
    pub interventions: u32,
    /// Interventions per candidate; each is at most `max_interventions`.
    pub interventions_per_candidate: Vec<u32>,
    pub candidates: Vec<String>,
    pub final_answer: String,
    pub total_completion_tokens: u64,
    pub flags: Vec<RunFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Majority label over candidate answers (trimmed, case-insensitive).
/// Ties go to the tied label matching `tie_break`, else the earliest.
pub fn majority_vote(candidates: &[String], tie_break: &str) -> Option<String> {
    let mut counts: Vec<(String, &str, usize)> = Vec::new();
    for c in candidates {
        let key = c.trim().to_lowercase();
        if key.is_empty() {
            continue;
        }
        match counts.iter_mut().find(|(k, _, _)| *k == key) {
            Some(slot) => slot.2 += 1,
            None => counts.push((key, c.trim(), 1)),
        }
    }
    let best = counts.iter().map(|c| c.2).max()?;
    let tied: Vec<&(String, &str, usize)> = counts.iter().filter(|c| c.2 == best).collect();
    let tb = tie_break.trim().to_lowercase();
    let pick = tied.iter().find(|c| c.0 == tb).unwrap_or(&tied[0]);
    Some(pick.1.to_string())
}

struct Session<'a> {
    backend: &'a dyn Backend,
    instance_id: &'a str,
    rep: u32,
    calls: Vec<CallRecord>,
}

impl Session<'_> {
    fn call(&mut self, stage: Stage, request: GenRequest) -> Result<ReasoningOutput, BackendError> {
        let ctx = CallContext {
            instance_id: self.instance_id.to_string(),
            rep: self.rep,
            ordinal: self.calls.len() as u32,
        };
        let response = self.backend.generate(&request, &ctx)?;
        let mut out = split_reasoning(&response.text);
        out.completion_tokens = response.completion_tokens;
        self.calls.push(CallRecord {
            stage,
            request,
            response,
        });
        Ok(out)
    }
}

/// Mutable per-instance state threaded through the strategies.
struct Run<'a> {
    session: Session<'a>,
    selection: ContextSelection,
    interventions: Vec<u32>,
    candidates: Vec<String>,
    flags: Vec<RunFlag>,
}

pub struct Pipeline<'a> {
    config: &'a PipelineConfig,
    prompter: &'a Prompter,
    backend: &'a dyn Backend,
    model: &'a ModelProfile,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        config: &'a PipelineConfig,
        prompter: &'a Prompter,
        backend: &'a dyn Backend,
        model: &'a ModelProfile,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self {
            config,
            prompter,
            backend,
            model,
        })
    }

    fn request(&self, messages: PromptBundle, seed: u64) -> GenRequest {
        GenRequest {
            messages,
            temperature: self.model.default_temperature,
            max_tokens: self.config.max_tokens,
            seed: Some(seed),
            model_name: self.model.name.clone(),
        }
    }

    fn call_seed(rep: Repetition, instance: &TaskInstance, index: u64) -> u64 {
        derive_seed(rep.seed, &format!("call:{}", instance.instance_id), index)
    }

    pub fn run_instance(
        &self,
        instance: &TaskInstance,
        rep: Repetition,
    ) -> Result<RunRecord, PipelineError> {
        let cfg = self.config;
        let selection = select_context(
            &instance.profile,
            &instance.input_text,
            cfg.retrieval,
            cfg.k,
            Some(derive_seed(rep.seed, &format!("context:{}", instance.instance_id), 0)),
            cfg.bm25,
        )?;
        let base = self.prompter.build_base_prompt(instance);
        let bundle = self
            .prompter
            .augment_with_profile(&base, &selection, &instance.profile)?;
        let mut run = Run {
            session: Session {
                backend: self.backend,
                instance_id: &instance.instance_id,
                rep: rep.index,
                calls: Vec::new(),
            },
            selection,
            interventions: Vec::new(),
            candidates: Vec::new(),
            flags: Vec::new(),
        };
        let outcome = match cfg.strategy {
            Strategy::Rag => self.rag(&mut run, instance, rep, bundle),
            Strategy::SelfVerification => self.self_verification(&mut run, instance, rep, bundle),
            Strategy::Pag => self.pag(&mut run, instance, rep, bundle),
            Strategy::R2p => self.r2p(&mut run, instance, rep, bundle),
        };
        match outcome {
            Ok(final_answer) => Ok(self.finish(run, instance, rep, final_answer, None)),
            Err(StepError::Prompt(e)) => Err(PipelineError::Prompt(e)),
            Err(StepError::Backend(source)) => {
                let mut run = run;
                run.flags.push(RunFlag::BackendError);
                let partial = self.finish(run, instance, rep, String::new(), Some(source.to_string()));
                Err(PipelineError::Backend {
                    source,
                    partial: Box::new(partial),
                })
            }
        }
    }

    /// The profile-summary baseline: one summary call, one answer call.
    pub fn run_baseline_pag(
        &self,
        instance: &TaskInstance,
        rep: Repetition,
    ) -> Result<RunRecord, PipelineError> {
        if self.config.strategy != Strategy::Pag {
            return Err(PipelineError::Config("run_baseline_pag needs strategy pag".into()));
        }
        self.run_instance(instance, rep)
    }

    fn finish(
        &self,
        run: Run<'_>,
        instance: &TaskInstance,
        rep: Repetition,
        final_answer: String,
        error: Option<String>,
    ) -> RunRecord {
        let calls = run.session.calls;
        RunRecord {
            instance_id: instance.instance_id.clone(),
            rep: rep.index,
            seed: rep.seed,
            config: self.config.clone(),
            model: self.model.clone(),
            seed_honored: self.backend.honors_seed(),
            selection: run.selection,
            total_completion_tokens: calls.iter().map(|c| c.response.completion_tokens).sum(),
            calls,
            interventions: run.interventions.iter().sum(),
            interventions_per_candidate: run.interventions,
            candidates: run.candidates,
            final_answer,
            flags: run.flags,
            error,
        }
    }

    fn rag(
        &self,
        run: &mut Run<'_>,
        instance: &TaskInstance,
        rep: Repetition,
        bundle: PromptBundle,
    ) -> Result<String, StepError> {
        let req = self.request(bundle, Self::call_seed(rep, instance, 0));
        let out = run.session.call(Stage::Answer, req)?;
        Ok(out.final_answer)
    }

    fn self_verification(
        &self,
        run: &mut Run<'_>,
        instance: &TaskInstance,
        rep: Repetition,
        bundle: PromptBundle,
    ) -> Result<String, StepError> {
        let draft = run
            .session
            .call(Stage::Answer, self.request(bundle.clone(), Self::call_seed(rep, instance, 0)))?;
        if draft.final_answer.trim().is_empty() {
            run.flags.push(RunFlag::EmptyDraft);
            return Ok(draft.final_answer);
        }
        let check = self
            .prompter
            .build_self_verification_prompt(&bundle, &draft.final_answer)?;
        let out = run
            .session
            .call(Stage::Verification, self.request(check, Self::call_seed(rep, instance, 1)))?;
        Ok(out.final_answer)
    }

    fn pag(
        &self,
        run: &mut Run<'_>,
        instance: &TaskInstance,
        rep: Repetition,
        bundle: PromptBundle,
    ) -> Result<String, StepError> {
        let summarized: Vec<&ProfileEntry> = match self.config.pag_profile_limit {
            Some(limit) if limit < instance.profile.len() => {
                let top = select_context(
                    &instance.profile,
                    &instance.input_text,
                    ContextStrategy::Bm25,
                    limit.max(1),
                    None,
                    self.config.bm25,
                )
                .map_err(PromptError::from)?;
                top.resolve(&instance.profile).map_err(PromptError::from)?
            }
            _ => instance.profile.iter().collect(),
        };
        let summary_prompt = self.prompter.build_pag_prompt(summarized)?;
        let summary = run.session.call(
            Stage::Summary,
            self.request(summary_prompt, Self::call_seed(rep, instance, 0)),
        )?;
        if summary.final_answer.trim().is_empty() {
            run.flags.push(RunFlag::EmptySummary);
        }
        let merged = self.prompter.merge_summary(&bundle, &summary.final_answer)?;
        let out = run
            .session
            .call(Stage::Answer, self.request(merged, Self::call_seed(rep, instance, 1)))?;
        Ok(out.final_answer)
    }

    fn r2p(
        &self,
        run: &mut Run<'_>,
        instance: &TaskInstance,
        rep: Repetition,
        bundle: PromptBundle,
    ) -> Result<String, StepError> {
        let cfg = self.config;
        let prompt = if cfg.use_hrt {
            self.prompter.inject_hrt(&bundle)?
        } else {
            bundle
        };
        let first = self.verified_generation(run, instance, rep, &prompt, 0, Stage::Answer)?;
        if !cfg.srm_active() {
            return Ok(first.final_answer);
        }
        self.self_reference(run, instance, rep, &prompt, first)
    }

    /// Collective self-referencing: the verified first generation is
    /// candidate 1, `n - 1` fresh candidates follow, then one synthesis call.
    fn self_reference(
        &self,
        run: &mut Run<'_>,
        instance: &TaskInstance,
        rep: Repetition,
        prompt: &PromptBundle,
        first: ReasoningOutput,
    ) -> Result<String, StepError> {
        let cfg = self.config;
        let mut finals = vec![first.final_answer];
        for i in 1..cfg.n {
            let out = self.verified_generation(run, instance, rep, prompt, i as u64, Stage::Candidate)?;
            finals.push(out.final_answer);
        }
        run.candidates = finals.clone();
        let non_empty: Vec<String> = finals
            .iter()
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect();
        if non_empty.is_empty() {
            run.flags.push(RunFlag::AllCandidatesEmpty);
            return Ok(String::new());
        }
        let base = if cfg.srm_keep_hrt {
            prompt.clone()
        } else {
            self.prompter.strip_hrt(prompt)
        };
        let synth_prompt = self.prompter.build_srm_prompt(&base, &non_empty)?;
        let synth = run.session.call(
            Stage::Synthesis,
            self.request(synth_prompt, Self::call_seed(rep, instance, cfg.n as u64)),
        )?;
        if cfg.classification_vote && instance.task.is_classification() {
            if let Some(label) = majority_vote(&non_empty, &synth.final_answer) {
                return Ok(label);
            }
        }
        Ok(synth.final_answer)
    }

    /// One generation followed by the intervention loop when enabled.
    fn verified_generation(
        &self,
        run: &mut Run<'_>,
        instance: &TaskInstance,
        rep: Repetition,
        prompt: &PromptBundle,
        candidate: u64,
        stage: Stage,
    ) -> Result<ReasoningOutput, StepError> {
        let cfg = self.config;
        let mut request = self.request(prompt.clone(), Self::call_seed(rep, instance, candidate));
        let mut out = run.session.call(stage, request.clone())?;
        let mut count = 0u32;
        if cfg.use_rpi {
            let items = derive_checklist(instance.task, run.selection.chosen.len());
            let selected = run
                .selection
                .resolve(&instance.profile)
                .map_err(PromptError::from)?;
            loop {
                let report = verify(instance.task, &items, &out, &selected, &cfg.verify);
                if report.passed() {
                    break;
                }
                if count >= cfg.max_interventions {
                    run.flags.push(RunFlag::InterventionBudgetExhausted);
                    break;
                }
                let Some(next) = intervene(instance.task, &items, &request, &out.raw, &report) else {
                    break;
                };
                request = next;
                out = run.session.call(Stage::Intervention, request.clone())?;
                count += 1;
            }
        }
        run.interventions.push(count);
        Ok(out)
    }
}

enum StepError {
    Prompt(PromptError),
    Backend(BackendError),
}

impl From<PromptError> for StepError {
    fn from(e: PromptError) -> Self {
        StepError::Prompt(e)
    }
}

impl From<BackendError> for StepError {
    fn from(e: BackendError) -> Self {
        StepError::Backend(e)
    }
}

/// Gold answers keyed by instance id.
pub fn gold_map<'d>(instances: impl IntoIterator<Item = &'d TaskInstance>) -> HashMap<String, String> {
    instances
        .into_iter()
        .map(|i| (i.instance_id.clone(), i.gold.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockReply, MockRule, MockScript};
    use crate::corpus::TaskKind;

    fn instance() -> TaskInstance {
        TaskInstance {
            instance_id: "i1".into(),
            user_id: "u1".into(),
            task: TaskKind::Lamp2M,
            input_text: "A crew travels through a wormhole in space".into(),
            profile: vec![
                ProfileEntry::new(TaskKind::Lamp2M, "p1", [("tag", "sci-fi"), ("description", "Astronauts travel through a wormhole near Saturn")]),
                ProfileEntry::new(TaskKind::Lamp2M, "p2", [("tag", "comedy"), ("description", "Two friends open a bakery")]),
            ],
            gold: "sci-fi".into(),
        }
    }

    fn run(cfg: &PipelineConfig, backend: &MockBackend) -> Result<RunRecord, PipelineError> {
        let prompter = Prompter::default();
        let model = ModelProfile::new("r1", true);
        Pipeline::new(cfg, &prompter, backend, &model)?
            .run_instance(&instance(), Repetition { index: 0, seed: 11 })
    }

    const GOOD: &str = "<think>User Profile Integration: they tagged a wormhole film sci-fi.</think>sci-fi";

    #[test]
    fn majority_vote_rules() {
        let c = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(majority_vote(&c(&["sci-fi", "sci-fi", "comedy"]), "comedy").unwrap(), "sci-fi");
        assert_eq!(majority_vote(&c(&["sci-fi", "comedy"]), "comedy").unwrap(), "comedy");
        assert_eq!(majority_vote(&c(&["sci-fi", "comedy"]), "action").unwrap(), "sci-fi");
        assert!(majority_vote(&c(&["", " "]), "x").is_none());
    }

    #[test]
    fn call_counts_by_strategy() {
        let mock = MockBackend::constant(MockReply::with_tokens(GOOD, 4));
        assert_eq!(run(&PipelineConfig::new(Strategy::Rag, 1, 0), &mock).unwrap().calls.len(), 1);
        assert_eq!(run(&PipelineConfig::new(Strategy::Pag, 1, 0), &mock).unwrap().calls.len(), 2);
        assert_eq!(
            run(&PipelineConfig::new(Strategy::SelfVerification, 1, 0), &mock).unwrap().calls.len(),
            2
        );
        for n in 0..4 {
            let rec = run(&PipelineConfig::new(Strategy::R2p, 1, n), &mock).unwrap();
            assert_eq!(rec.calls.len(), if n == 0 { 1 } else { n + 1 }, "n={n}");
            assert_eq!(rec.final_answer, "sci-fi");
            assert_eq!(rec.total_completion_tokens, 4 * rec.calls.len() as u64);
        }
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let mock = MockBackend::constant(MockReply::text("<think>hmm</think>no idea"));
        let mut cfg = PipelineConfig::new(Strategy::R2p, 1, 0);
        cfg.max_interventions = 2;
        let rec = run(&cfg, &mock).unwrap();
        assert_eq!(rec.calls.len(), 3);
        assert_eq!(rec.interventions, 2);
        assert!(rec.flags.contains(&RunFlag::InterventionBudgetExhausted));
    }

    #[test]
    fn one_format_failure_adds_one_call() {
        let mock = MockBackend::new(MockScript {
            rules: vec![MockRule {
                ordinal: Some(0),
                ..MockRule::always(MockReply::text("<think>User Profile Integration</think>Sci fi movie"))
            }],
            default: Some(MockReply::text(GOOD)),
        });
        let rec = run(&PipelineConfig::new(Strategy::R2p, 1, 2), &mock).unwrap();
        assert_eq!(rec.calls.len(), 4);
        assert_eq!(rec.interventions_per_candidate, vec![1, 0]);
        assert_eq!(rec.calls[1].stage, Stage::Intervention);
        assert_eq!(rec.candidates, vec!["sci-fi", "sci-fi"]);
    }

    #[test]
    fn vote_overrides_synthesis_for_classification() {
        let mock = MockBackend::new(MockScript {
            rules: vec![
                MockRule {
                    contains: Some("Possible answers might be:".into()),
                    ..MockRule::always(MockReply::text("comedy"))
                },
                MockRule {
                    ordinal: Some(2),
                    ..MockRule::always(MockReply::text("comedy"))
                },
            ],
            default: Some(MockReply::text("sci-fi")),
        });
        let mut cfg = PipelineConfig::new(Strategy::R2p, 1, 3);
        cfg.use_rpi = false;
        let rec = run(&cfg, &mock).unwrap();
        assert_eq!(rec.final_answer, "comedy");
        cfg.classification_vote = true;
        let rec = run(&cfg, &mock).unwrap();
        assert_eq!(rec.candidates, vec!["sci-fi", "sci-fi", "comedy"]);
        assert_eq!(rec.final_answer, "sci-fi");
    }

    #[test]
    fn backend_error_carries_partial_record() {
        let mock = MockBackend::new(MockScript {
            rules: vec![MockRule {
                ordinal: Some(0),
                ..MockRule::always(MockReply::text(GOOD))
            }],
            default: None,
        });
        match run(&PipelineConfig::new(Strategy::R2p, 1, 2), &mock) {
            Err(PipelineError::Backend { partial, .. }) => {
                assert_eq!(partial.calls.len(), 1);
                assert!(partial.flags.contains(&RunFlag::BackendError));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_rules() {
        let mut cfg = PipelineConfig::new(Strategy::Rag, 1, 2);
        assert!(!cfg.use_hrt && !cfg.use_rpi && !cfg.use_srm);
        cfg.use_rpi = true;
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig::new(Strategy::R2p, 0, 2);
        assert_eq!(cfg.retrieval, ContextStrategy::None);
        assert!(cfg.use_hrt && cfg.use_rpi && cfg.use_srm);
        assert_eq!("self-verify".parse::<Strategy>().unwrap(), Strategy::SelfVerification);
    }
}
