//! Reasoning-process checks and the corrective continuation request.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::backend::{GenRequest, ReasoningOutput};
use crate::corpus::{ProfileEntry, TaskKind};
use crate::prompting::Role;
use crate::retrieval::tokenize;

/// The sentence injected when the output never engaged with the profile.
pub const PROFILE_INJECTION: &str = "Wait, let me analyze the user profile.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    NonemptyFinal,
    FormatValid,
    AnswerInLabelSet,
    ProfileReferenced,
}

impl Detector {
    pub fn id(self) -> &'static str {
        match self {
            Detector::NonemptyFinal => "nonempty_final",
            Detector::FormatValid => "format_valid",
            Detector::AnswerInLabelSet => "answer_in_label_set",
            Detector::ProfileReferenced => "profile_referenced",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistItem {
    pub item_id: String,
    /// The reasoning-template step this item checks.
    pub description: String,
    pub detector: Detector,
}

impl ChecklistItem {
    fn new(detector: Detector, description: &str) -> Self {
        Self {
            item_id: detector.id().to_string(),
            description: description.to_string(),
            detector,
        }
    }
}

/// Items in check order: non-empty answer, format, label membership
/// (classification only), profile use (only with context entries).
pub fn derive_checklist(task: TaskKind, context_entries: usize) -> Vec<ChecklistItem> {
    let mut items = vec![
        ChecklistItem::new(Detector::NonemptyFinal, "Final Output"),
        ChecklistItem::new(Detector::FormatValid, "Format Alignment and Checking"),
    ];
    if task.is_classification() {
        items.push(ChecklistItem::new(
            Detector::AnswerInLabelSet,
            "Format Alignment and Checking",
        ));
    }
    if context_entries > 0 {
        items.push(ChecklistItem::new(
            Detector::ProfileReferenced,
            "User Profile Integration",
        ));
    }
    items
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Contiguous token n-gram length for profile overlap.
    pub overlap_ngram: usize,
    /// Case-insensitive phrases whose presence in the trace counts as
    /// profile analysis.
    pub marker_phrases: Vec<String>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            overlap_ngram: 3,
            marker_phrases: vec!["User Profile Integration".to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistReport {
    pub verdicts: Vec<(String, bool)>,
    pub first_failure: Option<String>,
}

impl ChecklistReport {
    pub fn passed(&self) -> bool {
        self.first_failure.is_none()
    }
}

fn shares_ngram(text_tokens: &[String], entry_tokens: &[String], n: usize) -> bool {
    if entry_tokens.is_empty() || text_tokens.is_empty() {
        return false;
    }
    // Entries shorter than n match on their full token sequence.
    let n = n.max(1).min(entry_tokens.len());
    let grams: HashSet<&[String]> = entry_tokens.windows(n).collect();
    text_tokens.windows(n).any(|w| grams.contains(w))
}

fn profile_referenced(
    output: &ReasoningOutput,
    selected: &[&ProfileEntry],
    options: &VerifyOptions,
) -> bool {
    let trace_lower = output.trace.to_lowercase();
    if options
        .marker_phrases
        .iter()
        .any(|m| !m.is_empty() && trace_lower.contains(&m.to_lowercase()))
    {
        return true;
    }
    let trace = tokenize(&output.trace);
    let answer = tokenize(&output.final_answer);
    selected.iter().any(|entry| {
        let e = tokenize(&entry.flat_text);
        shares_ngram(&trace, &e, options.overlap_ngram)
            || shares_ngram(&answer, &e, options.overlap_ngram)
    })
}

pub fn verify(
    task: TaskKind,
    items: &[ChecklistItem],
    output: &ReasoningOutput,
    selected: &[&ProfileEntry],
    options: &VerifyOptions,
) -> ChecklistReport {
    let answer = output.final_answer.trim();
    let verdicts: Vec<(String, bool)> = items
        .iter()
        .map(|item| {
            let pass = match item.detector {
                Detector::NonemptyFinal => !answer.is_empty(),
                Detector::FormatValid => task.answer_format().matches(task, answer),
                Detector::AnswerInLabelSet => task
                    .label_set()
                    .unwrap_or_default()
                    .iter()
                    .any(|l| l.to_lowercase() == answer.to_lowercase()),
                Detector::ProfileReferenced => profile_referenced(output, selected, options),
            };
            (item.item_id.clone(), pass)
        })
        .collect();
    let first_failure = verdicts
        .iter()
        .find(|(_, pass)| !pass)
        .map(|(id, _)| id.clone());
    ChecklistReport {
        verdicts,
        first_failure,
    }
}

/// The corrective sentence for a failed item.
pub fn injection_sentence(task: TaskKind, detector: Detector) -> String {
    match detector {
        Detector::ProfileReferenced => PROFILE_INJECTION.to_string(),
        Detector::FormatValid => format!(
            "Wait, the final answer must be {}.",
            task.answer_format().requirement(task)
        ),
        Detector::AnswerInLabelSet => format!(
            "Wait, the final answer must be one of the allowed labels: {}.",
            task.label_set().unwrap_or_default().join(", ")
        ),
        Detector::NonemptyFinal => "Wait, I have not stated a final answer yet.".to_string(),
    }
}

/// Continuation of `last_request`: the previous output as an assistant turn,
/// then a user turn with the correction for the first failing item.
///
/// Returns `None` when the report has no failure.
pub fn intervene(
    task: TaskKind,
    items: &[ChecklistItem],
    last_request: &GenRequest,
    last_raw: &str,
    report: &ChecklistReport,
) -> Option<GenRequest> {
    let failed = report.first_failure.as_ref()?;
    let item = items.iter().find(|i| &i.item_id == failed)?;
    let mut request = last_request.clone();
    request.messages.push(Role::Assistant, last_raw);
    request.messages.push(
        Role::User,
        format!(
            "{} Revise the reasoning starting from the flagged step \"{}\", keep the parts of the previous reasoning that are still valid, and then give the final answer again.",
            injection_sentence(task, item.detector),
            item.description
        ),
    );
    Some(request)
}
