//! Prompt construction: per-task instructions, profile context blocks, the
//! reasoning template, self-referencing synthesis and the baseline prompts.
//!
//! All builders are pure. Task instructions and the reasoning template live
//! in `templates/` and are compiled in; [`Templates::from_dir`] loads an
//! edited copy instead.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ProfileEntry, TaskInstance, TaskKind};
use crate::retrieval::{ContextSelection, RetrievalError};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("the reasoning template is already present in this bundle")]
    HrtAlreadyPresent,
    #[error("self-referencing needs at least one candidate")]
    NoCandidates,
    #[error("profile is empty")]
    EmptyProfile,
    #[error("draft answer is empty")]
    EmptyDraft,
    #[error("bundle has no user message")]
    NoUserMessage,
    #[error("template {name}: {message}")]
    Template { name: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// Ordered role-tagged messages for one generation request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptBundle {
    pub messages: Vec<Message>,
}

impl PromptBundle {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            messages: vec![Message::new(Role::User, content)],
        }
    }

    pub fn push(&mut self, role: Role, content: impl Into<String>) {
        self.messages.push(Message::new(role, content));
    }

    pub fn last_user(&self) -> Option<&Message> {
        self.messages.iter().rev().find(|m| m.role == Role::User)
    }

    /// Plain-text rendering used by golden files and logs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str("=== ");
            out.push_str(&m.role.to_string());
            out.push_str(" ===\n");
            out.push_str(&m.content);
            out.push('\n');
        }
        out
    }

    fn first_user_mut(&mut self) -> Result<&mut Message, PromptError> {
        self.messages
            .iter_mut()
            .find(|m| m.role == Role::User)
            .ok_or(PromptError::NoUserMessage)
    }
}

/// Output format contract for a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerFormat {
    /// Exactly `[1]` or `[2]`.
    BracketedChoice,
    /// One label from the task's label set, case-insensitive.
    LabelMember,
    IntegerRange { min: i64, max: i64 },
    FreeText,
}

impl AnswerFormat {
    /// The instruction sentence appended to every base prompt.
    pub fn directive(self, task: TaskKind) -> String {
        match self {
            AnswerFormat::BracketedChoice => {
                "Answer with only \"[1]\" or \"[2]\" and no explanation.".to_string()
            }
            AnswerFormat::LabelMember => format!(
                "Answer with exactly one of the following labels and no explanation: {}.",
                task.label_set().unwrap_or_default().join(", ")
            ),
            AnswerFormat::IntegerRange { min, max } => {
                format!("Answer with a single integer from {min} to {max} and no explanation.")
            }
            AnswerFormat::FreeText => {
                "Answer with the requested text only, without any explanation.".to_string()
            }
        }
    }

    /// Short description of the required format, used in corrective prompts.
    pub fn requirement(self, task: TaskKind) -> String {
        match self {
            AnswerFormat::BracketedChoice => "exactly \"[1]\" or \"[2]\"".to_string(),
            AnswerFormat::LabelMember => format!(
                "exactly one of these labels: {}",
                task.label_set().unwrap_or_default().join(", ")
            ),
            AnswerFormat::IntegerRange { min, max } => {
                format!("a single integer from {min} to {max}")
            }
            AnswerFormat::FreeText => "the requested text only".to_string(),
        }
    }

    pub fn matches(self, task: TaskKind, answer: &str) -> bool {
        let a = answer.trim();
        match self {
            AnswerFormat::BracketedChoice => a == "[1]" || a == "[2]",
            AnswerFormat::LabelMember => task
                .label_set()
                .unwrap_or_default()
                .iter()
                .any(|l| l.to_lowercase() == a.to_lowercase()),
            AnswerFormat::IntegerRange { min, max } => {
                a.parse::<i64>().is_ok_and(|v| (min..=max).contains(&v))
            }
            AnswerFormat::FreeText => !a.is_empty(),
        }
    }
}

const HRT_TEMPLATE: &str = include_str!("../templates/hrt.txt");

fn builtin_task_template(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Lamp1 => include_str!("../templates/lamp-1.txt"),
        TaskKind::Lamp2N => include_str!("../templates/lamp-2n.txt"),
        TaskKind::Lamp2M => include_str!("../templates/lamp-2m.txt"),
        TaskKind::Lamp3 => include_str!("../templates/lamp-3.txt"),
        TaskKind::Lamp4 => include_str!("../templates/lamp-4.txt"),
        TaskKind::Lamp5 => include_str!("../templates/lamp-5.txt"),
        TaskKind::Lamp7 => include_str!("../templates/lamp-7.txt"),
    }
}

/// Per-task instruction templates (with `{input}` and `{directive}` slots)
/// plus the reasoning template text.
#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    tasks: BTreeMap<TaskKind, String>,
    hrt: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Self {
            tasks: TaskKind::ALL
                .into_iter()
                .map(|t| (t, builtin_task_template(t).trim_end().to_string()))
                .collect(),
            hrt: HRT_TEMPLATE.trim_end().to_string(),
        }
    }

    /// Loads `hrt.txt` and `<task-slug>.txt` for every task from `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let read = |name: String| -> Result<String, PromptError> {
            std::fs::read_to_string(dir.join(&name))
                .map(|s| s.trim_end().to_string())
                .map_err(|e| PromptError::Template {
                    name,
                    message: e.to_string(),
                })
        };
        let mut tasks = BTreeMap::new();
        for t in TaskKind::ALL {
            let body = read(format!("{}.txt", t.slug()))?;
            for slot in ["{input}", "{directive}"] {
                if body.matches(slot).count() != 1 {
                    return Err(PromptError::Template {
                        name: t.slug().to_string(),
                        message: format!("expected exactly one {slot} slot"),
                    });
                }
            }
            tasks.insert(t, body);
        }
        Ok(Self {
            tasks,
            hrt: read("hrt.txt".into())?,
        })
    }

    pub fn hrt(&self) -> &str {
        &self.hrt
    }

    pub fn task(&self, task: TaskKind) -> &str {
        &self.tasks[&task]
    }
}

/// Single-pass `{name}` substitution; substituted values are not rescanned.
fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (name, value) in slots {
            let key_len = name.len() + 2;
            if tail.len() >= key_len
                && tail.as_bytes()[key_len - 1] == b'}'
                && &tail[1..key_len - 1] == *name
            {
                out.push_str(value);
                rest = &tail[key_len..];
                continue 'outer;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// One line per entry: `- field: value | field: value`.
pub fn serialize_entries<'a>(entries: impl IntoIterator<Item = &'a ProfileEntry>) -> String {
    entries
        .into_iter()
        .map(|e| {
            let body = e
                .fields
                .iter()
                .map(|(k, v)| format!("{k}: {}", v.replace('\n', " ")))
                .collect::<Vec<_>>()
                .join(" | ");
            format!("- {body}")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub const CONTEXT_HEADER: &str = "Relevant records from this user's profile:";
pub const SUMMARY_HEADER: &str = "Summary of this user's profile:";
pub const SRM_LEAD: &str = "Possible answers might be:";
const SRM_INSTRUCTION: &str = "Taking these possible answers into account, synthesize one final answer that combines their strengths. Follow the required answer format stated above.";
const PAG_INSTRUCTION: &str = "Summarize this user's preferences, interests and writing style based on the following records from their profile. Reply with one short paragraph.";
const VERIFY_INSTRUCTION: &str = "Verify whether the draft answer correctly completes the task instruction. Correct it if needed, then give the final answer in the required answer format stated above.";

#[derive(Debug, Clone, Default)]
pub struct Prompter {
    templates: Templates,
}

impl Prompter {
    pub fn new(templates: Templates) -> Self {
        Self { templates }
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    /// Single user message: task instruction, instance input, format directive.
    pub fn build_base_prompt(&self, instance: &TaskInstance) -> PromptBundle {
        let task = instance.task;
        let directive = task.answer_format().directive(task);
        PromptBundle::user(fill(
            self.templates.task(task),
            &[("input", &instance.input_text), ("directive", &directive)],
        ))
    }

    /// Prepends a context block listing the selected entries to the first
    /// user message. An empty selection leaves the bundle untouched.
    pub fn augment_with_profile(
        &self,
        bundle: &PromptBundle,
        selection: &ContextSelection,
        profile: &[ProfileEntry],
    ) -> Result<PromptBundle, PromptError> {
        if selection.is_empty() {
            return Ok(bundle.clone());
        }
        let entries = selection.resolve(profile)?;
        let mut out = bundle.clone();
        let msg = out.first_user_mut()?;
        msg.content = format!(
            "{CONTEXT_HEADER}\n{}\n\n{}",
            serialize_entries(entries),
            msg.content
        );
        Ok(out)
    }

    pub fn has_hrt(&self, bundle: &PromptBundle) -> bool {
        bundle
            .messages
            .iter()
            .any(|m| m.role == Role::System && m.content == self.templates.hrt)
    }

    /// Inserts the reasoning template as a system message at position 0.
    pub fn inject_hrt(&self, bundle: &PromptBundle) -> Result<PromptBundle, PromptError> {
        if self.has_hrt(bundle) {
            return Err(PromptError::HrtAlreadyPresent);
        }
        let mut out = bundle.clone();
        out.messages
            .insert(0, Message::new(Role::System, self.templates.hrt.clone()));
        Ok(out)
    }

    /// Removes the reasoning template system message, if present.
    pub fn strip_hrt(&self, bundle: &PromptBundle) -> PromptBundle {
        PromptBundle {
            messages: bundle
                .messages
                .iter()
                .filter(|m| !(m.role == Role::System && m.content == self.templates.hrt))
                .cloned()
                .collect(),
        }
    }

    /// Appends `Possible answers might be: c1, ..., cn.` and the synthesis
    /// instruction as a user message.
    pub fn build_srm_prompt(
        &self,
        bundle: &PromptBundle,
        candidates: &[String],
    ) -> Result<PromptBundle, PromptError> {
        if candidates.is_empty() {
            return Err(PromptError::NoCandidates);
        }
        let mut out = bundle.clone();
        out.push(
            Role::User,
            format!("{SRM_LEAD} {}.\n{SRM_INSTRUCTION}", candidates.join(", ")),
        );
        Ok(out)
    }

    /// Summarization request over the serialized profile.
    pub fn build_pag_prompt<'a>(
        &self,
        profile: impl IntoIterator<Item = &'a ProfileEntry>,
    ) -> Result<PromptBundle, PromptError> {
        let block = serialize_entries(profile);
        if block.is_empty() {
            return Err(PromptError::EmptyProfile);
        }
        Ok(PromptBundle::user(format!(
            "{PAG_INSTRUCTION}\n\nProfile records:\n{block}"
        )))
    }

    /// Prepends a profile summary to the first user message. A blank summary
    /// leaves the bundle unchanged.
    pub fn merge_summary(
        &self,
        bundle: &PromptBundle,
        summary: &str,
    ) -> Result<PromptBundle, PromptError> {
        let summary = summary.trim();
        if summary.is_empty() {
            return Ok(bundle.clone());
        }
        let mut out = bundle.clone();
        let msg = out.first_user_mut()?;
        msg.content = format!("{SUMMARY_HEADER}\n{summary}\n\n{}", msg.content);
        Ok(out)
    }

    pub fn build_self_verification_prompt(
        &self,
        bundle: &PromptBundle,
        draft_answer: &str,
    ) -> Result<PromptBundle, PromptError> {
        if draft_answer.trim().is_empty() {
            return Err(PromptError::EmptyDraft);
        }
        let mut out = bundle.clone();
        out.push(
            Role::User,
            format!("Here is a draft answer to the task above:\n{draft_answer}\n\n{VERIFY_INSTRUCTION}"),
        );
        Ok(out)
    }
}
