//! LaMP-format datasets: task contracts, line-delimited JSON ingestion and
//! seeded user sampling.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::metrics::Metric;
use crate::prompting::AnswerFormat;
use crate::rng::{partial_shuffle, SplitMix64};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("instance {instance_id}: {message}")]
    Validation { instance_id: String, message: String },
    #[error("cannot sample {requested} users from a dataset with {available}")]
    NotEnoughUsers { requested: usize, available: usize },
    #[error("unknown task id {0:?}")]
    UnknownTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskCategory {
    #[serde(rename = "classification")]
    Classification,
    #[serde(rename = "regression")]
    Regression,
    #[serde(rename = "generation")]
    Generation,
}

/// One of the supported LaMP tasks. LaMP-6 is not distributed publicly and
/// has no variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "LaMP-1")]
    Lamp1,
    #[serde(rename = "LaMP-2N")]
    Lamp2N,
    #[serde(rename = "LaMP-2M")]
    Lamp2M,
    #[serde(rename = "LaMP-3")]
    Lamp3,
    #[serde(rename = "LaMP-4")]
    Lamp4,
    #[serde(rename = "LaMP-5")]
    Lamp5,
    #[serde(rename = "LaMP-7")]
    Lamp7,
}

const CITATION_LABELS: &[&str] = &["[1]", "[2]"];

const NEWS_CATEGORIES: &[&str] = &[
    "travel",
    "education",
    "parents",
    "style & beauty",
    "entertainment",
    "food & drink",
    "science & technology",
    "business",
    "sports",
    "healthy living",
    "women",
    "politics",
    "crime",
    "culture & arts",
    "religion",
];

const MOVIE_TAGS: &[&str] = &[
    "sci-fi",
    "based on a book",
    "comedy",
    "action",
    "twist ending",
    "dystopia",
    "dark comedy",
    "classic",
    "psychology",
    "fantasy",
    "romance",
    "thought-provoking",
    "social commentary",
    "violence",
    "true story",
];

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::Lamp1,
        TaskKind::Lamp2N,
        TaskKind::Lamp2M,
        TaskKind::Lamp3,
        TaskKind::Lamp4,
        TaskKind::Lamp5,
        TaskKind::Lamp7,
    ];

    pub fn id(self) -> &'static str {
        match self {
            TaskKind::Lamp1 => "LaMP-1",
            TaskKind::Lamp2N => "LaMP-2N",
            TaskKind::Lamp2M => "LaMP-2M",
            TaskKind::Lamp3 => "LaMP-3",
            TaskKind::Lamp4 => "LaMP-4",
            TaskKind::Lamp5 => "LaMP-5",
            TaskKind::Lamp7 => "LaMP-7",
        }
    }

    /// Lowercase slug used for template file names.
    pub fn slug(self) -> &'static str {
        match self {
            TaskKind::Lamp1 => "lamp-1",
            TaskKind::Lamp2N => "lamp-2n",
            TaskKind::Lamp2M => "lamp-2m",
            TaskKind::Lamp3 => "lamp-3",
            TaskKind::Lamp4 => "lamp-4",
            TaskKind::Lamp5 => "lamp-5",
            TaskKind::Lamp7 => "lamp-7",
        }
    }

    pub fn category(self) -> TaskCategory {
        match self {
            TaskKind::Lamp1 | TaskKind::Lamp2N | TaskKind::Lamp2M => TaskCategory::Classification,
            TaskKind::Lamp3 => TaskCategory::Regression,
            TaskKind::Lamp4 | TaskKind::Lamp5 | TaskKind::Lamp7 => TaskCategory::Generation,
        }
    }

    pub fn is_classification(self) -> bool {
        self.category() == TaskCategory::Classification
    }

    /// Ordered label set; `None` for regression and generation tasks.
    pub fn label_set(self) -> Option<&'static [&'static str]> {
        match self {
            TaskKind::Lamp1 => Some(CITATION_LABELS),
            TaskKind::Lamp2N => Some(NEWS_CATEGORIES),
            TaskKind::Lamp2M => Some(MOVIE_TAGS),
            _ => None,
        }
    }

    pub fn answer_format(self) -> AnswerFormat {
        match self {
            TaskKind::Lamp1 => AnswerFormat::BracketedChoice,
            TaskKind::Lamp2N | TaskKind::Lamp2M => AnswerFormat::LabelMember,
            TaskKind::Lamp3 => AnswerFormat::IntegerRange { min: 1, max: 5 },
            TaskKind::Lamp4 | TaskKind::Lamp5 | TaskKind::Lamp7 => AnswerFormat::FreeText,
        }
    }

    pub fn metrics(self) -> &'static [Metric] {
        match self.category() {
            TaskCategory::Classification => &[Metric::Accuracy, Metric::MacroF1],
            TaskCategory::Regression => &[Metric::Mae, Metric::Rmse],
            TaskCategory::Generation => &[Metric::Rouge1, Metric::RougeL],
        }
    }

    /// Profile field order used for flat text and prompt serialization.
    /// Fields not listed here follow in lexicographic order.
    pub fn field_order(self) -> &'static [&'static str] {
        match self {
            TaskKind::Lamp1 | TaskKind::Lamp5 => &["title", "abstract"],
            TaskKind::Lamp2N => &["category", "title", "text"],
            TaskKind::Lamp2M => &["tag", "description"],
            TaskKind::Lamp3 => &["score", "text"],
            TaskKind::Lamp4 => &["title", "text"],
            TaskKind::Lamp7 => &["text"],
        }
    }

    /// Checks a gold answer against the task's output contract.
    pub fn validate_gold(self, gold: &str) -> Result<(), String> {
        if let Some(labels) = self.label_set() {
            let g = gold.trim();
            if !labels.iter().any(|l| l.eq_ignore_ascii_case(g)) {
                return Err(format!("gold {gold:?} is not in the {} label set", self.id()));
            }
            return Ok(());
        }
        match self.answer_format() {
            AnswerFormat::IntegerRange { min, max } => match gold.trim().parse::<i64>() {
                Ok(v) if (min..=max).contains(&v) => Ok(()),
                _ => Err(format!("gold {gold:?} is not an integer in {min}..={max}")),
            },
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for TaskKind {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        TaskKind::ALL
            .into_iter()
            .find(|t| t.slug().replace('-', "") == norm)
            .ok_or_else(|| CorpusError::UnknownTask(s.to_string()))
    }
}

/// One record from a user's history.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEntry {
    pub entry_id: String,
    /// Field name/value pairs in the task's canonical order.
    pub fields: Vec<(String, String)>,
    /// Field values joined by single spaces, in `fields` order.
    pub flat_text: String,
}

impl ProfileEntry {
    pub fn new<I, K, V>(task: TaskKind, entry_id: impl Into<String>, fields: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut rest: Vec<(String, String)> =
            fields.into_iter().map(|(k, v)| (k.into(), v.into())).collect();
        let mut ordered = Vec::with_capacity(rest.len());
        for name in task.field_order() {
            if let Some(pos) = rest.iter().position(|(k, _)| k == name) {
                ordered.push(rest.remove(pos));
            }
        }
        rest.sort_by(|a, b| a.0.cmp(&b.0));
        ordered.extend(rest);
        let flat_text = ordered
            .iter()
            .map(|(_, v)| v.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        Self {
            entry_id: entry_id.into(),
            fields: ordered,
            flat_text,
        }
    }

    pub fn field(&self, name: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub instance_id: String,
    pub user_id: String,
    pub task: TaskKind,
    pub input_text: String,
    pub profile: Vec<ProfileEntry>,
    pub gold: String,
}

impl TaskInstance {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |message: String| CorpusError::Validation {
            instance_id: self.instance_id.clone(),
            message,
        };
        self.task.validate_gold(&self.gold).map_err(invalid)?;
        let mut seen = HashSet::new();
        for entry in &self.profile {
            if !seen.insert(entry.entry_id.as_str()) {
                return Err(invalid(format!(
                    "duplicate profile entry id {:?}",
                    entry.entry_id
                )));
            }
        }
        Ok(())
    }

    pub fn profile_entry(&self, entry_id: &str) -> Option<&ProfileEntry> {
        self.profile.iter().find(|e| e.entry_id == entry_id)
    }

    fn from_json(task: TaskKind, value: Value) -> Result<Self, String> {
        let Value::Object(mut obj) = value else {
            return Err("expected a JSON object".into());
        };
        let mut take_str = |key: &str| -> Result<String, String> {
            match obj.remove(key) {
                Some(v) => scalar_text(&v).ok_or_else(|| format!("field {key:?} must be a string")),
                None => Err(format!("missing field {key:?}")),
            }
        };
        let instance_id = take_str("id")?;
        let user_id = take_str("user_id")?;
        let input_text = take_str("input")?;
        let gold = take_str("output")?;
        let profile = match obj.remove("profile") {
            Some(Value::Array(items)) => items
                .into_iter()
                .map(|item| entry_from_json(task, item))
                .collect::<Result<Vec<_>, _>>()?,
            Some(Value::Null) | None => Vec::new(),
            Some(_) => return Err("field \"profile\" must be an array".into()),
        };
        Ok(Self {
            instance_id,
            user_id,
            task,
            input_text,
            profile,
            gold,
        })
    }

    pub fn to_json(&self) -> Value {
        let profile: Vec<Value> = self
            .profile
            .iter()
            .map(|e| {
                let mut m = Map::new();
                m.insert("id".into(), Value::String(e.entry_id.clone()));
                for (k, v) in &e.fields {
                    m.insert(k.clone(), Value::String(v.clone()));
                }
                Value::Object(m)
            })
            .collect();
        let mut m = Map::new();
        m.insert("id".into(), Value::String(self.instance_id.clone()));
        m.insert("user_id".into(), Value::String(self.user_id.clone()));
        m.insert("input".into(), Value::String(self.input_text.clone()));
        m.insert("profile".into(), Value::Array(profile));
        m.insert("output".into(), Value::String(self.gold.clone()));
        Value::Object(m)
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn entry_from_json(task: TaskKind, value: Value) -> Result<ProfileEntry, String> {
    let Value::Object(obj) = value else {
        return Err("profile entries must be JSON objects".into());
    };
    let mut id = None;
    let mut fields = Vec::new();
    for (k, v) in obj {
        let text = match &v {
            Value::Null => continue,
            other => scalar_text(other)
                .ok_or_else(|| format!("profile field {k:?} must be a string or number"))?,
        };
        if k == "id" {
            id = Some(text);
        } else {
            fields.push((k, text));
        }
    }
    let id = id.ok_or("profile entry is missing \"id\"")?;
    Ok(ProfileEntry::new(task, id, fields))
}

/// An immutable collection of instances for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: TaskKind,
    pub instances: Vec<TaskInstance>,
}

impl Dataset {
    /// Builds a dataset, enforcing per-instance invariants and id uniqueness.
    pub fn new(task: TaskKind, instances: Vec<TaskInstance>) -> Result<Self, CorpusError> {
        let mut ids = HashSet::new();
        for inst in &instances {
            if inst.task != task {
                return Err(CorpusError::Validation {
                    instance_id: inst.instance_id.clone(),
                    message: format!("task {} does not match dataset task {}", inst.task, task),
                });
            }
            inst.validate()?;
            if !ids.insert(inst.instance_id.as_str()) {
                return Err(CorpusError::Validation {
                    instance_id: inst.instance_id.clone(),
                    message: "duplicate instance id".into(),
                });
            }
        }
        Ok(Self { task, instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn from_reader<R: BufRead>(reader: R, task: TaskKind) -> Result<Self, CorpusError> {
        let mut instances = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| CorpusError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let inst = TaskInstance::from_json(task, value).map_err(|message| {
                CorpusError::Parse {
                    line: line_no,
                    message,
                }
            })?;
            instances.push(inst);
        }
        Self::new(task, instances)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for inst in &self.instances {
            serde_json::to_writer(&mut w, &inst.to_json())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Distinct user ids, sorted.
    pub fn user_ids(&self) -> Vec<&str> {
        self.instances
            .iter()
            .map(|i| i.user_id.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Uniformly samples `count` users without replacement and returns all of
    /// their instances in original order.
    ///
    /// Users are keyed on their sorted ids, shuffled with [`partial_shuffle`]
    /// driven by `SplitMix64::new(seed)`, and the first `count` are kept.
    pub fn sample_users(&self, count: usize, seed: u64) -> Result<Dataset, CorpusError> {
        let mut users = self.user_ids();
        if count > users.len() {
            return Err(CorpusError::NotEnoughUsers {
                requested: count,
                available: users.len(),
            });
        }
        let mut rng = SplitMix64::new(seed);
        partial_shuffle(&mut users, count, &mut rng);
        let chosen: HashSet<&str> = users[..count].iter().copied().collect();
        let instances = self
            .instances
            .iter()
            .filter(|i| chosen.contains(i.user_id.as_str()))
            .cloned()
            .collect();
        Ok(Dataset {
            task: self.task,
            instances,
        })
    }
}

/// Loads a line-delimited JSON dataset for `task`.
pub fn load_dataset(path: impl AsRef<Path>, task: TaskKind) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Dataset::from_reader(BufReader::new(file), task)
}
