//! Okapi BM25 over a single user's profile and the three context selection
//! strategies (none, random, bm25).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ProfileEntry;
use crate::rng::{partial_shuffle, SplitMix64};

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("cannot build a BM25 index over an empty profile")]
    EmptyIndex,
    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    InvalidParams { k1: f64, b: f64 },
    #[error("unknown profile entry {0:?}")]
    UnknownEntry(String),
    #[error("k={k} needs a non-empty profile")]
    EmptyProfile { k: usize },
    #[error("k=0 is only valid with strategy none (got {0})")]
    ZeroK(ContextStrategy),
    #[error("random context selection requires a seed")]
    MissingSeed,
    #[error("unknown context strategy {0:?}")]
    UnknownStrategy(String),
}

/// Lowercases and splits on maximal runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

impl Bm25Params {
    fn validate(self) -> Result<Self, RetrievalError> {
        if self.k1.is_finite() && self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b) {
            Ok(self)
        } else {
            Err(RetrievalError::InvalidParams {
                k1: self.k1,
                b: self.b,
            })
        }
    }
}

/// Immutable per-profile BM25 statistics.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    entry_ids: Vec<String>,
    positions: HashMap<String, usize>,
    doc_tf: Vec<HashMap<String, u32>>,
    doc_len: Vec<usize>,
    avg_len: f64,
    df: HashMap<String, usize>,
    params: Bm25Params,
}

impl Bm25Index {
    pub fn build(entries: &[ProfileEntry], params: Bm25Params) -> Result<Self, RetrievalError> {
        let params = params.validate()?;
        if entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut doc_tf = Vec::with_capacity(entries.len());
        let mut doc_len = Vec::with_capacity(entries.len());
        let mut positions = HashMap::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            let tokens = tokenize(&entry.flat_text);
            doc_len.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for term in tf.keys() {
                *df.entry(term.clone()).or_default() += 1;
            }
            doc_tf.push(tf);
            positions.insert(entry.entry_id.clone(), i);
        }
        let total: usize = doc_len.iter().sum();
        Ok(Self {
            entry_ids: entries.iter().map(|e| e.entry_id.clone()).collect(),
            positions,
            doc_tf,
            avg_len: total as f64 / entries.len() as f64,
            doc_len,
            df,
            params,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.entry_ids.len()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_len(&self) -> &[usize] {
        &self.doc_len
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn tf(&self, entry_id: &str, term: &str) -> Option<u32> {
        let pos = *self.positions.get(entry_id)?;
        Some(self.doc_tf[pos].get(term).copied().unwrap_or(0))
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn entry_ids(&self) -> &[String] {
        &self.entry_ids
    }

    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`, positive for every df ≤ N.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs() as f64;
        let df = self.df(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    pub fn score(&self, query_tokens: &[String], entry_id: &str) -> Result<f64, RetrievalError> {
        let pos = *self
            .positions
            .get(entry_id)
            .ok_or_else(|| RetrievalError::UnknownEntry(entry_id.to_string()))?;
        Ok(self.score_at(&distinct(query_tokens), pos))
    }

    /// Scores for every entry, in index order.
    pub fn score_all(&self, query_tokens: &[String]) -> Vec<f64> {
        let terms = distinct(query_tokens);
        (0..self.n_docs()).map(|i| self.score_at(&terms, i)).collect()
    }

    fn score_at(&self, terms: &[&str], pos: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf_map = &self.doc_tf[pos];
        let norm = if self.avg_len > 0.0 {
            1.0 - b + b * self.doc_len[pos] as f64 / self.avg_len
        } else {
            1.0 - b
        };
        terms
            .iter()
            .filter_map(|t| tf_map.get(*t).map(|tf| (t, f64::from(*tf))))
            .map(|(t, tf)| self.idf(t) * (tf * (k1 + 1.0)) / (tf + k1 * norm))
            .sum()
    }
}

fn distinct(tokens: &[String]) -> Vec<&str> {
    let mut seen = std::collections::HashSet::new();
    tokens
        .iter()
        .map(String::as_str)
        .filter(|t| seen.insert(*t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextStrategy {
    None,
    Random,
    Bm25,
}

impl fmt::Display for ContextStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextStrategy::None => "none",
            ContextStrategy::Random => "random",
            ContextStrategy::Bm25 => "bm25",
        })
    }
}

impl FromStr for ContextStrategy {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ContextStrategy::None),
            "random" => Ok(ContextStrategy::Random),
            "bm25" => Ok(ContextStrategy::Bm25),
            _ => Err(RetrievalError::UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenEntry {
    pub entry_id: String,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSelection {
    pub strategy: ContextStrategy,
    pub k: usize,
    pub chosen: Vec<ChosenEntry>,
}

impl ContextSelection {
    pub fn empty() -> Self {
        Self {
            strategy: ContextStrategy::None,
            k: 0,
            chosen: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    /// The chosen entries resolved against `profile`, in selection order.
    pub fn resolve<'p>(
        &self,
        profile: &'p [ProfileEntry],
    ) -> Result<Vec<&'p ProfileEntry>, RetrievalError> {
        self.chosen
            .iter()
            .map(|c| {
                profile
                    .iter()
                    .find(|e| e.entry_id == c.entry_id)
                    .ok_or_else(|| RetrievalError::UnknownEntry(c.entry_id.clone()))
            })
            .collect()
    }
}

/// Picks up to `k` profile entries for a query.
///
/// bm25 ranks by descending score with ties on ascending entry id; random
/// draws without replacement from the id-sorted profile using `seed`.
pub fn select_context(
    profile: &[ProfileEntry],
    query_text: &str,
    strategy: ContextStrategy,
    k: usize,
    seed: Option<u64>,
    params: Bm25Params,
) -> Result<ContextSelection, RetrievalError> {
    if strategy == ContextStrategy::None {
        return Ok(ContextSelection {
            strategy,
            k,
            chosen: Vec::new(),
        });
    }
    if k == 0 {
        return Err(RetrievalError::ZeroK(strategy));
    }
    if profile.is_empty() {
        return Err(RetrievalError::EmptyProfile { k });
    }
    let chosen = match strategy {
        ContextStrategy::None => unreachable!(),
        ContextStrategy::Random => {
            let seed = seed.ok_or(RetrievalError::MissingSeed)?;
            let mut ids: Vec<&str> = profile.iter().map(|e| e.entry_id.as_str()).collect();
            ids.sort_unstable();
            let take = k.min(ids.len());
            partial_shuffle(&mut ids, take, &mut SplitMix64::new(seed));
            ids[..take]
                .iter()
                .map(|id| ChosenEntry {
                    entry_id: id.to_string(),
                    score: None,
                })
                .collect()
        }
        ContextStrategy::Bm25 => {
            let index = Bm25Index::build(profile, params)?;
            let scores = index.score_all(&tokenize(query_text));
            let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
            ranked.sort_by(|a, b| {
                b.1.total_cmp(&a.1)
                    .then_with(|| profile[a.0].entry_id.cmp(&profile[b.0].entry_id))
            });
            ranked
                .into_iter()
                .take(k)
                .map(|(i, s)| ChosenEntry {
                    entry_id: profile[i].entry_id.clone(),
                    score: Some(s),
                })
                .collect()
        }
    };
    Ok(ContextSelection {
        strategy,
        k,
        chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TaskKind;

    fn docs(texts: &[&str]) -> Vec<ProfileEntry> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| ProfileEntry::new(TaskKind::Lamp7, format!("d{}", i + 1), [("text", *t)]))
            .collect()
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_rules() {
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("The cat, the CAT."), ["the", "cat", "the", "cat"]);
        assert_eq!(tokenize("BM25-ranking v2"), ["bm25", "ranking", "v2"]);
    }

    #[test]
    fn index_statistics_by_hand() {
        let idx = Bm25Index::build(&docs(&["a b a"]), Bm25Params::default()).unwrap();
        assert_eq!(idx.n_docs(), 1);
        assert_eq!(idx.doc_len(), &[3]);
        assert_eq!(idx.avg_len(), 3.0);
        assert_eq!((idx.df("a"), idx.df("b")), (1, 1));

        let idx = Bm25Index::build(&docs(&["x", "x y"]), Bm25Params::default()).unwrap();
        assert_eq!(idx.avg_len(), 1.5);
        assert_eq!((idx.df("x"), idx.df("y")), (2, 1));
    }

    #[test]
    fn build_errors() {
        assert_eq!(
            Bm25Index::build(&[], Bm25Params::default()).unwrap_err(),
            RetrievalError::EmptyIndex
        );
        assert!(Bm25Index::build(&docs(&["a"]), Bm25Params { k1: 1.0, b: 1.5 }).is_err());
    }

    #[test]
    fn two_doc_score_is_ln2() {
        let idx = Bm25Index::build(&docs(&["a", "b"]), Bm25Params::default()).unwrap();
        let s = idx.score(&toks("a"), "d1").unwrap();
        assert!((s - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(idx.score(&toks("zzz"), "d1").unwrap(), 0.0);
        assert_eq!(
            idx.score(&toks("a"), "nope").unwrap_err(),
            RetrievalError::UnknownEntry("nope".into())
        );
    }

    #[test]
    fn repeated_query_terms_count_once() {
        let idx = Bm25Index::build(&docs(&["a c", "b"]), Bm25Params::default()).unwrap();
        assert_eq!(
            idx.score(&toks("a a a"), "d1").unwrap(),
            idx.score(&toks("a"), "d1").unwrap()
        );
    }

    #[test]
    fn none_strategy_is_empty() {
        let sel = select_context(&docs(&["a"]), "a", ContextStrategy::None, 4, None, Bm25Params::default())
            .unwrap();
        assert!(sel.chosen.is_empty());
        let sel = select_context(&[], "a", ContextStrategy::None, 0, None, Bm25Params::default()).unwrap();
        assert!(sel.chosen.is_empty());
    }

    #[test]
    fn selection_errors() {
        let p = Bm25Params::default();
        assert_eq!(
            select_context(&[], "a", ContextStrategy::Bm25, 1, None, p).unwrap_err(),
            RetrievalError::EmptyProfile { k: 1 }
        );
        assert_eq!(
            select_context(&docs(&["a"]), "a", ContextStrategy::Random, 1, None, p).unwrap_err(),
            RetrievalError::MissingSeed
        );
        assert!(matches!(
            select_context(&docs(&["a"]), "a", ContextStrategy::Bm25, 0, None, p),
            Err(RetrievalError::ZeroK(_))
        ));
    }

    #[test]
    fn bm25_k_exceeding_profile_returns_all_sorted() {
        let profile = docs(&["cat dog", "dog", "cat cat bird", "fish"]);
        let sel =
            select_context(&profile, "cat", ContextStrategy::Bm25, 10, None, Bm25Params::default()).unwrap();
        assert_eq!(sel.chosen.len(), 4);
        let scores: Vec<f64> = sel.chosen.iter().map(|c| c.score.unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(sel.chosen[0].entry_id, "d3");
        // zero-score ties fall back to entry id order
        assert_eq!(sel.chosen[2].entry_id, "d2");
        assert_eq!(sel.chosen[3].entry_id, "d4");
    }

    #[test]
    fn random_is_seeded() {
        let profile = docs(&["a", "b", "c", "d", "e", "f"]);
        let p = Bm25Params::default();
        let a = select_context(&profile, "q", ContextStrategy::Random, 2, Some(3), p).unwrap();
        let b = select_context(&profile, "q", ContextStrategy::Random, 2, Some(3), p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.chosen.len(), 2);
        assert!(a.chosen.iter().all(|c| c.score.is_none()));
    }
}
