//! Evaluation metrics: accuracy, macro-F1, MAE, RMSE, ROUGE-1 and ROUGE-L,
//! plus repetition averaging and token statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{TaskCategory, TaskKind};
use crate::par::{self, Execution};
use crate::pipeline::RunRecord;
use crate::retrieval::tokenize;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("predictions ({preds}) and golds ({golds}) differ in length")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("no predictions to score")]
    Empty,
    #[error("label set is empty")]
    EmptyLabelSet,
    #[error("gold {0:?} is outside the label set")]
    GoldOutsideLabels(String),
    #[error("repetitions are ragged: {0}")]
    Ragged(String),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("no gold answer for instance {0:?}")]
    MissingGold(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "accuracy")]
    Accuracy,
    #[serde(rename = "f1")]
    MacroF1,
    #[serde(rename = "mae")]
    Mae,
    #[serde(rename = "rmse")]
    Rmse,
    #[serde(rename = "rouge-1")]
    Rouge1,
    #[serde(rename = "rouge-l")]
    RougeL,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Accuracy,
        Metric::MacroF1,
        Metric::Mae,
        Metric::Rmse,
        Metric::Rouge1,
        Metric::RougeL,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::MacroF1 => "f1",
            Metric::Mae => "mae",
            Metric::Rmse => "rmse",
            Metric::Rouge1 => "rouge-1",
            Metric::RougeL => "rouge-l",
        }
    }

    pub fn lower_is_better(self) -> bool {
        matches!(self, Metric::Mae | Metric::Rmse)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Metric {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| MetricError::UnknownMetric(s.to_string()))
    }
}

fn check_lengths(preds: usize, golds: usize) -> Result<(), MetricError> {
    if preds != golds {
        return Err(MetricError::LengthMismatch { preds, golds });
    }
    if preds == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn norm_label(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Fraction of exact matches after trimming and case folding.
pub fn accuracy<P: AsRef<str>, G: AsRef<str>>(preds: &[P], golds: &[G]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), golds.len())?;
    let hits = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| norm_label(p.as_ref()) == norm_label(g.as_ref()))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacroF1Options {
    /// Leave out labels with zero support and zero predictions.
    pub skip_absent_labels: bool,
}

impl Default for MacroF1Options {
    fn default() -> Self {
        Self {
            skip_absent_labels: true,
        }
    }
}

/// Unweighted mean of per-label F1 over `label_set`.
///
/// Predictions outside the label set count as one extra wrong class: they
/// cost recall for the gold label and are never averaged in themselves.
pub fn macro_f1<P: AsRef<str>, G: AsRef<str>, L: AsRef<str>>(
    preds: &[P],
    golds: &[G],
    label_set: &[L],
    options: MacroF1Options,
) -> Result<f64, MetricError> {
    if label_set.is_empty() {
        return Err(MetricError::EmptyLabelSet);
    }
    check_lengths(preds.len(), golds.len())?;
    let labels: Vec<String> = label_set
        .iter()
        .map(|l| norm_label(l.as_ref()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut tp: HashMap<&str, usize> = HashMap::new();
    let mut pred_count: HashMap<String, usize> = HashMap::new();
    let mut support: HashMap<String, usize> = HashMap::new();
    let golds_n: Vec<String> = golds.iter().map(|g| norm_label(g.as_ref())).collect();
    for g in &golds_n {
        if !labels.contains(g) {
            return Err(MetricError::GoldOutsideLabels(g.clone()));
        }
    }
    for (p, g) in preds.iter().zip(&golds_n) {
        let p = norm_label(p.as_ref());
        *support.entry(g.clone()).or_default() += 1;
        if &p == g {
            *tp.entry(g.as_str()).or_default() += 1;
        }
        *pred_count.entry(p).or_default() += 1;
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for label in &labels {
        let sup = support.get(label).copied().unwrap_or(0);
        let predicted = pred_count.get(label).copied().unwrap_or(0);
        if options.skip_absent_labels && sup == 0 && predicted == 0 {
            continue;
        }
        counted += 1;
        let hits = tp.get(label.as_str()).copied().unwrap_or(0);
        if hits == 0 {
            continue;
        }
        let precision = hits as f64 / predicted as f64;
        let recall = hits as f64 / sup as f64;
        total += 2.0 * precision * recall / (precision + recall);
    }
    Ok(if counted == 0 { 0.0 } else { total / counted as f64 })
}

pub fn mae(preds: &[i64], golds: &[i64]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), golds.len())?;
    let sum: f64 = preds
        .iter()
        .zip(golds)
        .map(|(p, g)| (p - g).abs() as f64)
        .sum();
    Ok(sum / preds.len() as f64)
}

pub fn rmse(preds: &[i64], golds: &[i64]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), golds.len())?;
    let sum: f64 = preds
        .iter()
        .zip(golds)
        .map(|(p, g)| ((p - g) * (p - g)) as f64)
        .sum();
    Ok((sum / preds.len() as f64).sqrt())
}

/// Rating parsed from free model output: the first run of ASCII digits, kept
/// when it lies in 1..=5, otherwise the midpoint 3.
pub fn parse_rating(text: &str) -> i64 {
    const FALLBACK: i64 = 3;
    let digits: String = text
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    match digits.parse::<i64>() {
        Ok(v) if (1..=5).contains(&v) => v,
        _ => FALLBACK,
    }
}

fn f_measure(overlap: usize, cand_len: usize, ref_len: usize) -> f64 {
    if overlap == 0 || cand_len == 0 || ref_len == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand_len as f64;
    let r = overlap as f64 / ref_len as f64;
    2.0 * p * r / (p + r)
}

/// Clipped unigram overlap between two token sequences.
pub fn unigram_overlap<S: AsRef<str>>(cand: &[S], reference: &[S]) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *counts.entry(t.as_ref()).or_default() += 1;
    }
    let mut overlap = 0;
    for t in cand {
        if let Some(c) = counts.get_mut(t.as_ref()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    overlap
}

/// Longest common subsequence length, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_1_f(candidate: &str, reference: &str) -> f64 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    f_measure(unigram_overlap(&c, &r), c.len(), r.len())
}

pub fn rouge_l_f(candidate: &str, reference: &str) -> f64 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    f_measure(lcs_len(&c, &r), c.len(), r.len())
}

/// (ROUGE-1, ROUGE-L) for each (candidate, reference) pair.
pub fn rouge_scores<S: AsRef<str> + Sync>(pairs: &[(S, S)], exec: Execution) -> Vec<(f64, f64)> {
    par::map(pairs, exec, |(c, r)| {
        let c = tokenize(c.as_ref());
        let r = tokenize(r.as_ref());
        (
            f_measure(unigram_overlap(&c, &r), c.len(), r.len()),
            f_measure(lcs_len(&c, &r), c.len(), r.len()),
        )
    })
}

/// Task metrics for one set of predictions.
pub fn evaluate<P: AsRef<str> + Sync, G: AsRef<str> + Sync>(
    task: TaskKind,
    preds: &[P],
    golds: &[G],
    f1_options: MacroF1Options,
) -> Result<BTreeMap<Metric, f64>, MetricError> {
    check_lengths(preds.len(), golds.len())?;
    let mut out = BTreeMap::new();
    match task.category() {
        TaskCategory::Classification => {
            out.insert(Metric::Accuracy, accuracy(preds, golds)?);
            let labels = task.label_set().unwrap_or_default();
            out.insert(Metric::MacroF1, macro_f1(preds, golds, labels, f1_options)?);
        }
        TaskCategory::Regression => {
            let p: Vec<i64> = preds.iter().map(|s| parse_rating(s.as_ref())).collect();
            let g: Vec<i64> = golds.iter().map(|s| parse_rating(s.as_ref())).collect();
            out.insert(Metric::Mae, mae(&p, &g)?);
            out.insert(Metric::Rmse, rmse(&p, &g)?);
        }
        TaskCategory::Generation => {
            let pairs: Vec<(&str, &str)> = preds
                .iter()
                .zip(golds)
                .map(|(p, g)| (p.as_ref(), g.as_ref()))
                .collect();
            let scores = rouge_scores(&pairs, Execution::Sequential);
            let n = scores.len() as f64;
            out.insert(Metric::Rouge1, scores.iter().map(|s| s.0).sum::<f64>() / n);
            out.insert(Metric::RougeL, scores.iter().map(|s| s.1).sum::<f64>() / n);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub task: TaskKind,
    pub per_metric: BTreeMap<Metric, f64>,
    pub n_instances: usize,
    pub reps: u32,
    pub mean_completion_tokens: f64,
}

/// Averages per-repetition metrics over `reps` repetitions.
///
/// Every repetition must cover the same instance ids exactly once.
/// `mean_completion_tokens` is the mean over all records.
pub fn aggregate(
    task: TaskKind,
    records: &[RunRecord],
    golds: &HashMap<String, String>,
    reps: u32,
    f1_options: MacroF1Options,
) -> Result<EvalResult, MetricError> {
    if records.is_empty() || reps == 0 {
        return Err(MetricError::Empty);
    }
    let mut by_rep: BTreeMap<u32, BTreeMap<&str, &RunRecord>> = BTreeMap::new();
    for r in records {
        if r.rep >= reps {
            return Err(MetricError::Ragged(format!(
                "record for rep {} but only {reps} reps",
                r.rep
            )));
        }
        let slot = by_rep.entry(r.rep).or_default();
        if slot.insert(r.instance_id.as_str(), r).is_some() {
            return Err(MetricError::Ragged(format!(
                "instance {} appears twice in rep {}",
                r.instance_id, r.rep
            )));
        }
    }
    if by_rep.len() != reps as usize {
        return Err(MetricError::Ragged(format!(
            "expected {reps} reps, found {}",
            by_rep.len()
        )));
    }
    let first_ids: Vec<&str> = by_rep.values().next().unwrap().keys().copied().collect();
    let mut sums: BTreeMap<Metric, f64> = BTreeMap::new();
    for (rep, recs) in &by_rep {
        let ids: Vec<&str> = recs.keys().copied().collect();
        if ids != first_ids {
            return Err(MetricError::Ragged(format!(
                "rep {rep} covers a different instance set"
            )));
        }
        let mut preds = Vec::with_capacity(ids.len());
        let mut gold_list = Vec::with_capacity(ids.len());
        for (id, rec) in recs {
            preds.push(rec.final_answer.as_str());
            gold_list.push(
                golds
                    .get(*id)
                    .ok_or_else(|| MetricError::MissingGold(id.to_string()))?
                    .as_str(),
            );
        }
        for (m, v) in evaluate(task, &preds, &gold_list, f1_options)? {
            *sums.entry(m).or_default() += v;
        }
    }
    let total_tokens: u64 = records.iter().map(|r| r.total_completion_tokens).sum();
    Ok(EvalResult {
        task,
        per_metric: sums
            .into_iter()
            .map(|(m, s)| (m, s / f64::from(reps)))
            .collect(),
        n_instances: first_ids.len(),
        reps,
        mean_completion_tokens: total_tokens as f64 / records.len() as f64,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&["a", "b"], &["a", "b"]).unwrap(), 1.0);
        assert_eq!(accuracy(&["a", "b"], &["c", "d"]).unwrap(), 0.0);
        assert_eq!(accuracy(&["a", "B ", "c", "x"], &["a", "b", "c", "d"]).unwrap(), 0.75);
        assert_eq!(
            accuracy(&["a"], &["a", "b"]).unwrap_err(),
            MetricError::LengthMismatch { preds: 1, golds: 2 }
        );
    }

    #[test]
    fn macro_f1_cases() {
        let opts = MacroF1Options::default();
        assert_eq!(macro_f1(&["a", "b"], &["a", "b"], &["a", "b"], opts).unwrap(), 1.0);
        let v = macro_f1(&["a", "b", "b", "b"], &["a", "a", "b", "b"], &["a", "b"], opts).unwrap();
        assert!((v - 11.0 / 15.0).abs() < 1e-15);
        // all predictions "a" over present classes a, b: F1(a) = 2·0.5·1/1.5 = 2/3
        let v = macro_f1(&["a", "a", "a", "a"], &["a", "a", "b", "b"], &["a", "b"], opts).unwrap();
        assert!((v - (2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(
            macro_f1::<&str, &str, &str>(&["a"], &["a"], &[], opts).unwrap_err(),
            MetricError::EmptyLabelSet
        );
    }

    #[test]
    fn macro_f1_absent_label_policy() {
        let labels = ["a", "b", "c"];
        let skip = macro_f1(&["a", "b"], &["a", "b"], &labels, MacroF1Options::default()).unwrap();
        assert_eq!(skip, 1.0);
        let keep = macro_f1(
            &["a", "b"],
            &["a", "b"],
            &labels,
            MacroF1Options {
                skip_absent_labels: false,
            },
        )
        .unwrap();
        assert!((keep - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_set_prediction_is_a_wrong_class() {
        let v = macro_f1(&["zzz", "b"], &["a", "b"], &["a", "b"], MacroF1Options::default()).unwrap();
        // a: tp=0 → 0; b: P=1, R=1 → 1
        assert_eq!(v, 0.5);
    }

    #[test]
    fn regression_cases() {
        assert_eq!(mae(&[1, 2], &[1, 2]).unwrap(), 0.0);
        assert_eq!(rmse(&[1, 2], &[1, 2]).unwrap(), 0.0);
        assert_eq!(mae(&[1, 5], &[5, 1]).unwrap(), 4.0);
        assert_eq!(rmse(&[1, 5], &[5, 1]).unwrap(), 4.0);
        assert_eq!(mae(&[2, 4, 4], &[1, 4, 5]).unwrap(), 2.0 / 3.0);
        assert_eq!(rmse(&[2, 4, 4], &[1, 4, 5]).unwrap(), (2.0f64 / 3.0).sqrt());
    }

    #[test]
    fn rating_parser() {
        assert_eq!(parse_rating("4"), 4);
        assert_eq!(parse_rating("maybe 4?"), 4);
        assert_eq!(parse_rating("no idea"), 3);
        assert_eq!(parse_rating("10 stars"), 3);
        assert_eq!(parse_rating("0"), 3);
    }

    #[test]
    fn rouge_cases() {
        assert_eq!(rouge_1_f("the cat sat", "the cat sat"), 1.0);
        assert_eq!(rouge_l_f("the cat sat", "the cat sat"), 1.0);
        assert!((rouge_1_f("the cat sat", "the cat") - 0.8).abs() < 1e-15);
        assert!((rouge_l_f("the cat sat", "the cat") - 0.8).abs() < 1e-15);
        assert_eq!(rouge_1_f("", ""), 0.0);
        assert_eq!(rouge_l_f("a", ""), 0.0);
        // order matters for L but not for 1
        assert_eq!(rouge_1_f("b a", "a b"), 1.0);
        assert_eq!(rouge_l_f("b a", "a b"), 0.5);
    }

    #[test]
    fn lcs_small() {
        let a: Vec<&str> = "a b c b d a b".split(' ').collect();
        let b: Vec<&str> = "b d c a b a".split(' ').collect();
        assert_eq!(lcs_len(&a, &b), 4);
    }

    #[test]
    fn metric_ids_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.id().parse::<Metric>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.id()));
        }
    }
}
