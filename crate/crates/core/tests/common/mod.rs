//! Shared fixtures and independent reference implementations for the
//! integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use r2p_core::backend::{MockBackend, MockReply, MockRule, MockScript, TranscriptEntry};
use r2p_core::corpus::{load_dataset, Dataset, TaskKind};
use r2p_core::rng::SplitMix64;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn toy_lamp1() -> Dataset {
    load_dataset(fixture("toy_lamp1.jsonl"), TaskKind::Lamp1).expect("toy LaMP-1 fixture")
}

pub fn toy_lamp3() -> Dataset {
    load_dataset(fixture("toy_lamp3.jsonl"), TaskKind::Lamp3).expect("toy LaMP-3 fixture")
}

/// Compares against `tests/golden/<name>`; set `R2P_UPDATE_GOLDEN=1` to
/// rewrite the file instead.
pub fn assert_golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("R2P_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        expected == actual,
        "golden mismatch for {name}\n--- expected\n{expected}\n--- actual\n{actual}"
    );
}

// ---- mock replies --------------------------------------------------------

/// Passes every checklist item for a classification task: non-empty, in the
/// label set, and the trace names the profile step.
pub const CLEAN_TRACE: &str =
    "<think>Question Analysis: pick the related reference. User Profile Integration: the author works in the same area.</think>";

pub fn clean_reply(answer: &str, tokens: u64) -> MockReply {
    MockReply::with_tokens(format!("{CLEAN_TRACE}{answer}"), tokens)
}

pub fn clean_mock() -> MockBackend {
    MockBackend::constant(clean_reply("[1]", 7))
}

/// First call for `instance` answers in prose, which fails the format check.
pub fn format_failure_rule(instance: &str) -> MockRule {
    MockRule {
        instance: Some(instance.to_string()),
        ordinal: Some(0),
        ..MockRule::always(MockReply::with_tokens(
            format!("{CLEAN_TRACE}I would go with the first reference."),
            9,
        ))
    }
}

/// First call for `instance` gives a well-formed answer whose reasoning never
/// touches the profile.
pub fn profile_failure_rule(instance: &str) -> MockRule {
    MockRule {
        instance: Some(instance.to_string()),
        ordinal: Some(0),
        ..MockRule::always(MockReply::with_tokens(
            "<think>Only the two options matter here.</think>[2]",
            5,
        ))
    }
}

pub fn script_with(rules: Vec<MockRule>) -> MockScript {
    MockScript {
        rules,
        default: Some(clean_reply("[1]", 7)),
    }
}

pub fn calls_per_instance(transcript: &[TranscriptEntry]) -> HashMap<(String, u32), usize> {
    let mut out = HashMap::new();
    for t in transcript {
        *out.entry((t.ctx.instance_id.clone(), t.ctx.rep)).or_default() += 1;
    }
    out
}

// ---- random inputs -------------------------------------------------------

pub fn random_tokens(rng: &mut SplitMix64, vocab: usize, min_len: usize, max_len: usize) -> Vec<String> {
    let len = min_len + rng.below((max_len - min_len + 1) as u64) as usize;
    (0..len).map(|_| format!("w{}", rng.below(vocab as u64))).collect()
}

// ---- BM25 oracle ---------------------------------------------------------

/// Direct evaluation of Okapi BM25 over pre-tokenized documents:
/// `Σ_{t ∈ distinct(q)} idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·|d|/avgdl))`
/// with `idf(t) = ln((N − df + 0.5)/(df + 0.5) + 1)`.
pub fn bm25_oracle(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    let mut distinct: Vec<&String> = Vec::new();
    for t in query {
        if !distinct.contains(&t) {
            distinct.push(t);
        }
    }
    docs.iter()
        .map(|doc| {
            let mut score = 0.0;
            for t in &distinct {
                let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
                let tf = doc.iter().filter(|w| w == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc.len() as f64 / avgdl));
            }
            score
        })
        .collect()
}

// ---- ROUGE oracles -------------------------------------------------------

pub fn lcs_oracle(a: &[String], b: &[String]) -> usize {
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            table[i][j] = if a[i - 1] == b[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    table[a.len()][b.len()]
}

pub fn clipped_overlap_oracle(cand: &[String], reference: &[String]) -> usize {
    let mut total = 0;
    let mut seen: Vec<&String> = Vec::new();
    for t in cand {
        if seen.contains(&t) {
            continue;
        }
        seen.push(t);
        let c = cand.iter().filter(|x| *x == t).count();
        let r = reference.iter().filter(|x| *x == t).count();
        total += c.min(r);
    }
    total
}

pub fn f_from_counts(hit: usize, cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 || ref_len == 0 {
        return 0.0;
    }
    let p = hit as f64 / cand_len as f64;
    let r = hit as f64 / ref_len as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}
