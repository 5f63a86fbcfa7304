//! Result rows and their CSV / markdown rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::TaskKind;
use crate::metrics::Metric;
use crate::pipeline::Strategy;
use crate::retrieval::ContextStrategy;

use super::HarnessError;

/// One experiment's aggregated result plus the config columns that
/// identify it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_hash: String,
    pub task: TaskKind,
    pub strategy: Strategy,
    pub retrieval: ContextStrategy,
    pub k: usize,
    pub n: usize,
    pub use_hrt: bool,
    pub use_rpi: bool,
    pub use_srm: bool,
    pub classification_vote: bool,
    pub model: String,
    pub metrics: BTreeMap<Metric, f64>,
    pub mean_tokens: f64,
    pub reps: u32,
    pub n_instances: usize,
}

impl ResultRow {
    /// `+hrt +rpi -srm` style module switches; `-` for baselines.
    pub fn flags(&self) -> String {
        if self.strategy != Strategy::R2p {
            return "-".to_string();
        }
        let sw = |on: bool, name: &str| format!("{}{name}", if on { '+' } else { '-' });
        let mut parts = vec![
            sw(self.use_hrt, "hrt"),
            sw(self.use_rpi, "rpi"),
            sw(self.use_srm, "srm"),
        ];
        if self.classification_vote {
            parts.push("+vote".to_string());
        }
        parts.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(HarnessError::Config(format!("unknown report format {s:?}"))),
        }
    }
}

fn metric_columns(rows: &[ResultRow]) -> Vec<Metric> {
    Metric::ALL
        .into_iter()
        .filter(|m| rows.iter().any(|r| r.metrics.contains_key(m)))
        .collect()
}

fn header(metrics: &[Metric]) -> Vec<String> {
    let mut h: Vec<String> = ["task", "strategy", "k", "n", "flags"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(metrics.iter().map(|m| m.id().to_string()));
    h.push("mean_tokens".into());
    h.push("reps".into());
    h
}

fn cells(row: &ResultRow, metrics: &[Metric]) -> Vec<String> {
    let mut c = vec![
        row.task.id().to_string(),
        row.strategy.id().to_string(),
        row.k.to_string(),
        row.n.to_string(),
        row.flags(),
    ];
    c.extend(
        metrics
            .iter()
            .map(|m| row.metrics.get(m).map(|v| format!("{v:.4}")).unwrap_or_default()),
    );
    c.push(format!("{:.2}", row.mean_tokens));
    c.push(row.reps.to_string());
    c
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders rows with columns task, strategy, k, n, flags, metrics...,
/// mean_tokens, reps. Markdown bolds the best value of each metric column
/// (lowest for MAE/RMSE, highest otherwise).
pub fn emit_report(rows: &[ResultRow], format: ReportFormat) -> Result<String, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Config("no result rows to report".into()));
    }
    let metrics = metric_columns(rows);
    let head = header(&metrics);
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            writeln!(out, "{}", head.join(",")).unwrap();
            for row in rows {
                let line: Vec<String> = cells(row, &metrics).iter().map(|c| csv_field(c)).collect();
                writeln!(out, "{}", line.join(",")).unwrap();
            }
        }
        ReportFormat::Markdown => {
            let best: BTreeMap<Metric, f64> = metrics
                .iter()
                .filter_map(|m| {
                    let vals = rows.iter().filter_map(|r| r.metrics.get(m).copied());
                    let b = if m.lower_is_better() {
                        vals.fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
                    } else {
                        vals.fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
                    };
                    b.map(|b| (*m, b))
                })
                .collect();
            writeln!(out, "| {} |", head.join(" | ")).unwrap();
            writeln!(out, "|{}", "---|".repeat(head.len())).unwrap();
            for row in rows {
                let mut c = cells(row, &metrics);
                for (i, m) in metrics.iter().enumerate() {
                    if let (Some(v), Some(b)) = (row.metrics.get(m), best.get(m)) {
                        if format!("{v:.4}") == format!("{b:.4}") {
                            c[5 + i] = format!("**{}**", c[5 + i]);
                        }
                    }
                }
                writeln!(out, "| {} |", c.join(" | ")).unwrap();
            }
        }
    }
    Ok(out)
}

pub fn write_report(
    rows: &[ResultRow],
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let text = emit_report(rows, format)?;
    std::fs::write(path.as_ref(), text).map_err(|e| HarnessError::io(path.as_ref(), e))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>, HarnessError> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(HarnessError::io(path, e)),
    };
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| {
            HarnessError::Config(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(rows)
}

/// Replaces the row with the same config hash, or appends.
pub fn upsert_result(path: impl AsRef<Path>, row: &ResultRow) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let mut rows = read_results(path)?;
    match rows.iter_mut().find(|r| r.config_hash == row.config_hash) {
        Some(slot) => *slot = row.clone(),
        None => rows.push(row.clone()),
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut f = File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
        for r in &rows {
            let mut line = serde_json::to_vec(r).expect("result rows serialize");
            line.push(b'\n');
            f.write_all(&line).map_err(|e| HarnessError::io(&tmp, e))?;
        }
    }
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}
