//! Personalization pipeline for large reasoning models and a LaMP-style
//! evaluation harness.
//!
//! The pieces, bottom up:
//!
//! - [`corpus`]: LaMP task contracts, dataset ingestion, user sampling.
//! - [`retrieval`]: tokenizer, per-profile BM25, context selection.
//! - [`prompting`]: task prompts, profile context, reasoning template,
//!   self-referencing and baseline prompts.
//! - [`backend`]: chat backends (OpenAI-compatible HTTP, scripted mock),
//!   reasoning-trace splitting, token accounting.
//! - [`pipeline`]: the per-instance state machine and baselines.
//! - [`metrics`]: accuracy, macro-F1, MAE, RMSE, ROUGE-1, ROUGE-L.
//! - [`harness`]: experiment runner, ablations, n-sweeps, reports.

pub mod backend;
pub mod corpus;
pub mod harness;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod prompting;
pub mod retrieval;
pub mod rng;
