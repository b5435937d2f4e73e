//! QA-assisted zero-shot long-text summarization.
//!
//! An LLM first learns textual "experience" (rule lists) while generating QA
//! pairs and summaries for a QA-labeled training set, then applies that
//! experience to unseen long documents without further training. The crate
//! also carries the evaluation harness used to compare runs with and without
//! the learned experience.

pub mod corpus;
pub mod engine;
pub mod eval;
pub mod experience;
pub mod provider;
pub mod textmetrics;
