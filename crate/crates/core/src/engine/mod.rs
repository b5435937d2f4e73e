//! Training loop, test-time summarization and the baseline.
//!
//! Training is strictly sequential because each document sees the
//! experience left by the previous one. Test and baseline batches fan out
//! over a bounded rayon pool that reads one immutable experience snapshot.

mod config;
mod template;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    Ablation, DataSettings, DatasetSpec, IdfSource, Mode, ProviderSettings, RunConfig, StarRule, StopThresholds,
};
pub use template::{
    format_qa_pairs, Bindings, PromptTemplate, TemplateSet, ARTICLE, GENERATED_QA, GOLD_QA, QA_EXPERIENCE,
    SUMMARY, SUM_EXPERIENCE,
};

use crate::corpus::{CorpusError, Dataset, DatasetKind, Document, QaPair};
use crate::experience::{ExperienceError, ExperienceKind, ExperienceSet};
use crate::provider::{
    parse_qa_output, parse_summary_output, ParseError, Provider, ProviderError, ProviderResponse,
};
use crate::textmetrics::{compression_rate_with, flesch, Idf, MetricError, SimilarityVector};

/// Appended to a prompt whose reply could not be parsed. Changing the prompt
/// also changes the request hash, so replay keeps both exchanges apart.
pub const REPROMPT_NOTE: &str =
    "\n\nYour previous reply could not be parsed. Reply with exactly one JSON object in the format given above and nothing else.";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("template {template:?} has no binding for placeholder [{placeholder}]")]
    UnboundPlaceholder { template: String, placeholder: String },
    #[error("io: {0}")]
    Io(String),
    #[error("config: {0}")]
    Config(String),
    #[error("precondition failed for {doc_id}: {reason}")]
    Precondition { doc_id: String, reason: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("unparseable model output: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Experience(#[from] ExperienceError),
    #[error("metric: {0}")]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{failed} of {total} documents failed, above the failure threshold {threshold}")]
    FailureThreshold { failed: usize, total: usize, threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ThresholdsMet,
    KExhausted,
}

/// One inner-loop summary attempt during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub doc_id: String,
    /// 1-based attempt index.
    pub k: u32,
    pub summary_candidate: String,
    pub s_i: f64,
    pub r_i: f64,
    pub c_i: f64,
    pub stopped: bool,
    pub stop_reason: Option<StopReason>,
    /// Experience revision after this attempt's summary-rule update.
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocFailure {
    pub doc_id: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub experience: ExperienceSet,
    pub traces: Vec<IterationTrace>,
    /// Generated QA pairs per trained document.
    pub generated_qa: BTreeMap<String, Vec<QaPair>>,
    pub failures: Vec<DocFailure>,
}

impl TrainOutcome {
    pub fn traces_jsonl(&self) -> String {
        jsonl(&self.traces)
    }
}

/// Per-document output of a test or baseline batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocOutput {
    pub doc_id: String,
    pub summary: String,
    /// Untrimmed model reply, which at test time also holds the
    /// intermediate QA pairs.
    pub raw: String,
    pub request_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutputs {
    pub outputs: BTreeMap<String, DocOutput>,
    pub failures: Vec<DocFailure>,
}

impl RunOutputs {
    pub fn summaries(&self) -> BTreeMap<String, String> {
        self.outputs.iter().map(|(id, o)| (id.clone(), o.summary.clone())).collect()
    }

    pub fn total(&self) -> usize {
        self.outputs.len() + self.failures.len()
    }

    pub fn check_failures(&self, threshold: f64) -> Result<(), EngineError> {
        check_failure_ratio(self.failures.len(), self.total(), threshold)
    }

    pub fn outputs_jsonl(&self) -> String {
        jsonl(self.outputs.values())
    }
}

fn jsonl<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records always serialize"));
        out.push('\n');
    }
    out
}

fn check_failure_ratio(failed: usize, total: usize, threshold: f64) -> Result<(), EngineError> {
    if total > 0 && failed as f64 / total as f64 > threshold {
        return Err(EngineError::FailureThreshold { failed, total, threshold });
    }
    Ok(())
}

/// Which test prompt a batch uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    Summarization,
    Qa,
}

impl TestKind {
    pub fn for_mode(mode: Mode) -> Option<Self> {
        match mode {
            Mode::TestSummarization => Some(TestKind::Summarization),
            Mode::TestQa => Some(TestKind::Qa),
            _ => None,
        }
    }
}

pub struct Engine {
    config: RunConfig,
    templates: TemplateSet,
    provider: Arc<dyn Provider>,
}

impl Engine {
    pub fn new(config: RunConfig, templates: TemplateSet, provider: Arc<dyn Provider>) -> Self {
        Self { config, templates, provider }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn provider(&self) -> &Arc<dyn Provider> {
        &self.provider
    }

    pub fn call(&self, prompt: String) -> Result<ProviderResponse, ProviderError> {
        let req = self.config.provider.request(prompt);
        req.validate()?;
        self.provider.complete(&req)
    }

    /// Calls the model and parses its reply, re-prompting once on a parse failure.
    fn call_parsed<T>(&self, prompt: String, parse: fn(&str) -> Result<T, ParseError>) -> Result<T, EngineError> {
        let first = self.call(prompt.clone())?;
        match parse(&first.raw_text) {
            Ok(v) => Ok(v),
            Err(e) => {
                log::warn!("reply {} did not parse ({e}); re-prompting", first.request_hash);
                let second = self.call(prompt + REPROMPT_NOTE)?;
                Ok(parse(&second.raw_text)?)
            }
        }
    }

    fn idf_for(&self, ds: &Dataset) -> Idf {
        match self.config.similarity_idf {
            config::IdfSource::Corpus => {
                let texts: Vec<&str> = ds.documents.iter().map(|d| d.text.as_str()).collect();
                Idf::from_corpus(&texts)
            }
            config::IdfSource::Unit => Idf::unit(),
        }
    }

    /// Runs the training loop over `train_set`, starting from `experience`.
    ///
    /// A document that fails (provider or parse error after the retry) is
    /// recorded and skipped; its partial experience updates are discarded.
    /// The run aborts once the failed fraction exceeds the failure threshold.
    pub fn train(&self, train_set: &Dataset, experience: ExperienceSet) -> Result<TrainOutcome, EngineError> {
        if train_set.kind != DatasetKind::Qa {
            return Err(EngineError::Precondition {
                doc_id: train_set.name.clone(),
                reason: "training needs a qa dataset".into(),
            });
        }
        self.config.thresholds.validate()?;
        let t = &self.config.thresholds;
        log::info!(
            "training on {} documents with s_min={} r_min={} c_max={} k_max={}",
            train_set.len(),
            t.s_min,
            t.r_min,
            t.c_max,
            t.k_max
        );
        let idf = self.idf_for(train_set);
        let mut out = TrainOutcome {
            experience,
            traces: Vec::new(),
            generated_qa: BTreeMap::new(),
            failures: Vec::new(),
        };
        for doc in &train_set.documents {
            let mut working = out.experience.clone();
            let mut traces = Vec::new();
            match self.train_document(doc, &idf, &mut working, &mut traces) {
                Ok(generated) => {
                    out.experience = working;
                    out.traces.extend(traces);
                    out.generated_qa.insert(doc.id.clone(), generated);
                }
                Err((stage, e)) => {
                    log::error!("training on {} failed at {stage}: {e}", doc.id);
                    out.failures.push(DocFailure { doc_id: doc.id.clone(), stage: stage.into(), error: e.to_string() });
                    check_failure_ratio(out.failures.len(), train_set.len(), self.config.failure_threshold)?;
                }
            }
        }
        Ok(out)
    }

    fn train_document(
        &self,
        doc: &Document,
        idf: &Idf,
        es: &mut ExperienceSet,
        traces: &mut Vec<IterationTrace>,
    ) -> Result<Vec<QaPair>, (&'static str, EngineError)> {
        if doc.gold_qa.is_empty() {
            let reason = "no gold QA pairs".to_string();
            return Err(("qa", EngineError::Precondition { doc_id: doc.id.clone(), reason }));
        }
        let gold = format_qa_pairs(&doc.gold_qa);
        let qa_prompt = self
            .templates
            .qa_train
            .render(
                &Bindings::new()
                    .with(ARTICLE, doc.text.as_str())
                    .with(GOLD_QA, gold.as_str())
                    .with(QA_EXPERIENCE, es.exp_qa.as_str()),
            )
            .map_err(|e| ("qa", e))?;
        let qa = self.call_parsed(qa_prompt, parse_qa_output).map_err(|e| ("qa", e))?;
        es.update(ExperienceKind::Qa, &qa.qa_experience, &doc.id).map_err(|e| ("qa", e.into()))?;
        let generated = format_qa_pairs(&qa.qa_pairs);

        let source = SimilarityVector::from_text(&doc.text, idf);
        let t = self.config.thresholds;
        for k in 1..=t.k_max {
            let mut trace = self
                .summary_step(doc, k, idf, &source, &gold, &generated, es)
                .map_err(|e| ("summary", e))?;
            if t.met(trace.s_i, trace.r_i, trace.c_i) {
                trace.stopped = true;
                trace.stop_reason = Some(StopReason::ThresholdsMet);
            } else if k == t.k_max {
                trace.stopped = true;
                trace.stop_reason = Some(StopReason::KExhausted);
            }
            log::debug!(
                "{} k={k} s={:.4} r={:.2} c={:.4} stopped={}",
                doc.id,
                trace.s_i,
                trace.r_i,
                trace.c_i,
                trace.stopped
            );
            let stopped = trace.stopped;
            traces.push(trace);
            if stopped {
                break;
            }
        }
        Ok(qa.qa_pairs)
    }

    #[allow(clippy::too_many_arguments)]
    fn summary_step(
        &self,
        doc: &Document,
        k: u32,
        idf: &Idf,
        source: &SimilarityVector,
        gold: &str,
        generated: &str,
        es: &mut ExperienceSet,
    ) -> Result<IterationTrace, EngineError> {
        let prompt = self.templates.summary_train.render(
            &Bindings::new()
                .with(ARTICLE, doc.text.as_str())
                .with(GOLD_QA, gold)
                .with(GENERATED_QA, generated)
                .with(SUM_EXPERIENCE, es.exp_sum.as_str())
                .with(QA_EXPERIENCE, es.exp_qa.as_str()),
        )?;
        let sum = self.call_parsed(prompt, parse_summary_output)?;
        let s_i = SimilarityVector::from_text(&sum.summary, idf).cosine(source);
        let r_i = flesch(&sum.summary)?.score;
        let c_i = compression_rate_with(&sum.summary, &doc.text, self.config.length_unit)?;
        es.update(ExperienceKind::Sum, &sum.summary_experience, &doc.id)?;
        Ok(IterationTrace {
            doc_id: doc.id.clone(),
            k,
            summary_candidate: sum.summary,
            s_i,
            r_i,
            c_i,
            stopped: false,
            stop_reason: None,
            revision: es.revision,
        })
    }

    /// The test prompt for one document, with the ablated slot left empty.
    pub fn render_test_prompt(
        &self,
        doc: &Document,
        es: &ExperienceSet,
        kind: TestKind,
        ablation: Ablation,
    ) -> Result<String, EngineError> {
        if doc.text.trim().is_empty() {
            return Err(EngineError::Precondition { doc_id: doc.id.clone(), reason: "empty text".into() });
        }
        let sum_exp = if ablation == Ablation::NoSumExp { "" } else { es.exp_sum.as_str() };
        let qa_exp = if ablation == Ablation::NoQaExp { "" } else { es.exp_qa.as_str() };
        let mut bindings = Bindings::new()
            .with(ARTICLE, doc.text.as_str())
            .with(SUM_EXPERIENCE, sum_exp)
            .with(QA_EXPERIENCE, qa_exp);
        let template = match kind {
            TestKind::Summarization => &self.templates.test_summarization,
            TestKind::Qa => {
                if doc.gold_qa.is_empty() {
                    return Err(EngineError::Precondition {
                        doc_id: doc.id.clone(),
                        reason: "qa test needs gold QA pairs".into(),
                    });
                }
                bindings.set(GOLD_QA, format_qa_pairs(&doc.gold_qa));
                &self.templates.test_qa
            }
        };
        template.render(&bindings)
    }

    /// One test-time call for `doc`. The reply covers both the intermediate QA
    /// pairs and the summary; see [`extract_final_summary`].
    pub fn test_document(&self, doc: &Document, es: &ExperienceSet, kind: TestKind) -> Result<DocOutput, EngineError> {
        let prompt = self.render_test_prompt(doc, es, kind, self.config.ablation)?;
        let resp = self.call(prompt)?;
        Ok(DocOutput {
            doc_id: doc.id.clone(),
            summary: extract_final_summary(&resp.raw_text),
            raw: resp.raw_text,
            request_hash: resp.request_hash,
        })
    }

    pub fn test_summarization(&self, doc: &Document, es: &ExperienceSet) -> Result<String, EngineError> {
        self.test_document(doc, es, TestKind::Summarization).map(|o| o.summary)
    }

    pub fn test_qa_dataset(&self, doc: &Document, es: &ExperienceSet) -> Result<String, EngineError> {
        self.test_document(doc, es, TestKind::Qa).map(|o| o.summary)
    }

    pub fn render_baseline_prompt(&self, doc: &Document) -> Result<String, EngineError> {
        if doc.text.trim().is_empty() {
            return Err(EngineError::Precondition { doc_id: doc.id.clone(), reason: "empty text".into() });
        }
        self.templates.baseline.render(&Bindings::new().with(ARTICLE, doc.text.as_str()))
    }

    pub fn baseline_document(&self, doc: &Document) -> Result<DocOutput, EngineError> {
        let resp = self.call(self.render_baseline_prompt(doc)?)?;
        Ok(DocOutput {
            doc_id: doc.id.clone(),
            summary: resp.raw_text.trim().to_string(),
            raw: resp.raw_text,
            request_hash: resp.request_hash,
        })
    }

    pub fn baseline_summary(&self, doc: &Document) -> Result<String, EngineError> {
        self.baseline_document(doc).map(|o| o.summary)
    }

    /// Test-time batch. `es` is shared read-only by every worker.
    pub fn run_test(&self, ds: &Dataset, es: &ExperienceSet, kind: TestKind) -> Result<RunOutputs, EngineError> {
        if kind == TestKind::Qa && ds.kind != DatasetKind::Qa {
            return Err(EngineError::Config(format!("{} is not a qa dataset", ds.name)));
        }
        self.fan_out(ds, "test", |doc| self.test_document(doc, es, kind))
    }

    pub fn run_baseline(&self, ds: &Dataset) -> Result<RunOutputs, EngineError> {
        self.fan_out(ds, "baseline", |doc| self.baseline_document(doc))
    }

    fn fan_out<F>(&self, ds: &Dataset, stage: &str, f: F) -> Result<RunOutputs, EngineError>
    where
        F: Fn(&Document) -> Result<DocOutput, EngineError> + Sync,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism)
            .build()
            .map_err(|e| EngineError::Config(e.to_string()))?;
        let results: Vec<(String, Result<DocOutput, EngineError>)> =
            pool.install(|| ds.documents.par_iter().map(|d| (d.id.clone(), f(d))).collect());
        let mut out = RunOutputs::default();
        for (doc_id, result) in results {
            match result {
                Ok(o) => {
                    out.outputs.insert(doc_id, o);
                }
                Err(e) => {
                    log::error!("{stage} failed for {doc_id}: {e}");
                    out.failures.push(DocFailure { doc_id, stage: stage.into(), error: e.to_string() });
                }
            }
        }
        Ok(out)
    }
}

/// Picks the summary out of a test-time reply.
///
/// The reply usually lists the QA pairs first and then the summary under a
/// heading such as `Summary:` or `**Final Summary**`. Everything after the
/// last such heading is returned; without one the whole trimmed reply is.
pub fn extract_final_summary(raw: &str) -> String {
    let lines: Vec<&str> = raw.lines().collect();
    for (i, line) in lines.iter().enumerate().rev() {
        let bare = line.trim().trim_start_matches('#').trim().replace("**", "");
        let (head, rest) = match bare.split_once(':') {
            Some((h, r)) => (h.trim().to_string(), r.trim().to_string()),
            None => (bare.trim().to_string(), String::new()),
        };
        let head = head.to_lowercase();
        if head == "summary" || head == "final summary" {
            let mut body = rest;
            let tail = lines[i + 1..].join("\n");
            if !tail.trim().is_empty() {
                if !body.is_empty() {
                    body.push('\n');
                }
                body.push_str(tail.trim());
            }
            if !body.trim().is_empty() {
                return body.trim().to_string();
            }
        }
    }
    raw.trim().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_summary_heading_variants() {
        assert_eq!(extract_final_summary("  just text \n"), "just text");
        let raw = "QA pairs:\n1. Q: who? A: me\n\n**Final Summary:**\nLine one.\nLine two.\n";
        assert_eq!(extract_final_summary(raw), "Line one.\nLine two.");
        assert_eq!(extract_final_summary("## Summary\nAll of it."), "All of it.");
        assert_eq!(extract_final_summary("Q: a\nSummary: inline text"), "inline text");
        // a heading with nothing after it is ignored
        assert_eq!(extract_final_summary("body\nSummary:"), "body\nSummary:");
    }

    #[test]
    fn failure_ratio_is_strict() {
        assert!(check_failure_ratio(1, 10, 0.1).is_ok());
        assert!(check_failure_ratio(2, 10, 0.1).is_err());
        assert!(check_failure_ratio(0, 0, 0.0).is_ok());
    }
}
