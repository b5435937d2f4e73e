//! Scoring of generated summaries, the LLM-judge factual-consistency score,
//! significance tests and the with/without comparison tables.

mod stats;
mod table;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use stats::{ln_gamma, mean, reg_inc_beta, sample_sd, two_sided_p, welch_t, TTestResult};
pub use table::{compare_runs, render_report, ComparisonRow, Metric, MetricComparison, ReportFormat, SignificanceTable, Winner};

use crate::corpus::Dataset;
use crate::engine::{Bindings, Engine, ARTICLE, SUMMARY};
use crate::provider::ProviderError;
use crate::textmetrics::{bleu, rouge_l, rouge_n, RougeScore, DEFAULT_BLEU_ORDER};

/// Appended to the judge prompt when the first reply held no number.
pub const JUDGE_RETRY_NOTE: &str = "\n\nReply with a single number between 0 and 100 and nothing else.";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("output for unknown document {0}")]
    UnknownDoc(String),
    #[error("document {0} has no gold summary to score against")]
    MissingReference(String),
    #[error("reports cover different documents: {0}")]
    DocumentSetMismatch(String),
    #[error("statistics: {0}")]
    Stats(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// What summaries are scored against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// The dataset's gold summary (summarization datasets).
    #[default]
    GoldSummary,
    /// The source text itself (QA datasets, which have no summaries).
    SourceText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocScore {
    pub doc_id: String,
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
    pub bleu: f64,
    pub factscore: Option<f64>,
    /// The output was empty and every score was set to zero.
    #[serde(default)]
    pub empty_output: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub rouge1_f1: f64,
    pub rouge2_f1: f64,
    pub rouge_l_f1: f64,
    pub bleu: f64,
    /// Mean over documents that received a judge score.
    pub factscore: Option<f64>,
    pub scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: String,
    pub model: String,
    pub dataset: String,
    pub reference_mode: ReferenceMode,
    /// Sorted by document id.
    pub docs: Vec<DocScore>,
    /// Documents whose generation failed; excluded from the means.
    pub failed: Vec<String>,
    pub means: Aggregates,
    /// Hash of the judge prompt when factual-consistency scores are present.
    pub judge_template_sha256: Option<String>,
}

impl MetricReport {
    pub fn recompute_means(&mut self) {
        self.means = aggregate(&self.docs);
    }

    pub fn values(&self, metric: Metric) -> Option<Vec<f64>> {
        self.docs.iter().map(|d| metric.of(d)).collect()
    }

    pub fn scores_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.docs {
            out.push_str(&serde_json::to_string(d).expect("scores serialize"));
            out.push('\n');
        }
        out
    }
}

fn aggregate(docs: &[DocScore]) -> Aggregates {
    if docs.is_empty() {
        return Aggregates::default();
    }
    let avg = |f: &dyn Fn(&DocScore) -> f64| mean(&docs.iter().map(f).collect::<Vec<_>>());
    let judged: Vec<f64> = docs.iter().filter_map(|d| d.factscore).collect();
    Aggregates {
        rouge1_f1: avg(&|d| d.rouge1.f1),
        rouge2_f1: avg(&|d| d.rouge2.f1),
        rouge_l_f1: avg(&|d| d.rouge_l.f1),
        bleu: avg(&|d| d.bleu),
        factscore: (!judged.is_empty()).then(|| mean(&judged)),
        scored: docs.len(),
    }
}

/// Names attached to a report so tables can label rows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunLabel {
    pub run_id: String,
    pub model: String,
}

/// Scores each output against its reference. `failed` lists documents that
/// produced no output.
pub fn score_run(
    label: &RunLabel,
    outputs: &BTreeMap<String, String>,
    refs: &Dataset,
    mode: ReferenceMode,
    failed: &[String],
) -> Result<MetricReport, EvalError> {
    let mut docs = Vec::with_capacity(outputs.len());
    for (doc_id, summary) in outputs {
        let doc = refs.get(doc_id).ok_or_else(|| EvalError::UnknownDoc(doc_id.clone()))?;
        let reference = match mode {
            ReferenceMode::GoldSummary => {
                doc.gold_summary.as_deref().ok_or_else(|| EvalError::MissingReference(doc_id.clone()))?
            }
            ReferenceMode::SourceText => doc.text.as_str(),
        };
        docs.push(score_doc(doc_id, summary, reference));
    }
    let mut failed = failed.to_vec();
    failed.sort();
    failed.dedup();
    let means = aggregate(&docs);
    Ok(MetricReport {
        run_id: label.run_id.clone(),
        model: label.model.clone(),
        dataset: refs.name.clone(),
        reference_mode: mode,
        docs,
        failed,
        means,
        judge_template_sha256: None,
    })
}

pub fn score_doc(doc_id: &str, summary: &str, reference: &str) -> DocScore {
    let empty = crate::textmetrics::tokenize(summary).is_empty();
    if empty {
        log::warn!("empty output for {doc_id}; scored as zero");
        return DocScore {
            doc_id: doc_id.to_string(),
            rouge1: RougeScore::default(),
            rouge2: RougeScore::default(),
            rouge_l: RougeScore::default(),
            bleu: 0.0,
            factscore: None,
            empty_output: true,
        };
    }
    DocScore {
        doc_id: doc_id.to_string(),
        rouge1: rouge_n(summary, reference, 1).expect("order 1 is valid"),
        rouge2: rouge_n(summary, reference, 2).expect("order 2 is valid"),
        rouge_l: rouge_l(summary, reference),
        bleu: bleu(summary, &[reference], DEFAULT_BLEU_ORDER).expect("default order is valid"),
        factscore: None,
        empty_output: false,
    }
}

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(-?\d+(?:\.\d+)?)(?:\s*/\s*(\d+(?:\.\d+)?))?").expect("valid regex"))
}

/// Reads a judge reply. The first number wins; a trailing `/N` rescales it
/// to 0-100 (so `8/10` reads as 80). The result is clamped to `[0, 100]`.
pub fn parse_judge_score(raw: &str) -> Option<f64> {
    let caps = number_pattern().captures(raw)?;
    let mut value: f64 = caps[1].parse().ok()?;
    if let Some(den) = caps.get(2).and_then(|m| m.as_str().parse::<f64>().ok()) {
        if den > 0.0 {
            value = value / den * 100.0;
        }
    }
    value.is_finite().then(|| value.clamp(0.0, 100.0))
}

/// Asks the judge model for a 0-100 factual-consistency score of `summary`
/// against `source`. A reply without a number is retried once; if the
/// retry also has none the score is absent.
pub fn factscore_judge(engine: &Engine, summary: &str, source: &str) -> Result<Option<f64>, EvalError> {
    let prompt = engine
        .templates()
        .factscore_judge
        .render(&Bindings::new().with(ARTICLE, source).with(SUMMARY, summary))
        .expect("judge template binds only article and summary");
    let first = engine.call(prompt.clone())?;
    if let Some(score) = parse_judge_score(&first.raw_text) {
        return Ok(Some(score));
    }
    let second = engine.call(prompt + JUDGE_RETRY_NOTE)?;
    let score = parse_judge_score(&second.raw_text);
    if score.is_none() {
        log::warn!("judge gave no usable score (reply {})", second.request_hash);
    }
    Ok(score)
}

/// Fills `factscore` on every scored document, judging against the source
/// text. Judge transport failures leave the score absent.
pub fn judge_report(engine: &Engine, report: &mut MetricReport, outputs: &BTreeMap<String, String>, refs: &Dataset) {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(engine.config().parallelism)
        .build()
        .expect("thread pool");
    let scores: Vec<Option<f64>> = pool.install(|| {
        report
            .docs
            .par_iter()
            .map(|d| {
                if d.empty_output {
                    return None;
                }
                let source = refs.get(&d.doc_id).map(|doc| doc.text.as_str()).unwrap_or_default();
                let summary = outputs.get(&d.doc_id).map(String::as_str).unwrap_or_default();
                match factscore_judge(engine, summary, source) {
                    Ok(s) => s,
                    Err(e) => {
                        log::warn!("judge failed for {}: {e}", d.doc_id);
                        None
                    }
                }
            })
            .collect()
    });
    for (doc, score) in report.docs.iter_mut().zip(scores) {
        doc.factscore = score;
    }
    report.judge_template_sha256 = Some(engine.templates().factscore_judge.sha256());
    report.recompute_means();
}

pub(crate) fn doc_ids(report: &MetricReport) -> BTreeSet<&str> {
    report.docs.iter().map(|d| d.doc_id.as_str()).collect()
}
