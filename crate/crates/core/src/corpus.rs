//! Dataset ingestion: canonical JSONL documents, field adapters for foreign
//! schemas, long-document filtering and seeded train/test splits.
//!
//! Canonical line shape:
//!
//! ```json
//! {"id": "doc-1", "text": "...", "summary": "...", "qa": [{"question": "...", "answer": "..."}]}
//! ```
//!
//! `summary` is required for summarization datasets and `qa` (non-empty) for
//! QA datasets. Lines that cannot be turned into a document are collected in
//! a rejection report instead of being dropped silently.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::textmetrics::tokenize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: no valid documents ({rejected} lines rejected)")]
    NoValidDocuments { path: PathBuf, rejected: usize },
    #[error("document {doc_id} does not fit a {kind} dataset: {reason}")]
    KindMismatch { doc_id: String, kind: DatasetKind, reason: String },
    #[error("cannot take {requested} training documents from a dataset of {available}")]
    SplitTooLarge { requested: usize, available: usize },
    #[error("invalid adapter config: {0}")]
    Adapter(String),
    #[error("invalid QA pair: question and answer must be non-empty")]
    EmptyQaPair,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

impl QaPair {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Result<Self, CorpusError> {
        let question = question.into().trim().to_string();
        let answer = answer.into().trim().to_string();
        if question.is_empty() || answer.is_empty() {
            return Err(CorpusError::EmptyQaPair);
        }
        Ok(Self { question, answer })
    }
}

/// Writing style of a dataset. Selects which published experience set applies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    #[default]
    News,
    Narrative,
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Style::News => "news",
            Style::Narrative => "narrative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Summarization,
    Qa,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Summarization => "summarization",
            DatasetKind::Qa => "qa",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub gold_summary: Option<String>,
    pub gold_qa: Vec<QaPair>,
    pub style: Style,
}

impl Document {
    pub fn word_count(&self) -> usize {
        tokenize(&self.text).len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub kind: DatasetKind,
    pub documents: Vec<Document>,
}

impl Dataset {
    /// Builds a dataset, enforcing id uniqueness and the kind invariants.
    pub fn new(name: impl Into<String>, kind: DatasetKind, documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::KindMismatch {
                    doc_id: doc.id.clone(),
                    kind,
                    reason: "duplicate id".into(),
                });
            }
            check_kind(doc, kind)?;
        }
        Ok(Self { name: name.into(), kind, documents })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.id.as_str())
    }

    fn with_documents(&self, name: String, documents: Vec<Document>) -> Self {
        Self { name, kind: self.kind, documents }
    }

    /// Canonical JSONL, one document per line.
    pub fn to_jsonl(&self) -> Result<String, CorpusError> {
        let mut out = String::new();
        for doc in &self.documents {
            let line = CanonicalLine {
                id: doc.id.clone(),
                text: doc.text.clone(),
                summary: doc.gold_summary.clone(),
                qa: doc.gold_qa.clone(),
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let body = self.to_jsonl()?;
        fs::write(path, body).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
    }
}

fn check_kind(doc: &Document, kind: DatasetKind) -> Result<(), CorpusError> {
    if doc.text.trim().is_empty() {
        return Err(CorpusError::KindMismatch { doc_id: doc.id.clone(), kind, reason: "empty text".into() });
    }
    match kind {
        DatasetKind::Summarization if doc.gold_summary.as_deref().is_none_or(|s| s.trim().is_empty()) => {
            Err(CorpusError::KindMismatch { doc_id: doc.id.clone(), kind, reason: "missing summary".into() })
        }
        DatasetKind::Qa if doc.gold_qa.is_empty() => {
            Err(CorpusError::KindMismatch { doc_id: doc.id.clone(), kind, reason: "no QA pairs".into() })
        }
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct CanonicalLine {
    id: String,
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    qa: Vec<QaPair>,
}

/// Maps foreign field names onto the canonical ones. Loaded from a small
/// JSON file such as `{"id": "story_id", "text": "content", "qa": "questions"}`.
/// When `id` is null, ids are synthesized from line numbers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub id: Option<String>,
    pub text: String,
    pub summary: String,
    pub qa: String,
    pub question: String,
    pub answer: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        Self {
            id: Some("id".into()),
            text: "text".into(),
            summary: "summary".into(),
            qa: "qa".into(),
            question: "question".into(),
            answer: "answer".into(),
        }
    }
}

impl FieldMap {
    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&raw).map_err(|e| CorpusError::Adapter(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based line number in the input file.
    pub line: usize,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub name: String,
    pub kind: DatasetKind,
    pub style: Style,
    pub fields: FieldMap,
}

impl LoadOptions {
    pub fn new(name: impl Into<String>, kind: DatasetKind, style: Style) -> Self {
        Self { name: name.into(), kind, style, fields: FieldMap::default() }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub rejections: Vec<Rejection>,
}

impl LoadOutcome {
    /// Path of the rejection report written beside `input`.
    pub fn rejection_path(input: &Path) -> PathBuf {
        let mut name = input.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".rejected.jsonl");
        input.with_file_name(name)
    }

    /// Writes the rejection report when there is anything to report.
    pub fn write_rejections(&self, input: &Path) -> Result<Option<PathBuf>, CorpusError> {
        if self.rejections.is_empty() {
            return Ok(None);
        }
        let path = Self::rejection_path(input);
        let mut file = fs::File::create(&path).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
        for r in &self.rejections {
            writeln!(file, "{}", serde_json::to_string(r)?).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
        }
        Ok(Some(path))
    }
}

pub fn load_dataset(path: &Path, opts: &LoadOptions) -> Result<LoadOutcome, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let mut documents = Vec::new();
    let mut rejections = Vec::new();
    let mut seen = HashSet::new();

    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let reject = |reason: String| Rejection { line: line_no, reason, raw: line.to_string() };
        let doc = match parse_line(line, line_no, opts) {
            Ok(doc) => doc,
            Err(reason) => {
                rejections.push(reject(reason));
                continue;
            }
        };
        if !seen.insert(doc.id.clone()) {
            rejections.push(reject(format!("duplicate id {:?}", doc.id)));
            continue;
        }
        check_kind(&doc, opts.kind)?;
        documents.push(doc);
    }

    if documents.is_empty() {
        return Err(CorpusError::NoValidDocuments { path: path.to_path_buf(), rejected: rejections.len() });
    }
    if !rejections.is_empty() {
        log::warn!("{}: {} line(s) rejected", path.display(), rejections.len());
    }
    Ok(LoadOutcome {
        dataset: Dataset { name: opts.name.clone(), kind: opts.kind, documents },
        rejections,
    })
}

fn string_field(obj: &Map<String, Value>, key: &str) -> Option<String> {
    match obj.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_line(line: &str, line_no: usize, opts: &LoadOptions) -> Result<Document, String> {
    let fields = &opts.fields;
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("line is not a JSON object")?;

    let id = match &fields.id {
        Some(key) => string_field(obj, key).ok_or_else(|| format!("missing \"{key}\""))?,
        None => format!("line-{line_no}"),
    };
    let text = string_field(obj, &fields.text).ok_or_else(|| format!("missing \"{}\"", fields.text))?;
    if text.trim().is_empty() {
        return Err(format!("empty \"{}\"", fields.text));
    }
    let gold_summary = string_field(obj, &fields.summary).filter(|s| !s.trim().is_empty());

    let gold_qa = match obj.get(&fields.qa) {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let pair = item.as_object().ok_or_else(|| format!("qa[{i}] is not an object"))?;
                let q = string_field(pair, &fields.question).unwrap_or_default();
                let a = string_field(pair, &fields.answer).unwrap_or_default();
                QaPair::new(q, a).map_err(|_| format!("qa[{i}] has an empty question or answer"))
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(format!("\"{}\" is not an array", fields.qa)),
    };

    Ok(Document { id, text, gold_summary, gold_qa, style: opts.style })
}

/// Keeps documents with at least `min_words` word tokens, preserving order.
pub fn filter_long(ds: &Dataset, min_words: usize) -> Dataset {
    let documents: Vec<_> = ds.documents.iter().filter(|d| d.word_count() >= min_words).cloned().collect();
    if documents.is_empty() && !ds.is_empty() {
        log::warn!("{}: no document reaches {min_words} words", ds.name);
    }
    ds.with_documents(ds.name.clone(), documents)
}

fn shuffled_indices(len: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Seeded shuffle followed by a prefix split into `(train, test)`.
pub fn split_train_test(ds: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset), CorpusError> {
    if n_train > ds.len() {
        return Err(CorpusError::SplitTooLarge { requested: n_train, available: ds.len() });
    }
    let order = shuffled_indices(ds.len(), seed);
    let pick = |ix: &[usize]| ix.iter().map(|&i| ds.documents[i].clone()).collect::<Vec<_>>();
    let train = ds.with_documents(format!("{}-train", ds.name), pick(&order[..n_train]));
    let test = ds.with_documents(format!("{}-test", ds.name), pick(&order[n_train..]));
    Ok((train, test))
}

/// Seeded random subset of `n` documents, kept in original order.
pub fn sample(ds: &Dataset, n: usize, seed: u64) -> Dataset {
    if n >= ds.len() {
        return ds.clone();
    }
    let mut chosen = shuffled_indices(ds.len(), seed)[..n].to_vec();
    chosen.sort_unstable();
    let documents = chosen.into_iter().map(|i| ds.documents[i].clone()).collect();
    ds.with_documents(ds.name.clone(), documents)
}
