use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::EngineError;
use crate::corpus::QaPair;

pub const ARTICLE: &str = "Article";
pub const GOLD_QA: &str = "Question Pair with answer";
pub const GENERATED_QA: &str = "Generated QA pairs";
pub const SUM_EXPERIENCE: &str = "Summary generation experience";
pub const QA_EXPERIENCE: &str = "QA generation experience";
pub const SUMMARY: &str = "Summary";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(String),
}

/// A prompt body with `[Name]` placeholders. A placeholder is a bracketed
/// run on one line with no nested brackets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    body: String,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        let segments = split_segments(&body);
        Self { name: name.into(), body, segments }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> Vec<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(name) => Some(name.as_str()),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.body.as_bytes()))
    }

    /// Single-pass substitution. Bound values are inserted verbatim and never
    /// scanned for placeholders themselves. Unused bindings are ignored.
    pub fn render(&self, bindings: &Bindings) -> Result<String, EngineError> {
        let mut out = String::with_capacity(self.body.len());
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => out.push_str(text),
                Segment::Slot(name) => {
                    let value = bindings.0.get(name.as_str()).ok_or_else(|| EngineError::UnboundPlaceholder {
                        template: self.name.clone(),
                        placeholder: name.clone(),
                    })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

fn split_segments(body: &str) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut rest = body;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let close = after.find(['[', ']', '\n']);
        match close {
            Some(end) if after.as_bytes()[end] == b']' && end > 0 => {
                literal.push_str(&rest[..open]);
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Slot(after[..end].to_string()));
                rest = &after[end + 1..];
            }
            _ => {
                literal.push_str(&rest[..=open]);
                rest = after;
            }
        }
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    segments
}

/// Placeholder name to replacement text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<String, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<String>) -> Self {
        self.0.insert(name.to_string(), value.into());
        self
    }

    pub fn set(&mut self, name: &str, value: impl Into<String>) {
        self.0.insert(name.to_string(), value.into());
    }
}

/// Renders QA pairs in the numbered JSON shape used by the training prompts:
/// `{"1": {"Question": "...", "Answer": "..."}, ...}`.
pub fn format_qa_pairs(pairs: &[QaPair]) -> String {
    #[derive(Serialize)]
    struct Entry<'a> {
        #[serde(rename = "Question")]
        question: &'a str,
        #[serde(rename = "Answer")]
        answer: &'a str,
    }
    let map: serde_json::Map<String, serde_json::Value> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let entry = Entry { question: &p.question, answer: &p.answer };
            ((i + 1).to_string(), serde_json::to_value(entry).expect("strings serialize"))
        })
        .collect();
    serde_json::Value::Object(map).to_string()
}

/// Every prompt the pipeline sends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub qa_train: PromptTemplate,
    pub summary_train: PromptTemplate,
    pub test_summarization: PromptTemplate,
    pub test_qa: PromptTemplate,
    pub baseline: PromptTemplate,
    pub factscore_judge: PromptTemplate,
}

const BUILTIN: [(&str, &str); 6] = [
    ("qa_train", include_str!("../../assets/templates/qa_train.txt")),
    ("summary_train", include_str!("../../assets/templates/summary_train.txt")),
    ("test_summarization", include_str!("../../assets/templates/test_summarization.txt")),
    ("test_qa", include_str!("../../assets/templates/test_qa.txt")),
    ("baseline", include_str!("../../assets/templates/baseline.txt")),
    ("factscore_judge", include_str!("../../assets/templates/factscore_judge.txt")),
];

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let t = |i: usize| PromptTemplate::new(BUILTIN[i].0, BUILTIN[i].1);
        Self {
            qa_train: t(0),
            summary_train: t(1),
            test_summarization: t(2),
            test_qa: t(3),
            baseline: t(4),
            factscore_judge: t(5),
        }
    }

    /// Built-in templates, each replaced by `<dir>/<name>.txt` when present.
    pub fn from_dir(dir: &Path) -> Result<Self, EngineError> {
        let mut set = Self::builtin();
        for template in set.iter_mut() {
            let path = dir.join(format!("{}.txt", template.name()));
            if path.exists() {
                let body = fs::read_to_string(&path).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))?;
                *template = PromptTemplate::new(template.name().to_string(), body);
            }
        }
        Ok(set)
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut PromptTemplate> {
        [
            &mut self.qa_train,
            &mut self.summary_train,
            &mut self.test_summarization,
            &mut self.test_qa,
            &mut self.baseline,
            &mut self.factscore_judge,
        ]
        .into_iter()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        [
            &self.qa_train,
            &self.summary_train,
            &self.test_summarization,
            &self.test_qa,
            &self.baseline,
            &self.factscore_judge,
        ]
        .into_iter()
    }

    /// Template name to body hash, for run manifests.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.iter().map(|t| (t.name().to_string(), t.sha256())).collect()
    }
}
