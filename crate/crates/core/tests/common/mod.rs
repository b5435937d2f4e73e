//! Scripted model and toy corpus shared by the integration tests.
//!
//! Replies are a pure function of the prompt, so a transcript recorded from
//! this model replays exactly. The summary attempt index is read back from
//! the experience text echoed into the prompt.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use qa2sum::corpus::{Dataset, DatasetKind, Document, QaPair, Style};
use qa2sum::engine::{Engine, RunConfig, TemplateSet};
use qa2sum::provider::{Provider, ProviderError, ProviderRequest, ScriptedProvider};

const WORDS: [&str; 24] = [
    "cat", "dog", "sun", "map", "red", "box", "tree", "road", "boat", "lake", "hill", "bird", "fish", "door",
    "ship", "king", "town", "rain", "wind", "farm", "gold", "milk", "star", "sand",
];

/// `n` short sentences of one-syllable words, varied by `id`.
pub fn text_for(id: &str, n: usize) -> String {
    let mut state: u64 = id.bytes().fold(1469598103934665603, |h, b| (h ^ b as u64).wrapping_mul(1099511628211));
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) as usize
    };
    let mut sentences = Vec::with_capacity(n);
    for i in 0..n {
        let mut words: Vec<String> = (0..7).map(|_| WORDS[next() % WORDS.len()].to_string()).collect();
        words.push(format!("{id}x{}", i % 3));
        let mut s = words.join(" ");
        s[..1].make_ascii_uppercase();
        s.push('.');
        sentences.push(s);
    }
    sentences.join(" ")
}

/// The first three sentences: short, simple and on topic.
pub fn good_summary(text: &str) -> String {
    text.split_inclusive(". ").take(3).collect::<String>().trim().to_string()
}

pub fn qa_doc(id: &str, n_sentences: usize) -> Document {
    let text = text_for(id, n_sentences);
    Document {
        id: id.into(),
        gold_qa: vec![
            QaPair::new(format!("What opens {id}?"), good_summary(&text)).unwrap(),
            QaPair::new(format!("What marks {id}?"), format!("{id}x0")).unwrap(),
        ],
        text,
        gold_summary: None,
        style: Style::News,
    }
}

pub fn sum_doc(id: &str, n_sentences: usize) -> Document {
    let text = text_for(id, n_sentences);
    Document {
        id: id.into(),
        gold_summary: Some(good_summary(&text)),
        text,
        gold_qa: Vec::new(),
        style: Style::News,
    }
}

pub fn qa_dataset(name: &str, ids: &[&str]) -> Dataset {
    Dataset::new(name, DatasetKind::Qa, ids.iter().map(|id| qa_doc(id, 30)).collect()).unwrap()
}

pub fn sum_dataset(name: &str, ids: &[&str]) -> Dataset {
    Dataset::new(name, DatasetKind::Summarization, ids.iter().map(|id| sum_doc(id, 30)).collect()).unwrap()
}

/// Attempt at which each document's summary first meets the thresholds;
/// 0 means never.
pub type Plan = BTreeMap<String, u32>;

fn find_doc<'a>(docs: &'a [Document], prompt: &str) -> Option<&'a Document> {
    docs.iter().find(|d| prompt.contains(&format!("Article: {}\n", d.text)))
}

fn previous_attempt(prompt: &str, doc_id: &str) -> u32 {
    let tag = format!("(doc {doc_id}, attempt ");
    prompt
        .rfind(&tag)
        .and_then(|i| prompt[i + tag.len()..].split(')').next())
        .and_then(|n| n.parse().ok())
        .unwrap_or(0)
}

/// Reply for any prompt the pipeline sends.
pub fn reply(docs: &[Document], plan: &Plan, prompt: &str) -> Result<String, ProviderError> {
    let unknown = || ProviderError::InvalidRequest("scripted model: unrecognized prompt".into());
    if prompt.starts_with("You are checking a summary") {
        let words = prompt.split_whitespace().count();
        return Ok(format!("Score: {}/100", 60 + words % 40));
    }
    let doc = find_doc(docs, prompt).ok_or_else(unknown)?;
    let id = &doc.id;
    if prompt.starts_with("You are a helpful text assistant skilled at learning") {
        return Ok(format!(
            "```json\n{{\"Generated_QA_pairs\": {{\"1\": {{\"Question\": \"What opens {id}?\", \"Answer\": \"{}\"}}}}, \
             \"QA_generation_experience\": \"1. Ask about every key point (doc {id}).\"}}\n```",
            good_summary(&doc.text)
        ));
    }
    if prompt.contains("Summary Generation Experience") && prompt.contains("Generated QA Pairs:") {
        let k = previous_attempt(prompt, id) + 1;
        let target = plan.get(id).copied().unwrap_or(1);
        let summary = if target != 0 && k >= target { good_summary(&doc.text) } else { doc.text.clone() };
        return Ok(format!(
            "{{\"Summary\": \"{summary}\", \"Summary_generation_experience\": \"1. Mirror the source wording (doc {id}, attempt {k}).\"}}"
        ));
    }
    if prompt.starts_with("You are one helpful text assistant") {
        return Ok(doc.text.split_inclusive(". ").take(2).collect::<String>().trim().to_string());
    }
    if prompt.contains("First, generate QA pairs") {
        let with_exp = prompt.contains("Mirror the source wording") || prompt.contains("Ask about every key point");
        let body = if with_exp { good_summary(&doc.text) } else { doc.text.split_inclusive(". ").nth(1).unwrap_or("").trim().to_string() };
        return Ok(format!("QA pairs:\n1. Q: What opens {id}? A: {}\n\nSummary:\n{body}\n", good_summary(&doc.text)));
    }
    Err(unknown())
}

pub fn scripted(docs: Vec<Document>, plan: Plan) -> Arc<ScriptedProvider> {
    Arc::new(ScriptedProvider::from_fn(move |req: &ProviderRequest| reply(&docs, &plan, &req.prompt)))
}

pub fn engine_with(cfg: RunConfig, provider: Arc<dyn Provider>) -> Engine {
    Engine::new(cfg, TemplateSet::builtin(), provider)
}

pub fn plan(entries: &[(&str, u32)]) -> Plan {
    entries.iter().map(|(id, k)| (id.to_string(), *k)).collect()
}
