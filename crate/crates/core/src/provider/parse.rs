//! Extraction of the JSON objects the training prompts ask for.
//!
//! Models wrap the object in code fences, preface it with prose, or append
//! commentary. Lenient mode scans for the first balanced `{...}` that parses
//! as a JSON object; strict mode requires the trimmed reply to be exactly one
//! object. Key lookup ignores case, spaces and underscores, so
//! `"Generated QA pairs"` matches `"Generated_QA_pairs"`.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::corpus::QaPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    QaOutput,
    SummaryOutput,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ParseMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON object found in model output")]
    NoJsonObject,
    #[error("required key {0:?} missing")]
    MissingKey(&'static str),
    #[error("key {key:?} has the wrong type: expected {expected}")]
    WrongType { key: &'static str, expected: &'static str },
    #[error("QA pair {0} has an empty question or answer")]
    EmptyPair(String),
    #[error("{0:?} is empty")]
    EmptyField(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedQaOutput {
    pub qa_pairs: Vec<QaPair>,
    pub qa_experience: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSummaryOutput {
    pub summary: String,
    pub summary_experience: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parsed {
    Qa(ParsedQaOutput),
    Summary(ParsedSummaryOutput),
}

const KEY_PAIRS: &str = "Generated_QA_pairs";
const KEY_QA_EXP: &str = "QA_generation_experience";
const KEY_SUMMARY: &str = "Summary";
const KEY_SUM_EXP: &str = "Summary_generation_experience";

impl ParsedQaOutput {
    /// Serializes into the shape the QA training prompt requests.
    pub fn to_json_string(&self) -> String {
        let mut pairs = Map::new();
        for (i, p) in self.qa_pairs.iter().enumerate() {
            let mut obj = Map::new();
            obj.insert("Question".into(), Value::String(p.question.clone()));
            obj.insert("Answer".into(), Value::String(p.answer.clone()));
            pairs.insert((i + 1).to_string(), Value::Object(obj));
        }
        let mut root = Map::new();
        root.insert(KEY_PAIRS.into(), Value::Object(pairs));
        root.insert(KEY_QA_EXP.into(), Value::String(self.qa_experience.clone()));
        Value::Object(root).to_string()
    }
}

impl ParsedSummaryOutput {
    pub fn to_json_string(&self) -> String {
        let mut root = Map::new();
        root.insert(KEY_SUMMARY.into(), Value::String(self.summary.clone()));
        root.insert(KEY_SUM_EXP.into(), Value::String(self.summary_experience.clone()));
        Value::Object(root).to_string()
    }
}

/// End index (exclusive) of the balanced object starting at `start`, which
/// must point at `{`. Braces inside JSON strings are ignored.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// First balanced `{...}` in `raw` that parses as a JSON object.
pub fn extract_json_object(raw: &str) -> Option<Map<String, Value>> {
    let bytes = raw.as_bytes();
    let mut from = 0;
    while let Some(offset) = raw[from..].find('{') {
        let start = from + offset;
        if let Some(end) = balanced_end(bytes, start) {
            if let Ok(Value::Object(obj)) = serde_json::from_str(&raw[start..end]) {
                return Some(obj);
            }
        }
        from = start + 1;
    }
    None
}

fn normalize(key: &str) -> String {
    key.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

fn get<'a>(obj: &'a Map<String, Value>, key: &'static str) -> Option<&'a Value> {
    obj.get(key).or_else(|| {
        let wanted = normalize(key);
        obj.iter().find(|(k, _)| normalize(k) == wanted).map(|(_, v)| v)
    })
}

/// A string, or a list of strings joined by newlines.
fn text_value(obj: &Map<String, Value>, key: &'static str) -> Result<String, ParseError> {
    let text = match get(obj, key).ok_or(ParseError::MissingKey(key))? {
        Value::String(s) => s.clone(),
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or(ParseError::WrongType { key, expected: "string" }))
            .collect::<Result<Vec<_>, _>>()?
            .join("\n"),
        _ => return Err(ParseError::WrongType { key, expected: "string" }),
    };
    if text.trim().is_empty() {
        return Err(ParseError::EmptyField(key));
    }
    Ok(text)
}

fn parse_pair(label: String, value: &Value) -> Result<QaPair, ParseError> {
    let obj = value.as_object().ok_or(ParseError::WrongType { key: KEY_PAIRS, expected: "object per pair" })?;
    let q = get(obj, "Question").and_then(Value::as_str).unwrap_or("");
    let a = get(obj, "Answer").and_then(Value::as_str).unwrap_or("");
    QaPair::new(q, a).map_err(|_| ParseError::EmptyPair(label))
}

fn parse_pairs(value: &Value) -> Result<Vec<QaPair>, ParseError> {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            if entries.iter().all(|(k, _)| k.trim().parse::<u64>().is_ok()) {
                entries.sort_by_key(|(k, _)| k.trim().parse::<u64>().unwrap_or(0));
            }
            entries.into_iter().map(|(k, v)| parse_pair(k.clone(), v)).collect()
        }
        Value::Array(items) => items.iter().enumerate().map(|(i, v)| parse_pair((i + 1).to_string(), v)).collect(),
        _ => Err(ParseError::WrongType { key: KEY_PAIRS, expected: "object or array" }),
    }
}

fn locate(raw: &str, mode: ParseMode) -> Result<Map<String, Value>, ParseError> {
    match mode {
        ParseMode::Lenient => extract_json_object(raw).ok_or(ParseError::NoJsonObject),
        ParseMode::Strict => match serde_json::from_str(raw.trim()) {
            Ok(Value::Object(obj)) => Ok(obj),
            _ => Err(ParseError::NoJsonObject),
        },
    }
}

pub fn parse_structured(raw: &str, shape: Shape, mode: ParseMode) -> Result<Parsed, ParseError> {
    let obj = locate(raw, mode)?;
    match shape {
        Shape::QaOutput => {
            let pairs = get(&obj, KEY_PAIRS).ok_or(ParseError::MissingKey(KEY_PAIRS))?;
            Ok(Parsed::Qa(ParsedQaOutput { qa_pairs: parse_pairs(pairs)?, qa_experience: text_value(&obj, KEY_QA_EXP)? }))
        }
        Shape::SummaryOutput => Ok(Parsed::Summary(ParsedSummaryOutput {
            summary: text_value(&obj, KEY_SUMMARY)?,
            summary_experience: text_value(&obj, KEY_SUM_EXP)?,
        })),
    }
}

pub fn parse_qa_output(raw: &str) -> Result<ParsedQaOutput, ParseError> {
    match parse_structured(raw, Shape::QaOutput, ParseMode::Lenient)? {
        Parsed::Qa(out) => Ok(out),
        Parsed::Summary(_) => unreachable!("shape is QaOutput"),
    }
}

pub fn parse_summary_output(raw: &str) -> Result<ParsedSummaryOutput, ParseError> {
    match parse_structured(raw, Shape::SummaryOutput, ParseMode::Lenient)? {
        Parsed::Summary(out) => Ok(out),
        Parsed::Qa(_) => unreachable!("shape is SummaryOutput"),
    }
}
