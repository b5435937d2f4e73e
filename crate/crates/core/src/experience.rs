//! The two experience stores: QA-generation rules and summary-generation
//! rules, both free text written by the model.
//!
//! An update replaces the current text of one store; the model is asked to
//! return the full refreshed rule list each time. Every update is appended
//! to `history`, so any earlier revision can be rebuilt with
//! [`ExperienceSet::at_revision`].

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Style;
use crate::textmetrics::tokenize;

/// Rule lists longer than this many words trigger a warning (never truncation).
pub const SOFT_CAP_WORDS: usize = 600;

const PUBLISHED_NEWS: &str = include_str!("../assets/experiences/news.json");
const PUBLISHED_NARRATIVE: &str = include_str!("../assets/experiences/narrative.json");

#[derive(Debug, Error)]
pub enum ExperienceError {
    #[error("experience update text is empty")]
    EmptyUpdate,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("inconsistent experience file: {0}")]
    Inconsistent(String),
    #[error("revision {requested} is beyond the current revision {current}")]
    NoSuchRevision { requested: u64, current: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperienceKind {
    Qa,
    Sum,
}

impl fmt::Display for ExperienceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperienceKind::Qa => "qa",
            ExperienceKind::Sum => "sum",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub revision: u64,
    pub kind: ExperienceKind,
    pub source_doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperienceSet {
    pub revision: u64,
    pub exp_qa: String,
    pub exp_sum: String,
    pub history: Vec<HistoryEntry>,
}

impl ExperienceSet {
    /// Both stores empty, revision 0.
    pub fn init() -> Self {
        Self::default()
    }

    pub fn get(&self, kind: ExperienceKind) -> &str {
        match kind {
            ExperienceKind::Qa => &self.exp_qa,
            ExperienceKind::Sum => &self.exp_sum,
        }
    }

    /// Replaces one store with `new_text`. On error the set is unchanged.
    pub fn update(&mut self, kind: ExperienceKind, new_text: &str, doc_id: &str) -> Result<(), ExperienceError> {
        if new_text.trim().is_empty() {
            return Err(ExperienceError::EmptyUpdate);
        }
        let words = word_count(new_text);
        if words > SOFT_CAP_WORDS {
            log::warn!("{kind} experience from {doc_id} has {words} words (soft cap {SOFT_CAP_WORDS})");
        }
        self.revision += 1;
        match kind {
            ExperienceKind::Qa => self.exp_qa = new_text.to_string(),
            ExperienceKind::Sum => self.exp_sum = new_text.to_string(),
        }
        self.history.push(HistoryEntry {
            revision: self.revision,
            kind,
            source_doc_id: doc_id.to_string(),
            text: new_text.to_string(),
        });
        Ok(())
    }

    /// The set as it stood after `revision` updates, rebuilt from history.
    pub fn at_revision(&self, revision: u64) -> Result<Self, ExperienceError> {
        if revision > self.revision {
            return Err(ExperienceError::NoSuchRevision { requested: revision, current: self.revision });
        }
        let mut out = Self::init();
        for entry in self.history.iter().take(revision as usize) {
            out.update(entry.kind, &entry.text, &entry.source_doc_id)?;
        }
        Ok(out)
    }

    /// Stores whose text exceeds [`SOFT_CAP_WORDS`].
    pub fn over_soft_cap(&self) -> Vec<ExperienceKind> {
        [ExperienceKind::Qa, ExperienceKind::Sum]
            .into_iter()
            .filter(|&k| word_count(self.get(k)) > SOFT_CAP_WORDS)
            .collect()
    }

    /// Checks the history invariants: one entry per revision, numbered from 1,
    /// and replaying it reproduces the current texts.
    pub fn validate(&self) -> Result<(), ExperienceError> {
        if self.history.len() as u64 != self.revision {
            return Err(ExperienceError::Inconsistent(format!(
                "revision {} but {} history entries",
                self.revision,
                self.history.len()
            )));
        }
        for (i, entry) in self.history.iter().enumerate() {
            if entry.revision != i as u64 + 1 {
                return Err(ExperienceError::Inconsistent(format!("history entry {i} has revision {}", entry.revision)));
            }
        }
        let replayed = self.at_revision(self.revision)?;
        if replayed.exp_qa != self.exp_qa || replayed.exp_sum != self.exp_sum {
            return Err(ExperienceError::Inconsistent("history does not replay to the current texts".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("experience sets always serialize");
        s.push('\n');
        s
    }

    pub fn persist(&self, path: &Path) -> Result<(), ExperienceError> {
        fs::write(path, self.to_json()).map_err(|source| ExperienceError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ExperienceError> {
        let raw = fs::read_to_string(path).map_err(|source| ExperienceError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&raw).map_err(|e| match e {
            ExperienceError::Parse { message, .. } => ExperienceError::Parse { path: path.to_path_buf(), message },
            other => other,
        })
    }

    pub fn from_json(raw: &str) -> Result<Self, ExperienceError> {
        let set: Self = serde_json::from_str(raw)
            .map_err(|e| ExperienceError::Parse { path: PathBuf::new(), message: e.to_string() })?;
        set.validate()?;
        Ok(set)
    }

    /// The ready-made rule lists shipped for news- and narrative-style text.
    pub fn published(style: Style) -> Self {
        let raw = match style {
            Style::News => PUBLISHED_NEWS,
            Style::Narrative => PUBLISHED_NARRATIVE,
        };
        Self::from_json(raw).expect("shipped experience files are valid")
    }
}

fn word_count(text: &str) -> usize {
    tokenize(text).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_empty() {
        let es = ExperienceSet::init();
        assert_eq!((es.exp_qa.as_str(), es.exp_sum.as_str(), es.revision), ("", "", 0));
        assert!(es.history.is_empty());
        assert_eq!(es, ExperienceSet::init());
    }

    #[test]
    fn updates_replace_and_record() {
        let mut es = ExperienceSet::init();
        es.update(ExperienceKind::Qa, "1. be specific", "d1").unwrap();
        assert_eq!(es.exp_qa, "1. be specific");
        assert_eq!(es.revision, 1);
        es.update(ExperienceKind::Qa, "1. be very specific", "d2").unwrap();
        assert_eq!(es.revision, 2);
        assert_eq!(es.history.len(), 2);
        assert_eq!(es.exp_qa, "1. be very specific");
        assert_eq!(es.at_revision(1).unwrap().exp_qa, "1. be specific");
    }

    #[test]
    fn empty_update_leaves_store_unchanged() {
        let mut es = ExperienceSet::init();
        es.update(ExperienceKind::Sum, "keep order", "d1").unwrap();
        let before = es.clone();
        assert!(matches!(es.update(ExperienceKind::Sum, "  ", "d2"), Err(ExperienceError::EmptyUpdate)));
        assert_eq!(es, before);
    }

    #[test]
    fn persist_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        let mut es = ExperienceSet::init();
        es.update(ExperienceKind::Qa, "q rules", "a").unwrap();
        es.update(ExperienceKind::Sum, "s rules", "a").unwrap();
        es.persist(&path).unwrap();
        assert_eq!(ExperienceSet::load(&path).unwrap(), es);

        ExperienceSet::init().persist(&path).unwrap();
        assert_eq!(ExperienceSet::load(&path).unwrap(), ExperienceSet::init());

        assert!(matches!(ExperienceSet::load(&dir.path().join("missing.json")), Err(ExperienceError::Io { .. })));
    }

    #[test]
    fn tampered_history_is_rejected() {
        let mut es = ExperienceSet::init();
        es.update(ExperienceKind::Qa, "q", "a").unwrap();
        es.exp_qa = "something else".into();
        assert!(matches!(ExperienceSet::from_json(&es.to_json()), Err(ExperienceError::Inconsistent(_))));
    }

    #[test]
    fn published_sets_load() {
        for style in [Style::News, Style::Narrative] {
            let es = ExperienceSet::published(style);
            assert_eq!(es.revision, 2);
            assert!(es.exp_qa.starts_with("1. Ensure each question"));
            assert!(es.over_soft_cap().is_empty());
        }
        assert!(ExperienceSet::published(Style::Narrative).exp_sum.contains("13. Consider using a voting method"));
    }

    #[test]
    fn soft_cap_flags_long_stores() {
        let mut es = ExperienceSet::init();
        es.update(ExperienceKind::Sum, &"rule ".repeat(601), "d").unwrap();
        assert_eq!(es.over_soft_cap(), vec![ExperienceKind::Sum]);
    }
}
