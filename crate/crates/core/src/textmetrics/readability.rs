use serde::{Deserialize, Serialize};

use super::{split_sentences, tokenize, MetricError};

/// Counts behind a Flesch reading-ease score, kept so that the score can be
/// recomputed and audited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityBreakdown {
    /// Total words.
    pub tw: usize,
    /// Total sentences that contain at least one word.
    pub tse: usize,
    /// Total syllables.
    pub tsy: usize,
    pub score: f64,
}

impl ReadabilityBreakdown {
    pub fn from_counts(tw: usize, tse: usize, tsy: usize) -> Self {
        let score = 206.835 - 1.015 * (tw as f64 / tse as f64) - 84.6 * (tsy as f64 / tw as f64);
        Self { tw, tse, tsy, score }
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Heuristic syllable count: maximal vowel groups (`y` counts as a vowel),
/// minus one for a terminal `e` when at least one group remains, floored at 1.
pub fn count_syllables(word: &str) -> Result<usize, MetricError> {
    if word.is_empty() {
        return Err(MetricError::EmptyWord);
    }
    let lower = word.to_lowercase();
    let mut groups = 0;
    let mut in_group = false;
    for c in lower.chars() {
        let vowel = is_vowel(c);
        if vowel && !in_group {
            groups += 1;
        }
        in_group = vowel;
    }
    if lower.ends_with('e') && groups > 1 {
        groups -= 1;
    }
    Ok(groups.max(1))
}

/// Flesch reading ease of `text`. The score is not clamped and can fall
/// outside `[0, 100]`.
pub fn flesch(text: &str) -> Result<ReadabilityBreakdown, MetricError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(MetricError::NoWords);
    }
    let tse = split_sentences(text)
        .iter()
        .filter(|s| !tokenize(s).is_empty())
        .count();
    let mut tsy = 0;
    for token in &tokens {
        tsy += count_syllables(token)?;
    }
    Ok(ReadabilityBreakdown::from_counts(tokens.len(), tse, tsy))
}

/// Unit used for the `length` in a compression rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnit {
    #[default]
    Words,
    Chars,
}

impl LengthUnit {
    fn measure(self, text: &str) -> usize {
        match self {
            LengthUnit::Words => tokenize(text).len(),
            LengthUnit::Chars => text.chars().count(),
        }
    }
}

/// `length(summary) / length(text)` measured in word tokens.
pub fn compression_rate(summary: &str, text: &str) -> Result<f64, MetricError> {
    compression_rate_with(summary, text, LengthUnit::Words)
}

pub fn compression_rate_with(summary: &str, text: &str, unit: LengthUnit) -> Result<f64, MetricError> {
    let source = unit.measure(text);
    if source == 0 {
        return Err(MetricError::EmptySource);
    }
    Ok(unit.measure(summary) as f64 / source as f64)
}
