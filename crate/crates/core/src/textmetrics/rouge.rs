use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{tokenize, MetricError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Self::from_pr(ratio(overlap, candidate_total), ratio(overlap, reference_total))
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

pub(crate) fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Result<RougeScore, MetricError> {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    rouge_n_tokens(cand.as_slice(), refr.as_slice(), n)
}

/// ROUGE-N over pre-tokenized sequences with clipped (multiset) overlap.
pub fn rouge_n_tokens<T: AsRef<str>>(
    candidate: &[T],
    reference: &[T],
    n: usize,
) -> Result<RougeScore, MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroOrder);
    }
    let cand = ngram_counts(candidate, n);
    let refr = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(gram, &c)| c.min(refr.get(gram).copied().unwrap_or(0)))
        .sum();
    let total = |len: usize| len.saturating_sub(n - 1);
    Ok(RougeScore::from_counts(overlap, total(candidate.len()), total(reference.len())))
}

pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    rouge_l_tokens(cand.as_slice(), refr.as_slice())
}

pub fn rouge_l_tokens<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> RougeScore {
    let lcs = lcs_len(candidate, reference);
    RougeScore::from_counts(lcs, candidate.len(), reference.len())
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn rouge_n_examples() {
        let same = rouge_n("the cat sat", "the cat sat", 1).unwrap();
        assert_eq!(same, RougeScore { precision: 1.0, recall: 1.0, f1: 1.0 });

        let disjoint = rouge_n("alpha beta", "gamma delta", 1).unwrap();
        assert_eq!(disjoint.f1, 0.0);

        let partial = rouge_n("the cat sat", "the cat ran", 1).unwrap();
        assert!(close(partial.precision, 2.0 / 3.0));
        assert!(close(partial.recall, 2.0 / 3.0));
        assert!(close(partial.f1, 2.0 / 3.0));
    }

    #[test]
    fn rouge_n_clips_repeats() {
        let s = rouge_n("the the the", "the cat", 1).unwrap();
        assert!(close(s.precision, 1.0 / 3.0));
        assert!(close(s.recall, 0.5));
    }

    #[test]
    fn rouge_n_short_inputs() {
        let s = rouge_n("one", "one", 2).unwrap();
        assert_eq!(s.f1, 0.0);
        assert_eq!(rouge_n("a", "a", 0), Err(MetricError::ZeroOrder));
    }

    #[test]
    fn rouge_l_examples() {
        assert_eq!(rouge_l("a b c", "a b c").f1, 1.0);
        let s = rouge_l("a b c d", "a c b d");
        assert!(close(s.precision, 0.75) && close(s.recall, 0.75));
        assert_eq!(rouge_l("", "a b").f1, 0.0);
    }
}
