use std::collections::HashMap;

use super::rouge::ngram_counts;
use super::{tokenize, MetricError};

pub const DEFAULT_BLEU_ORDER: usize = 4;

/// Substituted for any modified n-gram precision that is exactly zero.
pub const BLEU_EPSILON: f64 = 1e-9;

/// Sentence-level BLEU with clipped n-gram precisions for `n = 1..=max_n`,
/// uniform weights and the standard brevity penalty against the reference
/// closest in length (shorter wins ties).
///
/// Orders longer than the candidate contribute no n-grams and are left out of
/// the geometric mean, so a short candidate scored against itself gets 1.
pub fn bleu(candidate: &str, references: &[&str], max_n: usize) -> Result<f64, MetricError> {
    bleu_with_epsilon(candidate, references, max_n, BLEU_EPSILON)
}

pub fn bleu_with_epsilon(
    candidate: &str,
    references: &[&str],
    max_n: usize,
    epsilon: f64,
) -> Result<f64, MetricError> {
    if max_n == 0 {
        return Err(MetricError::ZeroOrder);
    }
    let cand = tokenize(candidate);
    let refs: Vec<_> = references.iter().map(|r| tokenize(r)).collect();
    if cand.is_empty() || refs.is_empty() {
        return Ok(0.0);
    }

    let mut log_sum = 0.0;
    let orders = max_n.min(cand.len());
    for n in 1..=orders {
        let cand_counts = ngram_counts(cand.as_slice(), n);
        let total: usize = cand_counts.values().sum();
        let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
        for r in &refs {
            for (gram, count) in ngram_counts(r.as_slice(), n) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(count);
            }
        }
        let clipped: usize = cand_counts
            .iter()
            .map(|(gram, &c)| c.min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if clipped == 0 {
            epsilon
        } else {
            clipped as f64 / total as f64
        };
        log_sum += precision.ln();
    }

    let c = cand.len();
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok((bp * (log_sum / orders as f64).exp()).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one() {
        let s = bleu("the quick brown fox jumps over the dog", &["the quick brown fox jumps over the dog"], 4).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_is_near_zero() {
        let s = bleu("alpha beta gamma delta", &["one two three four"], 4).unwrap();
        assert!(s < 1e-8);
    }

    #[test]
    fn clipping_fixture() {
        // p1 = 1/4 after clipping; p2..p4 have no matches; c=4 > r=2 so BP = 1.
        let expected = ((0.25f64).ln() + 3.0 * BLEU_EPSILON.ln()) / 4.0;
        let s = bleu("the the the the", &["the cat"], 4).unwrap();
        assert!((s - expected.exp()).abs() < 1e-15);
        let unigram = bleu("the the the the", &["the cat"], 1).unwrap();
        assert!((unigram - 0.25).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_applies_to_short_candidates() {
        let s = bleu("the cat", &["the cat sat on the mat"], 1).unwrap();
        assert!((s - (1.0f64 - 6.0 / 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn short_candidate_uses_available_orders() {
        assert!((bleu("ran ran", &["ran ran"], 4).unwrap() - 1.0).abs() < 1e-12);
        // unigram 1/2, bigram 0 -> floored; orders 3 and 4 do not exist
        let s = bleu("a b", &["a c"], 4).unwrap();
        assert!((s - (0.5f64 * 1e-9).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_candidate_and_bad_order() {
        assert_eq!(bleu("", &["the cat"], 4), Ok(0.0));
        assert_eq!(bleu("a", &["a"], 0), Err(MetricError::ZeroOrder));
    }
}
