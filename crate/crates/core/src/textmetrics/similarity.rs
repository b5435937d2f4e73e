use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::tokenize;

/// Inverse document frequencies. Tokens absent from the table get
/// `default_weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Idf {
    weights: HashMap<String, f64>,
    default_weight: f64,
}

impl Default for Idf {
    fn default() -> Self {
        Self::unit()
    }
}

impl Idf {
    /// Every token weighs 1, i.e. plain term frequency.
    pub fn unit() -> Self {
        Self { weights: HashMap::new(), default_weight: 1.0 }
    }

    /// Smoothed IDF over `docs`: `ln((1 + N) / (1 + df)) + 1`. Unseen tokens
    /// get the `df = 0` value, so every weight is strictly positive.
    pub fn from_corpus<S: AsRef<str>>(docs: &[S]) -> Self {
        if docs.is_empty() {
            return Self::unit();
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in docs {
            let unique: HashSet<String> = tokenize(doc.as_ref()).into_vec().into_iter().collect();
            for token in unique {
                *df.entry(token).or_insert(0) += 1;
            }
        }
        let n = docs.len() as f64;
        let weights = df
            .into_iter()
            .map(|(token, count)| (token, ((1.0 + n) / (1.0 + count as f64)).ln() + 1.0))
            .collect();
        Self { weights, default_weight: (1.0 + n).ln() + 1.0 }
    }

    pub fn weight(&self, token: &str) -> f64 {
        self.weights.get(token).copied().unwrap_or(self.default_weight)
    }
}

/// TF-IDF bag-of-words vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityVector(BTreeMap<String, f64>);

impl SimilarityVector {
    pub fn from_text(text: &str, idf: &Idf) -> Self {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for token in tokenize(text).into_vec() {
            *tf.entry(token).or_insert(0.0) += 1.0;
        }
        for (token, weight) in tf.iter_mut() {
            *weight *= idf.weight(token).max(0.0);
        }
        tf.retain(|_, w| *w > 0.0);
        Self(tf)
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Cosine with `other`; 0 when either vector is zero.
    pub fn cosine(&self, other: &Self) -> f64 {
        if self.is_zero() || other.is_zero() {
            return 0.0;
        }
        let dot: f64 = self
            .0
            .iter()
            .filter_map(|(token, w)| other.0.get(token).map(|v| w * v))
            .sum();
        (dot / (self.norm() * other.norm())).clamp(0.0, 1.0)
    }
}

pub fn cosine_similarity(a: &str, b: &str, idf: &Idf) -> f64 {
    SimilarityVector::from_text(a, idf).cosine(&SimilarityVector::from_text(b, idf))
}
