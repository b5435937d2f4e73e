//! Text tokenization and the scalar metrics shared by the training loop's
//! stopping rule and by evaluation.
//!
//! Everything here is a pure function of its inputs. Nothing caches, nothing
//! allocates global state, so the functions can be called from any worker.

mod bleu;
mod readability;
mod rouge;
mod similarity;
mod tokenize;

pub use bleu::{bleu, bleu_with_epsilon, BLEU_EPSILON, DEFAULT_BLEU_ORDER};
pub use readability::{
    compression_rate, compression_rate_with, count_syllables, flesch, LengthUnit,
    ReadabilityBreakdown,
};
pub use rouge::{lcs_len, rouge_l, rouge_n, rouge_n_tokens, rouge_l_tokens, RougeScore};
pub use similarity::{cosine_similarity, Idf, SimilarityVector};
pub use tokenize::{split_sentences, tokenize, SentenceList, TokenList};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("cannot count syllables of an empty word")]
    EmptyWord,
    #[error("text contains no words")]
    NoWords,
    #[error("source text is empty; compression rate is undefined")]
    EmptySource,
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
}
