use serde::{Deserialize, Serialize};

/// Lowercase word tokens in input order.
///
/// A token is a maximal run of alphanumeric characters; everything else is a
/// separator. Digits are kept, so `"41.71"` yields `["41", "71"]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenList(Vec<String>);

impl TokenList {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }
}

impl<'a> IntoIterator for &'a TokenList {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Non-empty sentences in input order, each keeping its terminator.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceList(Vec<String>);

impl SentenceList {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }
}

pub fn tokenize(text: &str) -> TokenList {
    let tokens = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    TokenList(tokens)
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits after every `.`, `!` or `?` that is followed by whitespace or the
/// end of input. No abbreviation handling: `"Dr. Who"` is two sentences.
pub fn split_sentences(text: &str) -> SentenceList {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((idx, c)) = chars.next() {
        if !is_terminator(c) {
            continue;
        }
        let boundary = match chars.peek() {
            None => true,
            Some((_, next)) => next.is_whitespace(),
        };
        if boundary {
            let end = idx + c.len_utf8();
            push_trimmed(&mut sentences, &text[start..end]);
            start = end;
        }
    }
    push_trimmed(&mut sentences, &text[start..]);
    SentenceList(sentences)
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(text: &str) -> Vec<String> {
        tokenize(text).into_vec()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(toks("The cat sat."), ["the", "cat", "sat"]);
        assert!(toks("").is_empty());
        assert_eq!(toks("GPT-4o scores 41.71"), ["gpt", "4o", "scores", "41", "71"]);
    }

    #[test]
    fn tokenize_handles_unicode_letters() {
        assert_eq!(toks("Café—naïve"), ["café", "naïve"]);
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_sentences("A. B!").as_slice(), ["A.", "B!"]);
        assert_eq!(split_sentences("no terminator").as_slice(), ["no terminator"]);
        assert_eq!(split_sentences("Hi. Dr. Who?").as_slice(), ["Hi.", "Dr.", "Who?"]);
    }

    #[test]
    fn split_ignores_inner_terminators() {
        assert_eq!(
            split_sentences("Pi is 3.14 roughly. Wow!! Really?").as_slice(),
            ["Pi is 3.14 roughly.", "Wow!!", "Really?"]
        );
        assert!(split_sentences("   ").is_empty());
    }
}
