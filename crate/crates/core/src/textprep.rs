//! Text normalization and tokenization.
//!
//! One tokenizer serves documents and queries. Input is expected to be English
//! or already translated; there is no language detection, stemming, or stopword
//! list.

use crate::corpus::PaperDoc;

/// Tokens shorter than this many characters are dropped.
pub const MIN_TOKEN_LEN: usize = 2;

/// Lowercase terms in document order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
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

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    /// Space-joined form; tokenizing it again yields the same stream.
    pub fn joined(&self) -> String {
        self.0.join(" ")
    }
}

impl<'a> IntoIterator for &'a TokenStream {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Lowercases, splits on every non-alphanumeric character, and drops tokens
/// shorter than [`MIN_TOKEN_LEN`]. Digits are kept.
pub fn tokenize(text: &str) -> TokenStream {
    tokenize_with_min_len(text, MIN_TOKEN_LEN)
}

pub fn tokenize_with_min_len(text: &str, min_len: usize) -> TokenStream {
    // Lowercase before splitting: some lowercase mappings emit combining marks,
    // which must act as separators for the output to be a fixed point.
    let lowered = text.to_lowercase();
    let tokens = lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && t.chars().count() >= min_len)
        .map(str::to_string)
        .collect();
    TokenStream(tokens)
}

/// Title and abstract joined by a single space. Empty fields contribute nothing.
pub fn doc_text(doc: &PaperDoc) -> String {
    match (doc.title.is_empty(), doc.abstract_text.is_empty()) {
        (false, false) => format!("{} {}", doc.title, doc.abstract_text),
        (false, true) => doc.title.clone(),
        (true, false) => doc.abstract_text.clone(),
        (true, true) => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s).into_inner()
    }

    #[test]
    fn basic_sentence() {
        assert_eq!(toks("Deep Learning!"), ["deep", "learning"]);
    }

    #[test]
    fn empty_input() {
        assert!(toks("").is_empty());
    }

    #[test]
    fn hyphens_digits_and_parens() {
        assert_eq!(
            toks("BM25-based re-ranking (2020)"),
            ["bm25", "based", "re", "ranking", "2020"]
        );
    }

    #[test]
    fn single_characters_dropped() {
        assert_eq!(toks("a b c de"), ["de"]);
    }

    #[test]
    fn unicode_letters_kept() {
        assert_eq!(
            toks("Über Straße, 東京大学"),
            ["über", "straße", "東京大学"]
        );
    }

    #[test]
    fn doc_text_joins_fields() {
        assert_eq!(doc_text(&PaperDoc::new("d", "A", "B", &[])), "A B");
        assert_eq!(doc_text(&PaperDoc::new("d", "A", "", &[])), "A");
        assert_eq!(doc_text(&PaperDoc::new("d", "", "", &[])), "");
    }

    proptest! {
        #[test]
        fn tokenizing_is_idempotent(s in "\\PC*") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&once.joined()), once);
        }

        #[test]
        fn tokens_are_nonempty_and_whitespace_free(s in "\\PC*") {
            for t in tokenize(&s).iter() {
                prop_assert!(t.chars().count() >= MIN_TOKEN_LEN);
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
        }
    }
}
