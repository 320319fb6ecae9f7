use std::fmt;

use unicode_normalization::UnicodeNormalization;

/// Lowercased, NFC-normalized tokens split on whitespace with surrounding
/// punctuation removed. Inner punctuation ("don't", "3.14") is kept.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn from_text(text: &str) -> Self {
        let normalized: String = text.nfc().collect::<String>().to_lowercase();
        let tokens = normalized
            .split_whitespace()
            .map(|raw| {
                raw.trim_matches(|c: char| !c.is_alphanumeric())
                    .replace('\u{2019}', "'")
            })
            .filter(|t| !t.is_empty())
            .collect();
        Self(tokens)
    }

    /// Wraps pre-split tokens as-is.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(tokens.into_iter().map(Into::into).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}
