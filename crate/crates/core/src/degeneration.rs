//! Repetition detection for machine-translation output.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::tokenize::TokenSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerationReport {
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeated_unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat_count: Option<usize>,
}

impl DegenerationReport {
    fn clean() -> Self {
        Self {
            degenerate: false,
            repeated_unit: None,
            repeat_count: None,
        }
    }

    fn found(unit: &[String], count: usize) -> Self {
        Self {
            degenerate: true,
            repeated_unit: Some(unit.join(" ")),
            repeat_count: Some(count),
        }
    }
}

/// Thresholds for [`detect_degeneration`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegenerationConfig {
    /// Smallest n-gram length considered for back-to-back repetition.
    pub min_ngram: usize,
    /// Number of back-to-back copies that counts as degenerate.
    pub min_consecutive_repeats: usize,
    /// n-gram length used for the dominance check.
    pub share_ngram: usize,
    /// A single `share_ngram`-gram covering more than this fraction of all
    /// positions is degenerate.
    pub max_share: f64,
    /// The dominance check only runs with at least this many positions.
    pub min_share_positions: usize,
}

impl Default for DegenerationConfig {
    fn default() -> Self {
        Self {
            min_ngram: 3,
            min_consecutive_repeats: 4,
            share_ngram: 5,
            max_share: 0.30,
            min_share_positions: 8,
        }
    }
}

fn unspaced_script(c: char) -> bool {
    matches!(c,
        '\u{3040}'..='\u{30ff}'   // kana
        | '\u{3400}'..='\u{4dbf}'
        | '\u{4e00}'..='\u{9fff}' // han
        | '\u{0e00}'..='\u{0e7f}' // thai
    )
}

/// Case- and punctuation-insensitive tokens. Runs of Han, kana or Thai are
/// split into single characters since those scripts do not space words.
fn degeneration_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for token in TokenSequence::from_text(text).tokens() {
        if token.chars().any(unspaced_script) {
            let mut buf = String::new();
            for c in token.chars() {
                if unspaced_script(c) {
                    if !buf.is_empty() {
                        out.push(std::mem::take(&mut buf));
                    }
                    out.push(c.to_string());
                } else {
                    buf.push(c);
                }
            }
            if !buf.is_empty() {
                out.push(buf);
            }
        } else {
            out.push(token.clone());
        }
    }
    out
}

impl DegenerationConfig {
    pub fn detect(&self, text: &str) -> DegenerationReport {
        let tokens = degeneration_tokens(text);
        self.consecutive(&tokens)
            .or_else(|| self.dominant(&tokens))
            .unwrap_or_else(DegenerationReport::clean)
    }

    fn consecutive(&self, tokens: &[String]) -> Option<DegenerationReport> {
        let reps = self.min_consecutive_repeats.max(2);
        let len = tokens.len();
        for n in self.min_ngram.max(1)..=len / reps {
            for i in 0..=(len - n * reps) {
                let unit = &tokens[i..i + n];
                let mut copies = 1;
                while i + (copies + 1) * n <= len && tokens[i + copies * n..i + (copies + 1) * n] == *unit {
                    copies += 1;
                }
                if copies >= reps {
                    return Some(DegenerationReport::found(unit, copies));
                }
            }
        }
        None
    }

    fn dominant(&self, tokens: &[String]) -> Option<DegenerationReport> {
        let n = self.share_ngram.max(1);
        if tokens.len() < n {
            return None;
        }
        let positions = tokens.len() - n + 1;
        if positions < self.min_share_positions {
            return None;
        }
        let mut counts: HashMap<&[String], (usize, usize)> = HashMap::new();
        for (i, gram) in tokens.windows(n).enumerate() {
            counts.entry(gram).or_insert((0, i)).0 += 1;
        }
        // highest count, earliest first occurrence on ties
        let (gram, (count, _)) = counts
            .into_iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))?;
        (count as f64 / positions as f64 > self.max_share)
            .then(|| DegenerationReport::found(gram, count))
    }
}

/// Checks `text` for pathological repetition using the default thresholds.
pub fn detect_degeneration(text: &str) -> DegenerationReport {
    DegenerationConfig::default().detect(text)
}
