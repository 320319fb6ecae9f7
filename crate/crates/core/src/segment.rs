//! Rule-based sentence segmentation, one rule set per script group.
//!
//! Segments keep the whitespace that followed them, so joining
//! `leading + Σ(text + trailing)` reproduces the input byte for byte.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use once_cell::sync::Lazy;

use crate::error::{Error, Result};
use crate::lang::LanguageCode;

const WESTERN: &[char] = &['.', '!', '?'];
const CJK: &[char] = &['。', '！', '？', '.', '!', '?'];
const INDIC: &[char] = &['।', '॥', '.', '!', '?'];
// The Arabic comma is deliberately not a terminator.
const ARABIC: &[char] = &['؟', '۔', '.', '!', '?'];

/// Terminators that end a sentence even without following whitespace.
const FULLWIDTH: &[char] = &['。', '！', '？'];

const CLOSERS: &[char] = &[
    '"', '\'', '\u{201d}', '\u{2019}', '\u{bb}', ')', ']', '}', '」', '』', '）', '】',
];

/// Rule family a language's segmenter is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptRules {
    Western,
    Cjk,
    Indic,
    ArabicScript,
    Thai,
}

impl ScriptRules {
    pub fn for_language(language: &LanguageCode) -> ScriptRules {
        match language.code() {
            "ja" | "zh" => ScriptRules::Cjk,
            "bn" | "gu" | "hi" | "kn" | "ml" | "pa" | "ta" | "te" => ScriptRules::Indic,
            "ar" | "fa" | "ur" => ScriptRules::ArabicScript,
            "th" => ScriptRules::Thai,
            _ => ScriptRules::Western,
        }
    }

    fn terminators(self) -> &'static [char] {
        match self {
            ScriptRules::Western | ScriptRules::Thai => WESTERN,
            ScriptRules::Cjk => CJK,
            ScriptRules::Indic => INDIC,
            ScriptRules::ArabicScript => ARABIC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub text: String,
    /// Whitespace between this segment and the next (or the end of input).
    pub trailing: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Segmentation {
    pub leading: String,
    pub segments: Vec<Segment>,
}

impl Segmentation {
    pub fn sentences(&self) -> Vec<String> {
        self.segments.iter().map(|s| s.text.clone()).collect()
    }

    pub fn reconstruct(&self) -> String {
        let mut out = self.leading.clone();
        for s in &self.segments {
            out.push_str(&s.text);
            out.push_str(&s.trailing);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SentenceSegmenter {
    rules: ScriptRules,
    /// Lowercased abbreviations including their final period.
    abbreviations: HashSet<String>,
}

fn is_thai(c: char) -> bool {
    ('\u{0e00}'..='\u{0e7f}').contains(&c)
}

impl SentenceSegmenter {
    pub fn new(rules: ScriptRules) -> Self {
        Self {
            rules,
            abbreviations: HashSet::new(),
        }
    }

    pub fn rules(&self) -> ScriptRules {
        self.rules
    }

    pub fn add_abbreviations<I, S>(&mut self, items: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for item in items {
            let item = item.as_ref().trim();
            if !item.is_empty() && !item.starts_with('#') {
                self.abbreviations.insert(item.to_lowercase());
            }
        }
    }

    fn is_abbreviation(&self, text: &str, period_end: usize) -> bool {
        if self.abbreviations.is_empty() {
            return false;
        }
        let word_start = text[..period_end]
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_whitespace() || *c == '(' || *c == '"')
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(0);
        self.abbreviations
            .contains(&text[word_start..period_end].to_lowercase())
    }

    pub fn segment_spans(&self, text: &str) -> Segmentation {
        let terminators = self.rules.terminators();
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let byte_at = |k: usize| chars.get(k).map(|(b, _)| *b).unwrap_or(text.len());

        let mut out = Segmentation::default();
        let mut k = 0;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        out.leading = text[..byte_at(k)].to_string();
        let mut start = k;

        while k < chars.len() {
            let c = chars[k].1;
            let mut end = None;
            if terminators.contains(&c) {
                let mut j = k + 1;
                while j < chars.len()
                    && (terminators.contains(&chars[j].1) || CLOSERS.contains(&chars[j].1))
                {
                    j += 1;
                }
                let at_break = j == chars.len()
                    || chars[j].1.is_whitespace()
                    || FULLWIDTH.contains(&chars[j - 1].1)
                    || FULLWIDTH.contains(&c);
                let abbreviated = c == '.' && j == k + 1 && self.is_abbreviation(text, byte_at(k + 1));
                if at_break && !abbreviated {
                    end = Some(j);
                }
                if end.is_none() {
                    k = j;
                    continue;
                }
            } else if self.rules == ScriptRules::Thai
                && c.is_whitespace()
                && k > start
                && is_thai(chars[k - 1].1)
            {
                let mut j = k;
                while j < chars.len() && chars[j].1.is_whitespace() {
                    j += 1;
                }
                if j < chars.len() && is_thai(chars[j].1) {
                    end = Some(k);
                }
            }

            match end {
                Some(e) => {
                    let mut w = e;
                    while w < chars.len() && chars[w].1.is_whitespace() {
                        w += 1;
                    }
                    out.segments.push(Segment {
                        text: text[byte_at(start)..byte_at(e)].to_string(),
                        trailing: text[byte_at(e)..byte_at(w)].to_string(),
                    });
                    start = w;
                    k = w;
                }
                None => k += 1,
            }
        }

        if start < chars.len() {
            let body = &text[byte_at(start)..];
            let trimmed = body.trim_end();
            out.segments.push(Segment {
                text: trimmed.to_string(),
                trailing: body[trimmed.len()..].to_string(),
            });
        }
        out
    }

    pub fn segment(&self, text: &str) -> Vec<String> {
        self.segment_spans(text).sentences()
    }
}

fn seed_abbreviations(code: &str) -> Option<&'static str> {
    Some(match code {
        "en" => include_str!("../data/abbreviations/en.txt"),
        "de" => include_str!("../data/abbreviations/de.txt"),
        "fr" => include_str!("../data/abbreviations/fr.txt"),
        "es" => include_str!("../data/abbreviations/es.txt"),
        "it" => include_str!("../data/abbreviations/it.txt"),
        "pt" => include_str!("../data/abbreviations/pt.txt"),
        "nl" => include_str!("../data/abbreviations/nl.txt"),
        "ru" => include_str!("../data/abbreviations/ru.txt"),
        "pl" => include_str!("../data/abbreviations/pl.txt"),
        "cs" => include_str!("../data/abbreviations/cs.txt"),
        _ => return None,
    })
}

/// Segmenters keyed by language.
#[derive(Debug, Clone)]
pub struct SegmenterRegistry {
    segmenters: BTreeMap<LanguageCode, SentenceSegmenter>,
}

impl Default for SegmenterRegistry {
    fn default() -> Self {
        let mut segmenters = BTreeMap::new();
        let mut languages = LanguageCode::evaluation_languages();
        languages.push(LanguageCode::english());
        for lang in languages {
            let mut seg = SentenceSegmenter::new(ScriptRules::for_language(&lang));
            if let Some(seed) = seed_abbreviations(lang.code()) {
                seg.add_abbreviations(seed.lines());
            }
            segmenters.insert(lang, seg);
        }
        Self { segmenters }
    }
}

impl SegmenterRegistry {
    pub fn empty() -> Self {
        Self {
            segmenters: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, language: LanguageCode, segmenter: SentenceSegmenter) {
        self.segmenters.insert(language, segmenter);
    }

    pub fn get(&self, language: &LanguageCode) -> Result<&SentenceSegmenter> {
        self.segmenters
            .get(language)
            .ok_or_else(|| Error::UnregisteredSegmenter {
                language: language.to_string(),
                registered: self
                    .segmenters
                    .keys()
                    .map(LanguageCode::code)
                    .collect::<Vec<_>>()
                    .join(","),
            })
    }

    /// Extends a language's abbreviation list from a file with one entry per
    /// line (`#` starts a comment line).
    pub fn load_abbreviations(&mut self, language: &LanguageCode, path: &Path) -> Result<()> {
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rules = ScriptRules::for_language(language);
        self.segmenters
            .entry(language.clone())
            .or_insert_with(|| SentenceSegmenter::new(rules))
            .add_abbreviations(contents.lines());
        Ok(())
    }

    pub fn segment_spans(&self, text: &str, language: &LanguageCode) -> Result<Segmentation> {
        Ok(self.get(language)?.segment_spans(text))
    }

    pub fn segment(&self, text: &str, language: &LanguageCode) -> Result<Vec<String>> {
        Ok(self.get(language)?.segment(text))
    }
}

static DEFAULT_REGISTRY: Lazy<SegmenterRegistry> = Lazy::new(SegmenterRegistry::default);

pub fn default_segmenters() -> &'static SegmenterRegistry {
    &DEFAULT_REGISTRY
}

/// Splits `text` into sentences with the default rules for `language`.
pub fn segment(text: &str, language: &LanguageCode) -> Result<Vec<String>> {
    DEFAULT_REGISTRY.segment(text, language)
}
