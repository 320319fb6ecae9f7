//! Language codes used throughout the toolkit.
//!
//! The built-in table holds the thirty evaluation languages plus English.
//! Codes are the two-letter tags used in result tables; Hebrew is stored as
//! `iw`, with `he` accepted as an alias at parse time.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::RwLock;

use once_cell::sync::Lazy;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// The thirty evaluation languages with their display names, sorted by code.
pub const EVALUATION_LANGUAGES: [(&str, &str); 30] = [
    ("ar", "Arabic"),
    ("bn", "Bengali"),
    ("cs", "Czech"),
    ("de", "German"),
    ("el", "Greek"),
    ("es", "Spanish"),
    ("fa", "Persian"),
    ("fr", "French"),
    ("gu", "Gujarati"),
    ("hi", "Hindi"),
    ("id", "Indonesian"),
    ("it", "Italian"),
    ("iw", "Hebrew"),
    ("ja", "Japanese"),
    ("kn", "Kannada"),
    ("ko", "Korean"),
    ("ml", "Malayalam"),
    ("nl", "Dutch"),
    ("pa", "Punjabi"),
    ("pl", "Polish"),
    ("pt", "Portuguese"),
    ("ro", "Romanian"),
    ("ru", "Russian"),
    ("ta", "Tamil"),
    ("te", "Telugu"),
    ("th", "Thai"),
    ("tr", "Turkish"),
    ("ur", "Urdu"),
    ("vi", "Vietnamese"),
    ("zh", "Chinese"),
];

const ALIASES: [(&str, &str); 1] = [("he", "iw")];

static EXTENSIONS: Lazy<RwLock<BTreeMap<String, String>>> =
    Lazy::new(|| RwLock::new(BTreeMap::new()));

/// Registers an additional language code so that it parses. Returns an error
/// if the code collides with a built-in code or alias.
pub fn register_language(code: &str, display_name: &str) -> Result<(), Error> {
    let code = code.trim().to_ascii_lowercase();
    if code.is_empty() || builtin_name(&code).is_some() || alias_target(&code).is_some() {
        return Err(Error::InvalidLanguage(code));
    }
    EXTENSIONS
        .write()
        .expect("language registry poisoned")
        .insert(code, display_name.to_string());
    Ok(())
}

fn builtin_name(code: &str) -> Option<&'static str> {
    if code == "en" {
        return Some("English");
    }
    EVALUATION_LANGUAGES
        .binary_search_by(|(c, _)| (*c).cmp(code))
        .ok()
        .map(|i| EVALUATION_LANGUAGES[i].1)
}

fn alias_target(code: &str) -> Option<&'static str> {
    ALIASES.iter().find(|(a, _)| *a == code).map(|(_, t)| *t)
}

/// A canonical language code.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LanguageCode(String);

impl LanguageCode {
    /// Parses a code, applying the alias table (`he` becomes `iw`).
    pub fn parse(raw: &str) -> Result<Self, Error> {
        let lowered = raw.trim().to_ascii_lowercase();
        let canonical = alias_target(&lowered).unwrap_or(&lowered);
        if builtin_name(canonical).is_some()
            || EXTENSIONS
                .read()
                .expect("language registry poisoned")
                .contains_key(canonical)
        {
            Ok(Self(canonical.to_string()))
        } else {
            Err(Error::InvalidLanguage(raw.to_string()))
        }
    }

    pub fn english() -> Self {
        Self("en".to_string())
    }

    pub fn code(&self) -> &str {
        &self.0
    }

    pub fn is_english(&self) -> bool {
        self.0 == "en"
    }

    pub fn display_name(&self) -> String {
        if let Some(name) = builtin_name(&self.0) {
            return name.to_string();
        }
        EXTENSIONS
            .read()
            .expect("language registry poisoned")
            .get(&self.0)
            .cloned()
            .unwrap_or_else(|| self.0.clone())
    }

    /// All thirty evaluation languages in code order.
    pub fn evaluation_languages() -> Vec<LanguageCode> {
        EVALUATION_LANGUAGES
            .iter()
            .map(|(c, _)| LanguageCode(c.to_string()))
            .collect()
    }

    pub fn is_evaluation_language(&self) -> bool {
        self.0 != "en" && builtin_name(&self.0).is_some()
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LanguageCode({})", self.0)
    }
}

impl std::str::FromStr for LanguageCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for LanguageCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for LanguageCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        LanguageCode::parse(&raw).map_err(serde::de::Error::custom)
    }
}
