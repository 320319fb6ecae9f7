//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::json;

use crate::cache::content_hash;
use crate::degeneration::DegenerationConfig;
use crate::error::{Error, Result};
use crate::generation::DecodeParams;
use crate::judge::{PromptTemplate, DEFAULT_EXTRACTION_TEMPLATE, DEFAULT_VERIFICATION_TEMPLATE};
use crate::lang::LanguageCode;
use crate::transport::RetryPolicy;

/// Declared training-data languages of a model.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum TrainLanguages {
    #[default]
    Unknown,
    Declared(Vec<LanguageCode>),
}

impl TrainLanguages {
    pub fn declared(&self) -> Option<&[LanguageCode]> {
        match self {
            TrainLanguages::Unknown => None,
            TrainLanguages::Declared(v) => Some(v),
        }
    }
}

impl Serialize for TrainLanguages {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TrainLanguages::Unknown => s.serialize_str("unknown"),
            TrainLanguages::Declared(v) => {
                let mut sorted = v.clone();
                sorted.sort();
                sorted.dedup();
                sorted.serialize(s)
            }
        }
    }
}

impl<'de> Deserialize<'de> for TrainLanguages {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            List(Vec<LanguageCode>),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "unknown" => Ok(TrainLanguages::Unknown),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "train_languages must be \"unknown\" or a list, got {w:?}"
            ))),
            Raw::List(v) => Ok(TrainLanguages::Declared(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub id: String,
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub decode: DecodeParams,
    #[serde(default)]
    pub train_languages: TrainLanguages,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationConfig {
    /// `"identity"` or an HTTP endpoint.
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Cache file, relative to the store when not absolute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        Self {
            endpoint: "identity".into(),
            api_key_env: None,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeConfig {
    pub endpoint: String,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_template: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification_template: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcurrencyConfig {
    /// In-flight requests per generation endpoint.
    pub per_endpoint: usize,
    pub translation: usize,
    pub judge: usize,
}

impl Default for ConcurrencyConfig {
    fn default() -> Self {
        Self {
            per_endpoint: 4,
            translation: 4,
            judge: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub models: Vec<ModelConfig>,
    /// Non-English languages to collect; English is always collected.
    pub languages: Vec<LanguageCode>,
    pub prompt_set: PathBuf,
    #[serde(default = "default_evaluators")]
    pub evaluators: Vec<String>,
    #[serde(default)]
    pub translation: TranslationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<ClassifierConfig>,
    #[serde(default)]
    pub concurrency: ConcurrencyConfig,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub degeneration: DegenerationConfig,
    #[serde(default)]
    pub seed: u64,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_evaluators() -> Vec<String> {
    vec!["info_fscore".into(), "empathy_exact".into()]
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        let mut ids: Vec<&str> = self.models.iter().map(|m| m.id.as_str()).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate model id {:?}", w[0])));
        }
        if self.languages.iter().any(LanguageCode::is_english) {
            return Err(Error::Config("languages lists non-English languages only".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn prompt_set_path(&self) -> PathBuf {
        self.resolve(&self.prompt_set)
    }

    /// English followed by the configured languages, deduplicated.
    pub fn all_languages(&self) -> Vec<LanguageCode> {
        let mut out = vec![LanguageCode::english()];
        for l in &self.languages {
            if !out.contains(l) {
                out.push(l.clone());
            }
        }
        out
    }

    pub fn model(&self, id: &str) -> Option<&ModelConfig> {
        self.models.iter().find(|m| m.id == id)
    }

    /// Judge templates, falling back to the bundled ones.
    pub fn judge_templates(&self) -> Result<(PromptTemplate, PromptTemplate)> {
        let judge = self.judge.as_ref();
        let extraction = match judge.and_then(|j| j.extraction_template.as_ref()) {
            Some(p) => PromptTemplate::load(&self.resolve(p))?,
            None => PromptTemplate::new("extract_claims", DEFAULT_EXTRACTION_TEMPLATE),
        };
        let verification = match judge.and_then(|j| j.verification_template.as_ref()) {
            Some(p) => PromptTemplate::load(&self.resolve(p))?,
            None => PromptTemplate::new("verify_claim", DEFAULT_VERIFICATION_TEMPLATE),
        };
        Ok((extraction, verification))
    }

    /// Hash of the canonical config together with the judge template texts.
    pub fn config_hash(&self) -> Result<String> {
        let (extraction, verification) = self.judge_templates()?;
        content_hash(&json!({
            "config": self,
            "templates": {
                "extraction": extraction.sha256(),
                "verification": verification.sha256(),
            },
        }))
    }
}
