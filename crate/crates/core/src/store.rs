//! Append-only JSONL run store. One shard per (model, stage) plus an
//! `index.json` carrying the config hash every record must match.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::cache::content_hash;
use crate::lang::LanguageCode;

const INDEX_FILE: &str = "index.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("record {0} already exists with different content")]
    Immutable(String),
    #[error("store was created with config {stored}, this run has config {current}")]
    ConfigMismatch { stored: String, current: String },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("store at {0} is not empty")]
    NotEmpty(PathBuf),
    #[error("no store index at {0}")]
    Missing(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize record: {0}")]
    Serialize(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Response,
    Translation,
    Score(String),
}

impl Stage {
    fn shard_name(&self) -> String {
        match self {
            Stage::Response => "response".into(),
            Stage::Translation => "translation".into(),
            Stage::Score(id) => format!("score-{}", sanitize(id)),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Response => f.write_str("response"),
            Stage::Translation => f.write_str("translation"),
            Stage::Score(id) => write!(f, "score:{id}"),
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "response" => Ok(Stage::Response),
            "translation" => Ok(Stage::Translation),
            _ => match s.strip_prefix("score:") {
                Some(id) if !id.is_empty() => Ok(Stage::Score(id.to_string())),
                _ => Err(format!("unknown stage {s:?}")),
            },
        }
    }
}

impl Serialize for Stage {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Stage {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub model_id: String,
    pub language: LanguageCode,
    pub prompt_id: String,
    pub stage: Stage,
}

impl RecordKey {
    pub fn new(model_id: &str, language: &LanguageCode, prompt_id: &str, stage: Stage) -> Self {
        Self {
            model_id: model_id.to_string(),
            language: language.clone(),
            prompt_id: prompt_id.to_string(),
            stage,
        }
    }
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.model_id, self.language, self.prompt_id, self.stage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub key: RecordKey,
    pub config_hash: String,
    pub content_hash: String,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Index {
    config_hash: String,
}

/// Keeps shard files' characters portable.
fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

#[derive(Default)]
struct State {
    records: HashMap<RecordKey, StoredRecord>,
}

/// Outcome of [`RunStore::put`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    Written,
    Unchanged,
}

pub struct RunStore {
    root: PathBuf,
    config_hash: String,
    state: Mutex<State>,
}

impl RunStore {
    /// Opens or creates a store for a run with the given config hash.
    pub fn open(root: impl Into<PathBuf>, config_hash: &str) -> Result<Self, StoreError> {
        let root = root.into();
        let index_path = root.join(INDEX_FILE);
        if index_path.exists() {
            let store = Self::open_existing(root)?;
            if store.config_hash != config_hash {
                return Err(StoreError::ConfigMismatch {
                    stored: store.config_hash,
                    current: config_hash.to_string(),
                });
            }
            return Ok(store);
        }
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let index = Index {
            config_hash: config_hash.to_string(),
        };
        let mut text = serde_json::to_string_pretty(&index)?;
        text.push('\n');
        fs::write(&index_path, text).map_err(io_err(&index_path))?;
        Ok(Self {
            root,
            config_hash: config_hash.to_string(),
            state: Mutex::new(State::default()),
        })
    }

    /// Opens an existing store with whatever config it was created under.
    pub fn open_existing(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let index_path = root.join(INDEX_FILE);
        if !index_path.exists() {
            return Err(StoreError::Missing(root));
        }
        let text = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
        let index: Index = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
            path: index_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let store = Self {
            root,
            config_hash: index.config_hash,
            state: Mutex::new(State::default()),
        };
        store.load()?;
        Ok(store)
    }

    /// True when the directory is absent or holds no store files.
    pub fn is_empty_dir(root: &Path) -> bool {
        match fs::read_dir(root) {
            Ok(mut entries) => entries.next().is_none(),
            Err(_) => true,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn shard_path(&self, model_dir: &str, shard: &str) -> PathBuf {
        self.root.join(model_dir).join(format!("{shard}.jsonl"))
    }

    fn load(&self) -> Result<(), StoreError> {
        let mut state = self.state.lock().expect("store poisoned");
        let mut dirs: Vec<PathBuf> = fs::read_dir(&self.root)
            .map_err(io_err(&self.root))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(io_err(&dir))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            files.sort();
            for path in files {
                let file = File::open(&path).map_err(io_err(&path))?;
                for (i, line) in BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(io_err(&path))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let corrupt = |message: String| StoreError::Corrupt {
                        path: path.clone(),
                        line: i + 1,
                        message,
                    };
                    let record: StoredRecord =
                        serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
                    if record.config_hash != self.config_hash {
                        return Err(StoreError::ConfigMismatch {
                            stored: self.config_hash.clone(),
                            current: record.config_hash,
                        });
                    }
                    if content_hash(&record.payload).map_err(|e| corrupt(e.to_string()))? != record.content_hash {
                        return Err(corrupt("content hash does not match payload".into()));
                    }
                    state.records.insert(record.key.clone(), record);
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, key: &RecordKey) -> bool {
        self.state.lock().expect("store poisoned").records.contains_key(key)
    }

    pub fn get(&self, key: &RecordKey) -> Option<StoredRecord> {
        self.state.lock().expect("store poisoned").records.get(key).cloned()
    }

    pub fn get_payload<T: serde::de::DeserializeOwned>(&self, key: &RecordKey) -> Result<Option<T>, StoreError> {
        match self.get(key) {
            Some(r) => Ok(Some(serde_json::from_value(r.payload)?)),
            None => Ok(None),
        }
    }

    /// Appends a record. Re-writing identical content is a no-op; different
    /// content under an existing key is rejected.
    pub fn put<T: Serialize>(&self, key: RecordKey, payload: &T) -> Result<PutOutcome, StoreError> {
        let payload = serde_json::to_value(payload)?;
        let hash = content_hash(&payload).map_err(|e| StoreError::Immutable(e.to_string()))?;
        let mut state = self.state.lock().expect("store poisoned");
        if let Some(existing) = state.records.get(&key) {
            return if existing.content_hash == hash {
                Ok(PutOutcome::Unchanged)
            } else {
                Err(StoreError::Immutable(key.to_string()))
            };
        }
        let record = StoredRecord {
            key: key.clone(),
            config_hash: self.config_hash.clone(),
            content_hash: hash,
            payload,
        };
        let model_dir = sanitize(&key.model_id);
        let shard = key.stage.shard_name();
        let path = self.shard_path(&model_dir, &shard);
        let dir = path.parent().unwrap();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let line = serde_json::to_string(&record)?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        writeln!(file, "{line}").map_err(io_err(&path))?;
        state.records.insert(key, record);
        Ok(PutOutcome::Written)
    }

    /// All records of a stage, ordered by key.
    pub fn records(&self, stage: &Stage) -> Vec<StoredRecord> {
        let state = self.state.lock().expect("store poisoned");
        let mut out: Vec<StoredRecord> = state
            .records
            .values()
            .filter(|r| &r.key.stage == stage)
            .cloned()
            .collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }

    pub fn models(&self) -> BTreeSet<String> {
        let state = self.state.lock().expect("store poisoned");
        state.records.keys().map(|k| k.model_id.clone()).collect()
    }

    /// Evaluator ids with at least one stored score.
    pub fn scored_evaluators(&self) -> BTreeSet<String> {
        let state = self.state.lock().expect("store poisoned");
        state
            .records
            .keys()
            .filter_map(|k| match &k.stage {
                Stage::Score(id) => Some(id.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("store poisoned").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
