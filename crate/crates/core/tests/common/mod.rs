#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use polycon_core::config::RunConfig;
use polycon_core::generation::{DecodeParams, GenerationClient, GenerationError, GenerationOutput};
use polycon_core::heuristic::RougeLEvaluator;
use polycon_core::lang::LanguageCode;
use polycon_core::pipeline::{evaluate_store, translate_store};
use polycon_core::store::{RecordKey, RunStore, Stage};
use polycon_core::translate::{IdentityClient, TranslationClient};
use polycon_core::transport::TransportError;
use polycon_core::types::{AbstractPrompt, DecodeMode, ModelResponse, ResponseStatus};
use polycon_core::{empathy::EmpathyEvaluator, info::InfoConsistencyEvaluator};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn natural_paragraphs() -> Vec<String> {
    std::fs::read_to_string(fixtures().join("natural_paragraphs.txt"))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn lang(code: &str) -> LanguageCode {
    LanguageCode::parse(code).unwrap()
}

/// Prompts whose realization in every language reads `[<lang>] <id>`.
pub fn synthetic_prompts(n: usize, languages: &[LanguageCode]) -> Vec<AbstractPrompt> {
    (0..n)
        .map(|i| {
            let id = format!("q{i:02}");
            let realizations = languages
                .iter()
                .map(|l| (l.clone(), format!("[{l}] {id}")))
                .collect();
            AbstractPrompt {
                prompt_id: id,
                category: "synthetic".into(),
                realizations,
            }
        })
        .collect()
}

/// Answers prompt `[<lang>] qNN` with natural paragraph NN, in English,
/// whatever the language. Counts calls.
pub struct ParagraphModel {
    pub answers: Vec<String>,
    pub calls: AtomicUsize,
    /// Prompt ids, or full prompts, answered with a content block.
    pub blocked: Vec<String>,
}

impl ParagraphModel {
    pub fn new() -> Self {
        Self {
            answers: natural_paragraphs(),
            calls: AtomicUsize::new(0),
            blocked: Vec::new(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl GenerationClient for ParagraphModel {
    fn generate(&self, prompt: &str, _model: &str, _p: &DecodeParams) -> Result<GenerationOutput, GenerationError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let id = prompt.rsplit(' ').next().unwrap();
        if self.blocked.iter().any(|b| b == id || b == prompt) {
            return Err(GenerationError::ContentBlocked {
                category: "RECITATION".into(),
            });
        }
        let i: usize = id.trim_start_matches('q').parse().unwrap();
        Ok(GenerationOutput {
            text: self.answers[i % self.answers.len()].clone(),
            finish_reason: "stop".into(),
        })
    }
}

/// Bytes of every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

type Handler = dyn Fn(&str, &Value) -> (u16, Value) + Send + Sync;

/// Minimal HTTP/1.1 JSON server on a local port. One request per connection.
pub struct MockServer {
    pub url: String,
    pub calls: Arc<AtomicUsize>,
    pub bodies: Arc<Mutex<Vec<(String, Value)>>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&str, &Value) -> (u16, Value) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let calls = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let (c, b) = (calls.clone(), bodies.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    continue;
                }
                let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                c.fetch_add(1, Ordering::SeqCst);
                b.lock().unwrap().push((path.clone(), body.clone()));
                let (status, reply) = handler(&path, &body);
                let reply = reply.to_string();
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                let _ = stream.flush();
            }
        });
        Self { url, calls, bodies }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// Drops each sentence independently with probability `p` when translating
/// out of English and returns sentences unchanged otherwise.
pub struct SentenceDropper {
    pub p: f64,
    pub rng: Mutex<ChaCha8Rng>,
}

impl SentenceDropper {
    pub fn new(p: f64, seed: u64) -> Self {
        Self {
            p,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

impl TranslationClient for SentenceDropper {
    fn id(&self) -> &str {
        "sentence-dropper"
    }

    fn translate(&self, s: &str, src: &LanguageCode, _tgt: &LanguageCode, _d: DecodeMode) -> Result<String, TransportError> {
        if src.is_english() && self.rng.lock().unwrap().random_bool(self.p) {
            Ok(String::new())
        } else {
            Ok(s.to_string())
        }
    }
}

pub fn fixture_root() -> PathBuf {
    fixtures().join("report")
}

pub const FIXTURE_EVALUATORS: [&str; 3] = ["info_fscore", "empathy_exact", "rougeL"];

/// Builds the synthetic report store: two models, six prompts, responses
/// derived from the natural paragraphs with sentences dropped at random.
pub fn build_fixture_store(root: &Path) {
    let config = RunConfig::load(&fixture_root().join("config.toml")).unwrap();
    let store = RunStore::open(root, &config.config_hash().unwrap()).unwrap();
    let paragraphs = natural_paragraphs();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let at = Utc.with_ymd_and_hms(2024, 6, 1, 0, 0, 0).unwrap();
    let skipped_for_second = ["ar", "fa", "ur"];
    for (mi, model) in config.models.iter().enumerate() {
        for l in config.all_languages() {
            if mi == 1 && skipped_for_second.contains(&l.code()) {
                continue;
            }
            for p in 0..6 {
                let prompt_id = format!("q{p:02}");
                let english = &paragraphs[p * 7 % paragraphs.len()];
                let mut sentences: Vec<&str> = english.split_inclusive(". ").map(str::trim).collect();
                let mut status = ResponseStatus::Ok;
                let text = if l.is_english() {
                    english.clone()
                } else if rng.random_bool(0.04) {
                    status = ResponseStatus::RecitationSentinel;
                    polycon_core::NO_ANSWER.to_string()
                } else {
                    let keep = 0.55 + 0.4 * rng.random::<f64>();
                    sentences.retain(|_| rng.random_bool(keep));
                    if sentences.is_empty() {
                        sentences.push(english.split(". ").next().unwrap());
                    }
                    if rng.random_bool(0.2) {
                        sentences.shuffle(&mut rng);
                    }
                    sentences.join(" ")
                };
                let response = ModelResponse {
                    prompt_id: prompt_id.clone(),
                    model_id: model.id.clone(),
                    language: l.clone(),
                    text,
                    status,
                    created_at: at,
                    detail: (status == ResponseStatus::RecitationSentinel).then(|| "RECITATION".to_string()),
                };
                store
                    .put(RecordKey::new(&model.id, &l, &prompt_id, Stage::Response), &response)
                    .unwrap();
            }
        }
    }
    translate_store(&store, &IdentityClient, &config.degeneration, 1).unwrap();
    evaluate_store(&store, &InfoConsistencyEvaluator::default()).unwrap();
    evaluate_store(&store, &EmpathyEvaluator::default()).unwrap();
    evaluate_store(&store, &RougeLEvaluator).unwrap();
}
