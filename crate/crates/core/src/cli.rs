//! Command-line front end for the `polycon` binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::cache::ResponseCache;
use crate::collect::{collect, http_generation_clients, load_prompt_set, plan};
use crate::config::{RunConfig, TrainLanguages};
use crate::error::{Error, Result};
use crate::info::{InfoDetail, INFO_EVALUATOR_ID};
use crate::lang::LanguageCode;
use crate::pipeline::{evaluate_store, selfcheck_store, stored_results, translate_store};
use crate::registry::{EvaluatorRegistry, TransportFactory};
use crate::report::{emit_heatmap_matrix, emit_table, GroupedReport, GroupingKind, TableFormat};
use crate::store::{RecordKey, RunStore, Stage, StoreError};
use crate::translate::{HttpTranslationClient, IdentityClient, TranslationClient};

#[derive(Debug, Parser)]
#[command(name = "polycon", version, about = "Cross-lingual consistency of LLM responses")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run store directory.
    #[arg(long, global = true, default_value = "store")]
    pub store: PathBuf,
    /// Print what would run without calling any endpoint or writing.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Skip records already in the store (default).
    #[arg(long, global = true, overrides_with = "no_resume")]
    pub resume: bool,
    /// Refuse to run against a non-empty store.
    #[arg(long, global = true)]
    pub no_resume: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate responses for every (model, language, prompt).
    Collect,
    /// Translate stored non-English responses into English.
    Translate,
    /// Score translated responses against English responses.
    Evaluate(EvaluateArgs),
    /// Write grouped tables and heatmap matrices.
    Report(ReportArgs),
    /// Back-translation self-consistency of the translation system.
    Selfcheck(SelfcheckArgs),
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub evaluator: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Groupings to include; defaults to all of script, family and train.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub group_by: Vec<GroupingKind>,
    /// Restrict to one evaluator.
    #[arg(long)]
    pub evaluator: Option<String>,
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    #[arg(long)]
    pub language: String,
    #[arg(long, default_value = INFO_EVALUATOR_ID)]
    pub evaluator: String,
}

impl Cli {
    fn load_config(&self) -> Result<RunConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
        RunConfig::load(path)
    }

    fn open_store(&self, config: &RunConfig) -> Result<RunStore> {
        if self.no_resume && !RunStore::is_empty_dir(&self.store) {
            return Err(StoreError::NotEmpty(self.store.clone()).into());
        }
        Ok(RunStore::open(&self.store, &config.config_hash()?)?)
    }

    /// Store for a dry run; never created on disk.
    fn peek_store(&self, config: &RunConfig) -> Result<Option<RunStore>> {
        if RunStore::is_empty_dir(&self.store) {
            return Ok(None);
        }
        Ok(Some(RunStore::open(&self.store, &config.config_hash()?)?))
    }
}

fn translation_client(
    config: &RunConfig,
    store_root: &Path,
    transports: &TransportFactory,
) -> Result<Box<dyn TranslationClient>> {
    let t = &config.translation;
    if t.endpoint == "identity" {
        return Ok(Box::new(IdentityClient));
    }
    let cache_path = match &t.cache {
        Some(p) if p.is_absolute() => p.clone(),
        Some(p) => store_root.join(p),
        None => store_root.join("translation-cache.jsonl"),
    };
    let client = HttpTranslationClient::new(t.endpoint.clone(), transports(t.api_key_env.as_deref()))
        .with_cache(Arc::new(ResponseCache::open(cache_path)?))
        .with_retry(config.retry.clone());
    Ok(Box::new(client))
}

/// Runs one command and returns its JSON summary.
pub fn run(cli: &Cli, transports: &TransportFactory) -> Result<Value> {
    match &cli.command {
        Command::Collect => {
            let config = cli.load_config()?;
            let prompts = load_prompt_set(&config.prompt_set_path())?;
            if cli.dry_run {
                let store = cli.peek_store(&config)?;
                let p = plan(&config, &prompts, store.as_ref())?;
                let counts: Vec<Value> = p
                    .counts()
                    .into_iter()
                    .map(|((m, l), n)| json!({"model_id": m, "language": l, "pending": n}))
                    .collect();
                return Ok(json!({
                    "command": "collect",
                    "dry_run": true,
                    "models": config.models.len(),
                    "languages": config.all_languages().len(),
                    "prompts": prompts.len(),
                    "total": p.total(),
                    "already_stored": p.already_stored,
                    "pending": p.calls.len(),
                    "plan": counts,
                }));
            }
            let store = cli.open_store(&config)?;
            let clients = http_generation_clients(&config, transports);
            let summary = collect(&config, &prompts, &clients, &store)?;
            Ok(json!({"command": "collect", "summary": summary}))
        }
        Command::Translate => {
            let config = cli.load_config()?;
            if cli.dry_run {
                let pending = match cli.peek_store(&config)? {
                    None => 0,
                    Some(store) => store
                        .records(&Stage::Response)
                        .iter()
                        .filter(|r| !r.key.language.is_english())
                        .filter(|r| {
                            let k = &r.key;
                            !store.contains(&RecordKey::new(&k.model_id, &k.language, &k.prompt_id, Stage::Translation))
                        })
                        .count(),
                };
                return Ok(json!({"command": "translate", "dry_run": true, "pending": pending}));
            }
            let store = cli.open_store(&config)?;
            let client = translation_client(&config, &cli.store, transports)?;
            let summary = translate_store(&store, client.as_ref(), &config.degeneration, config.concurrency.translation)?;
            Ok(json!({"command": "translate", "client": client.id(), "summary": summary}))
        }
        Command::Evaluate(args) => {
            let config = cli.load_config()?;
            let registry = EvaluatorRegistry::from_config(&config, transports)?;
            let evaluator = registry.get(&args.evaluator)?;
            if cli.dry_run {
                return Ok(json!({"command": "evaluate", "dry_run": true, "evaluator": args.evaluator}));
            }
            let store = cli.open_store(&config)?;
            let results = evaluate_store(&store, evaluator.as_ref())?;
            let per: Vec<Value> = results
                .iter()
                .map(|r| json!({"model_id": r.model_id, "language": r.language, "value": r.value, "n_prompts": r.n_prompts}))
                .collect();
            Ok(json!({"command": "evaluate", "evaluator": args.evaluator, "results": per}))
        }
        Command::Report(args) => {
            let config = match &cli.config {
                Some(p) => Some(RunConfig::load(p)?),
                None => None,
            };
            let store = RunStore::open_existing(&cli.store)?;
            let groupings = if args.group_by.is_empty() {
                GroupingKind::ALL.to_vec()
            } else {
                args.group_by.clone()
            };
            let evaluators: Vec<String> = match &args.evaluator {
                Some(e) => vec![e.clone()],
                None => store.scored_evaluators().into_iter().collect(),
            };
            if evaluators.is_empty() {
                return Err(Error::MissingResponses("the store holds no scores; run evaluate first".into()));
            }
            let train = |model: &str| -> TrainLanguages {
                config
                    .as_ref()
                    .and_then(|c| c.model(model))
                    .map(|m| m.train_languages.clone())
                    .unwrap_or_default()
            };
            let mut markdown = String::from("# Cross-lingual consistency\n");
            let mut csv = String::new();
            let mut files = Vec::new();
            let mut heatmaps = Vec::new();
            for evaluator in &evaluators {
                let results = stored_results(&store, evaluator)?;
                let reports = GroupedReport::from_results(&results, train)?;
                markdown.push('\n');
                markdown.push_str(&emit_table(&reports, &groupings, TableFormat::Markdown)?);
                let table = emit_table(&reports, &groupings, TableFormat::Csv)?;
                let skip = if csv.is_empty() { 0 } else { 1 };
                for line in table.lines().skip(skip) {
                    csv.push_str(line);
                    csv.push('\n');
                }
                let mut per_model: BTreeMap<String, BTreeMap<LanguageCode, f64>> = BTreeMap::new();
                for r in &results {
                    per_model.entry(r.model_id.clone()).or_default().insert(r.language.clone(), r.value);
                }
                heatmaps.push((format!("heatmap_{evaluator}.csv"), emit_heatmap_matrix(&per_model)));
            }
            if cli.dry_run {
                let names: Vec<String> = ["report.md".to_string(), "report.csv".to_string()]
                    .into_iter()
                    .chain(heatmaps.iter().map(|(n, _)| n.clone()))
                    .collect();
                return Ok(json!({"command": "report", "dry_run": true, "files": names}));
            }
            std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
            let mut write = |name: &str, body: &str| -> Result<()> {
                let path = args.out.join(name);
                std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
                files.push(path.display().to_string());
                Ok(())
            };
            write("report.md", &markdown)?;
            write("report.csv", &csv)?;
            for (name, body) in &heatmaps {
                write(name, body)?;
            }
            Ok(json!({"command": "report", "evaluators": evaluators, "files": files}))
        }
        Command::Selfcheck(args) => {
            let config = cli.load_config()?;
            let language = LanguageCode::parse(&args.language)?;
            let registry = EvaluatorRegistry::from_config(&config, transports)?;
            let evaluator = registry.get(&args.evaluator)?;
            if cli.dry_run {
                return Ok(json!({"command": "selfcheck", "dry_run": true, "language": language}));
            }
            let store = cli.open_store(&config)?;
            let client = translation_client(&config, &cli.store, transports)?;
            let result = selfcheck_store(&store, &language, client.as_ref(), evaluator.as_ref())?;
            let details: Vec<InfoDetail> = result.per_prompt.values().filter_map(InfoDetail::from_score).collect();
            let mut out = json!({
                "command": "selfcheck",
                "language": language,
                "evaluator": result.evaluator_id,
                "model_id": result.model_id,
                "value": result.value,
                "n_prompts": result.n_prompts,
            });
            if !details.is_empty() {
                let n = details.len() as f64;
                out["precision_dir"] = json!(details.iter().map(|d| d.precision_dir).sum::<f64>() / n);
                out["recall_dir"] = json!(details.iter().map(|d| d.recall_dir).sum::<f64>() / n);
            }
            Ok(out)
        }
    }
}

/// Machine-readable name of an error's category.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidLanguage(_) => "invalid_language",
        Error::Evaluator { .. } => "evaluator",
        Error::UnknownEvaluator(_) => "unknown_evaluator",
        Error::NoPrompts => "no_prompts",
        Error::Prompt { source, .. } => error_kind(source),
        Error::OutOfRange { .. } => "out_of_range",
        Error::EmptyReference => "empty_reference",
        Error::InvalidOrder => "invalid_order",
        Error::UnregisteredSegmenter { .. } => "unregistered_segmenter",
        Error::Translation { .. } => "translation",
        Error::AlreadyEnglish => "already_english",
        Error::Generation(_) => "generation",
        Error::PromptSet { .. } => "prompt_set",
        Error::MissingRealization { .. } => "missing_realization",
        Error::MissingTranslations(_) => "missing_translations",
        Error::MissingResponses(_) => "missing_responses",
        Error::Ungrouped(_) => "ungrouped_language",
        Error::MixedEvaluators(_) => "mixed_evaluators",
        Error::Store(_) => "store",
        Error::Config(_) => "config",
        Error::InvalidRecord(_) => "invalid_record",
        Error::Io { .. } => "io",
        Error::Json(_) => "json",
    }
}

/// The structured form printed on stderr when a command fails.
pub fn error_json(e: &Error) -> Value {
    json!({"error": {"kind": error_kind(e), "message": e.to_string()}})
}
