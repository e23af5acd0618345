use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use kgsearch::http::read_key;
use kgsearch::indexer::IndexerConfig;
use kgsearch::llm::{LlmBackend, LlmConfig};
use kgsearch::pipeline::{ChannelMode, ModuleToggles, SearchBudget, SearchConfig};
use kgsearch::retrieval::{Embedder, HashingEmbedder, RemoteEmbedder, RemoteEmbedderConfig, RetrieverConfig, HASHING_DIMENSION};

use crate::error::CliError;

pub const JUDGE_KEY_ENV: &str = "KGSEARCH_JUDGE_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    #[default]
    RuleBased,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum EmbedderConfig {
    Hashing {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Remote(RemoteEmbedderConfig),
}

fn default_dimension() -> usize {
    HASHING_DIMENSION
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hashing {
            dimension: HASHING_DIMENSION,
        }
    }
}

impl EmbedderConfig {
    pub fn build(&self) -> std::sync::Arc<dyn Embedder<f64>> {
        match self {
            EmbedderConfig::Hashing { dimension } => std::sync::Arc::new(HashingEmbedder::new(*dimension)),
            EmbedderConfig::Remote(cfg) => std::sync::Arc::new(RemoteEmbedder::new(cfg.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Items evaluated concurrently.
    pub concurrency: usize,
    pub output_dir: PathBuf,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            concurrency: 4,
            output_dir: PathBuf::from("eval-out"),
        }
    }
}

/// Everything a command needs, read from TOML and then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub index_dir: PathBuf,
    pub corpus_path: Option<PathBuf>,
    pub indexer: IndexerConfig,
    pub extractor: ExtractorKind,
    pub embedder: EmbedderConfig,
    /// `top_k` here is also the per-sub-query k of the search loop.
    pub retriever: RetrieverConfig,
    pub budget: SearchBudget,
    pub toggles: ModuleToggles,
    pub channels: ChannelMode,
    pub llm: LlmConfig,
    pub judge: Option<LlmConfig>,
    pub eval: EvalSettings,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            index_dir: PathBuf::from("kgsearch-index"),
            corpus_path: None,
            indexer: IndexerConfig::default(),
            extractor: ExtractorKind::default(),
            embedder: EmbedderConfig::default(),
            retriever: RetrieverConfig::default(),
            budget: SearchBudget::default(),
            toggles: ModuleToggles::all(),
            channels: ChannelMode::Dual,
            llm: LlmConfig::default(),
            judge: None,
            eval: EvalSettings::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl AppConfig {
    /// Reads a TOML file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: AppConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut cfg.index_dir);
        rebase(base, &mut cfg.eval.output_dir);
        if let Some(p) = cfg.corpus_path.as_mut() {
            rebase(base, p);
        }
        for llm in std::iter::once(&mut cfg.llm).chain(cfg.judge.as_mut()) {
            if let Some(p) = llm.transcript.as_mut() {
                rebase(base, p);
            }
        }
        Ok(cfg)
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            budget: SearchBudget {
                per_query_top_k: self.retriever.top_k,
                ..self.budget.clone()
            },
            toggles: self.toggles,
            channels: self.channels,
        }
    }

    /// Checks everything that can be checked without touching the index.
    pub fn validate(&self) -> Result<(), CliError> {
        let config = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.indexer.validate().map_err(|e| config(&e))?;
        self.retriever.validate().map_err(|e| config(&e))?;
        self.search().validate().map_err(|e| config(&e))?;
        if self.eval.concurrency == 0 {
            return Err(CliError::Config("eval.concurrency must be at least 1".into()));
        }
        match &self.embedder {
            EmbedderConfig::Hashing { dimension: 0 } => {
                return Err(CliError::Config("embedder dimension must be positive".into()))
            }
            EmbedderConfig::Remote(cfg) => {
                if cfg.dimension == 0 || cfg.batch_size == 0 {
                    return Err(CliError::Config("remote embedder needs positive dimension and batch_size".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Validates an LLM section and, for remote backends, that its key is set.
    pub fn check_llm(llm: &LlmConfig, what: &str) -> Result<(), CliError> {
        llm.validate().map_err(|e| CliError::Config(format!("{what}: {e}")))?;
        if let Some(p) = &llm.transcript {
            if llm.backend == LlmBackend::Scripted && !p.is_file() {
                return Err(CliError::Config(format!("{what}: transcript {} not found", p.display())));
            }
        }
        if llm.backend == LlmBackend::Remote {
            read_key(&llm.api_key_env).map_err(|e| CliError::Config(format!("{what}: {e}")))?;
        }
        Ok(())
    }

    pub fn check_embedder_key(&self) -> Result<(), CliError> {
        if let EmbedderConfig::Remote(cfg) = &self.embedder {
            read_key(&cfg.api_key_env).map_err(|e| CliError::Config(format!("embedder: {e}")))?;
        }
        Ok(())
    }

    pub fn judge_config(&self) -> Option<LlmConfig> {
        self.judge.clone().map(|mut j| {
            if j.api_key_env == LlmConfig::default().api_key_env {
                j.api_key_env = JUDGE_KEY_ENV.into();
            }
            j
        })
    }
}
