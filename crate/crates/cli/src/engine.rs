//! The configured pipeline with its memory, shared by every command and by
//! the server.

use std::sync::{Arc, Mutex};

use factsteer::decoding::{DecodeMode, DecodePlan, DecodeTrace, Pipeline};
use factsteer::lm::{LanguageModel, RemoteLm, ToyLm};
use factsteer::memory::{EditFact, MemoryStore, NewFact};
use factsteer::retrieval::{Embedder, HashedEmbedder, RemoteEmbedder, VectorIndex};
use factsteer::selector::{LinearScorer, RelevanceScorer, RemoteScorer, ScorerParams};
use factsteer::{Error, Result};

use crate::config::{EmbedderConfig, EngineConfig, LmConfig, ScorerConfig};

/// Per-query overrides of the configured decode settings.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AskOptions {
    pub alpha: Option<f64>,
    pub mode: Option<DecodeMode>,
    pub top_k: Option<usize>,
}

struct State {
    store: MemoryStore,
    index: Arc<VectorIndex>,
}

pub struct Engine {
    config: EngineConfig,
    lm: Box<dyn LanguageModel>,
    scorer: Box<dyn RelevanceScorer>,
    embedder: Arc<dyn Embedder>,
    state: Mutex<State>,
}

pub fn build_lm(config: &EngineConfig) -> Result<Box<dyn LanguageModel>> {
    match &config.lm {
        None => Err(Error::Config(
            "no language model configured; set [lm] or pass --toy-spec".into(),
        )),
        Some(LmConfig::Toy { spec }) => Ok(Box::new(ToyLm::load(spec)?)),
        Some(LmConfig::Remote {
            endpoint,
            auth_token_env,
        }) => {
            let mut endpoint = endpoint.clone();
            if let Some(var) = auth_token_env {
                match std::env::var(var) {
                    Ok(token) => endpoint.http.auth_token = Some(token),
                    Err(_) => return Err(Error::Config(format!("environment variable {var} is not set"))),
                }
            }
            Ok(Box::new(RemoteLm::new(endpoint)?))
        }
    }
}

pub fn build_scorer(config: &EngineConfig) -> Result<Box<dyn RelevanceScorer>> {
    match &config.scorer {
        ScorerConfig::Linear { params: None } => {
            log::warn!("no selector params configured; every fact will be rejected");
            Ok(Box::new(LinearScorer::new(ScorerParams::zeros())?))
        }
        ScorerConfig::Linear { params: Some(path) } => Ok(Box::new(LinearScorer::new(ScorerParams::load(path)?)?)),
        ScorerConfig::Remote(remote) => Ok(Box::new(RemoteScorer::new(remote.clone()))),
    }
}

pub fn build_embedder(config: &EngineConfig) -> Result<Arc<dyn Embedder>> {
    match &config.embedder {
        EmbedderConfig::Hashed { buckets } => Ok(Arc::new(HashedEmbedder::new(*buckets)?)),
        EmbedderConfig::Remote(remote) => Ok(Arc::new(RemoteEmbedder::new(remote.clone()))),
    }
}

impl Engine {
    /// Build every component and load the memory journal, if any.
    pub fn open(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let lm = build_lm(&config)?;
        let scorer = build_scorer(&config)?;
        let embedder = build_embedder(&config)?;
        let store = match &config.memory {
            Some(path) => MemoryStore::open(path)?,
            None => MemoryStore::in_memory(),
        };
        let mut index = VectorIndex::new(embedder.clone());
        index.extend(store.snapshot().iter().cloned())?;
        Ok(Engine {
            config,
            lm,
            scorer,
            embedder,
            state: Mutex::new(State {
                store,
                index: Arc::new(index),
            }),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn lm(&self) -> &dyn LanguageModel {
        self.lm.as_ref()
    }

    pub fn scorer(&self) -> &dyn RelevanceScorer {
        self.scorer.as_ref()
    }

    pub fn embedder(&self) -> Arc<dyn Embedder> {
        self.embedder.clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Persist and index new facts, strictly one after another.
    pub fn edit(&self, facts: Vec<NewFact>) -> Result<Vec<EditFact>> {
        let mut state = self.lock();
        let mut out = Vec::with_capacity(facts.len());
        for new in facts {
            let fact = state.store.append(new)?;
            Arc::make_mut(&mut state.index).add(fact.clone())?;
            out.push(fact);
        }
        Ok(out)
    }

    /// The index as of now; later edits do not affect it.
    pub fn snapshot(&self) -> Arc<VectorIndex> {
        self.lock().index.clone()
    }

    pub fn memory_len(&self) -> usize {
        self.lock().store.len()
    }

    pub fn plan(&self, options: &AskOptions) -> DecodePlan {
        let mut plan = self.config.decode.clone();
        if let Some(a) = options.alpha {
            plan.alpha = a;
        }
        if let Some(m) = options.mode {
            plan.mode = m;
        }
        plan
    }

    /// Answer `query` against the current memory snapshot.
    pub fn ask(&self, query: &str, options: &AskOptions) -> Result<(String, DecodeTrace)> {
        let plan = self.plan(options);
        let top_k = options.top_k.unwrap_or(self.config.top_k);
        if top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        let index = self.snapshot();
        Pipeline {
            lm: self.lm(),
            scorer: self.scorer(),
            plan: &plan,
            top_k,
            threshold: self.config.threshold,
        }
        .answer(&index, query)
    }
}
