//! Engine configuration: one TOML document, overridable per flag.
//!
//! ```toml
//! memory = "memory.jsonl"
//! top_k = 5
//! threshold = 0.5
//!
//! [lm]
//! kind = "toy"
//! spec = "toy.json"
//!
//! [scorer]
//! kind = "linear"
//! params = "selector.json"
//!
//! [decode]
//! alpha = 0.2
//! mode = "contrast-full"
//! ```

use std::path::{Path, PathBuf};

use factsteer::decoding::{DecodeMode, DecodePlan};
use factsteer::lm::RemoteLmConfig;
use factsteer::retrieval::{RemoteEmbedderConfig, DEFAULT_BUCKETS, DEFAULT_TOP_K};
use factsteer::selector::{RemoteScorerConfig, DEFAULT_THRESHOLD};
use factsteer::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderConfig {
    Hashed {
        #[serde(default = "default_buckets")]
        buckets: usize,
    },
    Remote(RemoteEmbedderConfig),
}

fn default_buckets() -> usize {
    DEFAULT_BUCKETS
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hashed {
            buckets: DEFAULT_BUCKETS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScorerConfig {
    /// Built-in logistic scorer. Without a params file every probability
    /// is 0.5 and nothing is ever selected.
    Linear {
        #[serde(default)]
        params: Option<PathBuf>,
    },
    Remote(RemoteScorerConfig),
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig::Linear { params: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LmConfig {
    Toy {
        spec: PathBuf,
    },
    Remote {
        #[serde(flatten)]
        endpoint: RemoteLmConfig,
        /// Environment variable holding the bearer token.
        #[serde(default)]
        auth_token_env: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Append-only fact journal; in-memory only when absent.
    pub memory: Option<PathBuf>,
    pub top_k: usize,
    pub threshold: f64,
    pub workers: usize,
    pub embedder: EmbedderConfig,
    pub scorer: ScorerConfig,
    pub lm: Option<LmConfig>,
    pub decode: DecodePlan,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            memory: None,
            top_k: DEFAULT_TOP_K,
            threshold: DEFAULT_THRESHOLD,
            workers: 4,
            embedder: EmbedderConfig::default(),
            scorer: ScorerConfig::default(),
            lm: None,
            decode: DecodePlan::default(),
        }
    }
}

/// Values given on the command line; each one beats the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub memory: Option<PathBuf>,
    pub toy_spec: Option<PathBuf>,
    pub scorer_params: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub mode: Option<DecodeMode>,
    pub top_k: Option<usize>,
    pub threshold: Option<f64>,
    pub workers: Option<usize>,
    pub max_answer_tokens: Option<usize>,
}

impl EngineConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            location: origin.to_string(),
            message: e.message().to_string(),
        })
    }

    /// Relative paths inside the file are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut config = EngineConfig::parse(&text, &path.display().to_string())?;
        if let Some(dir) = path.parent() {
            config.rebase(dir);
        }
        Ok(config)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let Some(p) = self.memory.as_mut() {
            fix(p);
        }
        if let ScorerConfig::Linear { params: Some(p) } = &mut self.scorer {
            fix(p);
        }
        if let Some(LmConfig::Toy { spec }) = &mut self.lm {
            fix(spec);
        }
    }

    /// Built-in defaults, then `file`, then `flags`.
    pub fn resolve(file: Option<EngineConfig>, flags: &Overrides) -> Result<Self> {
        let mut c = file.unwrap_or_default();
        if let Some(p) = &flags.memory {
            c.memory = Some(p.clone());
        }
        if let Some(p) = &flags.toy_spec {
            c.lm = Some(LmConfig::Toy { spec: p.clone() });
        }
        if let Some(p) = &flags.scorer_params {
            c.scorer = ScorerConfig::Linear {
                params: Some(p.clone()),
            };
        }
        if let Some(a) = flags.alpha {
            c.decode.alpha = a;
        }
        if let Some(m) = flags.mode {
            c.decode.mode = m;
        }
        if let Some(k) = flags.top_k {
            c.top_k = k;
        }
        if let Some(t) = flags.threshold {
            c.threshold = t;
        }
        if let Some(w) = flags.workers {
            c.workers = w;
        }
        if let Some(m) = flags.max_answer_tokens {
            c.decode.max_answer_tokens = m;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.decode.validate()?;
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}
