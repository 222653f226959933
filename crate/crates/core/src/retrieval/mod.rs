//! Fact embedding and exhaustive top-k retrieval.
//!
//! The index scans every stored fact on each query. Scores are dot products,
//! which equal cosine similarity for the unit-norm output of
//! [`HashedEmbedder`].

mod hashed;
#[cfg(feature = "remote")]
mod remote;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::EditFact;

pub use hashed::{HashedEmbedder, DEFAULT_BUCKETS};
#[cfg(feature = "remote")]
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig};

/// Default number of retrieved candidates.
pub const DEFAULT_TOP_K: usize = 5;

/// Dense embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f32>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Dot product accumulated in `f64`, in index order.
    pub fn dot(&self, other: &Embedding) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum()
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Embedding>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// A fact together with its similarity to the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub fact: EditFact,
    pub score: f64,
}

#[derive(Debug, Clone)]
struct SparseVec {
    indices: Vec<u32>,
    values: Vec<f32>,
}

impl SparseVec {
    fn from_dense(e: &Embedding) -> Self {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (i, v) in e.values.iter().enumerate() {
            if *v != 0.0 {
                indices.push(i as u32);
                values.push(*v);
            }
        }
        SparseVec { indices, values }
    }

    // Skipping zero terms leaves an f64 sum in index order bit-identical to
    // the dense loop.
    fn dot_dense(&self, dense: &[f32]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(i, v)| f64::from(*v) * f64::from(dense[*i as usize]))
            .sum()
    }
}

#[derive(Debug, Clone)]
struct Entry {
    fact: EditFact,
    vector: SparseVec,
}

/// Exhaustive in-memory similarity index keyed by `fact_id`.
#[derive(Clone)]
pub struct VectorIndex {
    embedder: Arc<dyn Embedder>,
    entries: Vec<Entry>,
    by_id: HashMap<String, usize>,
    latest: HashMap<(String, String), u64>,
    dim: Option<usize>,
}

impl std::fmt::Debug for VectorIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorIndex")
            .field("len", &self.entries.len())
            .field("dim", &self.dim)
            .finish()
    }
}

impl VectorIndex {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        VectorIndex {
            embedder,
            entries: Vec::new(),
            by_id: HashMap::new(),
            latest: HashMap::new(),
            dim: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    fn check_dim(&mut self, e: &Embedding) -> Result<()> {
        match self.dim {
            None => self.dim = Some(e.dim()),
            Some(d) if d != e.dim() => {
                return Err(Error::Config(format!(
                    "embedding dimension changed from {d} to {}",
                    e.dim()
                )))
            }
            Some(_) => {}
        }
        Ok(())
    }

    /// Embed and store a fact; re-adding a `fact_id` replaces its entry.
    pub fn add(&mut self, fact: EditFact) -> Result<()> {
        if fact.surface_text.trim().is_empty() {
            return Err(Error::validation("fact surface_text must be non-empty"));
        }
        let embedding = self.embedder.embed(&fact.surface_text)?;
        self.insert(fact, &embedding)
    }

    /// Add many facts with one batched embedder call.
    pub fn extend(&mut self, facts: impl IntoIterator<Item = EditFact>) -> Result<()> {
        let facts: Vec<EditFact> = facts.into_iter().collect();
        if facts.is_empty() {
            return Ok(());
        }
        if let Some(f) = facts.iter().find(|f| f.surface_text.trim().is_empty()) {
            return Err(Error::validation(format!("fact {} has empty surface_text", f.fact_id)));
        }
        let texts: Vec<&str> = facts.iter().map(|f| f.surface_text.as_str()).collect();
        let embeddings = self.embedder.embed_batch(&texts)?;
        if embeddings.len() != facts.len() {
            return Err(Error::Capability(format!(
                "embedder returned {} vectors for {} texts",
                embeddings.len(),
                facts.len()
            )));
        }
        for (fact, embedding) in facts.into_iter().zip(&embeddings) {
            self.insert(fact, embedding)?;
        }
        Ok(())
    }

    fn insert(&mut self, fact: EditFact, embedding: &Embedding) -> Result<()> {
        self.check_dim(embedding)?;
        let key = (fact.subject.clone(), fact.relation.clone());
        let latest = self.latest.entry(key).or_insert(fact.seq);
        *latest = (*latest).max(fact.seq);
        let entry = Entry {
            vector: SparseVec::from_dense(embedding),
            fact,
        };
        match self.by_id.get(&entry.fact.fact_id) {
            Some(&pos) => self.entries[pos] = entry,
            None => {
                self.by_id.insert(entry.fact.fact_id.clone(), self.entries.len());
                self.entries.push(entry);
            }
        }
        Ok(())
    }

    fn is_superseded(&self, fact: &EditFact) -> bool {
        self.latest
            .get(&(fact.subject.clone(), fact.relation.clone()))
            .is_some_and(|&seq| seq > fact.seq)
    }

    /// The `k` most similar live facts, best first.
    ///
    /// Ties go to the newer fact, then to the smaller `fact_id`. Facts
    /// superseded by a newer edit of the same `(subject, relation)` are
    /// skipped, so up to `k` distinct keys come back.
    pub fn top_k(&self, query: &str, k: usize) -> Result<Vec<ScoredCandidate>> {
        if k == 0 {
            return Err(Error::validation("k must be at least 1"));
        }
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        let q = self.embedder.embed(query)?;
        if Some(q.dim()) != self.dim {
            return Err(Error::Config(format!(
                "query embedding has dimension {}, index has {:?}",
                q.dim(),
                self.dim
            )));
        }
        let mut scored: Vec<(f64, &EditFact)> = self
            .entries
            .iter()
            .map(|e| (e.vector.dot_dense(&q.values), &e.fact))
            .collect();
        scored.sort_by(|a, b| rank_order((a.0, a.1), (b.0, b.1)));
        Ok(scored
            .into_iter()
            .filter(|(_, f)| !self.is_superseded(f))
            .take(k)
            .map(|(score, fact)| ScoredCandidate {
                fact: fact.clone(),
                score,
            })
            .collect())
    }
}

/// Ranking comparator: score descending, then seq descending, then fact_id.
pub fn rank_order(a: (f64, &EditFact), b: (f64, &EditFact)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| b.1.seq.cmp(&a.1.seq))
        .then_with(|| a.1.fact_id.cmp(&b.1.fact_id))
}
