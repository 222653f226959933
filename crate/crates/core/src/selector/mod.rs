//! Edit-aware relevance selection.
//!
//! Each retrieved fact is scored against the query with a relevance
//! probability `p = sigmoid(w . phi + b)`; facts with `p` strictly above the
//! threshold form the selected set. An empty selection routes the query to
//! the unedited model.

mod features;
#[cfg(feature = "remote")]
mod remote;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::EditFact;
use crate::retrieval::ScoredCandidate;

pub use features::{extract_features, PairFeatures, FEATURE_LEN, FEATURE_NAMES, FEATURE_VERSION};
#[cfg(feature = "remote")]
pub use remote::{RemoteScorer, RemoteScorerConfig};
pub use train::{
    accuracy, bce_gradient, bce_loss, build_training_pairs, split_cases, train, train_on_features, TrainOptions,
    TrainOutcome, TrainingPair,
};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Logistic scorer weights `w` and bias `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    pub feature_version: String,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ScorerParams {
    /// All-zero parameters: every pair scores exactly 0.5.
    pub fn zeros() -> Self {
        ScorerParams {
            feature_version: FEATURE_VERSION.to_string(),
            weights: vec![0.0; FEATURE_LEN],
            bias: 0.0,
        }
    }

    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let params = ScorerParams {
            feature_version: FEATURE_VERSION.to_string(),
            weights,
            bias,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_version != FEATURE_VERSION {
            return Err(Error::Config(format!(
                "scorer params were trained for features {:?}, extractor is {FEATURE_VERSION:?}",
                self.feature_version
            )));
        }
        if self.weights.len() != FEATURE_LEN {
            return Err(Error::Config(format!(
                "scorer has {} weights, extractor produces {FEATURE_LEN} features",
                self.weights.len()
            )));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("scorer params must be finite".into()));
        }
        Ok(())
    }

    /// `w . phi + b`.
    pub fn logit(&self, features: &PairFeatures) -> Result<f64> {
        if features.values.len() != self.weights.len() {
            return Err(Error::Config(format!(
                "feature length {} does not match {} weights",
                features.values.len(),
                self.weights.len()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(&features.values)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.bias)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let params: ScorerParams = serde_json::from_str(&text).map_err(|e| Error::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })?;
        params.validate()?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("params serialize");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// Keeps probabilities strictly inside (0, 1) even for saturated logits.
fn open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Relevance probability of `fact` for `query` under `params`.
pub fn score(params: &ScorerParams, query: &str, fact: &EditFact) -> Result<f64> {
    let features = extract_features(query, fact)?;
    Ok(open_unit(sigmoid(params.logit(&features)?)))
}

/// Anything that turns `(query, facts)` into relevance probabilities.
pub trait RelevanceScorer: Send + Sync {
    fn probabilities(&self, query: &str, facts: &[&EditFact]) -> Result<Vec<f64>>;
}

/// The built-in feature + logistic-regression scorer.
#[derive(Debug, Clone)]
pub struct LinearScorer {
    params: ScorerParams,
}

impl LinearScorer {
    pub fn new(params: ScorerParams) -> Result<Self> {
        params.validate()?;
        Ok(LinearScorer { params })
    }

    pub fn params(&self) -> &ScorerParams {
        &self.params
    }
}

impl RelevanceScorer for LinearScorer {
    fn probabilities(&self, query: &str, facts: &[&EditFact]) -> Result<Vec<f64>> {
        facts.iter().map(|f| score(&self.params, query, f)).collect()
    }
}

/// One selector verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub fact: EditFact,
    pub probability: f64,
    pub selected: bool,
}

/// Threshold precomputed probabilities. `p == threshold` is not selected.
pub fn decide(candidates: &[ScoredCandidate], probabilities: &[f64], threshold: f64) -> Result<Vec<SelectionDecision>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    if candidates.len() != probabilities.len() {
        return Err(Error::Capability(format!(
            "scorer returned {} probabilities for {} candidates",
            probabilities.len(),
            candidates.len()
        )));
    }
    candidates
        .iter()
        .zip(probabilities)
        .map(|(c, &p)| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Capability(format!("probability {p} outside [0, 1]")));
            }
            Ok(SelectionDecision {
                fact: c.fact.clone(),
                probability: p,
                selected: p > threshold,
            })
        })
        .collect()
}

/// Score every candidate and threshold, keeping retrieval order.
pub fn select(
    scorer: &dyn RelevanceScorer,
    query: &str,
    candidates: &[ScoredCandidate],
    threshold: f64,
) -> Result<Vec<SelectionDecision>> {
    if candidates.is_empty() {
        return decide(candidates, &[], threshold);
    }
    let facts: Vec<&EditFact> = candidates.iter().map(|c| &c.fact).collect();
    let probabilities = scorer.probabilities(query, &facts)?;
    decide(candidates, &probabilities, threshold)
}

/// The facts that passed selection, in retrieval order.
pub fn selected_facts(decisions: &[SelectionDecision]) -> Vec<EditFact> {
    decisions
        .iter()
        .filter(|d| d.selected)
        .map(|d| d.fact.clone())
        .collect()
}
