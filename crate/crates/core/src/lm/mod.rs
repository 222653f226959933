//! Language-model backends.
//!
//! The decoder only needs three things from a model: a next-token
//! log-probability distribution, the first token of an answer string, and a
//! greedy continuation after a forced first token.

#[cfg(feature = "remote")]
mod remote;
mod toy;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(feature = "remote")]
pub use remote::{RemoteLm, RemoteLmConfig};
pub use toy::{ToyLm, ToyLmSpec, ToyRule, DEFAULT_FAITHFULNESS};

/// Next-token log-probabilities (natural log).
///
/// `complete` distributions cover every token with non-zero probability;
/// incomplete ones are a top-N slice from a remote endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    pub entries: BTreeMap<String, f64>,
    pub complete: bool,
}

impl TokenDistribution {
    pub fn logprob(&self, token: &str) -> Option<f64> {
        self.entries.get(token).copied()
    }

    /// Log-probability of `token`, or `floor` when it is absent.
    pub fn logprob_or(&self, token: &str, floor: f64) -> f64 {
        self.logprob(token).unwrap_or(floor)
    }

    /// Most likely token; ties go to the lexicographically smallest.
    pub fn argmax(&self) -> Option<(&str, f64)> {
        let mut best: Option<(&str, f64)> = None;
        for (token, &lp) in &self.entries {
            if best.is_none_or(|(_, b)| lp > b) {
                best = Some((token, lp));
            }
        }
        best
    }

    /// Entries sorted by descending probability, then token.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.entries.iter().map(|(t, lp)| (t.as_str(), *lp)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    /// Sum of probabilities, `exp`-ed from the stored log values.
    pub fn mass(&self) -> f64 {
        self.entries.values().map(|lp| lp.exp()).sum()
    }
}

pub trait LanguageModel: Send + Sync {
    /// Distribution over the token following `prompt`.
    fn next_token_distribution(&self, prompt: &str) -> Result<TokenDistribution>;

    /// The token an answer starts with, in this model's vocabulary.
    fn first_token_of(&self, answer: &str) -> Result<String>;

    /// Greedy decoding after `forced_first_token`, at most `max_tokens`
    /// tokens in total including the forced one.
    fn greedy_continue(&self, prompt: &str, forced_first_token: &str, max_tokens: usize) -> Result<String>;

    /// How [`first_token_of`](Self::first_token_of) tokenizes, recorded in
    /// decode traces.
    fn token_convention(&self) -> &'static str;
}

/// The unedited model's answer: argmax first token, then greedy.
pub fn greedy_answer(lm: &dyn LanguageModel, prompt: &str, max_tokens: usize) -> Result<String> {
    let dist = lm.next_token_distribution(prompt)?;
    let (first, _) = dist
        .argmax()
        .ok_or_else(|| Error::Decode("model returned an empty distribution".into()))?;
    lm.greedy_continue(prompt, first, max_tokens)
}
