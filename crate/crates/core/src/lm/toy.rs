//! Deterministic table-driven language model.
//!
//! Prior knowledge is a list of rules: when the last line of the prompt ends
//! with one of a rule's patterns, the next token follows the rule's answer
//! distribution. If an earlier prompt line mentions the rule's subject next
//! to a vocabulary token `a`, a share `beta` of the mass moves to `a`:
//!
//! ```text
//! p(t | context) = (1 - beta) * p(t | prior) + beta * [t == a]
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{collapse_ws, find_word_bounded};

use super::{LanguageModel, TokenDistribution};

pub const DEFAULT_FAITHFULNESS: f64 = 0.6;

const SUM_TOLERANCE: f64 = 1e-9;

/// One piece of prior knowledge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRule {
    pub subject: String,
    /// Prompt tails that trigger the rule, e.g. `"The nationality of X is"`.
    pub patterns: Vec<String>,
    /// Named answer tokens and their probabilities. Any mass left over is
    /// spread uniformly across the remaining vocabulary.
    pub answers: BTreeMap<String, f64>,
    /// Overrides the model-wide context faithfulness for this rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faithfulness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyLmSpec {
    /// Share of probability mass moved to an answer stated in context.
    #[serde(default = "default_faithfulness")]
    pub faithfulness: f64,
    pub vocabulary: BTreeSet<String>,
    pub rules: Vec<ToyRule>,
    /// First token -> remaining tokens of a multi-token answer.
    #[serde(default)]
    pub continuations: BTreeMap<String, Vec<String>>,
}

fn default_faithfulness() -> f64 {
    DEFAULT_FAITHFULNESS
}

impl ToyLmSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("toy spec serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
struct CompiledRule {
    subject: String,
    faithfulness: f64,
    /// Full prior distribution over the vocabulary, zero entries dropped.
    probs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct ToyLm {
    spec: ToyLmSpec,
    rules: Vec<CompiledRule>,
    patterns: HashMap<String, usize>,
}

fn check_unit(value: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Config(format!("{what} {value} outside [0, 1]")));
    }
    Ok(())
}

fn trim_word(word: &str) -> &str {
    word.trim_matches(|c: char| !c.is_alphanumeric())
}

impl ToyLm {
    pub fn new(spec: ToyLmSpec) -> Result<Self> {
        check_unit(spec.faithfulness, "faithfulness")?;
        if spec.vocabulary.is_empty() {
            return Err(Error::Config("toy vocabulary is empty".into()));
        }
        let mut rules = Vec::with_capacity(spec.rules.len());
        let mut patterns = HashMap::new();
        for (i, rule) in spec.rules.iter().enumerate() {
            let faithfulness = rule.faithfulness.unwrap_or(spec.faithfulness);
            check_unit(faithfulness, &format!("rule {i} faithfulness"))?;
            let mut named = 0.0;
            for (token, p) in &rule.answers {
                if !spec.vocabulary.contains(token) {
                    return Err(Error::Config(format!("rule {i}: answer {token:?} not in vocabulary")));
                }
                check_unit(*p, &format!("rule {i} probability of {token:?}"))?;
                named += p;
            }
            if named > 1.0 + SUM_TOLERANCE {
                return Err(Error::Config(format!("rule {i}: answers sum to {named}")));
            }
            let unnamed: Vec<&String> = spec
                .vocabulary
                .iter()
                .filter(|t| !rule.answers.contains_key(*t))
                .collect();
            let residual = (1.0 - named).max(0.0);
            if residual > SUM_TOLERANCE && unnamed.is_empty() {
                return Err(Error::Config(format!(
                    "rule {i}: answers sum to {named} and no vocabulary is left for the residual"
                )));
            }
            let mut probs: BTreeMap<String, f64> = rule
                .answers
                .iter()
                .filter(|(_, p)| **p > 0.0)
                .map(|(t, p)| (t.clone(), *p))
                .collect();
            if residual > SUM_TOLERANCE {
                let share = residual / unnamed.len() as f64;
                probs.extend(unnamed.into_iter().map(|t| (t.clone(), share)));
            }
            for pattern in &rule.patterns {
                let key = collapse_ws(pattern);
                if key.is_empty() {
                    return Err(Error::Config(format!("rule {i}: empty pattern")));
                }
                // First rule wins for duplicated patterns.
                patterns.entry(key).or_insert(i);
            }
            rules.push(CompiledRule {
                subject: collapse_ws(&rule.subject),
                faithfulness,
                probs,
            });
        }
        Ok(ToyLm { spec, rules, patterns })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ToyLm::new(ToyLmSpec::load(path)?)
    }

    pub fn spec(&self) -> &ToyLmSpec {
        &self.spec
    }

    /// Index of the rule whose pattern is the longest word-aligned suffix of
    /// `line`.
    fn match_rule(&self, line: &str) -> Option<usize> {
        let line = collapse_ws(line);
        let mut starts = vec![0];
        starts.extend(line.match_indices(' ').map(|(i, _)| i + 1));
        starts.into_iter().find_map(|s| self.patterns.get(&line[s..]).copied())
    }

    /// The answer a context line asserts for `rule`, if any: the first
    /// vocabulary word after the subject mention, else anywhere on the line.
    fn asserted_answer<'a>(&'a self, rule: &CompiledRule, lines: &[&'a str]) -> Option<&'a str> {
        if rule.subject.is_empty() {
            return None;
        }
        for line in lines {
            let lowered = collapse_ws(line);
            let Some(at) = find_word_bounded(&lowered, &rule.subject) else {
                continue;
            };
            let words: Vec<&str> = line.split_whitespace().collect();
            // Word index just past the subject mention.
            let skip = lowered[..at + rule.subject.len()].split_whitespace().count();
            let vocab_word = |w: &&str| self.spec.vocabulary.get(trim_word(w)).map(String::as_str);
            let found = words
                .iter()
                .skip(skip)
                .find_map(vocab_word)
                .or_else(|| words.iter().find_map(vocab_word));
            if found.is_some() {
                return found;
            }
        }
        None
    }

    fn uniform(&self) -> TokenDistribution {
        let lp = -(self.spec.vocabulary.len() as f64).ln();
        TokenDistribution {
            entries: self.spec.vocabulary.iter().map(|t| (t.clone(), lp)).collect(),
            complete: true,
        }
    }
}

impl LanguageModel for ToyLm {
    fn next_token_distribution(&self, prompt: &str) -> Result<TokenDistribution> {
        if prompt.trim().is_empty() {
            return Err(Error::validation("prompt must be non-empty"));
        }
        let lines: Vec<&str> = prompt.lines().filter(|l| !l.trim().is_empty()).collect();
        let (tail, context) = lines.split_last().expect("non-empty prompt has a line");
        let Some(idx) = self.match_rule(tail) else {
            return Ok(self.uniform());
        };
        let rule = &self.rules[idx];
        let asserted = self.asserted_answer(rule, context);
        let beta = rule.faithfulness;

        let mut probs = rule.probs.clone();
        if let Some(answer) = asserted {
            for p in probs.values_mut() {
                *p *= 1.0 - beta;
            }
            *probs.entry(answer.to_string()).or_insert(0.0) += beta;
        }
        Ok(TokenDistribution {
            entries: probs
                .into_iter()
                .filter(|(_, p)| *p > 0.0)
                .map(|(t, p)| (t, p.ln()))
                .collect(),
            complete: true,
        })
    }

    fn first_token_of(&self, answer: &str) -> Result<String> {
        answer
            .split_whitespace()
            .next()
            .map(str::to_string)
            .ok_or_else(|| Error::validation("answer has no tokens"))
    }

    fn greedy_continue(&self, _prompt: &str, forced_first_token: &str, max_tokens: usize) -> Result<String> {
        if max_tokens == 0 {
            return Err(Error::validation("max_tokens must be at least 1"));
        }
        let mut out = vec![forced_first_token];
        if let Some(rest) = self.spec.continuations.get(forced_first_token) {
            out.extend(rest.iter().take(max_tokens - 1).map(String::as_str));
        }
        Ok(out.join(" "))
    }

    fn token_convention(&self) -> &'static str {
        "whitespace"
    }
}
