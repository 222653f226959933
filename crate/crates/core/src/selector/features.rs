use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{EditFact, SUBJECT_PLACEHOLDER};
use crate::text::{collapse_ws, find_word_bounded, token_trigrams, tokenize};

/// Version tag stored with trained parameters. Bump whenever the feature
/// layout below changes.
pub const FEATURE_VERSION: &str = "pair-features/v1";

/// Number of features produced by [`extract_features`].
pub const FEATURE_LEN: usize = 6;

/// Names of the features, index-aligned with [`PairFeatures::values`].
pub const FEATURE_NAMES: [&str; FEATURE_LEN] = [
    "token_jaccard",
    "subject_in_query",
    "trigram_cosine",
    "length_ratio",
    "relation_jaccard",
    "subject_coverage",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub values: Vec<f64>,
}

fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn trigram_counts(tokens: &[String]) -> HashMap<String, f64> {
    let mut counts = HashMap::new();
    for token in tokens {
        for tri in token_trigrams(token) {
            *counts.entry(tri).or_insert(0.0) += 1.0;
        }
    }
    counts
}

fn cosine(a: &HashMap<String, f64>, b: &HashMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, v)| b.get(k).map(|w| v * w)).sum();
    let na = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Lexical features of a `(query, fact)` pair, all in `[0, 1]`.
pub fn extract_features(query: &str, fact: &EditFact) -> Result<PairFeatures> {
    if query.trim().is_empty() {
        return Err(Error::validation("query must be non-empty"));
    }
    if fact.surface_text.trim().is_empty() {
        return Err(Error::validation("fact surface_text must be non-empty"));
    }
    let q_tokens = tokenize(query);
    let s_tokens = tokenize(&fact.surface_text);
    let q_set: HashSet<String> = q_tokens.iter().cloned().collect();
    let s_set: HashSet<String> = s_tokens.iter().cloned().collect();
    let r_set: HashSet<String> = tokenize(&fact.relation.replace(SUBJECT_PLACEHOLDER, " "))
        .into_iter()
        .collect();
    let subject_tokens = tokenize(&fact.subject);

    let subject = collapse_ws(&fact.subject);
    let subject_in_query = !subject.is_empty() && find_word_bounded(&collapse_ws(query), &subject).is_some();
    let coverage = if subject_tokens.is_empty() {
        0.0
    } else {
        subject_tokens.iter().filter(|t| q_set.contains(*t)).count() as f64 / subject_tokens.len() as f64
    };
    let (ql, sl) = (q_tokens.len() as f64, s_tokens.len() as f64);
    let length_ratio = if ql.max(sl) == 0.0 {
        0.0
    } else {
        ql.min(sl) / ql.max(sl)
    };

    Ok(PairFeatures {
        values: vec![
            jaccard(&q_set, &s_set),
            if subject_in_query { 1.0 } else { 0.0 },
            cosine(&trigram_counts(&q_tokens), &trigram_counts(&s_tokens)),
            length_ratio,
            jaccard(&q_set, &r_set),
            coverage,
        ],
    })
}
