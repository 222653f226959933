//! Synthetic editing suites over a generated toy language model.
//!
//! Every case edits a fresh made-up subject under one of a few relation
//! templates. Three kinds of case are produced:
//!
//! * `normal`: the prior favours the old object with probability 0.9 and the
//!   context moves the default share of mass to the new one.
//! * `hard`: the rule follows context weakly and barely knows the new
//!   object, so plain context conditioning still answers the old object.
//! * `distractor`: the paraphrase rule gives some mass to a token the
//!   relation prompt never produces; strong prior suppression promotes it.
//!
//! Each case has one reliability, one generality and one locality query.
//! Locality queries ask about subjects that are never edited.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalCase, QueryItem};
use crate::lm::{ToyLm, ToyLmSpec, ToyRule, DEFAULT_FAITHFULNESS};
use crate::memory::{render_prompt, NewFact};

/// `(relation, paraphrase)` prompt templates.
const TEMPLATES: [(&str, &str); 8] = [
    ("The nationality of {s} is", "{s} is a citizen of"),
    ("The mother tongue of {s} is", "{s} grew up speaking"),
    ("{s} works in the city of", "The workplace of {s} is located in"),
    ("The capital of {s} is", "The seat of government of {s} is in"),
    ("{s} was educated at", "The alma mater of {s} is"),
    ("{s} plays the position of", "On the field {s} plays as"),
    ("The religion of {s} is", "{s} is a follower of"),
    ("{s} is a member of the", "{s} belongs to the"),
];

/// Template whose answers span several tokens.
const MULTI_TOKEN_TEMPLATE: usize = 4;
const MULTI_TOKEN_TAILS: [&[&str]; 3] = [
    &["University"],
    &["State", "University"],
    &["Institute", "of", "Technology"],
];

const POOL_SIZE: usize = 25;
const ANSWER_SYLLABLES: [&str; 15] = [
    "ka", "lo", "ve", "ri", "mo", "sa", "tu", "ne", "di", "po", "ga", "le", "bi", "ru", "fa",
];
const SUBJECT_SYLLABLES: [&str; 20] = [
    "zor", "bel", "quin", "dra", "fex", "hul", "gim", "wyn", "tha", "pra", "mek", "sul", "vox", "jen", "kru", "plo",
    "stam", "nix", "osk", "yth",
];

const P_OLD: f64 = 0.9;
const P_NEW: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    Normal,
    Hard,
    Distractor,
}

impl CaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseKind::Normal => "normal",
            CaseKind::Hard => "hard",
            CaseKind::Distractor => "distractor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub cases: usize,
    pub hard_fraction: f64,
    pub distractor_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            cases: 200,
            hard_fraction: 0.3,
            distractor_fraction: 0.3,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSuite {
    pub spec: ToyLmSpec,
    pub cases: Vec<EvalCase>,
    pub kinds: Vec<CaseKind>,
}

impl SynthSuite {
    pub fn lm(&self) -> Result<ToyLm> {
        ToyLm::new(self.spec.clone())
    }
}

fn word(rng: &mut ChaCha8Rng, syllables: &[&str], min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    let mut w: String = (0..n).map(|_| *syllables.choose(rng).expect("syllables")).collect();
    w[..1].make_ascii_uppercase();
    w
}

fn unique_words(
    rng: &mut ChaCha8Rng,
    syllables: &[&str],
    min: usize,
    max: usize,
    count: usize,
    taken: &mut HashSet<String>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = word(rng, syllables, min, max);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn rule(subject: &str, patterns: &[&str], answers: &[(&str, f64)], faithfulness: Option<f64>) -> ToyRule {
    ToyRule {
        subject: subject.to_string(),
        patterns: patterns.iter().map(|p| render_prompt(subject, p)).collect(),
        answers: answers.iter().map(|(t, p)| (t.to_string(), *p)).collect(),
        faithfulness,
    }
}

/// Generate a suite. Identical configs give identical suites.
pub fn generate(config: &SynthConfig) -> Result<SynthSuite> {
    let unit = 0.0..=1.0;
    if !unit.contains(&config.hard_fraction)
        || !unit.contains(&config.distractor_fraction)
        || config.hard_fraction + config.distractor_fraction > 1.0
    {
        return Err(Error::Config(
            "case kind fractions must lie in [0, 1] and sum to at most 1".into(),
        ));
    }
    if config.cases == 0 {
        return Err(Error::Config("a suite needs at least one case".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken = HashSet::new();

    let pools: Vec<Vec<String>> = (0..TEMPLATES.len())
        .map(|_| unique_words(&mut rng, &ANSWER_SYLLABLES, 2, 3, POOL_SIZE, &mut taken))
        .collect();
    let mut continuations = BTreeMap::new();
    for token in &pools[MULTI_TOKEN_TEMPLATE] {
        let tail = MULTI_TOKEN_TAILS.choose(&mut rng).expect("tails");
        continuations.insert(token.clone(), tail.iter().map(|t| t.to_string()).collect::<Vec<_>>());
    }
    let full = |token: &str| -> String {
        match continuations.get(token) {
            Some(rest) => std::iter::once(token.to_string())
                .chain(rest.iter().cloned())
                .collect::<Vec<_>>()
                .join(" "),
            None => token.to_string(),
        }
    };

    let n = config.cases;
    let hard = (config.hard_fraction * n as f64).round() as usize;
    let distractor = ((config.distractor_fraction * n as f64).round() as usize).min(n - hard);
    let mut kinds: Vec<CaseKind> = std::iter::repeat_n(CaseKind::Hard, hard)
        .chain(std::iter::repeat_n(CaseKind::Distractor, distractor))
        .chain(std::iter::repeat(CaseKind::Normal))
        .take(n)
        .collect();
    kinds.shuffle(&mut rng);

    let subjects = unique_words(&mut rng, &SUBJECT_SYLLABLES, 2, 3, 2 * n, &mut taken);
    let mut rules = Vec::with_capacity(2 * n);
    let mut cases = Vec::with_capacity(n);
    for (i, &kind) in kinds.iter().enumerate() {
        let subject = &subjects[2 * i];
        let t = rng.gen_range(0..TEMPLATES.len());
        let (rel, gen) = TEMPLATES[t];
        let pick = sample(&mut rng, POOL_SIZE, 5);
        let tok = |k: usize| pools[t][pick.index(k)].as_str();
        let (old, new, o1, o2, d) = (tok(0), tok(1), tok(2), tok(3), tok(4));
        let rest = (1.0 - P_OLD - P_NEW) / 2.0;
        match kind {
            CaseKind::Normal => {
                rules.push(rule(
                    subject,
                    &[rel, gen],
                    &[(old, P_OLD), (new, P_NEW), (o1, rest), (o2, rest)],
                    None,
                ));
            }
            CaseKind::Hard => {
                let p_new = rng.gen_range(1e-4..5e-3);
                let beta = rng.gen_range(0.25..0.4);
                let rest = (1.0 - P_OLD - p_new) / 2.0;
                rules.push(rule(
                    subject,
                    &[rel, gen],
                    &[(old, P_OLD), (new, p_new), (o1, rest), (o2, rest)],
                    Some(beta),
                ));
            }
            CaseKind::Distractor => {
                let q = rng.gen_range(0.06..0.15);
                rules.push(rule(
                    subject,
                    &[rel],
                    &[(old, P_OLD), (new, P_NEW), (o1, rest), (o2, rest)],
                    None,
                ));
                rules.push(rule(
                    subject,
                    &[gen],
                    &[(old, P_OLD - q), (d, q), (new, P_NEW), (o1, rest), (o2, rest)],
                    None,
                ));
            }
        }

        let other = &subjects[2 * i + 1];
        let lt = rng.gen_range(0..TEMPLATES.len());
        let pick = sample(&mut rng, POOL_SIZE, 3);
        let ltok = |k: usize| pools[lt][pick.index(k)].as_str();
        rules.push(rule(
            other,
            &[TEMPLATES[lt].0],
            &[(ltok(0), 0.7), (ltok(1), 0.2), (ltok(2), 0.1)],
            None,
        ));

        let new_answer = full(new);
        cases.push(EvalCase {
            case_id: Some(format!("{}-{i:04}", kind.as_str())),
            edit: NewFact::new(subject, rel, Some(&full(old)), &new_answer),
            rel_queries: vec![QueryItem::new(&render_prompt(subject, rel), &new_answer)],
            gen_queries: vec![QueryItem::new(&render_prompt(subject, gen), &new_answer)],
            loc_queries: vec![QueryItem::new(&render_prompt(other, TEMPLATES[lt].0), &full(ltok(0)))],
        });
    }

    let vocabulary: BTreeSet<String> = pools.into_iter().flatten().collect();
    Ok(SynthSuite {
        spec: ToyLmSpec {
            faithfulness: DEFAULT_FAITHFULNESS,
            vocabulary,
            rules,
            continuations,
        },
        cases,
        kinds,
    })
}
