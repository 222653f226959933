//! Browser demo: a small toy model you can edit and query, a single-case
//! conflict explorer, and an alpha sweep over a synthetic suite.
//!
//! Everything here is plain Rust returning serializable views; `web` wraps
//! it for JavaScript.

mod web;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use factsteer::decoding::{adjusted_first_token, CandidateScore, DecodeMode, DecodePlan, Pipeline};
use factsteer::eval::{record_baselines, Harness, HarnessSettings, SweepParameter, SweepRow};
use factsteer::lm::{greedy_answer, ToyLm, ToyLmSpec, ToyRule};
use factsteer::memory::{materialize, render_prompt, EditFact, MemoryStore, NewFact};
use factsteer::retrieval::{HashedEmbedder, VectorIndex};
use factsteer::selector::{build_training_pairs, train, LinearScorer, ScorerParams, TrainOptions, FEATURE_NAMES};
use factsteer::synth::{generate, SynthConfig};
use factsteer::{Error, Result};
use serde::Serialize;

pub use web::*;

const MAX_TOKENS: usize = 8;

struct Relation {
    name: &'static str,
    template: &'static str,
    paraphrase: &'static str,
    objects: &'static [&'static str],
}

const RELATIONS: [Relation; 3] = [
    Relation {
        name: "nationality",
        template: "The nationality of {s} is",
        paraphrase: "{s} is a citizen of",
        objects: &["French", "German", "Dutch", "Italian", "Spanish", "Polish", "Swedish"],
    },
    Relation {
        name: "city",
        template: "{s} lives in the city of",
        paraphrase: "The home town of {s} is",
        objects: &["Berlin", "Vienna", "Paris", "Rome", "Madrid", "Oslo", "Lisbon"],
    },
    Relation {
        name: "instrument",
        template: "{s} plays the",
        paraphrase: "{s} is known for playing the",
        objects: &["piano", "violin", "cello", "flute", "guitar"],
    },
];

const SUBJECTS: [&str; 5] = ["Marta Quell", "Ivo Brandt", "Lena Sorel", "Tomas Wirth", "Nadia Kovac"];

/// Unrelated prompts whose answers should never move.
const BACKGROUND: [(&str, &str); 3] = [
    ("The capital of Norway is", "Oslo"),
    ("The capital of Italy is", "Rome"),
    ("The capital of Spain is", "Madrid"),
];

fn vocabulary() -> BTreeSet<String> {
    RELATIONS
        .iter()
        .flat_map(|r| r.objects.iter().map(|o| o.to_string()))
        .collect()
}

/// Every subject has a belief for every relation: one object at 0.85, the
/// next two at 0.05 each, the rest spread over the vocabulary.
fn demo_spec() -> ToyLmSpec {
    let mut rules = Vec::new();
    for (si, subject) in SUBJECTS.iter().enumerate() {
        for (ri, relation) in RELATIONS.iter().enumerate() {
            let n = relation.objects.len();
            let pick = |k: usize| relation.objects[(si * 2 + ri + k) % n].to_string();
            rules.push(ToyRule {
                subject: subject.to_string(),
                patterns: vec![
                    render_prompt(subject, relation.template),
                    render_prompt(subject, relation.paraphrase),
                ],
                answers: [(pick(0), 0.85), (pick(1), 0.05), (pick(2), 0.05)]
                    .into_iter()
                    .collect(),
                faithfulness: None,
            });
        }
    }
    for (prompt, answer) in BACKGROUND {
        let subject = prompt.trim_start_matches("The capital of ").trim_end_matches(" is");
        rules.push(ToyRule {
            subject: subject.to_string(),
            patterns: vec![prompt.to_string()],
            answers: [(answer.to_string(), 0.9)].into_iter().collect(),
            faithfulness: None,
        });
    }
    ToyLmSpec {
        faithfulness: 0.6,
        vocabulary: vocabulary(),
        rules,
        continuations: BTreeMap::new(),
    }
}

/// Selector weights learned once from a synthetic suite.
pub fn selector_params() -> &'static ScorerParams {
    static PARAMS: OnceLock<ScorerParams> = OnceLock::new();
    PARAMS.get_or_init(|| {
        let cases = generate(&SynthConfig {
            cases: 250,
            seed: 42,
            hard_fraction: 0.0,
            distractor_fraction: 0.0,
        })
        .expect("fixed synthetic config is valid")
        .cases;
        let pairs = build_training_pairs(&cases, 1, 42).expect("suite has distinct cases");
        train(&pairs, &TrainOptions::default())
            .expect("suite has both labels")
            .params
    })
}

fn scorer() -> LinearScorer {
    LinearScorer::new(selector_params().clone()).expect("trained params are valid")
}

#[derive(Debug, Clone, Serialize)]
pub struct RelationView {
    pub name: String,
    pub template: String,
    pub objects: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Catalog {
    pub subjects: Vec<String>,
    pub relations: Vec<RelationView>,
    pub example_queries: Vec<String>,
    pub selector_weights: Vec<(String, f64)>,
    pub selector_bias: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrievedView {
    pub fact_id: String,
    pub text: String,
    pub score: f64,
    pub probability: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AskView {
    pub query: String,
    pub answer: String,
    pub unedited: String,
    pub fallback_used: bool,
    pub retrieved: Vec<RetrievedView>,
    pub context: Option<String>,
    pub candidates: Vec<CandidateScore>,
}

/// Editable memory over the demo model.
pub struct Session {
    lm: ToyLm,
    scorer: LinearScorer,
    store: MemoryStore,
    index: VectorIndex,
}

impl Default for Session {
    fn default() -> Self {
        Session::new()
    }
}

impl Session {
    pub fn new() -> Self {
        Session {
            lm: ToyLm::new(demo_spec()).expect("demo spec is valid"),
            scorer: scorer(),
            store: MemoryStore::in_memory(),
            index: VectorIndex::new(Arc::new(HashedEmbedder::default())),
        }
    }

    pub fn catalog(&self) -> Catalog {
        let params = self.scorer.params();
        Catalog {
            subjects: SUBJECTS.iter().map(|s| s.to_string()).collect(),
            relations: RELATIONS
                .iter()
                .map(|r| RelationView {
                    name: r.name.to_string(),
                    template: r.template.to_string(),
                    objects: r.objects.iter().map(|o| o.to_string()).collect(),
                })
                .collect(),
            example_queries: RELATIONS
                .iter()
                .flat_map(|r| {
                    [
                        render_prompt(SUBJECTS[0], r.template),
                        render_prompt(SUBJECTS[0], r.paraphrase),
                    ]
                })
                .chain(BACKGROUND.iter().map(|(p, _)| p.to_string()))
                .collect(),
            selector_weights: FEATURE_NAMES
                .iter()
                .map(|n| n.to_string())
                .zip(params.weights.iter().copied())
                .collect(),
            selector_bias: params.bias,
        }
    }

    pub fn facts(&self) -> Vec<EditFact> {
        self.store.snapshot().facts().to_vec()
    }

    /// Store `subject`'s `relation` (by name) as `new_object`.
    pub fn edit(&mut self, subject: &str, relation: &str, new_object: &str) -> Result<EditFact> {
        let rel = RELATIONS
            .iter()
            .find(|r| r.name == relation)
            .ok_or_else(|| Error::Validation(format!("unknown relation {relation:?}")))?;
        if !rel.objects.contains(&new_object) {
            return Err(Error::Validation(format!(
                "{new_object:?} is not a {} the model knows",
                rel.name
            )));
        }
        let prompt = render_prompt(subject.trim(), rel.template);
        let old = greedy_answer(&self.lm, &prompt, MAX_TOKENS).ok();
        let fact = self
            .store
            .append(NewFact::new(subject, rel.template, old.as_deref(), new_object))?;
        self.index.add(fact.clone())?;
        Ok(fact)
    }

    pub fn reset(&mut self) {
        self.store = MemoryStore::in_memory();
        self.index = VectorIndex::new(Arc::new(HashedEmbedder::default()));
    }

    pub fn ask(&self, query: &str, alpha: f64, top_k: usize) -> Result<AskView> {
        let plan = DecodePlan {
            max_answer_tokens: MAX_TOKENS,
            ..DecodePlan::with_alpha(alpha)
        };
        let pipeline = Pipeline {
            lm: &self.lm,
            scorer: &self.scorer,
            plan: &plan,
            top_k,
            threshold: 0.5,
        };
        let (answer, trace) = pipeline.answer(&self.index, query)?;
        let facts = self.facts();
        let text_of = |id: &str| {
            facts
                .iter()
                .find(|f| f.fact_id == id)
                .map(|f| f.surface_text.clone())
                .unwrap_or_default()
        };
        let mut candidates = trace.candidates;
        candidates.sort_by(|a, b| b.adjusted.total_cmp(&a.adjusted).then(a.token.cmp(&b.token)));
        Ok(AskView {
            query: query.to_string(),
            answer,
            unedited: greedy_answer(&self.lm, query, MAX_TOKENS)?,
            fallback_used: trace.fallback_used,
            retrieved: trace
                .retrieved
                .into_iter()
                .map(|r| RetrievedView {
                    text: text_of(&r.fact_id),
                    fact_id: r.fact_id,
                    score: r.score,
                    probability: r.probability,
                    selected: r.selected,
                })
                .collect(),
            context: trace.context,
            candidates,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConflictView {
    pub prompt: String,
    pub fact: String,
    pub unedited: String,
    pub chosen: String,
    pub chosen_without_contrast: String,
    pub candidates: Vec<CandidateScore>,
}

/// One edit against one belief: the model gives the old object `p_old`
/// and the new object `p_new`, and moves `faithfulness` of its mass to
/// whatever the context asserts.
pub fn explore_conflict(
    p_old: f64,
    p_new: f64,
    faithfulness: f64,
    alpha: f64,
    mode: DecodeMode,
) -> Result<ConflictView> {
    if p_old + p_new > 1.0 + 1e-9 {
        return Err(Error::Validation("old and new probabilities sum past 1".into()));
    }
    let subject = SUBJECTS[0];
    let relation = &RELATIONS[0];
    let spec = ToyLmSpec {
        faithfulness,
        vocabulary: relation.objects.iter().map(|o| o.to_string()).collect(),
        rules: vec![ToyRule {
            subject: subject.to_string(),
            patterns: vec![render_prompt(subject, relation.template)],
            answers: [("French".to_string(), p_old), ("German".to_string(), p_new)]
                .into_iter()
                .collect(),
            faithfulness: None,
        }],
        continuations: BTreeMap::new(),
    };
    let lm = ToyLm::new(spec)?;
    let fact = materialize(&NewFact::new(subject, relation.template, Some("French"), "German"), 0)?;
    let prompt = fact.prior_prompt();
    let plan = DecodePlan {
        alpha,
        mode,
        ..DecodePlan::default()
    };
    let (chosen, trace) = adjusted_first_token(&lm, std::slice::from_ref(&fact), &prompt, &plan)?;
    let (plain, _) = adjusted_first_token(&lm, std::slice::from_ref(&fact), &prompt, &DecodePlan::with_alpha(0.0))?;
    let mut candidates = trace.candidates;
    candidates.sort_by(|a, b| b.adjusted.total_cmp(&a.adjusted).then(a.token.cmp(&b.token)));
    Ok(ConflictView {
        unedited: greedy_answer(&lm, &prompt, 1)?,
        prompt,
        fact: fact.surface_text,
        chosen,
        chosen_without_contrast: plain,
        candidates,
    })
}

pub const SWEEP_ALPHAS: [f64; 6] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];

/// Alpha sweep over a synthetic suite of `cases` edits.
pub fn sweep_alpha(cases: usize, seed: u64) -> Result<Vec<SweepRow>> {
    if !(1..=400).contains(&cases) {
        return Err(Error::Validation("suite size must be between 1 and 400".into()));
    }
    let suite = generate(&SynthConfig {
        cases,
        seed,
        ..SynthConfig::default()
    })?;
    let lm = suite.lm()?;
    let scorer = scorer();
    let harness = Harness {
        lm: &lm,
        embedder: Arc::new(HashedEmbedder::default()),
        scorer: &scorer,
        settings: HarnessSettings::default(),
    };
    let baselines = record_baselines(&lm, &suite.cases, HarnessSettings::default().plan.max_answer_tokens)?;
    harness.sweep(SweepParameter::Alpha, &SWEEP_ALPHAS, &suite.cases, &baselines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unedited_session_answers_from_the_model() {
        let s = Session::new();
        let v = s.ask("The nationality of Marta Quell is", 0.2, 5).unwrap();
        assert!(v.fallback_used);
        assert_eq!(v.answer, v.unedited);
        assert_eq!(v.answer, "French");
    }

    #[test]
    fn edit_changes_the_answer_and_its_paraphrase_only() {
        let mut s = Session::new();
        let fact = s.edit("Marta Quell", "nationality", "Swedish").unwrap();
        assert_eq!(fact.old_object.as_deref(), Some("French"));
        for q in ["The nationality of Marta Quell is", "Marta Quell is a citizen of"] {
            let v = s.ask(q, 0.2, 5).unwrap();
            assert_eq!(v.answer, "Swedish", "{q}");
            assert!(v.retrieved.iter().any(|r| r.selected && r.text.contains("Swedish")));
        }
        let other = s.ask("The nationality of Ivo Brandt is", 0.2, 5).unwrap();
        assert_eq!(other.answer, other.unedited);
        let capital = s.ask("The capital of Norway is", 0.2, 5).unwrap();
        assert_eq!(capital.answer, "Oslo");
        s.reset();
        assert!(s.facts().is_empty());
    }

    #[test]
    fn edit_rejects_unknown_relation_or_object() {
        let mut s = Session::new();
        assert!(s.edit("Marta Quell", "employer", "Acme").is_err());
        assert!(s.edit("Marta Quell", "city", "French").is_err());
    }

    #[test]
    fn catalog_lists_every_relation() {
        let c = Session::new().catalog();
        assert_eq!(c.relations.len(), 3);
        assert_eq!(c.selector_weights.len(), FEATURE_NAMES.len());
    }

    #[test]
    fn weak_context_needs_contrast() {
        let v = explore_conflict(0.9, 0.002, 0.3, 0.0, DecodeMode::ContrastFull).unwrap();
        assert_eq!(v.chosen, "French");
        let v = explore_conflict(0.9, 0.002, 0.3, 0.3, DecodeMode::ContrastFull).unwrap();
        assert_eq!(v.chosen, "German");
        assert_eq!(v.chosen_without_contrast, "French");
        assert_eq!(v.unedited, "French");
        assert_eq!(v.candidates[0].token, "German");
    }

    #[test]
    fn conflict_rejects_overfull_belief() {
        assert!(explore_conflict(0.9, 0.2, 0.5, 0.2, DecodeMode::ContrastFull).is_err());
    }

    #[test]
    fn sweep_has_one_row_per_alpha() {
        let rows = sweep_alpha(40, 3).unwrap();
        assert_eq!(rows.len(), SWEEP_ALPHAS.len());
        assert!(rows.iter().all(|r| r.error.is_none()));
        assert!(sweep_alpha(0, 3).is_err());
    }
}
