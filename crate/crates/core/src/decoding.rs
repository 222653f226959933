//! In-context decoding with prior suppression.
//!
//! Selected facts are written into a prompt context. The first answer token
//! is chosen by contrasting its context-conditioned log-probability `l_new`
//! with the log-probability `l_prior` the unedited model assigns it given
//! only each fact's `(subject, relation)` prompt:
//!
//! ```text
//! adjusted(t) = l_new(t) - alpha * l_prior(t)
//! l_prior(t)  = mean over selected facts of log p(t | subject, relation)
//! ```
//!
//! Everything after the first token is ordinary greedy decoding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{greedy_answer, LanguageModel, TokenDistribution};
use crate::memory::EditFact;
use crate::retrieval::VectorIndex;
use crate::selector::{select, selected_facts, RelevanceScorer};

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_MAX_ANSWER_TOKENS: usize = 16;
pub const DEFAULT_INSTRUCTION: &str = "Please apply this information to the following sentence instead of the actual facts. You must use this information to answer the following questions with one token.";

/// `ln(1e-6)`, used for tokens a distribution does not cover.
pub fn default_floor_logprob() -> f64 {
    (1e-6f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    /// Every candidate is penalized by its own prior log-probability.
    #[default]
    ContrastFull,
    /// Only the first token of the old object is penalized, by `|l_prior|`.
    TargetSuppress,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contrast-full" => Ok(DecodeMode::ContrastFull),
            "target-suppress" => Ok(DecodeMode::TargetSuppress),
            other => Err(Error::Config(format!("unknown decode mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecodeMode::ContrastFull => "contrast-full",
            DecodeMode::TargetSuppress => "target-suppress",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodePlan {
    pub alpha: f64,
    pub mode: DecodeMode,
    pub max_answer_tokens: usize,
    pub instruction_template: String,
    pub floor_logprob: f64,
}

impl Default for DecodePlan {
    fn default() -> Self {
        DecodePlan {
            alpha: DEFAULT_ALPHA,
            mode: DecodeMode::ContrastFull,
            max_answer_tokens: DEFAULT_MAX_ANSWER_TOKENS,
            instruction_template: DEFAULT_INSTRUCTION.to_string(),
            floor_logprob: default_floor_logprob(),
        }
    }
}

impl DecodePlan {
    pub fn with_alpha(alpha: f64) -> Self {
        DecodePlan {
            alpha,
            ..DecodePlan::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha {} must be finite and >= 0", self.alpha)));
        }
        if self.max_answer_tokens == 0 {
            return Err(Error::Config("max_answer_tokens must be at least 1".into()));
        }
        if !(self.floor_logprob <= 0.0 && self.floor_logprob.is_finite()) {
            return Err(Error::Config("floor_logprob must be finite and <= 0".into()));
        }
        Ok(())
    }
}

/// Scores of one first-token candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub token: String,
    pub l_new: f64,
    /// Absent for tokens target-suppress mode leaves alone.
    pub l_prior: Option<f64>,
    pub adjusted: f64,
}

/// One retrieved fact and what the selector made of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRecord {
    pub fact_id: String,
    pub score: f64,
    pub probability: f64,
    pub selected: bool,
}

/// Everything the decoder looked at for one query.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub query: String,
    pub alpha: f64,
    pub mode: DecodeMode,
    pub token_convention: String,
    pub retrieved: Vec<RetrievedRecord>,
    pub selected_facts: Vec<String>,
    pub context: Option<String>,
    pub candidates: Vec<CandidateScore>,
    pub chosen_first_token: Option<String>,
    pub final_answer: String,
    pub fallback_used: bool,
}

impl DecodeTrace {
    /// Recompute every candidate's adjusted score from the recorded
    /// `l_new` / `l_prior`; returns the largest absolute discrepancy.
    pub fn audit(&self) -> f64 {
        self.candidates
            .iter()
            .map(|c| {
                let expected = match (self.mode, c.l_prior) {
                    (DecodeMode::ContrastFull, Some(p)) => c.l_new - self.alpha * p,
                    (DecodeMode::TargetSuppress, Some(p)) => c.l_new - self.alpha * p.abs(),
                    (_, None) => c.l_new,
                };
                (expected - c.adjusted).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Fact lines, blank line, instruction, blank line, query.
pub fn build_context(selected: &[EditFact], query: &str, instruction: &str) -> Result<String> {
    if selected.is_empty() {
        return Err(Error::Decode("context needs at least one selected fact".into()));
    }
    let mut out = String::new();
    for fact in selected {
        out.push_str(fact.surface_text.trim());
        out.push('\n');
    }
    out.push('\n');
    out.push_str(instruction.trim());
    out.push_str("\n\n");
    out.push_str(query.trim());
    Ok(out)
}

fn prior_distributions(lm: &dyn LanguageModel, facts: &[&EditFact]) -> Result<Vec<TokenDistribution>> {
    facts
        .iter()
        .map(|f| lm.next_token_distribution(&f.prior_prompt()))
        .collect()
}

fn mean_logprob(dists: &[TokenDistribution], token: &str, floor: f64) -> f64 {
    dists
        .iter()
        .map(|d| match d.logprob(token) {
            Some(lp) if lp.is_finite() => lp,
            _ => floor,
        })
        .sum::<f64>()
        / dists.len() as f64
}

/// Mean log-probability of `token` under each selected fact's
/// `(subject, relation)` prompt. Missing tokens count as `floor`.
pub fn prior_logprob(lm: &dyn LanguageModel, token: &str, selected: &[EditFact], floor: f64) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::Decode("prior needs at least one selected fact".into()));
    }
    let facts: Vec<&EditFact> = selected.iter().collect();
    Ok(mean_logprob(&prior_distributions(lm, &facts)?, token, floor))
}

/// Index of the best candidate: highest adjusted score, ties to the
/// lexicographically smallest token.
fn best(candidates: &[CandidateScore]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &candidates[b];
                c.adjusted > cur.adjusted || (c.adjusted == cur.adjusted && c.token < cur.token)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Pick the first answer token given the selected facts.
///
/// The returned trace carries the context, every candidate's scores and
/// the chosen token; `final_answer` is left for the caller.
pub fn adjusted_first_token(
    lm: &dyn LanguageModel,
    selected: &[EditFact],
    query: &str,
    plan: &DecodePlan,
) -> Result<(String, DecodeTrace)> {
    plan.validate()?;
    let context = build_context(selected, query, &plan.instruction_template)?;
    let conditioned = lm.next_token_distribution(&context)?;
    if conditioned.entries.is_empty() {
        return Err(Error::Decode("backend returned no candidate tokens".into()));
    }

    let candidates: Vec<CandidateScore> = match plan.mode {
        DecodeMode::ContrastFull => {
            let facts: Vec<&EditFact> = selected.iter().collect();
            let priors = prior_distributions(lm, &facts)?;
            conditioned
                .entries
                .iter()
                .map(|(token, &l_new)| {
                    let l_prior = mean_logprob(&priors, token, plan.floor_logprob);
                    CandidateScore {
                        token: token.clone(),
                        l_new,
                        l_prior: Some(l_prior),
                        adjusted: l_new - plan.alpha * l_prior,
                    }
                })
                .collect()
        }
        DecodeMode::TargetSuppress => {
            let carriers: Vec<&EditFact> = selected.iter().filter(|f| f.old_object.is_some()).collect();
            let mut penalized: BTreeMap<String, f64> = BTreeMap::new();
            if !carriers.is_empty() {
                let priors = prior_distributions(lm, &carriers)?;
                for fact in &carriers {
                    let old = fact.old_object.as_deref().expect("filtered on old_object");
                    let old_first = lm.first_token_of(old)?;
                    let l_prior = mean_logprob(&priors, &old_first, plan.floor_logprob);
                    penalized.insert(old_first, l_prior);
                }
            }
            conditioned
                .entries
                .iter()
                .map(|(token, &l_new)| match penalized.get(token) {
                    Some(&l_prior) => CandidateScore {
                        token: token.clone(),
                        l_new,
                        l_prior: Some(l_prior),
                        adjusted: l_new - plan.alpha * l_prior.abs(),
                    },
                    None => CandidateScore {
                        token: token.clone(),
                        l_new,
                        l_prior: None,
                        adjusted: l_new,
                    },
                })
                .collect()
        }
    };

    let chosen = candidates[best(&candidates).expect("non-empty candidates")]
        .token
        .clone();
    let trace = DecodeTrace {
        query: query.to_string(),
        alpha: plan.alpha,
        mode: plan.mode,
        token_convention: lm.token_convention().to_string(),
        selected_facts: selected.iter().map(|f| f.fact_id.clone()).collect(),
        context: Some(context),
        candidates,
        chosen_first_token: Some(chosen.clone()),
        ..DecodeTrace::default()
    };
    Ok((chosen, trace))
}

/// Retrieval, selection and decoding settings for answering queries.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub lm: &'a dyn LanguageModel,
    pub scorer: &'a dyn RelevanceScorer,
    pub plan: &'a DecodePlan,
    /// Retrieved candidates per query; 0 bypasses retrieval entirely.
    pub top_k: usize,
    pub threshold: f64,
}

impl Pipeline<'_> {
    /// Answer one query against the facts in `index`.
    ///
    /// When the selector keeps nothing (or `top_k` is 0) the unedited model
    /// answers the bare query with no adjustment.
    pub fn answer(&self, index: &VectorIndex, query: &str) -> Result<(String, DecodeTrace)> {
        if query.trim().is_empty() {
            return Err(Error::validation("query must be non-empty"));
        }
        self.plan.validate()?;
        let mut retrieved = Vec::new();
        let mut selected = Vec::new();
        if self.top_k > 0 {
            let candidates = index.top_k(query, self.top_k).map_err(|e| e.in_stage("retrieve"))?;
            let decisions =
                select(self.scorer, query, &candidates, self.threshold).map_err(|e| e.in_stage("select"))?;
            retrieved = candidates
                .iter()
                .zip(&decisions)
                .map(|(c, d)| RetrievedRecord {
                    fact_id: c.fact.fact_id.clone(),
                    score: c.score,
                    probability: d.probability,
                    selected: d.selected,
                })
                .collect();
            selected = selected_facts(&decisions);
        }

        if selected.is_empty() {
            let answer =
                greedy_answer(self.lm, query, self.plan.max_answer_tokens).map_err(|e| e.in_stage("generate"))?;
            let trace = DecodeTrace {
                query: query.to_string(),
                alpha: self.plan.alpha,
                mode: self.plan.mode,
                token_convention: self.lm.token_convention().to_string(),
                retrieved,
                final_answer: answer.clone(),
                fallback_used: true,
                ..DecodeTrace::default()
            };
            return Ok((answer, trace));
        }

        let (first, mut trace) =
            adjusted_first_token(self.lm, &selected, query, self.plan).map_err(|e| e.in_stage("decode"))?;
        let context = trace.context.clone().expect("decoded trace has a context");
        let answer = self
            .lm
            .greedy_continue(&context, &first, self.plan.max_answer_tokens)
            .map_err(|e| e.in_stage("generate"))?;
        trace.retrieved = retrieved;
        trace.final_answer = answer.clone();
        Ok((answer, trace))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::lm::{ToyLm, ToyLmSpec, ToyRule};
    use crate::memory::{materialize, NewFact};
    use crate::retrieval::HashedEmbedder;
    use crate::selector::{LinearScorer, ScorerParams};
    use proptest::prelude::*;

    fn toy(beta: f64) -> ToyLm {
        let vocabulary = ["French", "German", "Paris", "Rome"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        ToyLm::new(ToyLmSpec {
            faithfulness: beta,
            vocabulary,
            rules: vec![
                ToyRule {
                    subject: "Dantan".into(),
                    patterns: vec!["The nationality of Dantan is".into(), "Dantan is a citizen of".into()],
                    answers: [("French".to_string(), 0.9), ("German".to_string(), 0.05)].into(),
                    faithfulness: None,
                },
                ToyRule {
                    subject: "Italy".into(),
                    patterns: vec!["The capital of Italy is".into()],
                    answers: [("Rome".to_string(), 0.8), ("Paris".to_string(), 0.2)].into(),
                    faithfulness: None,
                },
            ],
            continuations: Default::default(),
        })
        .unwrap()
    }

    fn dantan() -> EditFact {
        materialize(
            &NewFact::new("Dantan", "The nationality of {s} is", Some("French"), "German"),
            0,
        )
        .unwrap()
    }

    #[test]
    fn context_layout_is_fixed() {
        let ctx = build_context(&[dantan()], "The nationality of Dantan is", DEFAULT_INSTRUCTION).unwrap();
        let lines: Vec<&str> = ctx.lines().collect();
        assert_eq!(
            lines,
            vec![
                "The nationality of Dantan is German",
                "",
                DEFAULT_INSTRUCTION,
                "",
                "The nationality of Dantan is",
            ]
        );
        assert_eq!(
            ctx,
            build_context(&[dantan()], "The nationality of Dantan is", DEFAULT_INSTRUCTION).unwrap()
        );
        assert!(build_context(&[], "q", DEFAULT_INSTRUCTION).is_err());
    }

    #[test]
    fn two_facts_keep_their_order() {
        let other = materialize(&NewFact::new("Italy", "The capital of {s} is", None, "Paris"), 1).unwrap();
        let ctx = build_context(&[other.clone(), dantan()], "q", "i").unwrap();
        assert!(ctx.starts_with("The capital of Italy is Paris\nThe nationality of Dantan is German\n\n"));
    }

    #[test]
    fn prior_logprob_examples() {
        let lm = toy(0.6);
        let floor = default_floor_logprob();
        let f = dantan();
        assert!((prior_logprob(&lm, "French", std::slice::from_ref(&f), floor).unwrap() - 0.9f64.ln()).abs() < 1e-12);
        let twice = prior_logprob(&lm, "French", &[f.clone(), f.clone()], floor).unwrap();
        assert!((twice - 0.9f64.ln()).abs() < 1e-12);
        // 0.05 left over, shared by the two unnamed vocabulary tokens
        assert!((prior_logprob(&lm, "Paris", std::slice::from_ref(&f), floor).unwrap() - 0.025f64.ln()).abs() < 1e-12);
        assert_eq!(prior_logprob(&lm, "Klingon", &[f], floor).unwrap(), floor);
    }

    #[test]
    fn conflict_scores_match_hand_arithmetic() {
        let lm = toy(0.6);
        let plan = DecodePlan::default();
        let (token, trace) = adjusted_first_token(&lm, &[dantan()], "The nationality of Dantan is", &plan).unwrap();
        assert_eq!(token, "German");
        let get = |t: &str| trace.candidates.iter().find(|c| c.token == t).unwrap().clone();
        let german = get("German");
        let french = get("French");
        let expect_german = (0.4f64 * 0.05 + 0.6).ln() - 0.2 * 0.05f64.ln();
        let expect_french = (0.4f64 * 0.9).ln() - 0.2 * 0.9f64.ln();
        assert!((german.adjusted - expect_german).abs() < 1e-12);
        assert!((french.adjusted - expect_french).abs() < 1e-12);
        assert!(trace.audit() < 1e-12);
        assert_eq!(trace.candidates.len(), 4);
    }

    #[test]
    fn weak_context_flips_only_with_suppression() {
        // beta 0.35: context conditioning alone keeps the prior answer
        let lm = toy(0.35);
        let q = "The nationality of Dantan is";
        let (plain, _) = adjusted_first_token(&lm, &[dantan()], q, &DecodePlan::with_alpha(0.0)).unwrap();
        assert_eq!(plain, "French");
        let (flipped, _) = adjusted_first_token(&lm, &[dantan()], q, &DecodePlan::with_alpha(0.2)).unwrap();
        assert_eq!(flipped, "German");
    }

    #[test]
    fn target_suppress_penalizes_only_the_old_object() {
        let lm = toy(0.3);
        let plan = DecodePlan {
            mode: DecodeMode::TargetSuppress,
            ..DecodePlan::with_alpha(0.2)
        };
        let (token, trace) = adjusted_first_token(&lm, &[dantan()], "The nationality of Dantan is", &plan).unwrap();
        let french = trace.candidates.iter().find(|c| c.token == "French").unwrap();
        assert_eq!(french.l_prior, Some(0.9f64.ln()));
        assert!((french.adjusted - (french.l_new - 0.2 * 0.9f64.ln().abs())).abs() < 1e-12);
        assert!(trace
            .candidates
            .iter()
            .filter(|c| c.token != "French")
            .all(|c| c.l_prior.is_none() && c.adjusted == c.l_new));
        assert_eq!(token, "French");
        assert!(trace.audit() < 1e-12);

        let mut bare = dantan();
        bare.old_object = None;
        let (token, trace) = adjusted_first_token(&lm, &[bare], "The nationality of Dantan is", &plan).unwrap();
        assert_eq!(token, "French");
        assert!(trace.candidates.iter().all(|c| c.adjusted == c.l_new));
    }

    #[test]
    fn invalid_plans_are_rejected() {
        let lm = toy(0.6);
        for plan in [
            DecodePlan::with_alpha(-0.1),
            DecodePlan::with_alpha(f64::NAN),
            DecodePlan {
                max_answer_tokens: 0,
                ..DecodePlan::default()
            },
        ] {
            assert!(adjusted_first_token(&lm, &[dantan()], "q", &plan).is_err());
        }
        assert_eq!(
            "target-suppress".parse::<DecodeMode>().unwrap(),
            DecodeMode::TargetSuppress
        );
        assert!("both".parse::<DecodeMode>().is_err());
    }

    fn pipeline_parts() -> (ToyLm, VectorIndex) {
        let mut index = VectorIndex::new(Arc::new(HashedEmbedder::default()));
        index.add(dantan()).unwrap();
        (toy(0.6), index)
    }

    #[test]
    fn pipeline_edits_and_falls_back() {
        let (lm, index) = pipeline_parts();
        let scorer = LinearScorer::new(ScorerParams::new(vec![0.0, 10.0, 0.0, 0.0, 0.0, 0.0], -5.0).unwrap()).unwrap();
        let plan = DecodePlan::default();
        let p = Pipeline {
            lm: &lm,
            scorer: &scorer,
            plan: &plan,
            top_k: 5,
            threshold: 0.5,
        };
        let (answer, trace) = p.answer(&index, "The nationality of Dantan is").unwrap();
        assert_eq!(answer, "German");
        assert!(!trace.fallback_used);
        assert_eq!(trace.selected_facts, vec![dantan().fact_id]);
        let (answer, trace) = p.answer(&index, "Dantan is a citizen of").unwrap();
        assert_eq!(answer, "German");
        assert_eq!(trace.retrieved.len(), 1);

        let (answer, trace) = p.answer(&index, "The capital of Italy is").unwrap();
        assert!(trace.fallback_used);
        assert!(trace.candidates.is_empty() && trace.context.is_none());
        assert_eq!(answer, greedy_answer(&lm, "The capital of Italy is", 16).unwrap());
        assert!(p.answer(&index, "  ").is_err());
    }

    #[test]
    fn untrained_scorer_is_pure_fallback() {
        let (lm, index) = pipeline_parts();
        let scorer = LinearScorer::new(ScorerParams::zeros()).unwrap();
        let plan = DecodePlan::default();
        let p = Pipeline {
            lm: &lm,
            scorer: &scorer,
            plan: &plan,
            top_k: 5,
            threshold: 0.5,
        };
        let (answer, trace) = p.answer(&index, "The nationality of Dantan is").unwrap();
        assert_eq!(answer, "French");
        assert!(trace.fallback_used);
        assert_eq!(trace.retrieved[0].probability, 0.5);
        assert!(!trace.retrieved[0].selected);
    }

    #[test]
    fn stage_is_attached_to_errors() {
        let (lm, index) = pipeline_parts();
        let scorer = LinearScorer::new(ScorerParams::zeros()).unwrap();
        let plan = DecodePlan::default();
        let p = Pipeline {
            lm: &lm,
            scorer: &scorer,
            plan: &plan,
            top_k: 5,
            threshold: 1.5,
        };
        let err = p.answer(&index, "The nationality of Dantan is").unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "select", .. }), "{err}");
    }

    fn arb_lm() -> impl Strategy<Value = (ToyLm, Vec<EditFact>)> {
        let tokens: Vec<String> = (0..6).map(|i| format!("Tok{i}")).collect();
        (
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 1..4),
            0.0f64..1.0,
        )
            .prop_map(move |(tables, beta)| {
                let mut rules = Vec::new();
                let mut facts = Vec::new();
                for (i, weights) in tables.iter().enumerate() {
                    let total: f64 = weights.iter().sum::<f64>() + 1e-3;
                    let subject = format!("Subj{i}");
                    rules.push(ToyRule {
                        subject: subject.clone(),
                        patterns: vec![format!("The thing of {subject} is")],
                        answers: tokens.iter().cloned().zip(weights.iter().map(|w| w / total)).collect(),
                        faithfulness: None,
                    });
                    let new = &tokens[i % tokens.len()];
                    facts.push(
                        materialize(
                            &NewFact::new(&subject, "The thing of {s} is", Some(&tokens[5]), new),
                            i as u64,
                        )
                        .unwrap(),
                    );
                }
                let spec = ToyLmSpec {
                    faithfulness: beta,
                    vocabulary: tokens.iter().cloned().chain(["Spare".to_string()]).collect(),
                    rules,
                    continuations: Default::default(),
                };
                (ToyLm::new(spec).unwrap(), facts)
            })
    }

    proptest! {
        #[test]
        fn alpha_zero_is_raw_argmax((lm, facts) in arb_lm(), mode in prop_oneof![Just(DecodeMode::ContrastFull), Just(DecodeMode::TargetSuppress)]) {
            let query = "The thing of Subj0 is";
            let plan = DecodePlan { mode, ..DecodePlan::with_alpha(0.0) };
            let (token, trace) = adjusted_first_token(&lm, &facts, query, &plan).unwrap();
            let ctx = trace.context.unwrap();
            let dist = lm.next_token_distribution(&ctx).unwrap();
            prop_assert_eq!(token.as_str(), dist.argmax().unwrap().0);
        }

        #[test]
        fn trace_recomputes_and_argmax_is_consistent((lm, facts) in arb_lm(), alpha in 0.0f64..1.0) {
            let (token, trace) = adjusted_first_token(&lm, &facts, "The thing of Subj0 is", &DecodePlan::with_alpha(alpha)).unwrap();
            prop_assert!(trace.audit() <= 1e-9);
            let best = trace.candidates.iter().map(|c| c.adjusted).fold(f64::NEG_INFINITY, f64::max);
            let winners: Vec<&str> = trace.candidates.iter().filter(|c| c.adjusted == best).map(|c| c.token.as_str()).collect();
            prop_assert_eq!(token.as_str(), *winners.iter().min().unwrap());
        }

        #[test]
        fn lower_prior_wins_equal_context_scores(alpha in 0.01f64..2.0) {
            // two tokens the context scores equally, priors 0.9 and 0.01
            let vocabulary = ["Hi", "Lo", "Spare"].iter().map(|s| s.to_string()).collect();
            let lm = ToyLm::new(ToyLmSpec {
                faithfulness: 0.0,
                vocabulary,
                rules: vec![
                    ToyRule { subject: "X".into(), patterns: vec!["The thing of X is".into()], answers: [("Hi".to_string(), 0.9), ("Lo".to_string(), 0.01)].into(), faithfulness: None },
                    ToyRule { subject: "Q".into(), patterns: vec!["ask".into()], answers: [("Hi".to_string(), 0.5), ("Lo".to_string(), 0.5)].into(), faithfulness: None },
                ],
                continuations: Default::default(),
            }).unwrap();
            let fact = materialize(&NewFact::new("X", "The thing of {s} is", None, "Lo"), 0).unwrap();
            let (token, trace) = adjusted_first_token(&lm, &[fact], "ask", &DecodePlan::with_alpha(alpha)).unwrap();
            prop_assert_eq!(token, "Lo");
            let hi = trace.candidates.iter().find(|c| c.token == "Hi").unwrap();
            let lo = trace.candidates.iter().find(|c| c.token == "Lo").unwrap();
            prop_assert!(hi.adjusted < lo.adjusted);
        }

        #[test]
        fn only_the_first_token_is_steered((lm, facts) in arb_lm(), alpha in 0.0f64..1.0) {
            let mut index = VectorIndex::new(Arc::new(HashedEmbedder::default()));
            index.extend(facts.clone()).unwrap();
            let scorer = LinearScorer::new(ScorerParams::new(vec![0.0, 10.0, 0.0, 0.0, 0.0, 0.0], -5.0).unwrap()).unwrap();
            let plan = DecodePlan::with_alpha(alpha);
            let p = Pipeline { lm: &lm, scorer: &scorer, plan: &plan, top_k: 5, threshold: 0.5 };
            let (answer, trace) = p.answer(&index, "The thing of Subj0 is").unwrap();
            let first = trace.chosen_first_token.clone().unwrap();
            let independent = lm.greedy_continue(trace.context.as_ref().unwrap(), &first, plan.max_answer_tokens).unwrap();
            prop_assert_eq!(answer, independent);
        }
    }
}
