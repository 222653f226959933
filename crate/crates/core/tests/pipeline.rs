use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use factsteer::decoding::{DecodeMode, DecodePlan, Pipeline};
use factsteer::eval::{load_cases, record_baselines, save_cases, CaseFormat, Harness, HarnessSettings};
use factsteer::lm::{ToyLm, ToyLmSpec, ToyRule};
use factsteer::memory::{MemoryStore, NewFact};
use factsteer::retrieval::{HashedEmbedder, VectorIndex};
use factsteer::selector::{LinearScorer, ScorerParams};
use factsteer::synth::{generate, SynthConfig};

fn toy() -> ToyLm {
    let rule = |subject: &str, patterns: &[&str], answers: &[(&str, f64)]| ToyRule {
        subject: subject.into(),
        patterns: patterns.iter().map(|p| p.to_string()).collect(),
        answers: answers.iter().map(|(t, p)| (t.to_string(), *p)).collect(),
        faithfulness: None,
    };
    ToyLm::new(ToyLmSpec {
        faithfulness: 0.6,
        vocabulary: ["French", "German", "Polish", "Dutch", "Oslo", "Rome"]
            .into_iter()
            .map(String::from)
            .collect::<BTreeSet<_>>(),
        rules: vec![
            rule(
                "Dantan",
                &["The nationality of Dantan is", "Dantan is a citizen of"],
                &[("French", 0.9), ("German", 0.05), ("Polish", 0.03)],
            ),
            rule("Norway", &["The capital of Norway is"], &[("Oslo", 0.9)]),
        ],
        continuations: BTreeMap::new(),
    })
    .unwrap()
}

fn subject_scorer() -> LinearScorer {
    LinearScorer::new(ScorerParams::new(vec![0.0, 10.0, 0.0, 0.0, 0.0, 0.0], -5.0).unwrap()).unwrap()
}

fn index_from(store: &MemoryStore) -> VectorIndex {
    let mut index = VectorIndex::new(Arc::new(HashedEmbedder::default()));
    index.extend(store.snapshot().facts().to_vec()).unwrap();
    index
}

#[test]
fn journal_replay_answers_like_the_live_store() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("memory.jsonl");
    let mut store = MemoryStore::open(&path).unwrap();
    store
        .append(NewFact::new(
            "Dantan",
            "The nationality of {s} is",
            Some("French"),
            "German",
        ))
        .unwrap();

    let reopened = MemoryStore::open(&path).unwrap();
    assert_eq!(reopened.snapshot(), store.snapshot());

    let lm = toy();
    let scorer = subject_scorer();
    let plan = DecodePlan::default();
    let pipeline = Pipeline {
        lm: &lm,
        scorer: &scorer,
        plan: &plan,
        top_k: 5,
        threshold: 0.5,
    };
    let index = index_from(&reopened);
    let (answer, trace) = pipeline.answer(&index, "Dantan is a citizen of").unwrap();
    assert_eq!(answer, "German");
    assert!(!trace.fallback_used);
    assert!(trace.audit() < 1e-12);

    let (answer, trace) = pipeline.answer(&index, "The capital of Norway is").unwrap();
    assert_eq!(answer, "Oslo");
    assert!(trace.fallback_used);
}

#[test]
fn latest_edit_of_a_key_wins() {
    let mut store = MemoryStore::in_memory();
    for new in ["German", "Polish"] {
        store
            .append(NewFact::new("Dantan", "The nationality of {s} is", Some("French"), new))
            .unwrap();
    }
    let lm = toy();
    let scorer = subject_scorer();
    let plan = DecodePlan::default();
    let pipeline = Pipeline {
        lm: &lm,
        scorer: &scorer,
        plan: &plan,
        top_k: 5,
        threshold: 0.5,
    };
    let (answer, trace) = pipeline
        .answer(&index_from(&store), "The nationality of Dantan is")
        .unwrap();
    assert_eq!(answer, "Polish");
    assert_eq!(trace.retrieved.len(), 1);
}

#[test]
fn target_suppress_only_scores_the_old_object_against_its_prior() {
    let mut store = MemoryStore::in_memory();
    store
        .append(NewFact::new(
            "Dantan",
            "The nationality of {s} is",
            Some("French"),
            "German",
        ))
        .unwrap();
    let lm = toy();
    let scorer = subject_scorer();
    let plan = DecodePlan {
        mode: DecodeMode::TargetSuppress,
        ..DecodePlan::default()
    };
    let pipeline = Pipeline {
        lm: &lm,
        scorer: &scorer,
        plan: &plan,
        top_k: 5,
        threshold: 0.5,
    };
    let (answer, trace) = pipeline
        .answer(&index_from(&store), "The nationality of Dantan is")
        .unwrap();
    assert_eq!(answer, "German");
    for c in &trace.candidates {
        assert_eq!(c.l_prior.is_some(), c.token == "French", "{}", c.token);
    }
}

#[test]
fn saved_suite_reloads_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let suite = generate(&SynthConfig {
        cases: 30,
        seed: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let spec_path = dir.path().join("toy.json");
    let cases_path = dir.path().join("cases.jsonl");
    suite.spec.save(&spec_path).unwrap();
    save_cases(&cases_path, &suite.cases).unwrap();

    let run = |lm: &ToyLm, cases: &[factsteer::eval::EvalCase]| {
        let scorer = subject_scorer();
        let harness = Harness {
            lm,
            embedder: Arc::new(HashedEmbedder::default()),
            scorer: &scorer,
            settings: HarnessSettings::default(),
        };
        let baselines = record_baselines(lm, cases, 16).unwrap();
        harness.run_sequential(cases, &baselines, &[10, 30]).unwrap()
    };
    let original = run(&suite.lm().unwrap(), &suite.cases);
    let reloaded = run(
        &ToyLm::load(&spec_path).unwrap(),
        &load_cases(&cases_path, CaseFormat::Canonical).unwrap(),
    );
    assert_eq!(original, reloaded);
    assert_eq!(original.curve.len(), 2);
}
