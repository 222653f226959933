//! Sequential lifelong-editing evaluation.
//!
//! Edits are streamed into memory one at a time. Reliability and generality
//! queries must produce the edited object; locality queries must produce the
//! same answer the unedited model gave before any edit was applied.

mod cases;
mod report;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decoding::{DecodePlan, Pipeline};
use crate::error::{Error, Result};
use crate::lm::{greedy_answer, LanguageModel};
use crate::memory::{materialize, NewFact};
use crate::retrieval::{Embedder, VectorIndex, DEFAULT_TOP_K};
use crate::selector::{RelevanceScorer, DEFAULT_THRESHOLD};

pub use cases::{load_cases, parse_cases, save_cases, CaseFormat};
pub use report::{write_records_csv, write_report, write_sweep_csv, ReportSummary};

/// A query and the answer it should produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "QueryRepr")]
pub struct QueryItem {
    pub query: String,
    /// Empty for locality queries, which are judged against the baseline.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub expected: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum QueryRepr {
    Bare(String),
    Full {
        query: String,
        #[serde(default)]
        expected: String,
    },
}

impl From<QueryRepr> for QueryItem {
    fn from(r: QueryRepr) -> Self {
        match r {
            QueryRepr::Bare(query) => QueryItem {
                query,
                expected: String::new(),
            },
            QueryRepr::Full { query, expected } => QueryItem { query, expected },
        }
    }
}

impl QueryItem {
    pub fn new(query: &str, expected: &str) -> Self {
        QueryItem {
            query: query.to_string(),
            expected: expected.to_string(),
        }
    }

    pub fn unlabeled(query: &str) -> Self {
        QueryItem::new(query, "")
    }
}

/// One edit with the queries that probe it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
    #[serde(flatten)]
    pub edit: NewFact,
    pub rel_queries: Vec<QueryItem>,
    #[serde(default)]
    pub gen_queries: Vec<QueryItem>,
    #[serde(default)]
    pub loc_queries: Vec<QueryItem>,
}

impl EvalCase {
    /// `case_id`, or a positional id when the case has none.
    pub fn id(&self, index: usize) -> String {
        self.case_id.clone().unwrap_or_else(|| format!("case-{index:04}"))
    }

    pub fn validate(&self) -> Result<()> {
        materialize(&self.edit, 0)?;
        if self.rel_queries.is_empty() {
            return Err(Error::validation("case needs at least one reliability query"));
        }
        for q in self.rel_queries.iter().chain(&self.gen_queries) {
            if q.query.trim().is_empty() || q.expected.trim().is_empty() {
                return Err(Error::validation(format!(
                    "query {:?} needs non-empty text and expected answer",
                    q.query
                )));
            }
        }
        if let Some(q) = self.loc_queries.iter().find(|q| q.query.trim().is_empty()) {
            return Err(Error::validation(format!("empty locality query {:?}", q.query)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryType {
    Rel,
    Gen,
    Loc,
}

impl QueryType {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryType::Rel => "rel",
            QueryType::Gen => "gen",
            QueryType::Loc => "loc",
        }
    }
}

/// Outcome of one evaluated query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub case_id: String,
    pub query_type: QueryType,
    pub query: String,
    /// The edited object, or the baseline answer for locality queries.
    pub expected: String,
    pub got: String,
    pub pass: bool,
    pub fallback_used: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Accuracy per query class; a class with no queries is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub reliability: Option<f64>,
    pub generality: Option<f64>,
    pub locality: Option<f64>,
    /// Mean of the metrics that are present.
    pub average: Option<f64>,
}

impl Metrics {
    pub fn from_records(records: &[QueryRecord]) -> Self {
        let rate = |t: QueryType| {
            let (pass, total) = records
                .iter()
                .filter(|r| r.query_type == t)
                .fold((0usize, 0usize), |(p, n), r| (p + r.pass as usize, n + 1));
            (total > 0).then(|| pass as f64 / total as f64)
        };
        let reliability = rate(QueryType::Rel);
        let generality = rate(QueryType::Gen);
        let locality = rate(QueryType::Loc);
        let present: Vec<f64> = [reliability, generality, locality].into_iter().flatten().collect();
        let average = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        Metrics {
            reliability,
            generality,
            locality,
            average,
        }
    }
}

/// Metrics after the first `step` edits, over those edits' queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub step: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub edits: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub curve: Vec<CheckpointRow>,
    pub records: Vec<QueryRecord>,
}

/// Pre-edit answers of locality queries, keyed by query text.
pub type Baselines = BTreeMap<String, String>;

fn normalize(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .trim()
        .to_string()
}

/// Lenient answer comparison.
///
/// Both sides are lowercased, whitespace-collapsed and stripped of terminal
/// punctuation. `got` passes when it equals `expected` or starts with it
/// followed by a word boundary, so `"Germany"` does not match `"German"`.
pub fn match_answer(got: &str, expected: &str) -> bool {
    let got = normalize(got);
    let expected = normalize(expected);
    if expected.is_empty() {
        return got.is_empty();
    }
    match got.strip_prefix(&expected) {
        Some("") => true,
        Some(rest) => !rest.starts_with(|c: char| c.is_alphanumeric()),
        None => false,
    }
}

/// Unedited greedy answers for every locality query.
pub fn record_baselines(lm: &dyn LanguageModel, cases: &[EvalCase], max_tokens: usize) -> Result<Baselines> {
    let mut out = Baselines::new();
    for q in cases.iter().flat_map(|c| &c.loc_queries) {
        if out.contains_key(&q.query) {
            continue;
        }
        let answer = greedy_answer(lm, &q.query, max_tokens).map_err(|e| e.for_query(&q.query))?;
        out.insert(q.query.clone(), answer);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessSettings {
    pub plan: DecodePlan,
    /// Retrieved candidates per query; 0 disables retrieval and selection.
    pub top_k: usize,
    pub threshold: f64,
    /// Concurrent query evaluations. Results do not depend on it.
    pub workers: usize,
}

impl Default for HarnessSettings {
    fn default() -> Self {
        HarnessSettings {
            plan: DecodePlan::default(),
            top_k: DEFAULT_TOP_K,
            threshold: DEFAULT_THRESHOLD,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Alpha,
    K,
}

impl std::str::FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParameter::Alpha),
            "k" => Ok(SweepParameter::K),
            other => Err(Error::Config(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: f64,
    #[serde(flatten)]
    pub metrics: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Job<'a> {
    case: usize,
    kind: QueryType,
    item: &'a QueryItem,
}

/// Runs edit streams through the full pipeline.
pub struct Harness<'a> {
    pub lm: &'a dyn LanguageModel,
    pub embedder: Arc<dyn Embedder>,
    pub scorer: &'a dyn RelevanceScorer,
    pub settings: HarnessSettings,
}

impl Harness<'_> {
    fn pipeline<'p>(&'p self, settings: &'p HarnessSettings) -> Pipeline<'p> {
        Pipeline {
            lm: self.lm,
            scorer: self.scorer,
            plan: &settings.plan,
            top_k: settings.top_k,
            threshold: settings.threshold,
        }
    }

    fn run_job(
        &self,
        pipeline: &Pipeline,
        index: &VectorIndex,
        cases: &[EvalCase],
        baselines: &Baselines,
        job: &Job,
    ) -> QueryRecord {
        let expected = match job.kind {
            QueryType::Loc => baselines.get(&job.item.query).cloned(),
            _ => Some(job.item.expected.clone()),
        };
        let mut record = QueryRecord {
            case_id: cases[job.case].id(job.case),
            query_type: job.kind,
            query: job.item.query.clone(),
            expected: expected.clone().unwrap_or_default(),
            got: String::new(),
            pass: false,
            fallback_used: false,
            error: None,
        };
        let Some(expected) = expected else {
            record.error = Some("no baseline recorded for locality query".into());
            return record;
        };
        match pipeline.answer(index, &job.item.query) {
            Ok((got, trace)) => {
                record.pass = match job.kind {
                    QueryType::Loc => normalize(&got) == normalize(&expected),
                    _ => match_answer(&got, &expected),
                };
                record.got = got;
                record.fallback_used = trace.fallback_used;
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        record
    }

    /// Evaluate every query of `cases` against a fixed index.
    pub fn evaluate(
        &self,
        settings: &HarnessSettings,
        index: &VectorIndex,
        cases: &[EvalCase],
        baselines: &Baselines,
    ) -> Vec<QueryRecord> {
        let pipeline = self.pipeline(settings);
        let jobs: Vec<Job> = cases
            .iter()
            .enumerate()
            .flat_map(|(i, c)| {
                let tag = |kind| move |item| Job { case: i, kind, item };
                c.rel_queries
                    .iter()
                    .map(tag(QueryType::Rel))
                    .chain(c.gen_queries.iter().map(tag(QueryType::Gen)))
                    .chain(c.loc_queries.iter().map(tag(QueryType::Loc)))
            })
            .collect();
        let workers = settings.workers.max(1).min(jobs.len().max(1));
        if workers == 1 {
            return jobs
                .iter()
                .map(|j| self.run_job(&pipeline, index, cases, baselines, j))
                .collect();
        }
        let chunk = jobs.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|part| {
                    let pipeline = &pipeline;
                    scope.spawn(move || {
                        part.iter()
                            .map(|j| self.run_job(pipeline, index, cases, baselines, j))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        })
    }

    fn run_with(
        &self,
        settings: &HarnessSettings,
        cases: &[EvalCase],
        baselines: &Baselines,
        checkpoints: &[usize],
    ) -> Result<EvalReport> {
        settings.plan.validate()?;
        for (i, case) in cases.iter().enumerate() {
            case.validate().map_err(|e| Error::parse_record(i + 1, e.to_string()))?;
        }
        let mut steps: Vec<usize> = checkpoints.to_vec();
        steps.sort_unstable();
        steps.dedup();
        if let Some(&last) = steps.last() {
            if last > cases.len() {
                return Err(Error::validation(format!(
                    "checkpoint {last} exceeds the {} available edits",
                    cases.len()
                )));
            }
        }

        let mut index = VectorIndex::new(self.embedder.clone());
        let mut curve = Vec::with_capacity(steps.len());
        let mut pending = steps.iter().peekable();
        while pending.peek() == Some(&&0) {
            curve.push(CheckpointRow {
                step: 0,
                metrics: Metrics::default(),
            });
            pending.next();
        }
        for (i, case) in cases.iter().enumerate() {
            index.add(materialize(&case.edit, i as u64)?)?;
            let applied = i + 1;
            if pending.peek() == Some(&&applied) {
                pending.next();
                log::info!("checkpoint after {applied} edits");
                let records = self.evaluate(settings, &index, &cases[..applied], baselines);
                curve.push(CheckpointRow {
                    step: applied,
                    metrics: Metrics::from_records(&records),
                });
            }
        }
        let records = self.evaluate(settings, &index, cases, baselines);
        Ok(EvalReport {
            edits: cases.len(),
            metrics: Metrics::from_records(&records),
            curve,
            records,
        })
    }

    /// Apply every edit in order, then evaluate all queries against the
    /// final memory. At each checkpoint `c` the first `c` cases are also
    /// evaluated against the first-`c` memory to form the scaling curve.
    pub fn run_sequential(
        &self,
        cases: &[EvalCase],
        baselines: &Baselines,
        checkpoints: &[usize],
    ) -> Result<EvalReport> {
        self.run_with(&self.settings, cases, baselines, checkpoints)
    }

    /// One full run per value with everything else held fixed. A failing
    /// value yields a row carrying the error.
    pub fn sweep(
        &self,
        parameter: SweepParameter,
        values: &[f64],
        cases: &[EvalCase],
        baselines: &Baselines,
    ) -> Result<Vec<SweepRow>> {
        if values.is_empty() {
            return Err(Error::validation("sweep needs at least one value"));
        }
        Ok(values
            .iter()
            .map(|&value| {
                let mut settings = self.settings.clone();
                let applied = match parameter {
                    SweepParameter::Alpha => {
                        settings.plan.alpha = value;
                        Ok(())
                    }
                    SweepParameter::K if value >= 0.0 && value.fract() == 0.0 => {
                        settings.top_k = value as usize;
                        Ok(())
                    }
                    SweepParameter::K => Err(Error::validation(format!("k must be a whole number, got {value}"))),
                };
                let result = applied.and_then(|()| self.run_with(&settings, cases, baselines, &[]));
                match result {
                    Ok(report) => SweepRow {
                        parameter,
                        value,
                        metrics: report.metrics,
                        error: None,
                    },
                    Err(e) => SweepRow {
                        parameter,
                        value,
                        metrics: Metrics::default(),
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect())
    }
}
