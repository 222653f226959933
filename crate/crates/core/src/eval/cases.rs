//! Case files: the canonical line-delimited format plus adapters for
//! common editing benchmark layouts.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use super::{EvalCase, QueryItem};
use crate::error::{Error, Result};
use crate::memory::{NewFact, SUBJECT_PLACEHOLDER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseFormat {
    /// One JSON case per line with the [`EvalCase`] fields.
    Canonical,
    /// `subject`, `src`, `alt`, `answers`, `rephrase`, `loc`, `loc_ans`.
    ZsreLike,
    /// `requested_rewrite` with `prompt`/`subject`/`target_new`/`target_true`,
    /// plus `paraphrase_prompts` and `neighborhood_prompts`.
    CounterfactLike,
    /// `subject`, `prompt`, `target_new`, `ground_truth`, `rephrase`,
    /// `portability` and `locality` groups.
    RipeLike,
}

impl std::str::FromStr for CaseFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(CaseFormat::Canonical),
            "zsre-like" => Ok(CaseFormat::ZsreLike),
            "counterfact-like" => Ok(CaseFormat::CounterfactLike),
            "ripe-like" => Ok(CaseFormat::RipeLike),
            other => Err(Error::Config(format!("unknown case format {other:?}"))),
        }
    }
}

/// Read cases from `path`. Adapter formats accept either a JSON array or
/// one record per line.
pub fn load_cases(path: impl AsRef<Path>, format: CaseFormat) -> Result<Vec<EvalCase>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cases(&text, format)
}

pub fn parse_cases(text: &str, format: CaseFormat) -> Result<Vec<EvalCase>> {
    let records = split_records(text)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, value)| {
            let index = i + 1;
            let case = match format {
                CaseFormat::Canonical => {
                    serde_json::from_value(value).map_err(|e| Error::parse_record(index, e.to_string()))?
                }
                CaseFormat::ZsreLike => zsre(index, value)?,
                CaseFormat::CounterfactLike => counterfact(index, value)?,
                CaseFormat::RipeLike => ripe(index, value)?,
            };
            let case: EvalCase = case;
            case.validate().map_err(|e| Error::parse_record(index, e.to_string()))?;
            Ok(case)
        })
        .collect()
}

/// Write cases in the canonical format.
pub fn save_cases(path: impl AsRef<Path>, cases: &[EvalCase]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for case in cases {
        serde_json::to_writer(&mut out, case).expect("cases serialize");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

fn split_records(text: &str) -> Result<Vec<Value>> {
    // A single document, possibly spread over several lines.
    if let Ok(value) = serde_json::from_str::<Value>(text) {
        return Ok(match value {
            Value::Array(items) => items,
            other => vec![other],
        });
    }
    if text.trim_start().starts_with('[') {
        return match serde_json::from_str(text) {
            Ok(Value::Array(items)) => Ok(items),
            Ok(_) => Err(Error::parse_record(1, "expected a JSON array")),
            Err(e) => Err(Error::parse_line(e.line(), e.to_string())),
        };
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse_line(i + 1, e.to_string())))
        .collect()
}

/// Field access that reports missing fields against the record index and
/// remembers which fields were consumed.
struct Record {
    index: usize,
    fields: Map<String, Value>,
}

impl Record {
    fn new(index: usize, value: Value) -> Result<Self> {
        match value {
            Value::Object(fields) => Ok(Record { index, fields }),
            _ => Err(Error::parse_record(index, "expected a JSON object")),
        }
    }

    fn take(&mut self, name: &str) -> Option<Value> {
        self.fields.remove(name).filter(|v| !v.is_null())
    }

    fn text(&mut self, name: &str) -> Result<String> {
        let index = self.index;
        self.take(name)
            .as_ref()
            .and_then(first_text)
            .ok_or_else(|| Error::parse_record(index, format!("missing field `{name}`")))
    }

    fn optional_text(&mut self, name: &str) -> Option<String> {
        self.take(name).as_ref().and_then(first_text)
    }

    fn nested(&mut self, name: &str) -> Result<Record> {
        let index = self.index;
        match self.take(name) {
            Some(v) => Record::new(index, v),
            None => Err(Error::parse_record(index, format!("missing field `{name}`"))),
        }
    }

    /// Log every field nothing consumed.
    fn finish(self, context: &str) {
        for name in self.fields.keys() {
            log::debug!("record {}: dropped {context}field `{name}`", self.index);
        }
    }
}

/// A string, the first string of an array, or the `str`/`value`/`answer`
/// member of an object.
fn first_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Array(items) => items.iter().find_map(first_text),
        Value::Object(map) => ["str", "value", "answer", "ground_truth"]
            .iter()
            .find_map(|k| map.get(*k).and_then(first_text)),
        _ => None,
    }
}

fn texts(value: Option<Value>) -> Vec<String> {
    match value {
        Some(Value::Array(items)) => items.iter().filter_map(first_text).collect(),
        Some(v) => first_text(&v).into_iter().collect(),
        None => Vec::new(),
    }
}

/// `(prompt, answer)` pairs from a list of objects with `prompt` and a
/// `ground_truth`/`target`/`answers` member.
fn prompt_pairs(value: Option<Value>) -> Vec<(String, Option<String>)> {
    let Some(Value::Array(items)) = value else {
        return Vec::new();
    };
    items
        .iter()
        .filter_map(|item| match item {
            Value::String(s) => Some((s.clone(), None)),
            Value::Object(map) => {
                let prompt = map.get("prompt").and_then(first_text)?;
                let answer = ["ground_truth", "target", "answers", "answer"]
                    .iter()
                    .find_map(|k| map.get(*k).and_then(first_text));
                Some((prompt, answer))
            }
            _ => None,
        })
        .collect()
}

/// Relation template from a prompt mentioning the subject.
fn relation_from(prompt: &str, subject: &str) -> String {
    let prompt = prompt.trim();
    match prompt.find(subject) {
        Some(_) if !subject.is_empty() => prompt.replacen(subject, SUBJECT_PLACEHOLDER, 1),
        _ => prompt.to_string(),
    }
}

fn zsre(index: usize, value: Value) -> Result<EvalCase> {
    let mut r = Record::new(index, value)?;
    let subject = r.text("subject")?;
    let src = r.text("src")?;
    let new_object = r.text("alt")?;
    let old_object = r.optional_text("answers");
    let gen_queries = texts(r.take("rephrase"))
        .iter()
        .map(|q| QueryItem::new(q, &new_object))
        .collect();
    let loc_queries = r
        .optional_text("loc")
        .map(|q| QueryItem::unlabeled(&q))
        .into_iter()
        .collect();
    r.take("loc_ans");
    let case_id = r.optional_text("case_id");
    r.finish("");
    Ok(EvalCase {
        case_id,
        edit: NewFact::new(
            &subject,
            &relation_from(&src, &subject),
            old_object.as_deref(),
            &new_object,
        ),
        rel_queries: vec![QueryItem::new(&src, &new_object)],
        gen_queries,
        loc_queries,
    })
}

fn counterfact(index: usize, value: Value) -> Result<EvalCase> {
    let mut r = Record::new(index, value)?;
    let case_id = r.take("case_id").map(|v| match v {
        Value::String(s) => s,
        other => other.to_string(),
    });
    let mut rewrite = r.nested("requested_rewrite")?;
    let subject = rewrite.text("subject")?;
    let prompt = rewrite.text("prompt")?;
    let new_object = rewrite.text("target_new")?;
    let old_object = rewrite.optional_text("target_true");
    rewrite.finish("requested_rewrite.");
    let relation = prompt.replace("{}", SUBJECT_PLACEHOLDER);
    let rel_query = prompt.replace("{}", &subject);
    let gen_queries = texts(r.take("paraphrase_prompts"))
        .iter()
        .map(|q| QueryItem::new(q, &new_object))
        .collect();
    let loc_queries = texts(r.take("neighborhood_prompts"))
        .iter()
        .map(|q| QueryItem::unlabeled(q))
        .collect();
    r.finish("");
    Ok(EvalCase {
        case_id,
        edit: NewFact::new(&subject, &relation, old_object.as_deref(), &new_object),
        rel_queries: vec![QueryItem::new(&rel_query, &new_object)],
        gen_queries,
        loc_queries,
    })
}

fn ripe(index: usize, value: Value) -> Result<EvalCase> {
    let mut r = Record::new(index, value)?;
    let subject = r.text("subject")?;
    let prompt = r.text("prompt")?;
    let new_object = r.text("target_new")?;
    let old_object = r.optional_text("ground_truth");
    let case_id = r.optional_text("case_id");

    let mut gen_queries: Vec<QueryItem> = texts(r.take("rephrase"))
        .iter()
        .map(|q| QueryItem::new(q, &new_object))
        .collect();
    let mut loc_queries = Vec::new();
    if let Some(portability) = r.take("portability") {
        let mut group = Record::new(index, portability)?;
        // Aliases restate the edited fact; other ripple categories ask
        // about different facts and have no home among the three classes.
        for (prompt, answer) in prompt_pairs(group.take("Subject_Aliasing")) {
            let expected = answer.unwrap_or_else(|| new_object.clone());
            gen_queries.push(QueryItem::new(&prompt, &expected));
        }
        group.finish("portability.");
    }
    if let Some(locality) = r.take("locality") {
        let mut group = Record::new(index, locality)?;
        for name in ["Relation_Specificity", "Forgetfulness"] {
            for (prompt, _) in prompt_pairs(group.take(name)) {
                loc_queries.push(QueryItem::unlabeled(&prompt));
            }
        }
        group.finish("locality.");
    }
    r.finish("");
    Ok(EvalCase {
        case_id,
        edit: NewFact::new(
            &subject,
            &relation_from(&prompt, &subject),
            old_object.as_deref(),
            &new_object,
        ),
        rel_queries: vec![QueryItem::new(&prompt, &new_object)],
        gen_queries,
        loc_queries,
    })
}
