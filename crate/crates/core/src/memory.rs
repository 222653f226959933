//! Append-only store of edited facts.
//!
//! Every edit is an [`EditFact`] with a monotone `seq`. The store hands out
//! immutable [`FactSet`] snapshots that later appends never touch, and can
//! persist itself as one JSON object per line.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::fnv1a64;

/// Placeholder token substituted with the subject in relation templates.
pub const SUBJECT_PLACEHOLDER: &str = "{s}";

/// One edited knowledge triple `(subject, relation, old_object -> new_object)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditFact {
    pub fact_id: String,
    pub seq: u64,
    pub subject: String,
    pub relation: String,
    pub old_object: Option<String>,
    pub new_object: String,
    pub surface_text: String,
}

impl EditFact {
    /// The `(subject, relation)` prompt with no object, e.g.
    /// `"The nationality of Antoine Laurent Dantan is"`.
    pub fn prior_prompt(&self) -> String {
        render_prompt(&self.subject, &self.relation)
    }

    fn key(&self) -> (&str, &str) {
        (&self.subject, &self.relation)
    }
}

/// Render a relation with its subject substituted.
///
/// Templates carrying `{s}` get the subject spliced in; bare relation text is
/// read as a prefix, giving `"<relation> <subject> is"`.
pub fn render_prompt(subject: &str, relation: &str) -> String {
    if relation.contains(SUBJECT_PLACEHOLDER) {
        relation.replace(SUBJECT_PLACEHOLDER, subject).trim().to_string()
    } else {
        format!("{} {} is", relation.trim(), subject.trim())
    }
}

/// Default natural-language rendering of an edited fact.
pub fn render_surface(subject: &str, relation: &str, new_object: &str) -> String {
    format!("{} {}", render_prompt(subject, relation), new_object.trim())
}

/// Input to [`MemoryStore::append`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewFact {
    pub subject: String,
    pub relation: String,
    #[serde(default)]
    pub old_object: Option<String>,
    pub new_object: String,
    #[serde(default)]
    pub surface_text: Option<String>,
}

impl NewFact {
    pub fn new(subject: &str, relation: &str, old_object: Option<&str>, new_object: &str) -> Self {
        NewFact {
            subject: subject.to_string(),
            relation: relation.to_string(),
            old_object: old_object.map(str::to_string),
            new_object: new_object.to_string(),
            surface_text: None,
        }
    }
}

/// Build the stored form of `new` at `seq`: trims fields, renders the
/// surface text when absent and derives the fact id.
pub fn materialize(new: &NewFact, seq: u64) -> Result<EditFact> {
    let subject = new.subject.trim();
    let relation = new.relation.trim();
    let new_object = new.new_object.trim();
    if relation.is_empty() {
        return Err(Error::validation("relation must be non-empty"));
    }
    if new_object.is_empty() {
        return Err(Error::validation("new_object must be non-empty"));
    }
    let surface_text = match new.surface_text.as_deref().map(str::trim) {
        Some(text) if !text.is_empty() => text.to_string(),
        _ => render_surface(subject, relation, new_object),
    };
    let old_object = new
        .old_object
        .as_deref()
        .map(str::trim)
        .filter(|o| !o.is_empty())
        .map(str::to_string);
    let fact_id = format!(
        "f{seq:06}-{:08x}",
        fnv1a64(format!("{subject}\u{1f}{relation}\u{1f}{new_object}").as_bytes()) as u32
    );
    Ok(EditFact {
        fact_id,
        seq,
        subject: subject.to_string(),
        relation: relation.to_string(),
        old_object,
        new_object: new_object.to_string(),
        surface_text,
    })
}

/// Immutable view of the store at one point of the edit stream.
#[derive(Debug, Clone, Default)]
pub struct FactSet {
    facts: Arc<Vec<EditFact>>,
}

impl FactSet {
    pub fn facts(&self) -> &[EditFact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Largest `seq` included, `None` for an empty set.
    pub fn high_water_seq(&self) -> Option<u64> {
        self.facts.last().map(|f| f.seq)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EditFact> {
        self.facts.iter()
    }
}

impl PartialEq for FactSet {
    fn eq(&self, other: &Self) -> bool {
        self.facts() == other.facts()
    }
}

/// Single-writer append-only fact store, optionally backed by a JSONL journal.
#[derive(Debug, Default)]
pub struct MemoryStore {
    facts: Arc<Vec<EditFact>>,
    journal: Option<PathBuf>,
}

impl MemoryStore {
    /// Volatile store with no journal.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (or create) a store journaled at `path`. Existing lines are loaded.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let facts = if path.exists() {
            load(path)?
        } else {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            File::create(path).map_err(|e| Error::io(path, e))?;
            FactSet::default()
        };
        Ok(MemoryStore {
            facts: facts.facts,
            journal: Some(path.to_path_buf()),
        })
    }

    /// Volatile store seeded from an existing snapshot.
    pub fn from_fact_set(set: FactSet) -> Self {
        MemoryStore {
            facts: set.facts,
            journal: None,
        }
    }

    pub fn journal_path(&self) -> Option<&Path> {
        self.journal.as_deref()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    fn next_seq(&self) -> u64 {
        self.facts.last().map_or(0, |f| f.seq + 1)
    }

    /// Validate, assign the next `seq`, persist, then publish the fact.
    pub fn append(&mut self, new: NewFact) -> Result<EditFact> {
        let seq = self.next_seq();
        let fact = materialize(&new, seq)?;
        if let Some(path) = &self.journal {
            append_line(path, &fact).map_err(|source| Error::Storage { seq, source })?;
        }
        Arc::make_mut(&mut self.facts).push(fact.clone());
        Ok(fact)
    }

    /// O(1) immutable view; later appends copy-on-write away from it.
    pub fn snapshot(&self) -> FactSet {
        FactSet {
            facts: Arc::clone(&self.facts),
        }
    }

    /// Write every fact to `path`, replacing its contents. Returns the count.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<usize> {
        save(&self.snapshot(), path)
    }
}

fn append_line(path: &Path, fact: &EditFact) -> std::io::Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(fact)?;
    writeln!(file, "{line}")?;
    file.sync_all()
}

/// Write `set` to `path` atomically (temp file + rename).
pub fn save(set: &FactSet, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let tmp = path.with_extension("jsonl.tmp");
    let write = || -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(&tmp)?);
        for fact in set.iter() {
            serde_json::to_writer(&mut out, fact)?;
            out.write_all(b"\n")?;
        }
        out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))?;
    Ok(set.len())
}

/// Read a journal. Blank lines are skipped; any other bad line is an error
/// naming its 1-based line number.
pub fn load(path: impl AsRef<Path>) -> Result<FactSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut facts: Vec<EditFact> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fact: EditFact = serde_json::from_str(&line).map_err(|e| Error::parse_line(lineno, e.to_string()))?;
        let expected = facts.last().map_or(0, |f| f.seq + 1);
        if fact.seq != expected {
            return Err(Error::parse_line(
                lineno,
                format!("seq {} out of order, expected {expected}", fact.seq),
            ));
        }
        if fact.new_object.trim().is_empty() {
            return Err(Error::parse_line(lineno, "empty new_object"));
        }
        facts.push(fact);
    }
    Ok(FactSet { facts: Arc::new(facts) })
}

/// Keep only the newest fact for each `(subject, relation)`, preserving the
/// relative order of the survivors.
pub fn dedupe_latest(facts: &[EditFact]) -> Vec<EditFact> {
    let mut latest: HashMap<(&str, &str), u64> = HashMap::new();
    for fact in facts {
        let entry = latest.entry(fact.key()).or_insert(fact.seq);
        *entry = (*entry).max(fact.seq);
    }
    facts.iter().filter(|f| latest[&f.key()] == f.seq).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fact(subject: &str, relation: &str, new_object: &str, seq: u64) -> EditFact {
        EditFact {
            fact_id: format!("id{seq}"),
            seq,
            subject: subject.into(),
            relation: relation.into(),
            old_object: None,
            new_object: new_object.into(),
            surface_text: render_surface(subject, relation, new_object),
        }
    }

    #[test]
    fn renders_dantan_example() {
        let mut store = MemoryStore::in_memory();
        let f = store
            .append(NewFact::new(
                "Antoine Laurent Dantan",
                "The nationality of {s} is",
                Some("French"),
                "German",
            ))
            .unwrap();
        assert_eq!(f.surface_text, "The nationality of Antoine Laurent Dantan is German");
        assert_eq!(f.prior_prompt(), "The nationality of Antoine Laurent Dantan is");
        assert_eq!(f.old_object.as_deref(), Some("French"));
        assert_eq!(f.seq, 0);
    }

    #[test]
    fn bare_relation_is_a_prefix() {
        assert_eq!(
            render_prompt("Mexico", "The president of"),
            "The president of Mexico is"
        );
        assert_eq!(
            render_surface("Mexico", "The president of", "Claudia Sheinbaum"),
            "The president of Mexico is Claudia Sheinbaum"
        );
    }

    #[test]
    fn identical_appends_get_distinct_ids() {
        let mut store = MemoryStore::in_memory();
        let a = store.append(NewFact::new("A", "r {s}", None, "x")).unwrap();
        let b = store.append(NewFact::new("A", "r {s}", None, "x")).unwrap();
        assert_ne!(a.fact_id, b.fact_id);
        assert_eq!((a.seq, b.seq), (0, 1));
    }

    #[test]
    fn rejects_empty_fields() {
        let mut store = MemoryStore::in_memory();
        assert!(matches!(
            store.append(NewFact::new("A", "r", None, "  ")),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            store.append(NewFact::new("A", "", None, "x")),
            Err(Error::Validation(_))
        ));
        assert!(store.is_empty());
    }

    #[test]
    fn snapshots_are_immutable() {
        let mut store = MemoryStore::in_memory();
        assert!(store.snapshot().is_empty());
        for i in 0..3 {
            store.append(NewFact::new("A", "r", None, &i.to_string())).unwrap();
        }
        let snap = store.snapshot();
        assert_eq!(snap.len(), 3);
        assert_eq!(snap.high_water_seq(), Some(2));
        store.append(NewFact::new("B", "r", None, "y")).unwrap();
        assert_eq!(snap.len(), 3);
        assert_eq!(store.snapshot().len(), 4);
    }

    #[test]
    fn storage_failure_reports_seq() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("facts.jsonl");
        let mut store = MemoryStore::open(&path).unwrap();
        store.append(NewFact::new("A", "r", None, "x")).unwrap();
        // Replace the journal with a directory so the next open-for-append fails.
        fs::remove_file(&path).unwrap();
        fs::create_dir(&path).unwrap();
        match store.append(NewFact::new("B", "r", None, "y")) {
            Err(Error::Storage { seq, .. }) => assert_eq!(seq, 1),
            other => panic!("expected storage error, got {other:?}"),
        }
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn journal_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("facts.jsonl");
        {
            let mut store = MemoryStore::open(&path).unwrap();
            store.append(NewFact::new("A", "r", None, "x")).unwrap();
            store.append(NewFact::new("B", "r", None, "y")).unwrap();
        }
        let mut store = MemoryStore::open(&path).unwrap();
        assert_eq!(store.len(), 2);
        let c = store.append(NewFact::new("C", "r", None, "z")).unwrap();
        assert_eq!(c.seq, 2);
        assert_eq!(load(&path).unwrap().len(), 3);
    }

    #[test]
    fn load_empty_and_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.jsonl");
        fs::write(&empty, "").unwrap();
        assert!(load(&empty).unwrap().is_empty());

        let mut store = MemoryStore::in_memory();
        store.append(NewFact::new("A", "r", None, "x")).unwrap();
        store.append(NewFact::new("B", "r", None, "y")).unwrap();
        let path = dir.path().join("bad.jsonl");
        store.save(&path).unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"fact_id\": \"torn\", \"seq\": 2, \"subj\n");
        fs::write(&path, text).unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn out_of_order_seq_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gap.jsonl");
        let a = serde_json::to_string(&fact("A", "r", "x", 0)).unwrap();
        let b = serde_json::to_string(&fact("B", "r", "y", 2)).unwrap();
        fs::write(&path, format!("{a}\n{b}\n")).unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn dedupe_examples() {
        let facts = vec![fact("A", "r", "x", 0), fact("A", "r", "y", 1)];
        assert_eq!(dedupe_latest(&facts), vec![fact("A", "r", "y", 1)]);
        let disjoint = vec![fact("A", "r", "x", 0), fact("B", "r", "y", 1), fact("A", "q", "z", 2)];
        assert_eq!(dedupe_latest(&disjoint), disjoint);
        assert!(dedupe_latest(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn dedupe_is_idempotent(keys in proptest::collection::vec((0u8..4, 0u8..3), 0..40)) {
            let facts: Vec<EditFact> = keys
                .iter()
                .enumerate()
                .map(|(i, (s, r))| fact(&format!("s{s}"), &format!("r{r}"), "o", i as u64))
                .collect();
            let once = dedupe_latest(&facts);
            prop_assert_eq!(dedupe_latest(&once), once.clone());
            // Survivors keep their relative order.
            prop_assert!(once.windows(2).all(|w| w[0].seq < w[1].seq));
        }

        #[test]
        fn appends_extend_prefix(objects in proptest::collection::vec("[a-z]{1,8}", 1..30)) {
            let mut store = MemoryStore::in_memory();
            let mut previous = store.snapshot();
            for (i, o) in objects.iter().enumerate() {
                store.append(NewFact::new("S", "r {s}", None, o)).unwrap();
                let now = store.snapshot();
                prop_assert_eq!(&now.facts()[..previous.len()], previous.facts());
                prop_assert_eq!(now.facts()[i].seq, i as u64);
                previous = now;
            }
        }
    }
}
