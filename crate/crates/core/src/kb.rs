//! Knowledge base of natural-language facts with timestamped truth histories.
//!
//! Every entry pairs a fact string with an append-only history of
//! `(timestamp, truth value)` records. Facts are never physically removed:
//! a rewrite invalidates the old entry and inserts (or reinforces) the new
//! one, so histories stay queryable for the inference prompt.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("fact is empty after normalization")]
    EmptyFact,
    #[error("document text is empty")]
    EmptyDocument,
    #[error("unknown entry {0}")]
    UnknownEntry(EntryId),
    #[error("rewrite outcome requires rewrite text")]
    MissingRewriteText,
    #[error("rewrite text given for non-rewrite outcome {0:?}")]
    UnexpectedRewriteText(UpdateOutcome),
    #[error("timestamp {new} precedes last record {last} of entry {id}")]
    NonMonotonicTimestamp {
        id: EntryId,
        last: Timestamp,
        new: Timestamp,
    },
    #[error("invalid timestamp {0:?}: expected YYYY-MM-DD")]
    InvalidTimestamp(String),
    #[error("snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KbError>;

/// Calendar date in `YYYY-MM-DD` form. Lexicographic order is chronological.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Timestamp(String);

impl Timestamp {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let valid = s.len() == 10
            && NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map(|d| d.format("%Y-%m-%d").to_string() == s)
                .unwrap_or(false);
        if valid {
            Ok(Self(s.to_string()))
        } else {
            Err(KbError::InvalidTimestamp(s.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn date(&self) -> NaiveDate {
        NaiveDate::parse_from_str(&self.0, "%Y-%m-%d").expect("validated on construction")
    }

    pub fn from_date(date: NaiveDate) -> Self {
        Self(date.format("%Y-%m-%d").to_string())
    }

    pub fn plus_days(&self, days: i64) -> Self {
        Self::from_date(self.date() + chrono::Duration::days(days))
    }
}

impl TryFrom<String> for Timestamp {
    type Error = KbError;
    fn try_from(value: String) -> Result<Self> {
        Self::parse(&value)
    }
}

impl From<Timestamp> for String {
    fn from(ts: Timestamp) -> Self {
        ts.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for Timestamp {
    type Err = KbError;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthValue {
    True,
    False,
}

impl TruthValue {
    pub fn as_str(self) -> &'static str {
        match self {
            TruthValue::True => "true",
            TruthValue::False => "false",
        }
    }
}

impl fmt::Display for TruthValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TruthValue::True => "True",
            TruthValue::False => "False",
        })
    }
}

/// Result of a point-in-time truth query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl From<TruthValue> for Truth {
    fn from(v: TruthValue) -> Self {
        match v {
            TruthValue::True => Truth::True,
            TruthValue::False => Truth::False,
        }
    }
}

/// Ordered `(timestamp, truth value)` records; timestamps never decrease.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactHistory {
    records: Vec<(Timestamp, TruthValue)>,
}

impl FactHistory {
    pub fn records(&self) -> &[(Timestamp, TruthValue)] {
        &self.records
    }

    pub fn last(&self) -> Option<&(Timestamp, TruthValue)> {
        self.records.last()
    }

    pub fn latest_value(&self) -> Option<TruthValue> {
        self.records.last().map(|(_, v)| *v)
    }

    /// Value of the latest record at or before `ts`. Later appends win among
    /// records sharing a timestamp.
    pub fn truth_at(&self, ts: &Timestamp) -> Truth {
        self.records
            .iter()
            .rev()
            .find(|(t, _)| t <= ts)
            .map(|(_, v)| Truth::from(*v))
            .unwrap_or(Truth::Unknown)
    }

    fn is_monotonic(&self) -> bool {
        self.records.windows(2).all(|w| w[0].0 <= w[1].0)
    }

    /// Renders `True at 2023-01-01, False at 2023-01-08`.
    pub fn render(&self) -> String {
        self.records
            .iter()
            .map(|(t, v)| format!("{v} at {t}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Monotonically assigned entry id, rendered as a decimal string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntryId(pub u64);

impl TryFrom<String> for EntryId {
    type Error = std::num::ParseIntError;
    fn try_from(value: String) -> std::result::Result<Self, Self::Error> {
        value.parse().map(EntryId)
    }
}

impl From<EntryId> for String {
    fn from(id: EntryId) -> Self {
        id.0.to_string()
    }
}

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactEntry {
    pub id: EntryId,
    pub fact: String,
    pub history: FactHistory,
    pub provenance: Vec<String>,
}

impl FactEntry {
    pub fn truth_at(&self, ts: &Timestamp) -> Truth {
        self.history.truth_at(ts)
    }

    pub fn is_currently_true(&self) -> bool {
        self.history.latest_value() == Some(TruthValue::True)
    }

    fn touch(&mut self, doc_id: &str) {
        if !self.provenance.iter().any(|d| d == doc_id) {
            self.provenance.push(doc_id.to_string());
        }
    }

    fn append(&mut self, ts: &Timestamp, value: TruthValue) -> Result<()> {
        if let Some((last, _)) = self.history.last() {
            if ts < last {
                return Err(KbError::NonMonotonicTimestamp {
                    id: self.id,
                    last: last.clone(),
                    new: ts.clone(),
                });
            }
        }
        self.history.records.push((ts.clone(), value));
        Ok(())
    }
}

/// Edit applied to a retrieved fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOutcome {
    Reinforce,
    NoChange,
    MakeFalse,
    Rewrite,
}

/// Timestamped input text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub ts: Timestamp,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, ts: Timestamp) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(KbError::EmptyDocument);
        }
        Ok(Self {
            id: id.into(),
            text,
            ts,
            meta: BTreeMap::new(),
        })
    }
}

/// Trim, collapse internal whitespace, case-fold.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// What [`KnowledgeBase::insert_fact`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Insertion {
    Created(EntryId),
    Reinforced(EntryId),
}

impl Insertion {
    pub fn id(self) -> EntryId {
        match self {
            Insertion::Created(id) | Insertion::Reinforced(id) => id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    entries: BTreeMap<EntryId, FactEntry>,
    by_normalized: HashMap<String, EntryId>,
    next_id: u64,
}

#[derive(Serialize, Deserialize)]
struct SnapshotLine {
    id: EntryId,
    fact: String,
    history: Vec<(Timestamp, TruthValue)>,
    provenance: Vec<String>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: EntryId) -> Option<&FactEntry> {
        self.entries.get(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &FactEntry> {
        self.entries.values()
    }

    pub fn lookup(&self, fact: &str) -> Option<EntryId> {
        self.by_normalized.get(&normalize(fact)).copied()
    }

    /// Facts whose latest record is `True`.
    pub fn true_facts(&self) -> impl Iterator<Item = &FactEntry> {
        self.entries.values().filter(|e| e.is_currently_true())
    }

    /// Adds a fact as true at `ts`, or reinforces the entry that already holds
    /// the same normalized string.
    pub fn insert_fact(&mut self, fact: &str, ts: &Timestamp, doc_id: &str) -> Result<Insertion> {
        let key = normalize(fact);
        if key.is_empty() {
            return Err(KbError::EmptyFact);
        }
        if let Some(&id) = self.by_normalized.get(&key) {
            let entry = self.entries.get_mut(&id).expect("index consistent");
            entry.append(ts, TruthValue::True)?;
            entry.touch(doc_id);
            return Ok(Insertion::Reinforced(id));
        }
        let id = EntryId(self.next_id);
        self.next_id += 1;
        let entry = FactEntry {
            id,
            fact: fact.trim().to_string(),
            history: FactHistory {
                records: vec![(ts.clone(), TruthValue::True)],
            },
            provenance: vec![doc_id.to_string()],
        };
        self.entries.insert(id, entry);
        self.by_normalized.insert(key, id);
        Ok(Insertion::Created(id))
    }

    /// Applies one edit outcome. Returns the ids whose state changed; for a
    /// rewrite that is the old id followed by the rewritten entry's id.
    pub fn apply_outcome(
        &mut self,
        id: EntryId,
        outcome: UpdateOutcome,
        ts: &Timestamp,
        rewrite: Option<&str>,
        doc_id: &str,
    ) -> Result<Vec<EntryId>> {
        match (outcome, rewrite) {
            (UpdateOutcome::Rewrite, None) => return Err(KbError::MissingRewriteText),
            (UpdateOutcome::Rewrite, Some(_)) => {}
            (other, Some(_)) => return Err(KbError::UnexpectedRewriteText(other)),
            _ => {}
        }
        let entry = self.entries.get_mut(&id).ok_or(KbError::UnknownEntry(id))?;
        match outcome {
            UpdateOutcome::NoChange => Ok(Vec::new()),
            UpdateOutcome::Reinforce => {
                entry.append(ts, TruthValue::True)?;
                entry.touch(doc_id);
                Ok(vec![id])
            }
            UpdateOutcome::MakeFalse => {
                entry.append(ts, TruthValue::False)?;
                entry.touch(doc_id);
                Ok(vec![id])
            }
            UpdateOutcome::Rewrite => {
                let text = rewrite.expect("checked above");
                if normalize(text).is_empty() {
                    return Err(KbError::EmptyFact);
                }
                entry.append(ts, TruthValue::False)?;
                entry.touch(doc_id);
                let new_id = self.insert_fact(text, ts, doc_id)?.id();
                Ok(vec![id, new_id])
            }
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for e in self.entries.values() {
            let line = SnapshotLine {
                id: e.id,
                fact: e.fact.clone(),
                history: e.history.records.clone(),
                provenance: e.provenance.clone(),
            };
            serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut kb = KnowledgeBase::new();
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let snap: SnapshotLine = serde_json::from_str(&line).map_err(|e| KbError::Snapshot {
                line: line_no,
                message: e.to_string(),
            })?;
            let err = |message: &str| KbError::Snapshot {
                line: line_no,
                message: message.to_string(),
            };
            let key = normalize(&snap.fact);
            if key.is_empty() {
                return Err(err("empty fact"));
            }
            let history = FactHistory {
                records: snap.history,
            };
            if history.records.is_empty() {
                return Err(err("empty history"));
            }
            if !history.is_monotonic() {
                return Err(err("history timestamps decrease"));
            }
            if kb.entries.contains_key(&snap.id) {
                return Err(err("duplicate id"));
            }
            if kb.by_normalized.contains_key(&key) {
                return Err(err("duplicate normalized fact"));
            }
            kb.next_id = kb.next_id.max(snap.id.0 + 1);
            kb.by_normalized.insert(key, snap.id);
            kb.entries.insert(
                snap.id,
                FactEntry {
                    id: snap.id,
                    fact: snap.fact,
                    history,
                    provenance: snap.provenance,
                },
            );
        }
        Ok(kb)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse(s).unwrap()
    }

    #[test]
    fn timestamp_rejects_malformed() {
        for bad in ["2023-1-01", "2023-13-01", "20230101", "2023-02-30", "", "abcd-ef-gh"] {
            assert!(Timestamp::parse(bad).is_err(), "{bad}");
        }
        assert!(ts("2023-01-09") < ts("2023-01-10"));
        assert_eq!(ts("2023-12-28").plus_days(7).as_str(), "2024-01-04");
    }

    #[test]
    fn first_insert_creates_entry() {
        let mut kb = KnowledgeBase::new();
        let ins = kb.insert_fact("Bob works at Google", &ts("2023-01-01"), "d0").unwrap();
        assert!(matches!(ins, Insertion::Created(_)));
        let e = kb.get(ins.id()).unwrap();
        assert_eq!(e.history.records(), &[(ts("2023-01-01"), TruthValue::True)]);
    }

    #[test]
    fn duplicate_insert_reinforces() {
        let mut kb = KnowledgeBase::new();
        let a = kb.insert_fact("Bob works at Google", &ts("2023-01-01"), "d0").unwrap();
        let b = kb.insert_fact("Bob works at Google", &ts("2023-01-08"), "d1").unwrap();
        assert_eq!(a.id(), b.id());
        assert_eq!(kb.len(), 1);
        assert_eq!(
            kb.get(a.id()).unwrap().history.records(),
            &[(ts("2023-01-01"), TruthValue::True), (ts("2023-01-08"), TruthValue::True)]
        );
        assert_eq!(kb.get(a.id()).unwrap().provenance, vec!["d0", "d1"]);
    }

    #[test]
    fn normalized_match_returns_same_id() {
        assert_eq!(normalize("  bob works at google "), normalize("Bob works at Google"));
        let mut kb = KnowledgeBase::new();
        let a = kb.insert_fact("Bob works at Google", &ts("2023-01-01"), "d0").unwrap();
        let b = kb.insert_fact("  bob works\tat google ", &ts("2023-01-02"), "d1").unwrap();
        assert_eq!(a.id(), b.id());
        assert_eq!(kb.get(a.id()).unwrap().fact, "Bob works at Google");
    }

    #[test]
    fn empty_fact_rejected() {
        let mut kb = KnowledgeBase::new();
        assert!(matches!(
            kb.insert_fact(" \n\t", &ts("2023-01-01"), "d0"),
            Err(KbError::EmptyFact)
        ));
    }

    #[test]
    fn make_false_appends() {
        let mut kb = KnowledgeBase::new();
        let id = kb.insert_fact("Mary works in a warehouse", &ts("2023-01-01"), "d0").unwrap().id();
        kb.apply_outcome(id, UpdateOutcome::MakeFalse, &ts("2023-02-01"), None, "d1").unwrap();
        assert_eq!(
            kb.get(id).unwrap().history.records(),
            &[(ts("2023-01-01"), TruthValue::True), (ts("2023-02-01"), TruthValue::False)]
        );
    }

    #[test]
    fn rewrite_invalidates_and_inserts() {
        let mut kb = KnowledgeBase::new();
        let t0 = ts("2023-01-01");
        let t1 = ts("2023-02-01");
        let old = kb.insert_fact("Mary and Bob work at UPS", &t0, "d0").unwrap().id();
        let ids = kb
            .apply_outcome(old, UpdateOutcome::Rewrite, &t1, Some("Bob works at UPS"), "d1")
            .unwrap();
        assert_eq!(ids.len(), 2);
        assert_eq!(ids[0], old);
        let new = ids[1];
        assert_eq!(kb.get(old).unwrap().truth_at(&t1), Truth::False);
        assert_eq!(kb.get(new).unwrap().truth_at(&t1), Truth::True);
        assert_eq!(kb.get(new).unwrap().fact, "Bob works at UPS");
    }

    #[test]
    fn rewrite_onto_existing_fact_reinforces() {
        let mut kb = KnowledgeBase::new();
        let t0 = ts("2023-01-01");
        let a = kb.insert_fact("Bob works at UPS", &t0, "d0").unwrap().id();
        let b = kb.insert_fact("Mary and Bob work at UPS", &t0, "d0").unwrap().id();
        let ids = kb
            .apply_outcome(b, UpdateOutcome::Rewrite, &ts("2023-01-05"), Some("bob works at ups"), "d1")
            .unwrap();
        assert_eq!(ids, vec![b, a]);
        assert_eq!(kb.len(), 2);
        assert_eq!(kb.get(a).unwrap().history.records().len(), 2);
    }

    #[test]
    fn reinforce_before_last_record_errors() {
        let mut kb = KnowledgeBase::new();
        let id = kb.insert_fact("x", &ts("2023-03-01"), "d0").unwrap().id();
        let err = kb
            .apply_outcome(id, UpdateOutcome::Reinforce, &ts("2023-02-01"), None, "d1")
            .unwrap_err();
        assert!(matches!(err, KbError::NonMonotonicTimestamp { .. }));
    }

    #[test]
    fn outcome_argument_errors() {
        let mut kb = KnowledgeBase::new();
        let t = ts("2023-03-01");
        let id = kb.insert_fact("x", &t, "d0").unwrap().id();
        assert!(matches!(
            kb.apply_outcome(id, UpdateOutcome::Rewrite, &t, None, "d"),
            Err(KbError::MissingRewriteText)
        ));
        assert!(matches!(
            kb.apply_outcome(id, UpdateOutcome::MakeFalse, &t, Some("y"), "d"),
            Err(KbError::UnexpectedRewriteText(_))
        ));
        assert!(matches!(
            kb.apply_outcome(EntryId(99), UpdateOutcome::NoChange, &t, None, "d"),
            Err(KbError::UnknownEntry(_))
        ));
    }

    #[test]
    fn no_change_leaves_snapshot_identical() {
        let mut kb = KnowledgeBase::new();
        let t = ts("2023-03-01");
        let id = kb.insert_fact("x", &t, "d0").unwrap().id();
        let before = kb.to_jsonl_string();
        kb.apply_outcome(id, UpdateOutcome::NoChange, &ts("2023-04-01"), None, "d9").unwrap();
        assert_eq!(before, kb.to_jsonl_string());
    }

    #[test]
    fn truth_at_examples() {
        let t0 = ts("2023-01-01");
        let t1 = ts("2023-02-01");
        let t2 = ts("2023-03-01");
        let mut kb = KnowledgeBase::new();
        let id = kb.insert_fact("f", &t0, "d").unwrap().id();
        assert_eq!(kb.get(id).unwrap().truth_at(&ts("2022-12-31")), Truth::Unknown);
        kb.apply_outcome(id, UpdateOutcome::MakeFalse, &t1, None, "d").unwrap();
        assert_eq!(kb.get(id).unwrap().truth_at(&t1), Truth::False);
        kb.apply_outcome(id, UpdateOutcome::Reinforce, &t2, None, "d").unwrap();
        let e = kb.get(id).unwrap();
        // linear scan oracle
        let scan = |q: &Timestamp| {
            let mut v = Truth::Unknown;
            for (t, val) in e.history.records() {
                if t <= q {
                    v = (*val).into();
                }
            }
            v
        };
        let mid = ts("2023-02-15");
        assert_eq!(scan(&mid), Truth::False);
        assert_eq!(e.truth_at(&mid), scan(&mid));
        assert_eq!(e.truth_at(&t2), Truth::True);
    }

    #[test]
    fn same_timestamp_later_append_wins() {
        let t = ts("2023-01-01");
        let mut kb = KnowledgeBase::new();
        let id = kb.insert_fact("f", &t, "d").unwrap().id();
        kb.apply_outcome(id, UpdateOutcome::MakeFalse, &t, None, "d").unwrap();
        assert_eq!(kb.get(id).unwrap().truth_at(&t), Truth::False);
    }

    #[test]
    fn load_rejects_non_monotonic_history() {
        let line = r#"{"id":"0","fact":"f","history":[["2023-02-01","true"],["2023-01-01","false"]],"provenance":[]}"#;
        let err = KnowledgeBase::read_jsonl(line.as_bytes()).unwrap_err();
        assert!(matches!(err, KbError::Snapshot { line: 1, .. }));
    }

    #[test]
    fn snapshot_format_matches_contract() {
        let mut kb = KnowledgeBase::new();
        kb.insert_fact("Bob works at UPS", &ts("2023-01-01"), "d0").unwrap();
        assert_eq!(
            kb.to_jsonl_string(),
            "{\"id\":\"0\",\"fact\":\"Bob works at UPS\",\"history\":[[\"2023-01-01\",\"true\"]],\"provenance\":[\"d0\"]}\n"
        );
    }

    #[test]
    fn loaded_kb_continues_id_sequence() {
        let mut kb = KnowledgeBase::new();
        kb.insert_fact("a", &ts("2023-01-01"), "d").unwrap();
        kb.insert_fact("b", &ts("2023-01-01"), "d").unwrap();
        let mut loaded = KnowledgeBase::read_jsonl(kb.to_jsonl_string().as_bytes()).unwrap();
        assert_eq!(loaded, kb);
        let id = loaded.insert_fact("c", &ts("2023-01-02"), "d").unwrap().id();
        assert_eq!(id, EntryId(2));
    }
}
