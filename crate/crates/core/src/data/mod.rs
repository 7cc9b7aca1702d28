//! Evaluable datasets: timestamped documents plus questions whose answers
//! change over time.
//!
//! Both domains share one JSONL layout. A line with an `"answers"` key is a
//! question, anything else is a document:
//!
//! ```text
//! {"id":"d0","text":"...","ts":"2023-01-01","meta":{}}
//! {"id":"q0","text":"Who ...?","kind":"multiple_choice","choices":["a","b"],"answers":[["a","2023-01-01"],["b","2023-02-01"]]}
//! ```

pub mod conversation;
pub mod oracle;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::kb::{Document, Timestamp};
use crate::lm::parse::Answer;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("dataset invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    MultipleChoice,
    YesNo,
    #[serde(alias = "list_answer")]
    List,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    #[serde(default, rename = "template", skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
    pub text: String,
    pub kind: QuestionKind,
    #[serde(rename = "choices")]
    pub choice_pool: Vec<String>,
    #[serde(rename = "answers")]
    pub answer_history: Vec<(Answer, Timestamp)>,
}

impl Question {
    pub fn is_list(&self) -> bool {
        self.kind == QuestionKind::List
    }

    /// Gold answer in effect at `ts`, or `None` before the first entry.
    pub fn answer_at(&self, ts: &Timestamp) -> Option<&Answer> {
        self.answer_history
            .iter()
            .take_while(|(_, start)| start <= ts)
            .last()
            .map(|(a, _)| a)
    }

    pub fn first_ts(&self) -> Option<&Timestamp> {
        self.answer_history.first().map(|(_, t)| t)
    }

    /// Answer changes that happened at or before `ts`.
    pub fn updates_before(&self, ts: &Timestamp) -> usize {
        self.answer_history
            .iter()
            .filter(|(_, start)| start <= ts)
            .count()
            .saturating_sub(1)
    }

    /// Timestamps at which the answer changed.
    pub fn change_times(&self) -> impl Iterator<Item = &Timestamp> {
        self.answer_history.iter().skip(1).map(|(_, t)| t)
    }

    fn validate(&self) -> Result<(), String> {
        if self.answer_history.is_empty() {
            return Err(format!("question {} has no answers", self.id));
        }
        if self.answer_history.windows(2).any(|w| w[0].1 >= w[1].1) {
            return Err(format!("question {} history not strictly increasing", self.id));
        }
        for (a, _) in &self.answer_history {
            let ok = match (self.kind, a) {
                (QuestionKind::List, Answer::List(items)) => {
                    self.choice_pool.is_empty() || items.iter().all(|i| self.choice_pool.contains(i))
                }
                (QuestionKind::List, Answer::Single(_)) => false,
                (_, Answer::Single(s)) => self.choice_pool.is_empty() || self.choice_pool.contains(s),
                (_, Answer::List(_)) => false,
            };
            if !ok {
                return Err(format!("question {}: answer {a} not in choices or wrong shape", self.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub id: String,
    pub documents: Vec<Document>,
    pub questions: Vec<Question>,
}

/// Tolerant view of a question line; histories may arrive unsorted.
#[derive(Deserialize)]
struct RawQuestion {
    id: String,
    #[serde(default)]
    template: Option<String>,
    text: String,
    kind: QuestionKind,
    #[serde(default)]
    choices: Vec<String>,
    answers: Vec<(Answer, Timestamp)>,
}

impl Dataset {
    /// `(timestamp, ids of questions whose answer changed then)`, in time
    /// order.
    pub fn change_schedule(&self) -> Vec<(Timestamp, Vec<String>)> {
        let mut by_ts: BTreeMap<Timestamp, Vec<String>> = BTreeMap::new();
        for q in &self.questions {
            for t in q.change_times() {
                by_ts.entry(t.clone()).or_default().push(q.id.clone());
            }
        }
        by_ts.into_iter().collect()
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.documents.windows(2).any(|w| w[0].ts > w[1].ts) {
            return Err(DataError::Invalid("documents not in timestamp order".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for q in &self.questions {
            q.validate().map_err(DataError::Invalid)?;
            if !ids.insert(&q.id) {
                return Err(DataError::Invalid(format!("duplicate question id {}", q.id)));
            }
        }
        // Every change must be explained by a document at or before it.
        if let Some(first) = self.documents.first() {
            for (ts, qs) in self.change_schedule() {
                if ts < first.ts {
                    return Err(DataError::Invalid(format!("changes {qs:?} at {ts} precede every document")));
                }
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for d in &self.documents {
            writeln!(out, "{}", serde_json::to_string(d).expect("document serializes"))?;
        }
        for q in &self.questions {
            writeln!(out, "{}", serde_json::to_string(q).expect("question serializes"))?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut f)?;
        f.flush()
    }

    pub fn read_jsonl<R: BufRead>(id: impl Into<String>, input: R) -> Result<Self, DataError> {
        let mut ds = Dataset {
            id: id.into(),
            ..Default::default()
        };
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let schema = |message: String| DataError::Schema { line: lineno, message };
            let value: Value = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
            if value.get("answers").is_some() {
                let raw: RawQuestion = serde_json::from_value(value).map_err(|e| schema(e.to_string()))?;
                let mut history = raw.answers;
                if history.windows(2).any(|w| w[0].1 > w[1].1) {
                    log::warn!("question {} has an unsorted answer history; sorting", raw.id);
                    history.sort_by(|a, b| a.1.cmp(&b.1));
                }
                ds.questions.push(Question {
                    id: raw.id,
                    template_id: raw.template,
                    text: raw.text,
                    kind: raw.kind,
                    choice_pool: raw.choices,
                    answer_history: history,
                });
            } else {
                let doc: Document = serde_json::from_value(value).map_err(|e| schema(e.to_string()))?;
                if doc.text.trim().is_empty() {
                    return Err(schema(format!("document {} has empty text", doc.id)));
                }
                ds.documents.push(doc);
            }
        }
        ds.documents.sort_by(|a, b| a.ts.cmp(&b.ts));
        ds.validate()?;
        Ok(ds)
    }

    /// Loads a dataset file; its id is the file stem.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_jsonl(id, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{"id":"d1","text":"Second.","ts":"2023-02-01"}
{"id":"d0","text":"First.","ts":"2023-01-01","meta":{"source":"x"}}
{"id":"q0","text":"Who?","kind":"multiple_choice","choices":["a","b"],"answers":[["b","2023-02-01"],["a","2023-01-01"]]}
{"id":"q1","text":"Which?","kind":"list","choices":["x","y"],"answers":[[["x"],"2023-01-01"],[["x","y"],"2023-02-01"]]}
"#;

    #[test]
    fn loads_sorts_and_roundtrips() {
        let ds = Dataset::read_jsonl("s", SAMPLE.as_bytes()).unwrap();
        assert_eq!(ds.documents[0].id, "d0");
        assert_eq!(ds.questions[0].answer_history[0].0, Answer::Single("a".into()));
        let again = Dataset::read_jsonl("s", ds.to_jsonl_string().as_bytes()).unwrap();
        assert_eq!(again, ds);
        assert_eq!(again.to_jsonl_string(), ds.to_jsonl_string());
        let sched = ds.change_schedule();
        assert_eq!(sched.len(), 1);
        assert_eq!(sched[0].1, vec!["q0".to_string(), "q1".to_string()]);
    }

    #[test]
    fn missing_timestamp_is_schema_error() {
        let bad = "{\"id\":\"d0\",\"text\":\"x\",\"ts\":\"2023-01-01\"}\n{\"id\":\"d1\",\"text\":\"y\"}\n";
        match Dataset::read_jsonl("b", bad.as_bytes()) {
            Err(DataError::Schema { line: 2, .. }) => {}
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn answer_lookup_and_updates() {
        let ds = Dataset::read_jsonl("s", SAMPLE.as_bytes()).unwrap();
        let q = &ds.questions[0];
        let t = |s: &str| Timestamp::parse(s).unwrap();
        assert_eq!(q.answer_at(&t("2022-12-31")), None);
        assert_eq!(q.answer_at(&t("2023-01-15")), Some(&Answer::Single("a".into())));
        assert_eq!(q.updates_before(&t("2023-01-15")), 0);
        assert_eq!(q.updates_before(&t("2023-02-01")), 1);
    }
}
