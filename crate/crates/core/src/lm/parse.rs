//! Parsers for model completions. Each is total over arbitrary text: bad
//! input yields a fallback or a typed error, never a panic.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::kb::UpdateOutcome;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no answer found in completion")]
    NoAnswerFound,
}

/// Verdict from the first update pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Reinforce,
    NoChange,
    MakeFalse,
}

impl From<Classification> for UpdateOutcome {
    fn from(c: Classification) -> Self {
        match c {
            Classification::Reinforce => UpdateOutcome::Reinforce,
            Classification::NoChange => UpdateOutcome::NoChange,
            Classification::MakeFalse => UpdateOutcome::MakeFalse,
        }
    }
}

fn classification_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)answer:\s*(reinforce|make\s*-?\s*false|no\s*-?\s*change)").expect("static regex")
    })
}

/// Last `Answer: ...` verdict in the completion. Unparseable text falls back
/// to `NoChange` and bumps `failures`.
pub fn parse_classification(text: &str, failures: &AtomicUsize) -> Classification {
    let Some(m) = classification_re().captures_iter(text).last() else {
        failures.fetch_add(1, Ordering::Relaxed);
        log::warn!("unparseable classification, treating as no change");
        return Classification::NoChange;
    };
    let verdict = m[1].to_lowercase();
    if verdict.starts_with("reinforce") {
        Classification::Reinforce
    } else if verdict.starts_with("make") {
        Classification::MakeFalse
    } else {
        Classification::NoChange
    }
}

fn strip_quotes(s: &str) -> &str {
    s.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`').trim()
}

fn rewrite_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(no rewrite possible)|rewrite:").expect("static regex"))
}

/// Text after the last `rewrite:` marker, or `None` when the model declined.
pub fn parse_rewrite(text: &str) -> Option<String> {
    let last = rewrite_re().captures_iter(text).last()?;
    if last.get(1).is_some() {
        return None;
    }
    let rest = &text[last.get(0)?.end()..];
    let line = rest.lines().map(str::trim).find(|l| !l.is_empty())?;
    let fact = strip_quotes(line);
    (!fact.is_empty()).then(|| fact.to_string())
}

fn bullet_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*•]+|\d+[.)])\s*").expect("static regex"))
}

/// One fact per line; bullets and list numbering are stripped.
pub fn parse_fact_list(text: &str) -> Vec<String> {
    if text.to_lowercase().contains("no new facts") {
        return Vec::new();
    }
    text.lines()
        .map(|l| bullet_re().replace(l, "").trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

/// A question's answer: one choice, or a set of items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Single(String),
    List(Vec<String>),
}

impl Answer {
    /// Exact match after normalization; lists compare as sets.
    pub fn matches(&self, other: &Answer) -> bool {
        match (self, other) {
            (Answer::Single(a), Answer::Single(b)) => normalize_answer(a) == normalize_answer(b),
            (Answer::List(a), Answer::List(b)) => normalized_set(a) == normalized_set(b),
            _ => false,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Single(s) => f.write_str(s),
            Answer::List(items) => f.write_str(&serde_json::to_string(items).map_err(|_| fmt::Error)?),
        }
    }
}

fn normalized_set(items: &[String]) -> BTreeSet<String> {
    items.iter().map(|s| normalize_answer(s)).collect()
}

/// Lowercase, collapse whitespace, drop surrounding punctuation and quotes.
pub fn normalize_answer(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '?' | '"' | '\'' | '`' | '*'))
        .trim()
        .to_string()
}

fn is_boundary(c: Option<char>) -> bool {
    c.is_none_or(|c| !c.is_alphanumeric())
}

/// End offset of the last word-bounded occurrence of `needle` in `hay`.
fn last_bounded_end(hay: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let mut best = None;
    let mut from = 0;
    while let Some(pos) = hay[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        if is_boundary(hay[..start].chars().next_back()) && is_boundary(hay[end..].chars().next()) {
            best = Some(end);
        }
        from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
    }
    best
}

/// Choice mode: the choice mentioned last wins; at equal end position the
/// longer choice wins, so "New York" beats "York".
pub fn parse_choice(text: &str, choices: &[String]) -> Result<Answer, ParseError> {
    let hay = text.to_lowercase();
    choices
        .iter()
        .filter_map(|c| {
            let n = normalize_answer(c);
            last_bounded_end(&hay, &n).map(|end| (end, n.len(), c))
        })
        .max_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)))
        .map(|(_, _, c)| Answer::Single(c.clone()))
        .ok_or(ParseError::NoAnswerFound)
}

/// List mode: the last bracketed list, items matched to `choices`.
/// Items that match no choice are dropped.
pub fn parse_list(text: &str, choices: &[String]) -> Result<Answer, ParseError> {
    let close = text.rfind(']').ok_or(ParseError::NoAnswerFound)?;
    let open = text[..close].rfind('[').ok_or(ParseError::NoAnswerFound)?;
    let inner = &text[open..=close];
    let raw: Vec<String> = serde_json::from_str(inner).unwrap_or_else(|_| {
        inner[1..inner.len() - 1]
            .split(',')
            .map(|s| strip_quotes(s).to_string())
            .filter(|s| !s.is_empty())
            .collect()
    });
    let mut out = Vec::new();
    for item in raw {
        let n = normalize_answer(&item);
        match choices.iter().find(|c| normalize_answer(c) == n) {
            Some(c) if !out.contains(c) => out.push(c.clone()),
            Some(_) => {}
            None => log::debug!("list item {item:?} matches no choice"),
        }
    }
    Ok(Answer::List(out))
}

pub fn parse_answer(text: &str, choices: &[String], list: bool) -> Result<Answer, ParseError> {
    if list {
        parse_list(text, choices)
    } else {
        parse_choice(text, choices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn classification_takes_last_answer() {
        let f = AtomicUsize::new(0);
        assert_eq!(
            parse_classification("The input says he left. Answer: Make False", &f),
            Classification::MakeFalse
        );
        assert_eq!(
            parse_classification("Answer: Reinforce ... actually Answer: No Change", &f),
            Classification::NoChange
        );
        assert_eq!(parse_classification("answer: reinforce.", &f), Classification::Reinforce);
        assert_eq!(parse_classification("Answer: make-false", &f), Classification::MakeFalse);
        assert_eq!(f.load(Ordering::Relaxed), 0);
        assert_eq!(parse_classification("I am unsure", &f), Classification::NoChange);
        assert_eq!(f.load(Ordering::Relaxed), 1);
    }

    #[test]
    fn rewrite_examples() {
        assert_eq!(
            parse_rewrite("Reasoning...\nrewrite: Bob works at Acme").as_deref(),
            Some("Bob works at Acme")
        );
        assert_eq!(parse_rewrite("Rewrite: \"Bob is married to Ann\""), Some("Bob is married to Ann".into()));
        assert_eq!(parse_rewrite("no rewrite possible"), None);
        assert_eq!(parse_rewrite("rewrite: x\nActually, no rewrite possible"), None);
        assert_eq!(parse_rewrite("Nothing useful"), None);
        assert_eq!(parse_rewrite("rewrite:"), None);
        assert_eq!(parse_rewrite("rewrite:\n  Bob is 40\nmore"), Some("Bob is 40".into()));
    }

    #[test]
    fn fact_list_examples() {
        assert_eq!(parse_fact_list("No new facts."), Vec::<String>::new());
        assert_eq!(
            parse_fact_list("- Bob works at Acme\n2. Ann is a chef\n\n* Ann lives in Paris\n3) X"),
            s(&["Bob works at Acme", "Ann is a chef", "Ann lives in Paris", "X"])
        );
    }

    #[test]
    fn choice_examples() {
        let choices = s(&["York", "New York", "Paris", "none"]);
        assert_eq!(
            parse_choice("It was Paris, but now New York.", &choices).unwrap(),
            Answer::Single("New York".into())
        );
        assert_eq!(
            parse_choice("Answer: Paris", &choices).unwrap(),
            Answer::Single("Paris".into())
        );
        assert_eq!(parse_choice("Parisian food", &choices), Err(ParseError::NoAnswerFound));
        let money = s(&["$80k", "$90k"]);
        assert_eq!(parse_choice("salary is $90k.", &money).unwrap(), Answer::Single("$90k".into()));
    }

    #[test]
    fn list_examples() {
        let choices = s(&["Ann", "Bob", "Cy"]);
        assert_eq!(
            parse_list("Reasoning [x]. Final: [\"ann\", \"Cy\", \"Zed\"]", &choices).unwrap(),
            Answer::List(s(&["Ann", "Cy"]))
        );
        assert_eq!(parse_list("[Bob, 'Ann']", &choices).unwrap(), Answer::List(s(&["Bob", "Ann"])));
        assert_eq!(parse_list("[]", &choices).unwrap(), Answer::List(vec![]));
        assert_eq!(parse_list("no list", &choices), Err(ParseError::NoAnswerFound));
    }

    #[test]
    fn answer_matching() {
        assert!(Answer::Single("New York.".into()).matches(&Answer::Single("new  york".into())));
        assert!(Answer::List(s(&["b", "A"])).matches(&Answer::List(s(&["a", "B"]))));
        assert!(!Answer::List(s(&["a"])).matches(&Answer::Single("a".into())));
    }

    proptest! {
        #[test]
        fn parsers_total(text in "\\PC{0,200}") {
            let f = AtomicUsize::new(0);
            let _ = parse_classification(&text, &f);
            let _ = parse_rewrite(&text);
            let _ = parse_fact_list(&text);
            let choices = s(&["a", "b c", "none"]);
            let _ = parse_choice(&text, &choices);
            let _ = parse_list(&text, &choices);
        }

        #[test]
        fn rewrite_roundtrip(fact in "[A-Za-z][A-Za-z0-9 ]{0,40}[A-Za-z0-9]") {
            let out = parse_rewrite(&format!("Some reasoning.\nrewrite: {fact}"));
            prop_assert_eq!(out, Some(fact.trim().to_string()));
        }
    }
}
