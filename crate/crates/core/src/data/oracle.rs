//! A language-model stand-in that answers every pipeline prompt from the
//! simulator's ground truth for one conversation.
//!
//! Fact strings are mapped back to triples by exact (normalized) match
//! against the sentence renderings of every triple that ever held. Update
//! prompts are answered from the true world state at the prompt's
//! timestamp. Inference prompts are answered from the prompt's statements
//! only, so a system that retrieves stale facts answers with stale values.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use super::conversation::{Conversation, QuestionSpec};
use super::QuestionKind;
use crate::kb::{normalize, Timestamp, TruthValue};
use crate::lm::OracleProvider;
use crate::world::{fact_sentence, Triple, NEGATION_PREFIX};

pub struct GroundTruthOracle {
    /// Normalized sentence to triple.
    sentences: HashMap<String, Triple>,
    /// Sentences sorted longest first, for scanning free text.
    known: Vec<(String, Triple)>,
    timeline: Vec<(Timestamp, HashSet<Triple>)>,
    questions: HashMap<String, QuestionSpec>,
}

fn between<'a>(s: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let a = s.find(start)? + start.len();
    let b = s[a..].find(end)? + a;
    Some(&s[a..b])
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphanumeric() || c == '$')
}

impl GroundTruthOracle {
    pub fn new(conv: &Conversation) -> Self {
        let mut all: BTreeSet<Triple> = BTreeSet::new();
        for s in &conv.states {
            all.extend(s.relations().iter().cloned());
        }
        let mut sentences = HashMap::new();
        let mut known = Vec::new();
        for t in all {
            let s = fact_sentence(&t);
            sentences.insert(normalize(&s), t.clone());
            known.push((s, t));
        }
        known.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        let timeline = conv
            .chunks
            .iter()
            .zip(&conv.states)
            .map(|(c, s)| (c.ts.clone(), s.relations().iter().cloned().collect()))
            .collect();
        let questions = conv
            .specs
            .iter()
            .zip(&conv.questions)
            .map(|(s, q)| (q.text.clone(), s.clone()))
            .collect();
        Self {
            sentences,
            known,
            timeline,
            questions,
        }
    }

    /// An [`OracleProvider`] backed by this oracle.
    pub fn provider(self, context_window: usize) -> OracleProvider {
        let me = Arc::new(self);
        OracleProvider::from_fn(context_window, move |p| me.respond(p))
    }

    fn truth_at(&self, ts: &Timestamp) -> &HashSet<Triple> {
        let i = self.timeline.iter().rposition(|(t, _)| t <= ts).unwrap_or(0);
        &self.timeline[i].1
    }

    fn triple_of(&self, fact: &str) -> Option<&Triple> {
        self.sentences.get(&normalize(fact.trim().trim_end_matches('.')))
    }

    /// Known sentences occurring in `text`, in textual order, each flagged
    /// as asserted (`true`) or negated (`false`).
    fn scan(&self, text: &str) -> Vec<(usize, bool, &Triple)> {
        let mut hits = Vec::new();
        let mut taken: Vec<(usize, usize)> = Vec::new();
        for (s, t) in &self.known {
            let mut from = 0;
            while let Some(pos) = text[from..].find(s.as_str()) {
                let start = from + pos;
                let end = start + s.len();
                from = end;
                let before = text[..start].chars().next_back();
                let after = text[end..].chars().next();
                if is_word_char(before) || is_word_char(after) {
                    continue;
                }
                // A longer sentence already claimed this span.
                if taken.iter().any(|&(a, b)| start < b && a < end) {
                    continue;
                }
                taken.push((start, end));
                let negated = text[..start].ends_with(NEGATION_PREFIX);
                hits.push((start, !negated, t));
            }
        }
        hits.sort_by_key(|h| h.0);
        hits
    }

    pub fn respond(&self, prompt: &str) -> Option<String> {
        if prompt.starts_with("Read the statements/passages below") {
            return self.answer(prompt);
        }
        let ts = Timestamp::parse(between(prompt, "[Input] [Timestamp: ", "]")?).ok()?;
        if let Some(fact) = between(prompt, "\n\nThe fact \"", "\" was previously true but no longer.") {
            return Some(self.rewrite(fact, &ts));
        }
        if let Some(fact) = between(prompt, "\n\nThe fact \"", "\" was previously true. In light") {
            let context = between(prompt, "] ", " [End Input]").unwrap_or("");
            return Some(self.classify(fact, context, &ts));
        }
        if prompt.contains("Extract all facts from the input text") {
            let context = between(prompt, "] ", " [End Input]").unwrap_or("");
            return Some(self.extract(context, &ts));
        }
        None
    }

    fn classify(&self, fact: &str, context: &str, ts: &Timestamp) -> String {
        let Some(t) = self.triple_of(fact) else {
            return "The input does not mention this. Answer: No Change".into();
        };
        if !self.truth_at(ts).contains(t) {
            return "The input implies this no longer holds. Answer: Make False".into();
        }
        let stated = self.scan(context).iter().any(|(_, pos, x)| *pos && *x == t);
        if stated {
            "The input restates this. Answer: Reinforce".into()
        } else {
            "Nothing contradicts it. Answer: No Change".into()
        }
    }

    fn rewrite(&self, fact: &str, ts: &Timestamp) -> String {
        let Some(t) = self.triple_of(fact) else {
            return "no rewrite possible".into();
        };
        if !t.rel.is_single() {
            return "no rewrite possible".into();
        }
        let truth = self.truth_at(ts);
        let mut successors: Vec<&Triple> = truth.iter().filter(|x| x.subj == t.subj && x.rel == t.rel).collect();
        successors.sort();
        match successors.as_slice() {
            [one] => format!("rewrite: {}", fact_sentence(one)),
            _ => "no rewrite possible".into(),
        }
    }

    fn extract(&self, context: &str, ts: &Timestamp) -> String {
        let truth = self.truth_at(ts);
        let mut seen = HashSet::new();
        let lines: Vec<String> = self
            .scan(context)
            .into_iter()
            .filter(|(_, pos, t)| *pos && truth.contains(*t))
            .filter(|(_, _, t)| seen.insert(*t))
            .map(|(_, _, t)| fact_sentence(t))
            .collect();
        if lines.is_empty() {
            "No new facts.".into()
        } else {
            lines.join("\n")
        }
    }

    /// Facts the statements block asserts at `ts`, in order of appearance.
    fn asserted(&self, block: &str, ts: &Timestamp) -> Vec<Triple> {
        let mut order: Vec<Triple> = Vec::new();
        let mut live: HashSet<Triple> = HashSet::new();
        for line in block.lines() {
            let is_history = line.ends_with(')') && (line.contains(" (True at ") || line.contains(" (False at "));
            if !is_history {
                // Passage text, possibly a continuation line.
                let text = match line.strip_prefix("[Timestamp: ") {
                    Some(rest) => rest.split_once("] ").map_or("", |x| x.1),
                    None => line,
                };
                for (_, pos, t) in self.scan(text) {
                    if pos {
                        if live.insert(t.clone()) {
                            order.push(t.clone());
                        }
                    } else {
                        live.remove(t);
                    }
                }
                continue;
            }
            let Some((fact, hist)) = line.rsplit_once(" (") else { continue };
            let Some(t) = self.triple_of(fact) else { continue };
            let mut value = None;
            for rec in hist.trim_end_matches(')').split(", ") {
                let Some((v, at)) = rec.split_once(" at ") else { continue };
                let Ok(at) = Timestamp::parse(at) else { continue };
                if &at <= ts {
                    value = Some(if v == "True" { TruthValue::True } else { TruthValue::False });
                }
            }
            if value == Some(TruthValue::True) {
                if live.insert(t.clone()) {
                    order.push(t.clone());
                }
            } else {
                live.remove(t);
            }
        }
        order.into_iter().filter(|t| live.contains(t)).collect()
    }

    fn answer(&self, prompt: &str) -> Option<String> {
        let marker = "answer the following question at timestep ";
        let ts = Timestamp::parse(between(prompt, marker, "?:\n")?).ok()?;
        let question = between(prompt, "?:\n", "\n\n")?;
        let Some(spec) = self.questions.get(question) else {
            return Some("I do not know.".into());
        };
        let block = between(prompt, "***BEGIN STATEMENTS***\n", "***END STATEMENTS***").unwrap_or("");
        let choices: Vec<String> = prompt
            .rsplit_once(": [")
            .and_then(|(_, rest)| rest.split_once(']'))
            .and_then(|(inner, _)| serde_json::from_str(&format!("[{inner}]")).ok())
            .unwrap_or_default();
        let objs: Vec<String> = self
            .asserted(block, &ts)
            .into_iter()
            .filter(|t| t.subj == spec.subj && t.rel == spec.rel)
            .map(|t| t.obj)
            .collect();
        Some(match spec.kind {
            QuestionKind::YesNo => {
                let yes = spec.object.as_ref().is_some_and(|o| objs.contains(o));
                format!("Answer: {}", if yes { "yes" } else { "no" })
            }
            QuestionKind::List => {
                let mut items: Vec<String> = Vec::new();
                for o in objs {
                    if choices.contains(&o) && !items.contains(&o) {
                        items.push(o);
                    }
                }
                format!("Answer: {}", serde_json::to_string(&items).expect("strings serialize"))
            }
            QuestionKind::MultipleChoice => match objs.into_iter().find(|o| choices.contains(o)) {
                Some(o) => format!("Answer: {o}"),
                None if choices.iter().any(|c| c == "none") => "Answer: none".into(),
                None => "I cannot tell from the statements.".into(),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::conversation::{build_conversation, HopMode};
    use crate::prompts;

    #[test]
    fn update_prompts_follow_ground_truth() {
        let conv = build_conversation(2, HopMode::SingleHop);
        let oracle = GroundTruthOracle::new(&conv);
        let (i, chunk) = conv.chunks.iter().enumerate().find(|(_, c)| c.transition.is_some()).unwrap();
        let before = &conv.states[i - 1];
        let after = &conv.states[i];
        let removed = before.relations().difference(after.relations()).next().unwrap();
        let p = prompts::classification(&chunk.ts, &chunk.text, &fact_sentence(removed));
        assert!(oracle.respond(&p).unwrap().ends_with("Answer: Make False"));
        let kept = before.relations().intersection(after.relations()).next().unwrap();
        let p = prompts::classification(&chunk.ts, &chunk.text, &fact_sentence(kept));
        let r = oracle.respond(&p).unwrap();
        assert!(r.ends_with("Answer: No Change") || r.ends_with("Answer: Reinforce"));
        let p = prompts::extraction(&chunk.ts, &chunk.text);
        let extracted = oracle.respond(&p).unwrap();
        for t in after.relations().difference(before.relations()) {
            assert!(extracted.lines().any(|l| l == fact_sentence(t)), "missing {t:?}");
        }
        assert!(!extracted.contains(&fact_sentence(removed)));
    }

    #[test]
    fn answers_from_histories_only() {
        let conv = build_conversation(4, HopMode::SingleHop);
        let oracle = GroundTruthOracle::new(&conv);
        let (spec, q) = conv
            .specs
            .iter()
            .zip(&conv.questions)
            .find(|(s, _)| s.kind == QuestionKind::MultipleChoice)
            .unwrap();
        let ts = conv.chunks[0].ts.clone();
        let gold = conv.states[0].objects(&spec.subj, spec.rel).into_iter().next().unwrap_or("none".into());
        let t = Triple::new(spec.subj.clone(), spec.rel, gold.clone());
        let line = format!("{} (True at {ts})", fact_sentence(&t));
        let p = prompts::inference(&[line], &ts, &q.text, &q.choice_pool, false);
        assert_eq!(oracle.respond(&p).unwrap(), format!("Answer: {gold}"));
        let p = prompts::inference(&[], &ts, &q.text, &q.choice_pool, false);
        let empty = oracle.respond(&p).unwrap();
        assert!(!empty.ends_with(&format!(": {gold}")) || gold == "none");
    }
}
