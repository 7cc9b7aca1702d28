//! End-to-end behaviour of the edit pipeline against scripted providers.

use std::sync::{Arc, Mutex};

use erase::data::conversation::{build_conversation, HopMode};
use erase::data::oracle::GroundTruthOracle;
use erase::pipeline::{EraseConfig, EraseSystem, MutationOp, PipelineError};
use erase::world::fact_sentence;
use erase::{Document, HashEmbedder, KnowledgeBase, OracleProvider, Timestamp, TruthValue};

fn ts(s: &str) -> Timestamp {
    Timestamp::parse(s).unwrap()
}

fn fact_in(prompt: &str) -> &str {
    let start = prompt.find("The fact \"").unwrap() + "The fact \"".len();
    let end = prompt[start..].find('"').unwrap() + start;
    &prompt[start..end]
}

fn is_classification(p: &str) -> bool {
    p.contains("\" was previously true. In light")
}

fn is_rewrite(p: &str) -> bool {
    p.contains("\" was previously true but no longer.")
}

/// A system over `facts` (all true at 2023-01-01) whose provider answers
/// with `respond`.
fn seeded<F>(facts: &[&str], respond: F) -> EraseSystem
where
    F: Fn(&str) -> Option<String> + Send + Sync + 'static,
{
    let mut kb = KnowledgeBase::new();
    for f in facts {
        kb.insert_fact(f, &ts("2023-01-01"), "seed").unwrap();
    }
    let provider = Arc::new(OracleProvider::from_fn(4096, respond));
    EraseSystem::from_kb(kb, Arc::new(HashEmbedder::default()), provider, EraseConfig::default()).unwrap()
}

fn truth(sys: &EraseSystem, fact: &str) -> Option<TruthValue> {
    let id = sys.kb().lookup(fact)?;
    sys.kb().get(id)?.history.latest_value()
}

#[test]
fn empty_kb_only_adds() {
    let provider = Arc::new(OracleProvider::from_fn(4096, |p| {
        p.contains("Extract all facts").then(|| "Bob works at Google\nBob lives in Paris".to_string())
    }));
    let mut sys = EraseSystem::new(Arc::new(HashEmbedder::default()), provider, EraseConfig::default());
    let doc = Document::new("d1", "Bob works at Google and lives in Paris.", ts("2023-02-01")).unwrap();
    let r = sys.ingest_document(&doc).unwrap();
    assert_eq!((r.retrieved, r.outcomes.total(), r.facts_added), (0, 0, 2));
    assert_eq!(sys.kb().true_facts().count(), 2);
}

#[test]
fn warehouse_classifications() {
    let fact = "Mary works in a warehouse";
    let cases = [
        ("Mary came back from her job at UPS where she loaded and sorted packages all day", Some(TruthValue::True), 2),
        ("Mary took a jog in the park", Some(TruthValue::True), 1),
        ("Mary got fired from her warehouse job", Some(TruthValue::False), 2),
    ];
    for (i, (text, want, records)) in cases.into_iter().enumerate() {
        let mut sys = seeded(&[fact], |p| {
            if is_classification(p) {
                let verdict = if p.contains("loaded and sorted") {
                    "Reinforce"
                } else if p.contains("fired") {
                    "Make False"
                } else {
                    "No Change"
                };
                Some(format!("Reasoning. Answer: {verdict}"))
            } else if is_rewrite(p) {
                Some("no rewrite possible".into())
            } else {
                Some("No new facts.".into())
            }
        });
        let doc = Document::new(format!("d{i}"), text, ts("2023-02-01")).unwrap();
        let r = sys.ingest_document(&doc).unwrap();
        assert_eq!(r.outcomes.total(), r.retrieved);
        assert_eq!(truth(&sys, fact), want, "{text}");
        let id = sys.kb().lookup(fact).unwrap();
        assert_eq!(sys.kb().get(id).unwrap().history.records().len(), records, "{text}");
    }
}

#[test]
fn partial_falsehood_is_rewritten() {
    let mut sys = seeded(&["Mary and Bob work at UPS"], |p| {
        Some(if is_classification(p) {
            "Answer: Make False".into()
        } else if is_rewrite(p) {
            "Mary left, Bob stayed. rewrite: Bob works at UPS".into()
        } else {
            "No new facts.".into()
        })
    });
    let doc = Document::new("d1", "Mary got fired from UPS", ts("2023-03-01")).unwrap();
    let r = sys.ingest_document(&doc).unwrap();
    assert_eq!(r.rewrites_applied, 1);
    assert_eq!(truth(&sys, "Mary and Bob work at UPS"), Some(TruthValue::False));
    assert_eq!(truth(&sys, "Bob works at UPS"), Some(TruthValue::True));
    let ops: Vec<MutationOp> = sys.mutations().iter().map(|m| m.op).collect();
    assert_eq!(ops, vec![MutationOp::Rewrite]);
    // The rewritten fact is retrievable for later edits.
    let c = sys.retrieve_candidates("Bob works at UPS", 10).unwrap();
    assert!(c.entries.iter().any(|(e, _)| e.fact == "Bob works at UPS"));
}

#[test]
fn rewrite_conditions_on_still_true_facts() {
    let mut sys = seeded(&["Mary is coworkers with Bob", "Quinn works at Amazon"], |p| {
        Some(if is_classification(p) {
            if fact_in(p).contains("coworkers") {
                "Answer: Make False".into()
            } else {
                "Answer: No Change".into()
            }
        } else if is_rewrite(p) {
            if p.contains("Other True Facts at 2023-03-01: Quinn works at Amazon\n") {
                "rewrite: Mary is coworkers with Quinn".into()
            } else {
                "no rewrite possible".into()
            }
        } else {
            "No new facts.".into()
        })
    });
    let doc = Document::new("d1", "Mary changed workplaces to Amazon", ts("2023-03-01")).unwrap();
    sys.ingest_document(&doc).unwrap();
    assert_eq!(truth(&sys, "Mary is coworkers with Quinn"), Some(TruthValue::True));
    assert_eq!(truth(&sys, "Mary is coworkers with Bob"), Some(TruthValue::False));
}

#[test]
fn no_rewrite_only_falsifies() {
    let mut sys = seeded(&["Mary works in a warehouse"], |p| {
        Some(if is_classification(p) {
            "Answer: Make False".into()
        } else if is_rewrite(p) {
            "No rewrite possible".into()
        } else {
            "No new facts.".into()
        })
    });
    let doc = Document::new("d1", "Mary got fired from her warehouse job", ts("2023-03-01")).unwrap();
    sys.ingest_document(&doc).unwrap();
    assert_eq!(sys.kb().len(), 1);
    assert_eq!(truth(&sys, "Mary works in a warehouse"), Some(TruthValue::False));
    // Stale facts are never edit candidates again.
    assert!(sys.retrieve_candidates("Mary warehouse", 10).unwrap().entries.is_empty());
}

#[test]
fn classification_finishes_before_any_rewrite() {
    let log: Arc<Mutex<Vec<char>>> = Arc::default();
    let seen = log.clone();
    let facts = ["Ann likes tea", "Ann likes coffee", "Ann lives in Rome", "Ann owns a cat"];
    let mut sys = seeded(&facts, move |p| {
        let kind = if is_classification(p) {
            'c'
        } else if is_rewrite(p) {
            'r'
        } else {
            'e'
        };
        seen.lock().unwrap().push(kind);
        Some(match kind {
            'c' if fact_in(p).contains("likes") => "Answer: Make False".into(),
            'c' if fact_in(p).contains("cat") => "Answer: Reinforce".into(),
            'c' => "Answer: No Change".into(),
            'r' => format!("rewrite: {} no more", fact_in(p)),
            _ => "No new facts.".into(),
        })
    });
    let doc = Document::new("d1", "Ann gave up tea and coffee and still owns a cat in Rome", ts("2023-03-01")).unwrap();
    let r = sys.ingest_document(&doc).unwrap();
    assert_eq!((r.outcomes.make_false, r.outcomes.reinforce, r.outcomes.no_change), (2, 1, 1));
    let calls = log.lock().unwrap().clone();
    let last_c = calls.iter().rposition(|&k| k == 'c').unwrap();
    let first_r = calls.iter().position(|&k| k == 'r').unwrap();
    assert!(last_c < first_r, "{calls:?}");
    let ops: Vec<MutationOp> = sys.mutations().iter().map(|m| m.op).collect();
    let first_edit = ops.iter().position(|o| *o == MutationOp::Rewrite).unwrap();
    assert!(ops[..first_edit].iter().all(|o| *o == MutationOp::Reinforce));
}

#[test]
fn no_change_document_is_idempotent() {
    let mut sys = seeded(&["Ann likes tea", "Ann lives in Rome"], |p| {
        Some(if is_classification(p) { "Answer: No Change" } else { "No new facts." }.into())
    });
    let before = sys.kb().to_jsonl_string();
    let doc = Document::new("d1", "Ann went for a walk", ts("2023-03-01")).unwrap();
    sys.ingest_document(&doc).unwrap();
    assert_eq!(sys.kb().to_jsonl_string(), before);
    assert!(sys.mutations().is_empty());
}

#[test]
fn duplicate_extraction_reinforces() {
    let mut sys = seeded(&["Ann likes tea"], |p| {
        Some(if is_classification(p) { "Answer: No Change" } else { "Ann likes tea\nAnn likes jam" }.into())
    });
    let doc = Document::new("d1", "Ann still likes tea, and jam too", ts("2023-03-01")).unwrap();
    let r = sys.ingest_document(&doc).unwrap();
    assert_eq!(sys.kb().len(), 2);
    assert_eq!(r.facts_added, 1);
    let id = sys.kb().lookup("Ann likes tea").unwrap();
    assert_eq!(sys.kb().get(id).unwrap().history.records().len(), 2);
}

#[test]
fn out_of_order_document_rejected() {
    let mut sys = seeded(&[], |_| Some("No new facts.".into()));
    sys.ingest_document(&Document::new("d1", "x", ts("2023-03-01")).unwrap()).unwrap();
    let err = sys.ingest_document(&Document::new("d0", "y", ts("2023-02-01")).unwrap()).unwrap_err();
    assert!(matches!(err, PipelineError::OutOfOrderDocument { .. }));
}

#[test]
fn candidate_retrieval_limits() {
    let mut sys = seeded(&["Ann likes tea", "Ann likes coffee"], |p| {
        Some(if is_classification(p) && fact_in(p).contains("coffee") {
            "Answer: Make False"
        } else if is_classification(p) {
            "Answer: No Change"
        } else if is_rewrite(p) {
            "no rewrite possible"
        } else {
            "No new facts."
        }
        .into())
    });
    assert!(sys.retrieve_candidates("Ann likes tea", 0).unwrap().entries.is_empty());
    sys.ingest_document(&Document::new("d1", "Ann quit coffee", ts("2023-03-01")).unwrap()).unwrap();
    let c = sys.retrieve_candidates("Ann likes coffee and tea", 10).unwrap();
    let facts: Vec<&str> = c.entries.iter().map(|(e, _)| e.fact.as_str()).collect();
    assert_eq!(facts, vec!["Ann likes tea"]);
}

#[test]
fn empty_kb_still_answers() {
    let provider = Arc::new(OracleProvider::from_fn(4096, |p| {
        assert!(p.contains("***BEGIN STATEMENTS***\n***END STATEMENTS***"));
        Some("No statements, guessing. Answer: Paris".into())
    }));
    let sys = EraseSystem::new(Arc::new(HashEmbedder::default()), provider, EraseConfig::default());
    let choices = vec!["Paris".to_string(), "Rome".to_string()];
    let p = sys.answer_question("Where does Bob live?", &ts("2023-03-01"), &choices, false).unwrap();
    assert_eq!(p.answer.unwrap().to_string(), "Paris");
    assert_eq!(p.statements, 0);
}

#[test]
fn ground_truth_job_change_updates_downstream_facts() {
    let conv = build_conversation(5, HopMode::SingleHop);
    let provider = Arc::new(GroundTruthOracle::new(&conv).provider(2048));
    let config = EraseConfig {
        m: usize::MAX,
        ..EraseConfig::default()
    };
    let mut sys = EraseSystem::new(Arc::new(HashEmbedder::default()), provider, config);
    let ds = conv.dataset();
    let i = conv.chunks.iter().position(|c| c.transition.is_some()).unwrap();
    for d in &ds.documents[..=i] {
        sys.ingest_document(d).unwrap();
    }
    for t in conv.states[i - 1].relations().difference(conv.states[i].relations()) {
        assert_eq!(truth(&sys, &fact_sentence(t)), Some(TruthValue::False), "{t:?}");
    }
    for t in conv.states[i].relations().difference(conv.states[i - 1].relations()) {
        assert_eq!(truth(&sys, &fact_sentence(t)), Some(TruthValue::True), "{t:?}");
    }
}

#[test]
fn ingest_is_deterministic() {
    let run = || {
        let conv = build_conversation(9, HopMode::SingleHop);
        let provider = Arc::new(GroundTruthOracle::new(&conv).provider(2048));
        let mut sys = EraseSystem::new(Arc::new(HashEmbedder::default()), provider, EraseConfig::default());
        let reports: Vec<_> = conv.dataset().documents.iter().map(|d| sys.ingest_document(d).unwrap()).collect();
        let mut log = Vec::new();
        sys.write_mutations(&mut log).unwrap();
        (reports, sys.kb().to_jsonl_string(), log)
    };
    assert_eq!(run(), run());
}
