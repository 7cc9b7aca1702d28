//! The edit loop: retrieve facts related to a document, classify each
//! against it, rewrite or invalidate the stale ones, then extract and add
//! new facts. Also the question-answering path over the edited store.

use std::io::Write;
use std::sync::atomic::AtomicUsize;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::split_passages;
use crate::embed::{EmbedError, Embedder};
use crate::index::{DenseIndex, IndexError};
use crate::kb::{Document, EntryId, FactEntry, Insertion, KbError, KnowledgeBase, Timestamp, UpdateOutcome};
use crate::lm::parse::{parse_answer, parse_classification, parse_fact_list, parse_rewrite, Answer, Classification};
use crate::lm::{check_budget, complete_many, prompt_budget, estimate_tokens, LmError, LmProvider, LmRequest};
use crate::prompts;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("document {doc_id} at {got} arrived after {last}")]
    OutOfOrderDocument { doc_id: String, last: Timestamp, got: Timestamp },
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("mutation log write failed: {0}")]
    Log(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EraseConfig {
    /// Facts retrieved per document for editing.
    pub m: usize,
    /// Cosine threshold for inference retrieval (strict).
    pub theta: f64,
    /// Drop facts whose latest value is false from inference prompts.
    pub true_only: bool,
    pub max_in_flight: usize,
    pub max_output_tokens: usize,
}

impl Default for EraseConfig {
    fn default() -> Self {
        Self {
            m: 10,
            theta: 0.7,
            true_only: false,
            max_in_flight: crate::lm::DEFAULT_MAX_IN_FLIGHT,
            max_output_tokens: crate::lm::DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    Insert,
    Reinforce,
    MakeFalse,
    Rewrite,
}

/// One line of the mutation audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationRecord {
    pub doc_id: String,
    pub entry_id: EntryId,
    pub op: MutationOp,
    pub ts: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_fact: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_fact: Option<String>,
}

/// Facts retrieved for one document, split by the first-pass verdict.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievedSet {
    pub entries: Vec<(FactEntry, f64)>,
    pub r_true: Vec<EntryId>,
    pub r_false: Vec<EntryId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub reinforce: usize,
    pub no_change: usize,
    pub make_false: usize,
}

impl OutcomeCounts {
    pub fn total(&self) -> usize {
        self.reinforce + self.no_change + self.make_false
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub doc_id: String,
    pub retrieved: usize,
    pub outcomes: OutcomeCounts,
    pub rewrites_applied: usize,
    pub facts_added: usize,
    pub parse_failures: usize,
}

impl IngestReport {
    pub fn absorb(&mut self, other: &IngestReport) {
        self.retrieved += other.retrieved;
        self.outcomes.reinforce += other.outcomes.reinforce;
        self.outcomes.no_change += other.outcomes.no_change;
        self.outcomes.make_false += other.outcomes.make_false;
        self.rewrites_applied += other.rewrites_applied;
        self.facts_added += other.facts_added;
        self.parse_failures += other.parse_failures;
    }
}

/// Result of answering one question.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `None` when no answer could be parsed from the completion.
    pub answer: Option<Answer>,
    pub prompt: String,
    pub completion: String,
    pub statements: usize,
}

/// Knowledge base, its embedding index, and the models that edit it.
pub struct EraseSystem {
    kb: KnowledgeBase,
    index: DenseIndex<EntryId>,
    embedder: Arc<dyn Embedder>,
    provider: Arc<dyn LmProvider>,
    config: EraseConfig,
    last_ts: Option<Timestamp>,
    mutations: Vec<MutationRecord>,
}

impl EraseSystem {
    pub fn new(embedder: Arc<dyn Embedder>, provider: Arc<dyn LmProvider>, config: EraseConfig) -> Self {
        Self {
            kb: KnowledgeBase::new(),
            index: DenseIndex::new(embedder.dimension()),
            embedder,
            provider,
            config,
            last_ts: None,
            mutations: Vec::new(),
        }
    }

    /// Resumes from a snapshot, re-embedding every entry.
    pub fn from_kb(
        kb: KnowledgeBase,
        embedder: Arc<dyn Embedder>,
        provider: Arc<dyn LmProvider>,
        config: EraseConfig,
    ) -> Result<Self> {
        let mut sys = Self::new(embedder, provider, config);
        sys.last_ts = kb
            .entries()
            .filter_map(|e| e.history.last().map(|(t, _)| t.clone()))
            .max();
        for e in kb.entries() {
            let v = sys.embedder.embed(&e.fact)?;
            sys.index.upsert(e.id, v)?;
        }
        sys.kb = kb;
        Ok(sys)
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn index(&self) -> &DenseIndex<EntryId> {
        &self.index
    }

    pub fn config(&self) -> &EraseConfig {
        &self.config
    }

    pub fn mutations(&self) -> &[MutationRecord] {
        &self.mutations
    }

    pub fn write_mutations<W: Write>(&self, mut out: W) -> Result<()> {
        for m in &self.mutations {
            writeln!(out, "{}", serde_json::to_string(m).expect("record serializes"))?;
        }
        Ok(())
    }

    fn check_order(&self, doc: &Document) -> Result<()> {
        if let Some(last) = &self.last_ts {
            if doc.ts < *last {
                return Err(PipelineError::OutOfOrderDocument {
                    doc_id: doc.id.clone(),
                    last: last.clone(),
                    got: doc.ts.clone(),
                });
            }
        }
        Ok(())
    }

    /// Full edit loop for one document. Documents too long for the update
    /// prompts are split and processed as consecutive passages.
    pub fn ingest_document(&mut self, doc: &Document) -> Result<IngestReport> {
        self.check_order(doc)?;
        let mut report = IngestReport {
            doc_id: doc.id.clone(),
            ..Default::default()
        };
        for part in self.parts(doc) {
            let r = self.ingest_part(&part)?;
            report.absorb(&r);
        }
        self.last_ts = Some(doc.ts.clone());
        Ok(report)
    }

    /// Extraction only: new facts are added but nothing is edited.
    pub fn ingest_extract_only(&mut self, doc: &Document) -> Result<IngestReport> {
        self.check_order(doc)?;
        let mut report = IngestReport {
            doc_id: doc.id.clone(),
            ..Default::default()
        };
        for part in self.parts(doc) {
            report.facts_added += self.extract_and_add(&part)?.len();
        }
        self.last_ts = Some(doc.ts.clone());
        Ok(report)
    }

    fn parts(&self, doc: &Document) -> Vec<Document> {
        let limit = self.provider.context_window() / 2;
        if estimate_tokens(&doc.text) <= limit {
            return vec![doc.clone()];
        }
        split_passages(&doc.text, limit)
            .into_iter()
            .map(|text| Document {
                id: doc.id.clone(),
                text,
                ts: doc.ts.clone(),
                meta: doc.meta.clone(),
            })
            .collect()
    }

    fn ingest_part(&mut self, doc: &Document) -> Result<IngestReport> {
        let mut set = self.retrieve_candidates(&doc.text, self.config.m)?;
        let failures = AtomicUsize::new(0);
        let outcomes = self.classify_pass(doc, &mut set, &failures)?;
        let rewrites_applied = self.rewrite_pass(doc, &set)?;
        let added = self.extract_and_add(doc)?;
        Ok(IngestReport {
            doc_id: doc.id.clone(),
            retrieved: set.entries.len(),
            outcomes,
            rewrites_applied,
            facts_added: added.len(),
            parse_failures: failures.into_inner(),
        })
    }

    /// Top-`m` currently-true facts by inner product with the whole text.
    pub fn retrieve_candidates(&self, text: &str, m: usize) -> Result<RetrievedSet> {
        if m == 0 || self.index.is_empty() {
            return Ok(RetrievedSet::default());
        }
        let q = self.embedder.embed(text)?;
        let kb = &self.kb;
        let hits = self
            .index
            .top_k_filtered(&q, m, |id| kb.get(*id).is_some_and(FactEntry::is_currently_true))?;
        let entries = hits
            .into_iter()
            .map(|h| (kb.get(h.id).expect("indexed entry exists").clone(), h.score))
            .collect();
        Ok(RetrievedSet {
            entries,
            ..Default::default()
        })
    }

    /// First pass. Reinforcements are committed once every verdict is in;
    /// invalidations wait for the rewrite pass.
    fn classify_pass(
        &mut self,
        doc: &Document,
        set: &mut RetrievedSet,
        failures: &AtomicUsize,
    ) -> Result<OutcomeCounts> {
        let prompts: Vec<String> = set
            .entries
            .iter()
            .map(|(e, _)| prompts::classification(&doc.ts, &doc.text, &e.fact))
            .collect();
        let completions = complete_many(
            self.provider.as_ref(),
            &prompts,
            self.config.max_output_tokens,
            self.config.max_in_flight,
        );
        let mut counts = OutcomeCounts::default();
        let mut verdicts = Vec::with_capacity(completions.len());
        for c in completions {
            verdicts.push(parse_classification(&c?, failures));
        }
        for ((entry, _), verdict) in set.entries.iter().zip(&verdicts) {
            match verdict {
                Classification::Reinforce => {
                    counts.reinforce += 1;
                    set.r_true.push(entry.id);
                }
                Classification::NoChange => {
                    counts.no_change += 1;
                    set.r_true.push(entry.id);
                }
                Classification::MakeFalse => {
                    counts.make_false += 1;
                    set.r_false.push(entry.id);
                }
            }
        }
        for ((entry, _), verdict) in set.entries.iter().zip(&verdicts) {
            if *verdict == Classification::Reinforce {
                self.kb
                    .apply_outcome(entry.id, UpdateOutcome::Reinforce, &doc.ts, None, &doc.id)?;
                self.log(doc, entry.id, MutationOp::Reinforce, None, None);
            }
        }
        Ok(counts)
    }

    /// Still-true facts for the rewrite prompt, highest ranked first, capped
    /// so the prompt fits the budget.
    fn still_true_for(&self, doc: &Document, fact: &str, r_true: &[String]) -> Vec<String> {
        let budget = prompt_budget(self.provider.context_window());
        let mut kept: Vec<String> = Vec::new();
        for f in r_true {
            kept.push(f.clone());
            if estimate_tokens(&prompts::rewrite(&doc.ts, &doc.text, fact, &kept)) > budget {
                kept.pop();
                break;
            }
        }
        kept
    }

    /// Second pass: rewrite or invalidate every fact judged stale.
    fn rewrite_pass(&mut self, doc: &Document, set: &RetrievedSet) -> Result<usize> {
        let true_facts: Vec<String> = set
            .entries
            .iter()
            .filter(|(e, _)| set.r_true.contains(&e.id))
            .map(|(e, _)| e.fact.clone())
            .collect();
        let stale: Vec<&FactEntry> = set
            .entries
            .iter()
            .map(|(e, _)| e)
            .filter(|e| set.r_false.contains(&e.id))
            .collect();
        let prompts: Vec<String> = stale
            .iter()
            .map(|e| {
                let ctx = self.still_true_for(doc, &e.fact, &true_facts);
                prompts::rewrite(&doc.ts, &doc.text, &e.fact, &ctx)
            })
            .collect();
        let completions = complete_many(
            self.provider.as_ref(),
            &prompts,
            self.config.max_output_tokens,
            self.config.max_in_flight,
        );
        let mut parsed = Vec::with_capacity(completions.len());
        for c in completions {
            parsed.push(parse_rewrite(&c?));
        }
        let mut applied = 0;
        for (entry, rewrite) in stale.into_iter().zip(parsed) {
            match rewrite {
                Some(text) => {
                    let ids = self
                        .kb
                        .apply_outcome(entry.id, UpdateOutcome::Rewrite, &doc.ts, Some(&text), &doc.id)?;
                    let new_id = ids[1];
                    self.log(doc, entry.id, MutationOp::Rewrite, Some(entry.fact.clone()), Some(text.clone()));
                    if self.index.get(&new_id).is_none() {
                        let v = self.embedder.embed(&text)?;
                        self.index.upsert(new_id, v)?;
                    }
                    applied += 1;
                }
                None => {
                    self.kb
                        .apply_outcome(entry.id, UpdateOutcome::MakeFalse, &doc.ts, None, &doc.id)?;
                    self.log(doc, entry.id, MutationOp::MakeFalse, Some(entry.fact.clone()), None);
                }
            }
        }
        Ok(applied)
    }

    /// Extracts facts from the document and inserts them; duplicates of
    /// existing facts reinforce instead. Returns the ids of created entries.
    pub fn extract_and_add(&mut self, doc: &Document) -> Result<Vec<EntryId>> {
        let prompt = prompts::extraction(&doc.ts, &doc.text);
        let completion = self
            .provider
            .complete(&LmRequest::new(prompt).with_max_output_tokens(self.config.max_output_tokens))?;
        let mut created = Vec::new();
        for fact in parse_fact_list(&completion) {
            match self.kb.insert_fact(&fact, &doc.ts, &doc.id) {
                Ok(Insertion::Created(id)) => {
                    let v = self.embedder.embed(&fact)?;
                    self.index.upsert(id, v)?;
                    self.log(doc, id, MutationOp::Insert, None, Some(fact));
                    created.push(id);
                }
                Ok(Insertion::Reinforced(id)) => self.log(doc, id, MutationOp::Reinforce, None, None),
                Err(KbError::EmptyFact) => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(created)
    }

    fn log(&mut self, doc: &Document, entry_id: EntryId, op: MutationOp, old_fact: Option<String>, new_fact: Option<String>) {
        self.mutations.push(MutationRecord {
            doc_id: doc.id.clone(),
            entry_id,
            op,
            ts: doc.ts.clone(),
            old_fact,
            new_fact,
        });
    }

    /// Facts above the similarity threshold for `question`, best first.
    pub fn relevant_facts(&self, question: &str) -> Result<Vec<&FactEntry>> {
        if self.index.is_empty() {
            return Ok(Vec::new());
        }
        let q = self.embedder.embed(question)?;
        let hits = match self.index.threshold_search(&q, self.config.theta) {
            Ok(h) => h.hits,
            Err(IndexError::ZeroVector) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(hits
            .into_iter()
            .filter_map(|h| self.kb.get(h.id))
            .filter(|e| !self.config.true_only || e.is_currently_true())
            .collect())
    }

    /// Renders the inference prompt with as many relevant facts as fit.
    pub fn inference_prompt(&self, question: &str, ts: &Timestamp, choices: &[String], list: bool) -> Result<(String, usize)> {
        let lines: Vec<String> = self
            .relevant_facts(question)?
            .into_iter()
            .map(|e| prompts::statement_line(&e.fact, &e.history))
            .collect();
        Ok(fit_statements(&lines, ts, question, choices, list, self.provider.context_window()))
    }

    pub fn answer_question(&self, question: &str, ts: &Timestamp, choices: &[String], list: bool) -> Result<Prediction> {
        let (prompt, statements) = self.inference_prompt(question, ts, choices, list)?;
        predict(self.provider.as_ref(), prompt, statements, choices, list, self.config.max_output_tokens)
    }
}

/// Largest rank-order prefix of `lines` whose inference prompt fits the
/// budget. Returns the prompt and how many statements it holds.
pub fn fit_statements(
    lines: &[String],
    ts: &Timestamp,
    question: &str,
    choices: &[String],
    list: bool,
    context_window: usize,
) -> (String, usize) {
    let budget = prompt_budget(context_window);
    let fixed = estimate_tokens(&prompts::inference(&[], ts, question, choices, list));
    let mut used = fixed;
    let mut n = 0;
    for l in lines {
        // Each line costs its characters plus a newline.
        let cost = (l.chars().count() + 1).div_ceil(4);
        if used + cost > budget {
            break;
        }
        used += cost;
        n += 1;
    }
    // The per-line estimate can round differently from the whole prompt.
    loop {
        let prompt = prompts::inference(&lines[..n], ts, question, choices, list);
        if n == 0 || estimate_tokens(&prompt) <= budget {
            if n < lines.len() {
                log::debug!("inference prompt truncated to {n} of {} statements", lines.len());
            }
            return (prompt, n);
        }
        n -= 1;
    }
}

/// Completes an inference prompt and parses the answer. An unparseable
/// completion is a prediction with no answer, not an error.
pub fn predict(
    provider: &dyn LmProvider,
    prompt: String,
    statements: usize,
    choices: &[String],
    list: bool,
    max_output_tokens: usize,
) -> Result<Prediction> {
    check_budget(&prompt, provider.context_window())?;
    let completion = provider.complete(&LmRequest::new(prompt.clone()).with_max_output_tokens(max_output_tokens))?;
    let answer = parse_answer(&completion, choices, list).ok();
    Ok(Prediction {
        answer,
        prompt,
        completion,
        statements,
    })
}
