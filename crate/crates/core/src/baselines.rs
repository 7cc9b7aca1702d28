//! Comparison systems: passage retrieval, fact retrieval without editing,
//! and conditioning on the most recent raw documents.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::index::DenseIndex;
use crate::kb::{Document, Timestamp};
use crate::lm::{estimate_tokens, prompt_budget, LmProvider, DEFAULT_MAX_OUTPUT_TOKENS};
use crate::pipeline::{fit_statements, predict, EraseSystem, IngestReport, PipelineError, Prediction, Result};
use crate::prompts;

/// Byte offsets just past each sentence terminator that is followed by
/// whitespace, plus the end of the text.
fn sentence_ends(text: &str) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '?' | '!') {
            if let Some(&(j, next)) = chars.peek() {
                if next.is_whitespace() {
                    ends.push(j);
                }
            } else {
                ends.push(i + c.len_utf8());
            }
        }
    }
    if ends.last() != Some(&text.len()) {
        ends.push(text.len());
    }
    ends
}

fn hard_split(s: &str, max_chars: usize, out: &mut Vec<String>) {
    let chars: Vec<char> = s.chars().collect();
    for chunk in chars.chunks(max_chars) {
        let piece: String = chunk.iter().collect();
        let piece = piece.trim();
        if !piece.is_empty() {
            out.push(piece.to_string());
        }
    }
}

/// Splits text into passages of at most `max_tokens` estimated tokens,
/// breaking at sentence boundaries and falling back to hard character
/// splits for overlong sentences.
pub fn split_passages(text: &str, max_tokens: usize) -> Vec<String> {
    let max_chars = max_tokens.max(1) * 4;
    let trimmed = text.trim();
    if trimmed.chars().count() <= max_chars {
        return if trimmed.is_empty() { Vec::new() } else { vec![trimmed.to_string()] };
    }
    let mut sentences = Vec::new();
    let mut start = 0;
    for end in sentence_ends(text) {
        let s = text[start..end].trim();
        if !s.is_empty() {
            sentences.push(s);
        }
        start = end;
    }
    let mut out = Vec::new();
    let mut current = String::new();
    for s in sentences {
        let len = s.chars().count();
        if len > max_chars {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            hard_split(s, max_chars, &mut out);
            continue;
        }
        let joined = if current.is_empty() { len } else { current.chars().count() + 1 + len };
        if joined > max_chars {
            out.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(s);
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
    pub ts: Timestamp,
}

/// Passages of ingested documents with their embeddings.
pub struct PassageStore {
    passages: Vec<Passage>,
    index: DenseIndex<usize>,
    embedder: Arc<dyn Embedder>,
    max_tokens: usize,
}

impl PassageStore {
    /// `context_window` bounds each passage to half of it.
    pub fn new(embedder: Arc<dyn Embedder>, context_window: usize) -> Self {
        Self {
            passages: Vec::new(),
            index: DenseIndex::new(embedder.dimension()),
            embedder,
            max_tokens: context_window / 2,
        }
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn ingest(&mut self, doc: &Document) -> Result<Vec<String>> {
        let parts = split_passages(&doc.text, self.max_tokens);
        let single = parts.len() == 1;
        let mut ids = Vec::new();
        for (i, text) in parts.into_iter().enumerate() {
            assert!(estimate_tokens(&text) <= self.max_tokens, "passage exceeds chunk budget");
            let id = if single { doc.id.clone() } else { format!("{}#{i}", doc.id) };
            let v = self.embedder.embed(&text)?;
            self.index.upsert(self.passages.len(), v)?;
            self.passages.push(Passage {
                id: id.clone(),
                text,
                ts: doc.ts.clone(),
            });
            ids.push(id);
        }
        Ok(ids)
    }

    /// Highest-scoring passages whose combined size stays within
    /// `token_budget`, returned in chronological order.
    pub fn retrieve(&self, query: &str, token_budget: usize) -> Result<Vec<&Passage>> {
        if self.passages.is_empty() {
            return Ok(Vec::new());
        }
        let q = self.embedder.embed(query)?;
        let mut used = 0;
        let mut picked = Vec::new();
        for hit in self.index.top_k(&q, self.passages.len())? {
            let p = &self.passages[hit.id];
            let cost = estimate_tokens(&prompts::passage_line(&p.ts, &p.text)) + 1;
            if used + cost <= token_budget {
                used += cost;
                picked.push(hit.id);
            }
        }
        picked.sort_unstable();
        Ok(picked.into_iter().map(|i| &self.passages[i]).collect())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.passages {
            writeln!(out, "{}", serde_json::to_string(p).expect("passage serializes"))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(
        input: R,
        embedder: Arc<dyn Embedder>,
        context_window: usize,
    ) -> std::result::Result<Self, PipelineError> {
        let mut store = Self::new(embedder, context_window);
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let p: Passage = serde_json::from_str(&line).map_err(|e| {
                PipelineError::Kb(crate::kb::KbError::Snapshot {
                    line: n + 1,
                    message: e.to_string(),
                })
            })?;
            let v = store.embedder.embed(&p.text)?;
            store.index.upsert(store.passages.len(), v)?;
            store.passages.push(p);
        }
        Ok(store)
    }
}

/// A question-answering system fed a timestamp-ordered document stream.
pub trait QaSystem {
    fn name(&self) -> &'static str;
    fn ingest(&mut self, doc: &Document) -> Result<IngestReport>;
    fn answer(&self, question: &str, ts: &Timestamp, choices: &[String], list: bool) -> Result<Prediction>;
}

impl QaSystem for EraseSystem {
    fn name(&self) -> &'static str {
        "erase"
    }
    fn ingest(&mut self, doc: &Document) -> Result<IngestReport> {
        self.ingest_document(doc)
    }
    fn answer(&self, question: &str, ts: &Timestamp, choices: &[String], list: bool) -> Result<Prediction> {
        self.answer_question(question, ts, choices, list)
    }
}

/// Fact store built by extraction alone; stale facts are never edited.
pub struct FactRag(pub EraseSystem);

impl QaSystem for FactRag {
    fn name(&self) -> &'static str {
        "factrag"
    }
    fn ingest(&mut self, doc: &Document) -> Result<IngestReport> {
        self.0.ingest_extract_only(doc)
    }
    fn answer(&self, question: &str, ts: &Timestamp, choices: &[String], list: bool) -> Result<Prediction> {
        self.0.answer_question(question, ts, choices, list)
    }
}

/// Passage retrieval over raw document text.
pub struct Rag {
    pub store: PassageStore,
    provider: Arc<dyn LmProvider>,
}

impl Rag {
    pub fn new(embedder: Arc<dyn Embedder>, provider: Arc<dyn LmProvider>) -> Self {
        Self {
            store: PassageStore::new(embedder, provider.context_window()),
            provider,
        }
    }

    pub fn with_store(store: PassageStore, provider: Arc<dyn LmProvider>) -> Self {
        Self { store, provider }
    }
}

impl QaSystem for Rag {
    fn name(&self) -> &'static str {
        "rag"
    }

    fn ingest(&mut self, doc: &Document) -> Result<IngestReport> {
        self.store.ingest(doc)?;
        Ok(IngestReport {
            doc_id: doc.id.clone(),
            ..Default::default()
        })
    }

    fn answer(&self, question: &str, ts: &Timestamp, choices: &[String], list: bool) -> Result<Prediction> {
        let cw = self.provider.context_window();
        // Whatever the fixed prompt text leaves over goes to passages.
        let fixed = estimate_tokens(&prompts::inference(&[], ts, question, choices, list));
        let lines: Vec<String> = self
            .store
            .retrieve(question, prompt_budget(cw).saturating_sub(fixed))?
            .into_iter()
            .map(|p| prompts::passage_line(&p.ts, &p.text))
            .collect();
        let (prompt, n) = fit_statements(&lines, ts, question, choices, list, cw);
        predict(self.provider.as_ref(), prompt, n, choices, list, DEFAULT_MAX_OUTPUT_TOKENS)
    }
}

/// Prompt holding the longest suffix of `docs` that fits the budget, in
/// chronological order.
pub fn full_context_prompt(
    docs: &[Document],
    question: &str,
    ts: &Timestamp,
    choices: &[String],
    list: bool,
    context_window: usize,
) -> (String, usize) {
    let budget = prompt_budget(context_window);
    let mut start = docs.len();
    let mut prompt = prompts::inference(&[], ts, question, choices, list);
    while start > 0 {
        let lines: Vec<String> = docs[start - 1..]
            .iter()
            .map(|d| prompts::passage_line(&d.ts, &d.text))
            .collect();
        let candidate = prompts::inference(&lines, ts, question, choices, list);
        if estimate_tokens(&candidate) > budget {
            break;
        }
        prompt = candidate;
        start -= 1;
    }
    (prompt, docs.len() - start)
}

/// Conditions on as many of the most recent documents as fit.
pub struct FullContext {
    docs: Vec<Document>,
    provider: Arc<dyn LmProvider>,
}

impl FullContext {
    pub fn new(provider: Arc<dyn LmProvider>) -> Self {
        Self {
            docs: Vec::new(),
            provider,
        }
    }
}

impl QaSystem for FullContext {
    fn name(&self) -> &'static str {
        "fullcontext"
    }

    fn ingest(&mut self, doc: &Document) -> Result<IngestReport> {
        if let Some(last) = self.docs.last() {
            if doc.ts < last.ts {
                return Err(PipelineError::OutOfOrderDocument {
                    doc_id: doc.id.clone(),
                    last: last.ts.clone(),
                    got: doc.ts.clone(),
                });
            }
        }
        self.docs.push(doc.clone());
        Ok(IngestReport {
            doc_id: doc.id.clone(),
            ..Default::default()
        })
    }

    fn answer(&self, question: &str, ts: &Timestamp, choices: &[String], list: bool) -> Result<Prediction> {
        let (prompt, n) = full_context_prompt(&self.docs, question, ts, choices, list, self.provider.context_window());
        predict(self.provider.as_ref(), prompt, n, choices, list, DEFAULT_MAX_OUTPUT_TOKENS)
    }
}
