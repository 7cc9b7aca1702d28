//! Knowledge-base editing for retrieval-augmented question answering over a
//! changing world.
//!
//! Documents arrive in timestamp order. Each one updates a store of
//! natural-language facts with dated truth histories: related facts are
//! retrieved, classified against the document, rewritten or invalidated, and
//! new facts are extracted. Questions are answered from the facts whose
//! embeddings clear a similarity threshold.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod embed;
pub mod eval;
pub mod index;
pub mod kb;
pub mod lm;
pub mod pipeline;
pub mod prompts;
pub mod world;

pub use embed::{Embedder, HashEmbedder};
pub use index::{DenseIndex, Embedding};
pub use kb::{Document, EntryId, FactEntry, KnowledgeBase, Timestamp, TruthValue, UpdateOutcome};
pub use lm::parse::Answer;
pub use lm::{LmError, LmProvider, LmRequest, OracleProvider};
