//! Embedding providers.
//!
//! [`HashEmbedder`] is the deterministic CI embedder: lowercase word
//! unigrams, minus a small stopword list and with plural `s` stripped, are
//! feature-hashed (FNV-1a, signed) into a fixed number of buckets and the
//! result is L2-normalized. [`HttpEmbedder`] calls an OpenAI-style
//! `/embeddings` endpoint.

use std::time::Duration;

use serde::Deserialize;

use crate::index::{Embedding, IndexError};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding transport error: {0}")]
    Transport(String),
    #[error("embedding response malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Maps text to a fixed-dimension vector. Implementations must be
/// deterministic for a fixed configuration.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;
}

pub const HASH_DIM: usize = 256;

const STOPWORDS: &[&str] = &[
    "a", "all", "an", "and", "are", "as", "at", "does", "for", "from", "has", "have", "in", "include",
    "includes", "is", "it", "known", "list", "of", "on", "or", "out", "rather", "than", "that", "the",
    "their", "to", "was", "what", "which", "who", "with",
];

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Lowercased alphanumeric word features after stopword removal and
/// possessive/plural stripping.
pub fn features(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .map(|w| w.trim_matches('\''))
        .map(|w| w.strip_suffix("'s").unwrap_or(w))
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(w))
        .map(|w| {
            if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") {
                w[..w.len() - 1].to_string()
            } else {
                w.to_string()
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(HASH_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let mut v = vec![0.0f64; self.dim];
        for f in features(text) {
            let h = fnv1a(f.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(Embedding::new(v.into_iter().map(|x| x as f32).collect())?)
    }
}

/// Embedder backed by an OpenAI-compatible `POST {base}/embeddings`.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    base: String,
    key: Option<String>,
    model: String,
    dim: usize,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
}

impl HttpEmbedder {
    pub fn new(base: impl Into<String>, key: Option<String>, model: impl Into<String>, dim: usize) -> Self {
        Self {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("static client config"),
            base: base.into(),
            key,
            model: model.into(),
            dim,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let url = format!("{}/embeddings", self.base.trim_end_matches('/'));
        let mut req = self
            .client
            .post(url)
            .json(&serde_json::json!({ "model": self.model, "input": text }));
        if let Some(key) = &self.key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        let body: EmbeddingResponse = resp.json().map_err(|e| EmbedError::Malformed(e.to_string()))?;
        let values = body
            .data
            .into_iter()
            .next()
            .ok_or_else(|| EmbedError::Malformed("empty data".into()))?
            .embedding;
        if values.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: values.len(),
            }
            .into());
        }
        Ok(Embedding::new(values)?)
    }
}
