//! Exact dense retrieval: top-k inner product and thresholded cosine search.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in embedding")]
    NonFinite,
    #[error("query vector has zero norm")]
    ZeroVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self, IndexError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit<K> {
    pub id: K,
    pub score: f64,
}

/// Result of a threshold search; `zero_vectors` counts stored vectors skipped
/// for having zero norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdHits<K> {
    pub hits: Vec<Hit<K>>,
    pub zero_vectors: usize,
}

/// Orders hits best-first: higher score, then ascending id.
fn rank<K: Ord>(a: &Hit<K>, b: &Hit<K>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.id.cmp(&b.id))
}

// Max-heap keyed so the worst retained hit sits on top.
struct Worst<K>(Hit<K>);

impl<K: Ord> PartialEq for Worst<K> {
    fn eq(&self, other: &Self) -> bool {
        rank(&self.0, &other.0) == Ordering::Equal
    }
}
impl<K: Ord> Eq for Worst<K> {}
impl<K: Ord> PartialOrd for Worst<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<K: Ord> Ord for Worst<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank(&self.0, &other.0)
    }
}

/// Exact-scan index over fixed-dimension vectors.
#[derive(Debug, Clone)]
pub struct DenseIndex<K> {
    dim: usize,
    items: BTreeMap<K, Embedding>,
}

impl<K: Ord + Clone> DenseIndex<K> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            items: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &K) -> Option<&Embedding> {
        self.items.get(id)
    }

    fn check(&self, v: &Embedding) -> Result<(), IndexError> {
        if v.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        Ok(())
    }

    pub fn upsert(&mut self, id: K, vec: Embedding) -> Result<(), IndexError> {
        self.check(&vec)?;
        self.items.insert(id, vec);
        Ok(())
    }

    pub fn top_k(&self, query: &Embedding, m: usize) -> Result<Vec<Hit<K>>, IndexError> {
        self.top_k_filtered(query, m, |_| true)
    }

    /// Top-`m` by raw inner product among items accepted by `keep`.
    pub fn top_k_filtered<F>(&self, query: &Embedding, m: usize, keep: F) -> Result<Vec<Hit<K>>, IndexError>
    where
        F: Fn(&K) -> bool,
    {
        self.check(query)?;
        if m == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Worst<K>> = BinaryHeap::with_capacity(m.min(self.items.len()) + 1);
        for (id, v) in &self.items {
            if !keep(id) {
                continue;
            }
            let hit = Hit {
                id: id.clone(),
                score: query.dot(v),
            };
            if heap.len() < m {
                heap.push(Worst(hit));
            } else if let Some(top) = heap.peek() {
                if rank(&hit, &top.0) == Ordering::Less {
                    heap.pop();
                    heap.push(Worst(hit));
                }
            }
        }
        let mut out: Vec<Hit<K>> = heap.into_iter().map(|w| w.0).collect();
        out.sort_by(rank);
        Ok(out)
    }

    /// All items whose cosine similarity to `query` is strictly above `theta`.
    pub fn threshold_search(&self, query: &Embedding, theta: f64) -> Result<ThresholdHits<K>, IndexError> {
        self.check(query)?;
        let qn = query.norm();
        if qn == 0.0 {
            return Err(IndexError::ZeroVector);
        }
        let mut zero_vectors = 0;
        let mut hits = Vec::new();
        for (id, v) in &self.items {
            let vn = v.norm();
            if vn == 0.0 {
                zero_vectors += 1;
                continue;
            }
            let cos = query.dot(v) / (qn * vn);
            if cos > theta {
                hits.push(Hit { id: id.clone(), score: cos });
            }
        }
        if zero_vectors > 0 {
            log::warn!("threshold search skipped {zero_vectors} zero-norm vectors");
        }
        hits.sort_by(rank);
        Ok(ThresholdHits { hits, zero_vectors })
    }
}
