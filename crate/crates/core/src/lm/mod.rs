//! Language model access: the provider contract, token budgeting, a scripted
//! oracle for deterministic runs, an HTTP chat-completions client, and the
//! parsers for every completion format the pipeline consumes.

mod http;
mod oracle;
pub mod parse;

use std::sync::Arc;

pub use http::{HttpProvider, HttpProviderConfig};
pub use oracle::{OracleProvider, Responder};

pub const DEFAULT_MAX_OUTPUT_TOKENS: usize = 512;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LmError {
    #[error("prompt needs ~{estimated} tokens but the budget is {budget}")]
    ContextOverflow { estimated: usize, budget: usize },
    #[error("oracle has no scripted response for prompt: {0}")]
    UnscriptedPrompt(String),
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: usize,
}

impl LmRequest {
    /// Temperature-0 request with the default output cap.
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    pub fn with_max_output_tokens(mut self, n: usize) -> Self {
        self.max_output_tokens = n;
        self
    }

    pub fn validate(&self) -> Result<(), LmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LmError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(LmError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// Approximate token counter. Must be monotone in text length.
pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// `ceil(chars / 4)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharEstimator;

impl TokenEstimator for CharEstimator {
    fn estimate(&self, text: &str) -> usize {
        text.chars().count().div_ceil(4)
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    CharEstimator.estimate(text)
}

/// Usable prompt budget for a context window after the 10% safety margin.
pub fn prompt_budget(context_window: usize) -> usize {
    context_window * 9 / 10
}

pub fn check_budget(prompt: &str, context_window: usize) -> Result<(), LmError> {
    let estimated = estimate_tokens(prompt);
    let budget = prompt_budget(context_window);
    if estimated > budget {
        return Err(LmError::ContextOverflow { estimated, budget });
    }
    Ok(())
}

/// `p_LM(prediction | context)`. Implementations must tolerate concurrent
/// `complete` calls.
pub trait LmProvider: Send + Sync {
    fn context_window(&self) -> usize;
    fn complete(&self, request: &LmRequest) -> Result<String, LmError>;
}

impl<P: LmProvider + ?Sized> LmProvider for Arc<P> {
    fn context_window(&self) -> usize {
        (**self).context_window()
    }
    fn complete(&self, request: &LmRequest) -> Result<String, LmError> {
        (**self).complete(request)
    }
}

/// Runs `complete` over many prompts with at most `max_in_flight` requests
/// outstanding. Results come back in input order.
pub fn complete_many(
    provider: &dyn LmProvider,
    prompts: &[String],
    max_output_tokens: usize,
    max_in_flight: usize,
) -> Vec<Result<String, LmError>> {
    let workers = max_in_flight.max(1).min(prompts.len());
    if workers <= 1 {
        return prompts
            .iter()
            .map(|p| provider.complete(&LmRequest::new(p.clone()).with_max_output_tokens(max_output_tokens)))
            .collect();
    }
    let mut results: Vec<Option<Result<String, LmError>>> = vec![None; prompts.len()];
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let next = &next;
                scope.spawn(move || {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= prompts.len() {
                            break;
                        }
                        let req = LmRequest::new(prompts[i].clone()).with_max_output_tokens(max_output_tokens);
                        local.push((i, provider.complete(&req)));
                    }
                    local
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("completion worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    results.into_iter().map(|r| r.expect("every prompt completed")).collect()
}
