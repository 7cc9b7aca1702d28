use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{check_budget, LmError, LmProvider, LmRequest};

/// Computes a response for a prompt, or `None` when it has no answer.
pub type Responder = Box<dyn Fn(&str) -> Option<String> + Send + Sync>;

/// Deterministic stand-in for a language model.
///
/// Exact-match scripted prompts are consulted first, then the optional
/// responder. Anything else is an [`LmError::UnscriptedPrompt`], so tests
/// must script every call they trigger.
pub struct OracleProvider {
    context_window: usize,
    script: HashMap<String, String>,
    responder: Option<Responder>,
    calls: AtomicUsize,
}

impl OracleProvider {
    pub fn new(context_window: usize) -> Self {
        Self {
            context_window,
            script: HashMap::new(),
            responder: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_fn<F>(context_window: usize, f: F) -> Self
    where
        F: Fn(&str) -> Option<String> + Send + Sync + 'static,
    {
        let mut o = Self::new(context_window);
        o.responder = Some(Box::new(f));
        o
    }

    pub fn with_script<I, P, R>(mut self, pairs: I) -> Self
    where
        I: IntoIterator<Item = (P, R)>,
        P: Into<String>,
        R: Into<String>,
    {
        self.script.extend(pairs.into_iter().map(|(p, r)| (p.into(), r.into())));
        self
    }

    pub fn insert(&mut self, prompt: impl Into<String>, response: impl Into<String>) {
        self.script.insert(prompt.into(), response.into());
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LmProvider for OracleProvider {
    fn context_window(&self) -> usize {
        self.context_window
    }

    fn complete(&self, request: &LmRequest) -> Result<String, LmError> {
        request.validate()?;
        check_budget(&request.prompt, self.context_window)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(r) = self.script.get(&request.prompt) {
            return Ok(r.clone());
        }
        if let Some(f) = &self.responder {
            if let Some(r) = f(&request.prompt) {
                return Ok(r);
            }
        }
        let preview: String = request.prompt.chars().take(120).collect();
        Err(LmError::UnscriptedPrompt(preview))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_lookup() {
        let o = OracleProvider::new(100).with_script([("p", "r")]);
        assert_eq!(o.complete(&LmRequest::new("p")).unwrap(), "r");
        assert!(matches!(
            o.complete(&LmRequest::new("q")),
            Err(LmError::UnscriptedPrompt(_))
        ));
    }

    #[test]
    fn overflow_checked_before_lookup() {
        let long = "x".repeat(1000);
        let o = OracleProvider::new(100).with_script([(long.clone(), "r")]);
        assert!(matches!(
            o.complete(&LmRequest::new(long)),
            Err(LmError::ContextOverflow { .. })
        ));
        assert_eq!(o.call_count(), 0);
    }

    #[test]
    fn deterministic_sequences() {
        let o = OracleProvider::from_fn(1000, |p| Some(p.chars().rev().collect()));
        let run = || {
            ["a", "bc", "def"]
                .iter()
                .map(|p| o.complete(&LmRequest::new(*p)).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
