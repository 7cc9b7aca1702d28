use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;

use super::{check_budget, LmError, LmProvider, LmRequest};

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    pub api_base: String,
    pub api_key: Option<String>,
    pub model: String,
    pub context_window: usize,
    pub max_attempts: usize,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    /// JSONL file receiving one line per request/response pair.
    pub trace_path: Option<PathBuf>,
}

impl HttpProviderConfig {
    /// Reads `LM_API_BASE`, `LM_API_KEY` and `LM_MODEL`.
    pub fn from_env(context_window: usize) -> Result<Self, LmError> {
        let api_base = std::env::var("LM_API_BASE")
            .map_err(|_| LmError::InvalidRequest("LM_API_BASE is not set".into()))?;
        let model = std::env::var("LM_MODEL").unwrap_or_else(|_| "gpt-4".to_string());
        Ok(Self::new(api_base, std::env::var("LM_API_KEY").ok(), model, context_window))
    }

    pub fn new(api_base: impl Into<String>, api_key: Option<String>, model: impl Into<String>, context_window: usize) -> Self {
        Self {
            api_base: api_base.into(),
            api_key,
            model: model.into(),
            context_window,
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
            trace_path: None,
        }
    }
}

/// Chat-completions client. Transient failures (connection errors, 429 and
/// 5xx) are retried with exponential backoff.
pub struct HttpProvider {
    config: HttpProviderConfig,
    client: reqwest::blocking::Client,
    trace: Option<Mutex<File>>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

enum Failure {
    Retryable(String),
    Fatal(LmError),
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Result<Self, LmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LmError::InvalidRequest(e.to_string()))?;
        let trace = match &config.trace_path {
            Some(p) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| LmError::InvalidRequest(format!("trace file {}: {e}", p.display())))?,
            )),
            None => None,
        };
        Ok(Self { config, client, trace })
    }

    fn attempt(&self, request: &LmRequest) -> Result<String, Failure> {
        let url = format!("{}/chat/completions", self.config.api_base.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": request.prompt }],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let mut req = self.client.post(url).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(LmError::Transport {
                attempts: 1,
                message: format!("HTTP {status}"),
            }));
        }
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| Failure::Fatal(LmError::Malformed(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| Failure::Fatal(LmError::Malformed("no choices".into())))
    }

    fn record(&self, request: &LmRequest, outcome: &Result<String, LmError>) {
        let Some(trace) = &self.trace else { return };
        // The API key never reaches the trace.
        let line = serde_json::json!({
            "model": self.config.model,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "response": outcome.as_ref().ok(),
            "error": outcome.as_ref().err().map(|e| e.to_string()),
        });
        let mut f = trace.lock().expect("trace lock poisoned");
        if let Err(e) = writeln!(f, "{line}") {
            log::warn!("failed to write LM trace: {e}");
        }
    }
}

impl LmProvider for HttpProvider {
    fn context_window(&self) -> usize {
        self.config.context_window
    }

    fn complete(&self, request: &LmRequest) -> Result<String, LmError> {
        request.validate()?;
        check_budget(&request.prompt, self.config.context_window)?;
        let attempts = self.config.max_attempts.max(1);
        let mut backoff = self.config.initial_backoff;
        let mut last = String::new();
        let mut outcome = None;
        for attempt in 1..=attempts {
            match self.attempt(request) {
                Ok(text) => {
                    outcome = Some(Ok(text));
                    break;
                }
                Err(Failure::Fatal(e)) => {
                    outcome = Some(Err(e));
                    break;
                }
                Err(Failure::Retryable(msg)) => {
                    log::warn!("LM request attempt {attempt}/{attempts} failed: {msg}");
                    last = msg;
                    if attempt < attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        let outcome = outcome.unwrap_or(Err(LmError::Transport { attempts, message: last }));
        self.record(request, &outcome);
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Minimal HTTP/1.1 server answering each connection with the next
    /// `(status, body)` from `replies`, repeating the last one.
    fn serve(replies: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let (h, b) = (hits.clone(), bodies.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut headers = String::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    headers.push_str(&line);
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                b.lock().unwrap().push(format!("{headers}\n{}", String::from_utf8(body).unwrap()));
                let i = h.fetch_add(1, Ordering::SeqCst);
                let (status, reply) = &replies[i.min(replies.len() - 1)];
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/v1"), hits, bodies)
    }

    fn ok_body(text: &str) -> String {
        serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": text } }] }).to_string()
    }

    fn config(base: String) -> HttpProviderConfig {
        let mut c = HttpProviderConfig::new(base, Some("sk-secret".into()), "m", 4096);
        c.initial_backoff = Duration::from_millis(1);
        c
    }

    #[test]
    fn sends_chat_request_and_reads_content() {
        let (base, hits, bodies) = serve(vec![(200, ok_body("Answer: Reinforce"))]);
        let p = HttpProvider::new(config(base)).unwrap();
        assert_eq!(p.complete(&LmRequest::new("hello")).unwrap(), "Answer: Reinforce");
        assert_eq!(hits.load(Ordering::SeqCst), 1);
        let seen = bodies.lock().unwrap()[0].clone();
        assert!(seen.contains("\"temperature\":0.0"));
        assert!(seen.contains("\"max_tokens\":512"));
        assert!(seen.contains("\"content\":\"hello\""));
        assert!(seen.to_ascii_lowercase().contains("authorization: bearer sk-secret"));
    }

    #[test]
    fn retries_transient_failures() {
        let (base, hits, _) = serve(vec![(503, "{}".into()), (200, ok_body("ok"))]);
        let p = HttpProvider::new(config(base)).unwrap();
        assert_eq!(p.complete(&LmRequest::new("x")).unwrap(), "ok");
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let (base, hits, _) = serve(vec![(500, "{}".into())]);
        let p = HttpProvider::new(config(base)).unwrap();
        let err = p.complete(&LmRequest::new("x")).unwrap_err();
        assert!(matches!(err, LmError::Transport { attempts: 3, .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn overflow_rejected_without_network() {
        let mut c = config("http://127.0.0.1:9".into());
        c.context_window = 10;
        let p = HttpProvider::new(c).unwrap();
        let err = p.complete(&LmRequest::new("x".repeat(100))).unwrap_err();
        assert!(matches!(err, LmError::ContextOverflow { .. }));
    }

    #[test]
    fn trace_omits_api_key() {
        let (base, _, _) = serve(vec![(200, ok_body("done"))]);
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(base);
        c.trace_path = Some(dir.path().join("trace.jsonl"));
        let p = HttpProvider::new(c).unwrap();
        p.complete(&LmRequest::new("prompt text")).unwrap();
        let trace = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
        assert!(trace.contains("prompt text"));
        assert!(trace.contains("done"));
        assert!(!trace.contains("sk-secret"));
    }
}
