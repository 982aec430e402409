//! Chat-completion client for the downstream reader, the prompted
//! reduction baseline, and an offline mock reader.
//!
//! Requests go to `POST {endpoint}/v1/chat/completions` with the body
//! `{"model", "messages": [{"role", "content"}], "temperature", "max_tokens"}`
//! (fields in that order). The reply text is `choices[0].message.content`.
//! The bearer token is read from the environment variable named by
//! [`LlmConfig::api_key_env`].
//!
//! The QA prompt is, verbatim (`{table}` is the linearized context):
//!
//! ```text
//! Answer the question using only the table below. Reply with the answer only. If there are several answers, separate them with " | ". If the table does not contain the answer, reply "unknown".
//! Table: {table}
//! Question: {question}
//! Answer:
//! ```

mod baseline;
mod mock;
mod transport;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baseline::{
    llm_reduce_baseline, parse_column_selection, parse_row_selection, BaselineReduction, Selection,
};
pub use mock::{mock_complete, truncate_prompt, MockLlmConfig, UNKNOWN_ANSWER};
pub use transport::{HttpResponse, RecordedRequest, ScriptedTransport, Transport, UreqTransport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("authentication failed (HTTP {0})")]
    Auth(u16),
    #[error("rate limited after {0} attempts")]
    RateLimited(u32),
    #[error("HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Base URL; `/v1/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles on each further retry.
    pub backoff_base_ms: u64,
    pub api_key_env: String,
    /// Upper bound on requests in flight in [`LlmClient::complete_batch`].
    pub max_concurrency: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "http://localhost:8000".into(),
            model: "gpt-4".into(),
            temperature: 0.0,
            max_tokens: 256,
            timeout_secs: 60.0,
            max_attempts: 3,
            backoff_base_ms: 500,
            api_key_env: "OPENAI_API_KEY".into(),
            max_concurrency: 4,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::Config(m.to_string()));
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be >= 0");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be >= 1");
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return bad("timeout_secs must be positive");
        }
        if self.max_concurrency == 0 {
            return bad("max_concurrency must be >= 1");
        }
        if self.endpoint.trim().is_empty() {
            return bad("endpoint is empty");
        }
        Ok(())
    }

    pub fn url(&self) -> String {
        format!("{}/v1/chat/completions", self.endpoint.trim_end_matches('/'))
    }

    /// Delay after failed attempt `attempt` (1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << (attempt.saturating_sub(1)).min(16);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(cfg: &LlmConfig, messages: &[ChatMessage]) -> Self {
        ChatRequest {
            model: cfg.model.clone(),
            messages: messages.to_vec(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("requests serialize")
    }
}

/// First choice's message text of a chat-completion response body.
pub fn parse_completion(body: &str) -> Result<String, LlmError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
}

pub fn qa_prompt(question: &str, context: &str) -> String {
    format!(
        "Answer the question using only the table below. Reply with the answer only. \
         If there are several answers, separate them with \" | \". \
         If the table does not contain the answer, reply \"unknown\".\n\
         Table: {context}\nQuestion: {question}\nAnswer:"
    )
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct LlmClient<T: Transport = UreqTransport> {
    cfg: LlmConfig,
    transport: T,
    api_key: Option<String>,
    sleeper: Sleeper,
}

impl LlmClient<UreqTransport> {
    /// HTTP client; the API key is read from `cfg.api_key_env` now.
    pub fn from_env(cfg: LlmConfig) -> Result<Self, LlmError> {
        let key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        if key.is_none() {
            log::warn!("{} is not set; sending requests without authorization", cfg.api_key_env);
        }
        LlmClient::new(cfg, UreqTransport, key)
    }
}

impl<T: Transport> LlmClient<T> {
    pub fn new(cfg: LlmConfig, transport: T, api_key: Option<String>) -> Result<Self, LlmError> {
        cfg.validate()?;
        Ok(LlmClient {
            cfg,
            transport,
            api_key,
            sleeper: Box::new(std::thread::sleep),
        })
    }

    /// Replace the function used to wait between retries.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn headers(&self) -> Vec<(String, String)> {
        let mut h = vec![("Content-Type".to_string(), "application/json".to_string())];
        if let Some(key) = &self.api_key {
            h.push(("Authorization".to_string(), format!("Bearer {key}")));
        }
        h
    }

    /// Send one chat request. 429, 5xx and transport failures are retried
    /// with exponential backoff; 401/403 and other 4xx fail at once.
    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let body = ChatRequest::new(&self.cfg, messages).to_json();
        let url = self.cfg.url();
        let headers = self.headers();
        let timeout = Duration::from_secs_f64(self.cfg.timeout_secs);
        let mut last = LlmError::Transport("no attempt made".into());
        for attempt in 1..=self.cfg.max_attempts {
            match self.transport.post(&url, &headers, &body, timeout) {
                Ok(resp) => match resp.status {
                    200..=299 => return parse_completion(&resp.body),
                    401 | 403 => return Err(LlmError::Auth(resp.status)),
                    429 => last = LlmError::RateLimited(attempt),
                    500..=599 => {
                        last = LlmError::HttpStatus {
                            status: resp.status,
                            body: resp.body,
                        }
                    }
                    status => {
                        return Err(LlmError::HttpStatus {
                            status,
                            body: resp.body,
                        })
                    }
                },
                Err(e) => last = e,
            }
            if attempt < self.cfg.max_attempts {
                log::debug!("attempt {attempt} failed ({last}); retrying");
                (self.sleeper)(self.cfg.backoff(attempt));
            }
        }
        Err(last)
    }

    /// Complete every conversation with at most `max_concurrency` requests
    /// in flight. Results are in input order.
    pub fn complete_batch(&self, conversations: &[Vec<ChatMessage>]) -> Vec<Result<String, LlmError>> {
        use rayon::prelude::*;
        match rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.max_concurrency)
            .build()
        {
            Ok(pool) => pool.install(|| conversations.par_iter().map(|m| self.complete(m)).collect()),
            Err(e) => {
                log::warn!("falling back to sequential requests: {e}");
                conversations.iter().map(|m| self.complete(m)).collect()
            }
        }
    }

    pub fn qa_with_context(&self, question: &str, context: &str) -> Result<String, LlmError> {
        let answer = self.complete(&[ChatMessage::user(qa_prompt(question, context))])?;
        Ok(answer.trim().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::{Arc, Mutex};

    fn ok_body(text: &str) -> String {
        serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}).to_string()
    }

    fn client(script: Vec<Result<HttpResponse, LlmError>>, attempts: u32) -> (LlmClient<ScriptedTransport>, Arc<Mutex<Vec<Duration>>>) {
        let cfg = LlmConfig {
            max_attempts: attempts,
            backoff_base_ms: 100,
            ..Default::default()
        };
        let slept = Arc::new(Mutex::new(Vec::new()));
        let s = slept.clone();
        let c = LlmClient::new(cfg, ScriptedTransport::new(script), Some("k".into()))
            .unwrap()
            .with_sleeper(move |d| s.lock().unwrap().push(d));
        (c, slept)
    }

    #[test]
    fn retries_rate_limits_then_succeeds() {
        let (c, slept) = client(
            vec![
                Ok(HttpResponse::new(429, "")),
                Ok(HttpResponse::new(429, "")),
                Ok(HttpResponse::new(200, ok_body("Paris"))),
            ],
            3,
        );
        assert_eq!(c.complete(&[ChatMessage::user("q")]).unwrap(), "Paris");
        assert_eq!(c.transport().requests().len(), 3);
        assert_eq!(*slept.lock().unwrap(), vec![Duration::from_millis(100), Duration::from_millis(200)]);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let (c, slept) = client(vec![Ok(HttpResponse::new(401, "no"))], 3);
        assert_eq!(c.complete(&[ChatMessage::user("q")]), Err(LlmError::Auth(401)));
        assert_eq!(c.transport().requests().len(), 1);
        assert!(slept.lock().unwrap().is_empty());
    }

    #[test]
    fn exhausted_rate_limit_and_other_statuses() {
        let (c, _) = client(vec![Ok(HttpResponse::new(429, "")), Ok(HttpResponse::new(429, ""))], 2);
        assert_eq!(c.complete(&[]), Err(LlmError::RateLimited(2)));
        let (c, _) = client(vec![Ok(HttpResponse::new(400, "bad"))], 3);
        assert!(matches!(c.complete(&[]), Err(LlmError::HttpStatus { status: 400, .. })));
        assert_eq!(c.transport().requests().len(), 1);
        let (c, _) = client(
            vec![Ok(HttpResponse::new(503, "")), Ok(HttpResponse::new(200, "{}"))],
            3,
        );
        assert!(matches!(c.complete(&[]), Err(LlmError::MalformedResponse(_))));
        let (c, _) = client(
            vec![Err(LlmError::Transport("reset".into())), Ok(HttpResponse::new(200, ok_body(" x ")))],
            2,
        );
        assert_eq!(c.qa_with_context("q", "").unwrap(), "x");
    }

    #[test]
    fn request_shape_and_headers() {
        let (c, _) = client(vec![Ok(HttpResponse::new(200, ok_body("a")))], 1);
        c.complete(&[ChatMessage::user("hi")]).unwrap();
        let reqs = c.transport().requests();
        assert_eq!(reqs[0].url, "http://localhost:8000/v1/chat/completions");
        assert_eq!(
            reqs[0].body,
            r#"{"model":"gpt-4","messages":[{"role":"user","content":"hi"}],"temperature":0.0,"max_tokens":256}"#
        );
        assert!(reqs[0].headers.contains(&("Authorization".into(), "Bearer k".into())));
    }

    #[test]
    fn batch_keeps_order() {
        let cfg = LlmConfig::default();
        let echo = transport::EchoTransport;
        let c = LlmClient::new(cfg, echo, None).unwrap();
        let convs: Vec<Vec<ChatMessage>> = (0..20).map(|i| vec![ChatMessage::user(format!("m{i}"))]).collect();
        let out = c.complete_batch(&convs);
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.as_ref().unwrap(), &format!("m{i}"));
        }
    }

    #[test]
    fn config_validation_and_prompt() {
        assert!(LlmConfig { max_attempts: 0, ..Default::default() }.validate().is_err());
        assert!(LlmConfig { temperature: -0.1, ..Default::default() }.validate().is_err());
        assert_eq!(qa_prompt("q?", "Row0: (a,1)"), qa_prompt("q?", "Row0: (a,1)"));
        assert!(qa_prompt("q?", "").contains("Table: \nQuestion: q?\nAnswer:"));
    }
}
