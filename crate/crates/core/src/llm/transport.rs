use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    pub fn new(status: u16, body: impl Into<String>) -> Self {
        HttpResponse {
            status,
            body: body.into(),
        }
    }
}

/// Sends one JSON POST. Any HTTP status is a successful transport result;
/// only connection-level failures are errors.
pub trait Transport: Send + Sync {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
        timeout: Duration,
    ) -> Result<HttpResponse, LlmError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
        timeout: Duration,
    ) -> Result<HttpResponse, LlmError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url);
        for (k, v) in headers {
            req = req.header(k, v);
        }
        let mut resp = req
            .send(body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpResponse::new(status, text))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

/// Replays a fixed sequence of responses and records every request.
/// Runs out with a transport error.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<HttpResponse, LlmError>>>,
    seen: Mutex<Vec<RecordedRequest>>,
}

impl ScriptedTransport {
    pub fn new(script: Vec<Result<HttpResponse, LlmError>>) -> Self {
        ScriptedTransport {
            script: Mutex::new(script.into()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.seen.lock().expect("lock").clone()
    }
}

impl Transport for ScriptedTransport {
    fn post(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &str,
        _timeout: Duration,
    ) -> Result<HttpResponse, LlmError> {
        self.seen.lock().expect("lock").push(RecordedRequest {
            url: url.to_string(),
            headers: headers.to_vec(),
            body: body.to_string(),
        });
        self.script
            .lock()
            .expect("lock")
            .pop_front()
            .unwrap_or_else(|| Err(LlmError::Transport("script exhausted".into())))
    }
}

/// Answers every request with the content of its last message.
#[cfg(test)]
pub(crate) struct EchoTransport;

#[cfg(test)]
impl Transport for EchoTransport {
    fn post(&self, _: &str, _: &[(String, String)], body: &str, _: Duration) -> Result<HttpResponse, LlmError> {
        let req: super::ChatRequest = serde_json::from_str(body).unwrap();
        let text = req.messages.last().map(|m| m.content.clone()).unwrap_or_default();
        let out = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]});
        Ok(HttpResponse::new(200, out.to_string()))
    }
}
