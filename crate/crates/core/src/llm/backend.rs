use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn user_text(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == "user").map(|m| m.content.as_str()).unwrap_or("")
    }
}

/// Anything that turns a chat request into completion text.
pub trait ModelBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError>;

    fn describe(&self) -> String;
}

type Responder = dyn Fn(&ChatRequest) -> String + Send + Sync;

/// Offline backend answering from a fixed rule.
#[derive(Clone)]
pub struct StubBackend {
    name: String,
    respond: Arc<Responder>,
}

impl std::fmt::Debug for StubBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "StubBackend({})", self.name)
    }
}

impl StubBackend {
    pub fn canned(text: impl Into<String>) -> Self {
        let text = text.into();
        Self { name: "canned".into(), respond: Arc::new(move |_| text.clone()) }
    }

    pub fn from_fn(name: &str, f: impl Fn(&ChatRequest) -> String + Send + Sync + 'static) -> Self {
        Self { name: name.into(), respond: Arc::new(f) }
    }

    /// Answers with every target-flow line that is not an added line.
    pub fn select_all() -> Self {
        Self::from_fn("select-all", |req| {
            let lines = target_flow_lines(req.user_text());
            let picked: Vec<u32> = lines.into_iter().filter(|(_, added)| !added).map(|(n, _)| n).collect();
            super::prompt::format_answer("every statement of the flow", &picked)
        })
    }

    /// Answers with the target-flow lines whose text contains one of the
    /// given needles; falls back to every selectable line.
    pub fn select_matching(needles: Vec<String>) -> Self {
        Self::from_fn("select-matching", move |req| {
            let text = req.user_text();
            let target = target_section(text);
            let re = flow_line_regex();
            let mut all = Vec::new();
            let mut picked = Vec::new();
            for cap in target.lines().filter_map(|l| re.captures(l)) {
                let n: u32 = cap[1].parse().unwrap_or(0);
                if &cap[2] == "+" {
                    continue;
                }
                all.push(n);
                if needles.iter().any(|needle| cap[3].contains(needle.as_str())) {
                    picked.push(n);
                }
            }
            let lines = if picked.is_empty() { all } else { picked };
            super::prompt::format_answer("statements matching the configured patterns", &lines)
        })
    }
}

impl ModelBackend for StubBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        Ok((self.respond)(req))
    }

    fn describe(&self) -> String {
        format!("stub:{}", self.name)
    }
}

fn flow_line_regex() -> Regex {
    Regex::new(r"^(\d+): ([+-]?)(.*)$").expect("static regex")
}

fn target_section(user_text: &str) -> &str {
    let start = user_text.rfind("### Target").unwrap_or(0);
    &user_text[start..]
}

/// `(line, is_added)` for each flow line of the prompt's target section.
pub fn target_flow_lines(user_text: &str) -> Vec<(u32, bool)> {
    let re = flow_line_regex();
    target_section(user_text)
        .lines()
        .filter_map(|l| re.captures(l))
        .filter_map(|c| Some((c[1].parse().ok()?, &c[2] == "+")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportResponse {
    pub status: u16,
    pub body: String,
}

/// One HTTP POST carrying JSON.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<TransportResponse, String>;
}

#[derive(Debug, Clone)]
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<TransportResponse, String> {
        let mut req = self.client.post(url).json(body);
        for (k, v) in headers {
            req = req.header(k, v);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(TransportResponse { status, body })
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpSettings {
    pub base_url: String,
    pub api_key: Option<String>,
    pub retries: u32,
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            retries: 3,
            backoff: Duration::from_millis(500),
            max_in_flight: 2,
        }
    }
}

/// Chat-completion client over a pluggable transport.
pub struct HttpBackend {
    settings: HttpSettings,
    transport: Arc<dyn Transport>,
    gate: Semaphore,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("base_url", &self.settings.base_url).finish()
    }
}

impl HttpBackend {
    pub fn new(settings: HttpSettings, transport: Arc<dyn Transport>) -> Self {
        let gate = Semaphore::new(settings.max_in_flight);
        Self { settings, transport, gate }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.settings.base_url.trim_end_matches('/'))
    }
}

fn is_token_limit(status: u16, body: &str) -> bool {
    let lower = body.to_ascii_lowercase();
    (status == 400 || status == 413)
        && (lower.contains("context_length") || lower.contains("maximum context length") || lower.contains("too many tokens"))
}

impl ModelBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let _permit = self.gate.acquire();
        let body = json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
        if let Some(k) = &self.settings.api_key {
            headers.push(("Authorization".into(), format!("Bearer {k}")));
        }
        let mut last = String::new();
        for attempt in 0..=self.settings.retries {
            if attempt > 0 {
                std::thread::sleep(self.settings.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.transport.post_json(&self.url(), &headers, &body) {
                Ok(r) if r.status == 200 => {
                    let v: Value = serde_json::from_str(&r.body).map_err(|e| LlmError::BadReply(e.to_string()))?;
                    let choice = &v["choices"][0];
                    if choice["finish_reason"] == "length" {
                        return Err(LlmError::TokenLimit(format!("completion truncated at {} tokens", req.max_tokens)));
                    }
                    return choice["message"]["content"]
                        .as_str()
                        .map(str::to_string)
                        .ok_or_else(|| LlmError::BadReply("no choices[0].message.content".into()));
                }
                Ok(r) if is_token_limit(r.status, &r.body) => return Err(LlmError::TokenLimit(r.body)),
                Ok(r) if r.status == 429 || r.status >= 500 => last = format!("HTTP {}", r.status),
                Ok(r) => return Err(LlmError::BackendUnavailable(format!("HTTP {}: {}", r.status, r.body))),
                Err(e) => last = e,
            }
            log::warn!("model request attempt {} failed: {last}", attempt + 1);
        }
        Err(LlmError::BackendUnavailable(format!("{} attempts failed, last: {last}", self.settings.retries + 1)))
    }

    fn describe(&self) -> String {
        format!("http:{}", self.settings.base_url)
    }
}
