//! Blocking chat-completion client with retries, a concurrency cap and
//! digest-only call logging.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{AgentEvent, AgentRole, EventLog};
use crate::semantic_map::BBox;

static REQUESTS_SENT: AtomicU64 = AtomicU64::new(0);

/// HTTP requests attempted by every client in this process.
pub fn requests_sent() -> u64 {
    REQUESTS_SENT.load(Ordering::SeqCst)
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("cannot read endpoint config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("endpoint config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("no messages to send")]
    EmptyMessages,
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response shape: {0}")]
    Decode(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<LlmError> },
}

impl LlmError {
    fn retryable(&self) -> bool {
        match self {
            LlmError::Transport(_) => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleModels {
    pub orchestration: String,
    pub perception: String,
    pub decision: String,
}

impl Default for RoleModels {
    fn default() -> Self {
        Self {
            orchestration: "gpt-4o-mini".into(),
            perception: "gpt-4o-mini".into(),
            decision: "gpt-4o-mini".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub models: RoleModels,
    /// Environment variable holding the API key. The key itself never
    /// appears in config files or traces.
    pub api_key_env: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// First retry delay; doubles per attempt.
    pub backoff_ms: u64,
    pub temperature: f64,
    pub max_concurrency: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            models: RoleModels::default(),
            api_key_env: Some("FOCUSNAV_API_KEY".into()),
            timeout_secs: 60.0,
            max_retries: 2,
            backoff_ms: 250,
            temperature: 0.0,
            max_concurrency: 4,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.base_url.trim().is_empty() {
            return Err(LlmError::Config("base_url is empty".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(LlmError::Config("timeout_secs must be positive".into()));
        }
        if self.max_concurrency == 0 {
            return Err(LlmError::Config(
                "max_concurrency must be at least 1".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, LlmError> {
        let c: EndpointConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn model(&self, role: AgentRole) -> &str {
        match role {
            AgentRole::Perception => &self.models.perception,
            AgentRole::Decision => &self.models.decision,
            AgentRole::Orchestration | AgentRole::Scan => &self.models.orchestration,
        }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Image attached to a message, optionally narrowed to a panorama region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRef {
    pub url: String,
    pub region: Option<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub text: String,
    pub image: Option<ImageRef>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            text: text.into(),
            image: None,
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            text: text.into(),
            image: None,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            text: text.into(),
            image: None,
        }
    }

    fn wire(&self) -> Value {
        match &self.image {
            None => json!({"role": self.role, "content": self.text}),
            Some(img) => {
                let url = match img.region {
                    Some(r) => format!(
                        "{}#xywh={:.0},{:.0},{:.0},{:.0}",
                        img.url,
                        r.x1,
                        r.y1,
                        r.width(),
                        r.height()
                    ),
                    None => img.url.clone(),
                };
                json!({
                    "role": self.role,
                    "content": [
                        {"type": "text", "text": self.text},
                        {"type": "image_url", "image_url": {"url": url}}
                    ]
                })
            }
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("limiter poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("limiter poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter poisoned") += 1;
        self.0.cv.notify_one();
    }
}

pub fn digest(text: &str) -> String {
    let d = Sha256::digest(text.as_bytes());
    format!("sha256:{}", &hex::encode(d)[..16])
}

pub struct ChatClient {
    config: EndpointConfig,
    agent: ureq::Agent,
    limiter: Limiter,
    events: Option<Arc<EventLog>>,
}

impl ChatClient {
    pub fn new(config: EndpointConfig, events: Option<Arc<EventLog>>) -> Result<Self, LlmError> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            limiter: Limiter::new(config.max_concurrency),
            config,
            agent,
            events,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn log(&self, role: AgentRole, kind: &str, detail: String) {
        if let Some(ev) = &self.events {
            ev.push(AgentEvent {
                role,
                kind: kind.to_string(),
                detail,
            });
        }
    }

    /// First completion text for `messages`, retrying transport errors,
    /// 429 and 5xx with exponential backoff.
    pub fn chat(&self, role: AgentRole, messages: &[ChatMessage]) -> Result<String, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::EmptyMessages);
        }
        let body = json!({
            "model": self.config.model(role),
            "messages": messages.iter().map(ChatMessage::wire).collect::<Vec<_>>(),
            "temperature": self.config.temperature,
        });
        let body_text = body.to_string();
        let request_digest = digest(&body_text);
        let attempts = self.config.max_retries + 1;
        let mut last = None;
        for attempt in 1..=attempts {
            if attempt > 1 {
                let delay = self
                    .config
                    .backoff_ms
                    .saturating_mul(1 << (attempt - 2).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            let result = {
                let _permit = self.limiter.acquire();
                self.send_once(&body_text)
            };
            match result {
                Ok(text) => {
                    self.log(
                        role,
                        "llm_call",
                        format!(
                            "model={} attempt={attempt} request={request_digest} response={} chars={}",
                            self.config.model(role),
                            digest(&text),
                            text.chars().count()
                        ),
                    );
                    return Ok(text);
                }
                Err(e) => {
                    self.log(
                        role,
                        "llm_error",
                        format!("attempt={attempt} request={request_digest} error={e}"),
                    );
                    let retry = e.retryable();
                    last = Some(e);
                    if !retry {
                        break;
                    }
                }
            }
        }
        let last = last.expect("at least one attempt");
        if attempts > 1 && last.retryable() {
            Err(LlmError::Exhausted {
                attempts,
                last: Box::new(last),
            })
        } else {
            Err(last)
        }
    }

    fn send_once(&self, body: &str) -> Result<String, LlmError> {
        REQUESTS_SENT.fetch_add(1, Ordering::SeqCst);
        let mut req = self
            .agent
            .post(&self.config.url())
            .header("Content-Type", "application/json");
        if let Some(var) = &self.config.api_key_env {
            if let Ok(key) = std::env::var(var) {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
        }
        let mut resp = req
            .send(body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Status {
                status,
                body: text.chars().take(200).collect(),
            });
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| LlmError::Decode(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Decode("missing choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let c = EndpointConfig::from_toml("").unwrap();
        assert_eq!(c, EndpointConfig::default());
        assert_eq!(c.max_retries, 2);
        assert_eq!(c.temperature, 0.0);
        assert!(EndpointConfig::from_toml("timeout_secs = 0.0").is_err());
        assert!(EndpointConfig::from_toml("max_concurrency = 0").is_err());
        assert!(EndpointConfig::from_toml("api_key = \"x\"").is_err());
    }

    #[test]
    fn wire_format() {
        let m = ChatMessage {
            role: "user".into(),
            text: "hi".into(),
            image: Some(ImageRef {
                url: "file:///p.jpg".into(),
                region: Some(BBox::new(10.0, 20.0, 110.0, 70.0)),
            }),
        };
        let w = m.wire();
        assert_eq!(
            w["content"][1]["image_url"]["url"],
            "file:///p.jpg#xywh=10,20,100,50"
        );
        assert_eq!(
            ChatMessage::user("x").wire(),
            json!({"role": "user", "content": "x"})
        );
    }

    #[test]
    fn digest_is_short_and_stable() {
        assert_eq!(digest("abc"), digest("abc"));
        assert_eq!(digest("abc").len(), "sha256:".len() + 16);
    }

    #[test]
    fn limiter_caps_concurrency() {
        let l = Arc::new(Limiter::new(2));
        let live = Arc::new(AtomicU64::new(0));
        let peak = Arc::new(AtomicU64::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (l, live, peak) = (l.clone(), live.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _p = l.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    live.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn empty_messages_rejected() {
        let c = ChatClient::new(EndpointConfig::default(), None).unwrap();
        assert!(matches!(
            c.chat(AgentRole::Decision, &[]),
            Err(LlmError::EmptyMessages)
        ));
    }
}
