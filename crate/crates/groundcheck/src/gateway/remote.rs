//! Remote chat-completion client: HTTP+JSON protocol, bounded
//! concurrency, and retry with exponential backoff and full jitter.
//! The transport is pluggable so every retry/credential path is testable
//! offline; an offline oracle transport answers all five prompt shapes
//! deterministically for desk-scale runs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mock::parse_detection_fields;
use super::GenerationParams;

/// Connection settings for a chat-completion endpoint. The API key is
/// read from the environment variable named by `api_key_env`; an empty
/// name means the endpoint needs no credentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteClientConfig {
    pub base_url: String,
    pub api_key_env: String,
    pub model_name: String,
    pub max_retries: u32,
    /// Base backoff in seconds; attempt n sleeps base * 2^n * jitter.
    pub backoff_base: f64,
    pub request_timeout: f64,
    pub max_concurrency: usize,
}

impl Default for RemoteClientConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.example.com/v1/chat/completions".to_string(),
            api_key_env: "GROUNDCHECK_API_KEY".to_string(),
            model_name: "remote-reasoner".to_string(),
            max_retries: 3,
            backoff_base: 1.0,
            request_timeout: 120.0,
            max_concurrency: 4,
        }
    }
}

impl RemoteClientConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_concurrency < 1 {
            return Err("max_concurrency must be >= 1".into());
        }
        if self.backoff_base < 0.0 {
            return Err("backoff_base must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Wire request: model name, message list, temperature, max tokens.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("network failure: {0}")]
    Network(String),
}

impl TransportError {
    /// 429 and 5xx are transient; timeouts and connection failures too.
    /// Remaining 4xx are fatal.
    pub fn retryable(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::Timeout | TransportError::Network(_) => true,
        }
    }
}

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("environment variable {0} is not set")]
    MissingCredentials(String),
    #[error("exhausted {attempts} attempts; last error: {last}")]
    ExhaustedRetries {
        attempts: u32,
        last: TransportError,
    },
    #[error("fatal transport error: {0}")]
    Fatal(TransportError),
}

pub trait ChatTransport: Send + Sync {
    fn send(&self, request: &ChatRequest, api_key: Option<&str>)
        -> Result<String, TransportError>;
}

/// Counting semaphore bounding in-flight requests per client.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore poisoned");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore poisoned");
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().expect("semaphore poisoned");
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

/// A chat-completion client. Safe for concurrent use; enforces
/// `max_concurrency` itself.
pub struct ChatClient {
    config: RemoteClientConfig,
    transport: Box<dyn ChatTransport>,
    semaphore: Semaphore,
    in_flight_peak: AtomicUsize,
    in_flight: AtomicUsize,
}

impl ChatClient {
    /// Client over the real HTTP transport.
    #[cfg(feature = "http")]
    pub fn new(config: RemoteClientConfig) -> Self {
        let transport = HttpTransport::new(config.base_url.clone(), config.request_timeout);
        Self::with_transport(config, Box::new(transport))
    }

    pub fn with_transport(config: RemoteClientConfig, transport: Box<dyn ChatTransport>) -> Self {
        let permits = config.max_concurrency.max(1);
        Self {
            config,
            transport,
            semaphore: Semaphore::new(permits),
            in_flight_peak: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &RemoteClientConfig {
        &self.config
    }

    /// Highest number of simultaneously in-flight requests observed.
    pub fn in_flight_peak(&self) -> usize {
        self.in_flight_peak.load(Ordering::SeqCst)
    }

    fn api_key(&self) -> Result<Option<String>, ChatError> {
        if self.config.api_key_env.is_empty() {
            return Ok(None);
        }
        std::env::var(&self.config.api_key_env)
            .map(Some)
            .map_err(|_| ChatError::MissingCredentials(self.config.api_key_env.clone()))
    }

    /// Sends one prompt as a single user message and returns the
    /// assistant text. Retries transient failures up to `max_retries`
    /// with exponential backoff and full jitter.
    pub fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, ChatError> {
        // Credentials are checked before any transport call.
        let api_key = self.api_key()?;
        let request = ChatRequest {
            model: self.config.model_name.clone(),
            messages: vec![ChatMessage {
                role: "user".to_string(),
                content: prompt.to_string(),
            }],
            temperature: params.temperature,
            max_tokens: params.max_new_tokens,
        };
        let _permit = self.semaphore.acquire();
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.in_flight_peak.fetch_max(now, Ordering::SeqCst);
        let result = self.send_with_retries(&request, api_key.as_deref());
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }

    fn send_with_retries(
        &self,
        request: &ChatRequest,
        api_key: Option<&str>,
    ) -> Result<String, ChatError> {
        let attempts = self.config.max_retries + 1;
        let mut last = None;
        for attempt in 0..attempts {
            match self.transport.send(request, api_key) {
                Ok(text) => return Ok(text),
                Err(err) if err.retryable() => {
                    if attempt + 1 < attempts {
                        self.sleep_backoff(attempt);
                    }
                    last = Some(err);
                }
                Err(err) => return Err(ChatError::Fatal(err)),
            }
        }
        Err(ChatError::ExhaustedRetries {
            attempts,
            last: last.expect("at least one attempt"),
        })
    }

    fn sleep_backoff(&self, attempt: u32) {
        if self.config.backoff_base <= 0.0 {
            return;
        }
        let ceiling = self.config.backoff_base * 2f64.powi(attempt as i32);
        let mut rng = ChaCha8Rng::from_entropy();
        let jittered = rng.gen_range(0.0..ceiling);
        std::thread::sleep(Duration::from_secs_f64(jittered));
    }
}

/// HTTP transport speaking the chat-completion JSON protocol: POST the
/// request body, read `choices[0].message.content` from the reply.
#[cfg(feature = "http")]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
}

#[cfg(feature = "http")]
impl HttpTransport {
    pub fn new(url: String, timeout_secs: f64) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(timeout_secs.max(0.001)))
            .build()
            .expect("HTTP client construction");
        Self { client, url }
    }
}

#[cfg(feature = "http")]
impl ChatTransport for HttpTransport {
    fn send(
        &self,
        request: &ChatRequest,
        api_key: Option<&str>,
    ) -> Result<String, TransportError> {
        let mut builder = self.client.post(&self.url).json(request);
        if let Some(key) = api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|err| {
            if err.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Network(err.to_string())
            }
        })?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .map_err(|err| TransportError::Network(err.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body });
        }
        let value: serde_json::Value = serde_json::from_str(&body)
            .map_err(|err| TransportError::Network(format!("bad JSON reply: {err}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                TransportError::Network("reply lacks choices[0].message.content".to_string())
            })
    }
}

/// Transport that replays scripted outcomes in order, counting calls.
pub struct MockTransport {
    outcomes: Mutex<std::collections::VecDeque<Result<String, TransportError>>>,
    repeat_last: Option<Result<String, TransportError>>,
    calls: AtomicUsize,
}

impl MockTransport {
    pub fn new(outcomes: Vec<Result<String, TransportError>>) -> Self {
        Self {
            outcomes: Mutex::new(outcomes.into()),
            repeat_last: None,
            calls: AtomicUsize::new(0),
        }
    }

    /// After the queue is exhausted, keep returning `fallback`.
    pub fn with_fallback(mut self, fallback: Result<String, TransportError>) -> Self {
        self.repeat_last = Some(fallback);
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatTransport for MockTransport {
    fn send(
        &self,
        _request: &ChatRequest,
        _api_key: Option<&str>,
    ) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut queue = self.outcomes.lock().expect("mock transport poisoned");
        match queue.pop_front() {
            Some(outcome) => outcome,
            None => self
                .repeat_last
                .clone()
                .unwrap_or(Err(TransportError::Network(
                    "mock transport exhausted".to_string(),
                ))),
        }
    }
}

/// Offline stand-in for a frontier endpoint: inspects the prompt and
/// produces a deterministic, well-formed response for each of the
/// shipped prompt shapes (detection/synthesis, explanation reward,
/// decontextualization, decomposition, judge).
pub struct OfflineOracleTransport {
    calls: AtomicUsize,
}

impl Default for OfflineOracleTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl OfflineOracleTransport {
    pub fn new() -> Self {
        Self {
            calls: AtomicUsize::new(0),
        }
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn detection_reply(prompt: &str) -> String {
        let (doc, claim) = parse_detection_fields(prompt)
            .unwrap_or_else(|| (String::new(), String::new()));
        let supported = doc.contains(&claim);
        let answer = if supported { "Yes" } else { "No" };
        let finding = if supported {
            "each part of the claim is stated in the document"
        } else {
            "part of the claim is not stated in the document"
        };
        format!(
            "<think>Checked the claim against the document step by step; {finding}.</think>\
             <reason>The document was searched for the content of the claim and {finding}, \
             so the claim is {}.</reason><answer>{answer}</answer>",
            if supported { "consistent" } else { "inconsistent" }
        )
    }

    fn decontextualization_reply(prompt: &str) -> String {
        let claim = prompt
            .rsplit_once("Claim: ")
            .map(|(_, tail)| tail.trim_end_matches("\n\nAnswer:").trim())
            .unwrap_or("");
        // Pronoun-initial claims are treated as context-dependent.
        let dependent = ["it ", "this ", "they ", "he ", "she ", "in this "]
            .iter()
            .any(|p| claim.to_lowercase().starts_with(p));
        if dependent {
            serde_json::json!({"label": "no", "decontext": format!("In the given context, {claim}")})
                .to_string()
        } else {
            serde_json::json!({"label": "yes", "decontext": "NA"}).to_string()
        }
    }

    fn decomposition_reply(prompt: &str) -> String {
        let sentence = prompt
            .rsplit_once("Sentence: ")
            .map(|(_, tail)| tail.trim_end_matches("\n\nFacts:").trim())
            .unwrap_or("");
        let parts: Vec<&str> = sentence
            .split(" and ")
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .collect();
        let facts = if parts.is_empty() { vec![sentence] } else { parts };
        facts
            .iter()
            .map(|f| format!("- {}", f.trim_end_matches('.').to_string() + "."))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn judge_reply() -> String {
        serde_json::json!({"readability": 4, "helpfulness": 4, "informativeness": 3}).to_string()
    }
}

impl ChatTransport for OfflineOracleTransport {
    fn send(
        &self,
        request: &ChatRequest,
        _api_key: Option<&str>,
    ) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = request
            .messages
            .last()
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let reply = if prompt.contains("### Output Format (JSON only):") {
            Self::judge_reply()
        } else if prompt.contains("Segment the following sentence into individual facts:") {
            Self::decomposition_reply(prompt)
        } else if prompt.contains("respond with a JSON format") {
            Self::decontextualization_reply(prompt)
        } else {
            Self::detection_reply(prompt)
        };
        Ok(reply)
    }
}
