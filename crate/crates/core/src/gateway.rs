//! Chat-completion client.
//!
//! [`Gateway`] wraps a [`Backend`] with retry, exponential backoff, an
//! optional client-side rate limiter and bounded concurrent batches. Two
//! backends exist: [`HttpBackend`] speaks the common chat-completion JSON
//! protocol, and [`MockBackend`] produces a deterministic report offline.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::LlmSettings;
use crate::model::Polarity;
use crate::promptgen::{self, SECTION_TITLES};

/// Decoding parameters sent with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            model: "gpt-4".to_owned(),
            temperature: 0.4,
            max_tokens: 1000,
            top_p: 1.0,
            frequency_penalty: 0.0,
            presence_penalty: 0.0,
        }
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_tokens < 1 {
            return Err("max_tokens must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.top_p) {
            return Err(format!("top_p {} outside [0, 1]", self.top_p));
        }
        for (name, v) in [("frequency_penalty", self.frequency_penalty), ("presence_penalty", self.presence_penalty)] {
            if !(-2.0..=2.0).contains(&v) {
                return Err(format!("{name} {v} outside [-2, 2]"));
            }
        }
        if self.model.trim().is_empty() {
            return Err("model name is empty".into());
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    top_p: f64,
    frequency_penalty: f64,
    presence_penalty: f64,
}

/// JSON request body: the whole prompt as a single user message.
pub fn request_body(prompt: &str, params: &CompletionParams) -> String {
    let req = ChatRequest {
        model: &params.model,
        messages: [ChatMessage { role: "user", content: prompt }],
        temperature: params.temperature,
        max_tokens: params.max_tokens,
        top_p: params.top_p,
        frequency_penalty: params.frequency_penalty,
        presence_penalty: params.presence_penalty,
    };
    serde_json::to_string(&req).expect("request serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
    pub total_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: TokenUsage,
    /// Retries spent before this result (0 when the first attempt succeeded).
    pub retries: u32,
}

impl CompletionResult {
    pub fn is_truncated(&self) -> bool {
        self.finish_reason == FinishReason::Length
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("network error: {0}")]
    Network(String),
    #[error("rate limited by backend")]
    RateLimited { retry_after: Option<Duration> },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("credential variable `{0}` is not set")]
    MissingCredential(String),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
    #[error("completion truncated at max_tokens")]
    Truncated(Box<CompletionResult>),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<GatewayError> },
}

impl GatewayError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Network(_) | GatewayError::RateLimited { .. })
    }
}

/// A chat-completion service. One call is one request, no retries.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, prompt: &str, params: &CompletionParams) -> Result<CompletionResult, GatewayError>;
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Parses a chat-completion response body.
pub fn parse_response(body: &str) -> Result<CompletionResult, GatewayError> {
    let resp: ChatResponse = serde_json::from_str(body).map_err(|e| GatewayError::InvalidResponse(e.to_string()))?;
    let choice = resp.choices.into_iter().next().ok_or_else(|| GatewayError::InvalidResponse("no choices".into()))?;
    let finish_reason = match choice.finish_reason.as_deref() {
        None | Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    let text = choice.message.content.unwrap_or_default();
    if text.is_empty() && finish_reason == FinishReason::Stop {
        return Err(GatewayError::InvalidResponse("empty completion".into()));
    }
    Ok(CompletionResult { text, finish_reason, usage: resp.usage.unwrap_or_default(), retries: 0 })
}

pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        HttpBackend { agent, endpoint: endpoint.into(), api_key }
    }

    /// Reads the credential from `settings.api_key_env`; fails if unset.
    pub fn from_settings(settings: &LlmSettings) -> Result<Self, GatewayError> {
        let key = std::env::var(&settings.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GatewayError::MissingCredential(settings.api_key_env.clone()))?;
        Ok(Self::new(settings.endpoint.clone(), Some(key), Duration::from_secs(settings.timeout_secs)))
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn send(&self, prompt: &str, params: &CompletionParams) -> Result<CompletionResult, GatewayError> {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(request_body(prompt, params)).map_err(|e| GatewayError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64);
        let body = resp.body_mut().read_to_string().map_err(|e| GatewayError::Network(e.to_string()))?;
        match status {
            200..=299 => parse_response(&body),
            401 | 403 => Err(GatewayError::Auth(body)),
            429 => Err(GatewayError::RateLimited { retry_after }),
            500..=599 => Err(GatewayError::Network(format!("HTTP {status}"))),
            _ => Err(GatewayError::Http { status, body }),
        }
    }
}

/// Offline backend: a six-section report derived only from the prompt.
///
/// The prompt's SHA-256 digest seeds the phrasing, and tag lines found in
/// the analysis sections are echoed back, so equal prompts give equal
/// reports and different prompts give different ones.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

const OPENERS: [&str; 4] = [
    "You have been working steadily, and it shows.",
    "Thank you for the effort you have put into your practice.",
    "Your recent practice gives a clear picture of where you stand.",
    "You are building your mathematics skills step by step.",
];
const ENCOURAGEMENT: [&str; 4] = [
    "Keep going; every question you try makes you stronger.",
    "Small, regular practice sessions will help you most.",
    "Be proud of what you have achieved so far.",
    "With patience and practice you can reach your next goal.",
];
const STRATEGIES: [&str; 6] = [
    "Review one worked example before starting a new set of questions.",
    "Read each question twice and underline the key numbers.",
    "Check your answer by estimating before you calculate.",
    "Keep a small notebook of mistakes and revisit it each week.",
    "Explain a solution out loud to a friend or family member.",
    "Set a short timer and practise a few questions with full focus.",
];

fn tag_polarity(tag: crate::model::TagId) -> Polarity {
    let i = tag.index();
    let positive = matches!(i, 0..=5 | 12..=16 | 22..=27);
    if positive {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

impl MockBackend {
    fn collect_tags(prompt: &str) -> Vec<(usize, crate::model::TagId)> {
        let mut current: Option<usize> = None;
        let mut out = Vec::new();
        for line in prompt.lines() {
            if let Some(title) = line.strip_prefix("## ") {
                current = SECTION_TITLES.iter().position(|t| *t == title.trim());
                continue;
            }
            if let (Some(sec), Some(desc)) = (current, line.strip_prefix("- ")) {
                if let Some(tag) = promptgen::tag_for_description(desc.trim()) {
                    out.push((sec, tag));
                }
            }
        }
        out
    }

    pub fn render(prompt: &str) -> String {
        let digest = Sha256::digest(prompt.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = rand_chacha::ChaCha8Rng::from_seed(seed);
        let tags = Self::collect_tags(prompt);
        let strengths = tags.iter().filter(|(_, t)| tag_polarity(*t) == Polarity::Positive).count();
        let growth = tags.len() - strengths;

        let mut out = String::from("# Personalized Learning Report\n");
        for (i, title) in SECTION_TITLES.iter().enumerate() {
            out.push_str(&format!("\n## {title}\n\n"));
            match i {
                0 => {
                    out.push_str(OPENERS.choose(&mut rng).unwrap());
                    if tags.is_empty() {
                        out.push_str(" There is not yet enough practice data to describe your learning in detail.\n");
                    } else {
                        out.push_str(&format!(
                            " This report looks at {strengths} strength(s) and {growth} area(s) where you can grow.\n"
                        ));
                    }
                }
                1..=3 => {
                    let mine: Vec<_> = tags.iter().filter(|(s, _)| *s == i).map(|(_, t)| *t).collect();
                    if mine.is_empty() {
                        out.push_str("There is not enough data here yet; keep practising and we will look again.\n");
                    }
                    for t in mine {
                        let note = match tag_polarity(t) {
                            Polarity::Positive => "This is a real strength of yours.",
                            Polarity::Negative => "This is a good place for you to focus next.",
                        };
                        out.push_str(&format!("- {} {}\n", t.description(), note));
                    }
                }
                4 => {
                    let n = if growth == 0 { 2 } else { 3 };
                    for s in STRATEGIES.choose_multiple(&mut rng, n) {
                        out.push_str(&format!("- {s}\n"));
                    }
                }
                _ => {
                    out.push_str(ENCOURAGEMENT.choose(&mut rng).unwrap());
                    out.push('\n');
                }
            }
        }
        out.push_str(&format!("\n<!-- mock:{} -->\n", hex::encode(&digest[..6])));
        out
    }
}

fn word_count(s: &str) -> u32 {
    s.split_whitespace().count().min(u32::MAX as usize) as u32
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn send(&self, prompt: &str, params: &CompletionParams) -> Result<CompletionResult, GatewayError> {
        let full = MockBackend::render(prompt);
        let words = word_count(&full);
        let (text, finish_reason) = if words > params.max_tokens {
            let cut: Vec<&str> = full.split_whitespace().take(params.max_tokens as usize).collect();
            (cut.join(" "), FinishReason::Length)
        } else {
            (full, FinishReason::Stop)
        };
        let prompt_tokens = word_count(prompt);
        let completion_tokens = word_count(&text);
        Ok(CompletionResult {
            text,
            finish_reason,
            usage: TokenUsage { prompt_tokens, completion_tokens, total_tokens: prompt_tokens + completion_tokens },
            retries: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
    pub max_backoff: Duration,
    /// Upper bound on the summed sleep time across retries.
    pub max_total_wait: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
            multiplier: 2.0,
            max_backoff: Duration::from_secs(16),
            max_total_wait: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    pub fn from_settings(s: &LlmSettings) -> Self {
        RetryPolicy {
            max_attempts: s.max_attempts,
            initial_backoff: Duration::from_millis(s.initial_backoff_ms),
            multiplier: 2.0,
            max_backoff: Duration::from_millis(s.max_backoff_ms),
            max_total_wait: Duration::from_millis(s.max_total_wait_ms),
        }
    }

    /// Sleep before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = self.multiplier.powi(retry.saturating_sub(1) as i32);
        self.initial_backoff.mul_f64(factor).min(self.max_backoff)
    }
}

/// Spaces request starts at least `interval` apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Option<Self> {
        (requests > 0)
            .then(|| RateLimiter { interval: Duration::from_secs(60) / requests, next_slot: Mutex::new(None) })
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = next.map_or(now, |s| s.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
    max_concurrency: usize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Gateway { backend, retry: RetryPolicy::default(), limiter: None, max_concurrency: 4 }
    }

    pub fn mock() -> Self {
        Gateway::new(Arc::new(MockBackend))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, limiter: Option<RateLimiter>) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn with_max_concurrency(mut self, n: usize) -> Self {
        self.max_concurrency = n.max(1);
        self
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// One completion with retries on network errors and rate limiting.
    ///
    /// A result that stopped at `max_tokens` comes back as
    /// [`GatewayError::Truncated`] carrying the partial result.
    pub fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<CompletionResult, GatewayError> {
        if prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let mut waited = Duration::ZERO;
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            match self.backend.send(prompt, params) {
                Ok(mut res) => {
                    res.retries = attempt - 1;
                    return if res.is_truncated() { Err(GatewayError::Truncated(Box::new(res))) } else { Ok(res) };
                }
                Err(e) if e.is_retryable() => {
                    let mut delay = self.retry.backoff(attempt);
                    if let GatewayError::RateLimited { retry_after: Some(ra) } = &e {
                        delay = delay.max(*ra);
                    }
                    if attempt >= self.retry.max_attempts || waited + delay > self.retry.max_total_wait {
                        return Err(GatewayError::RetriesExhausted { attempts: attempt, last: Box::new(e) });
                    }
                    log::debug!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    waited += delay;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Runs many prompts with at most `max_concurrency` in flight. Results
    /// come back in input order, paired with the caller's keys.
    pub fn complete_batch<K: Clone + Send + Sync>(
        &self,
        jobs: &[(K, String)],
        params: &CompletionParams,
    ) -> Vec<(K, Result<CompletionResult, GatewayError>)> {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<CompletionResult, GatewayError>>>> =
            jobs.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.max_concurrency.min(jobs.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some((_, prompt)) = jobs.get(i) else { break };
                    let res = self.complete(prompt, params);
                    *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(res);
                });
            }
        });
        jobs.iter()
            .zip(slots)
            .map(|((k, _), slot)| {
                let res = slot.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every job ran");
                (k.clone(), res)
            })
            .collect()
    }
}
