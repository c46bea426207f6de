//! Chat completion client: persistent response cache in front of a backend,
//! with single-flight deduplication, bounded in-flight requests, and
//! exponential backoff on transient upstream failures.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gateway::cache::ChatCache;
use crate::gateway::types::{ChatExchange, DecodingParams};

/// Environment variable holding the chat API credential.
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";

/// Something that can answer one (system, user) exchange.
pub trait ChatBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, system: &str, user: &str, decoding: &DecodingParams) -> Result<String>;
}

#[derive(Debug, Clone)]
pub struct ChatClientConfig {
    pub cache_path: Option<PathBuf>,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

impl Default for ChatClientConfig {
    fn default() -> Self {
        ChatClientConfig {
            cache_path: None,
            max_in_flight: 4,
            max_retries: 4,
            backoff_base_ms: 250,
        }
    }
}

/// Deterministic cache key over everything that determines a response.
pub fn cache_key(model_id: &str, system: &str, user: &str, decoding: &DecodingParams) -> String {
    let mut hasher = Sha256::new();
    for part in [
        model_id,
        "\u{1f}",
        system,
        "\u{1f}",
        user,
        "\u{1f}",
        &format!("{:.6}", decoding.temperature),
        "\u{1f}",
        &decoding.max_tokens.to_string(),
    ] {
        hasher.update(part.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Counting semaphore bounding concurrent upstream requests.
struct InFlightLimit {
    max: usize,
    state: Mutex<usize>,
    cv: Condvar,
}

impl InFlightLimit {
    fn new(max: usize) -> Self {
        InFlightLimit {
            max: max.max(1),
            state: Mutex::new(0),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut n = self.state.lock().expect("limiter lock poisoned");
        while *n >= self.max {
            n = self.cv.wait(n).expect("limiter lock poisoned");
        }
        *n += 1;
    }

    fn release(&self) {
        let mut n = self.state.lock().expect("limiter lock poisoned");
        *n -= 1;
        self.cv.notify_one();
    }
}

pub struct ChatClient {
    backend: Arc<dyn ChatBackend>,
    cache: ChatCache,
    limiter: InFlightLimit,
    config: ChatClientConfig,
    /// Per-key locks so concurrent identical requests make one upstream call.
    pending: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ChatClient {
    pub fn new(backend: Arc<dyn ChatBackend>, config: ChatClientConfig) -> Result<Self> {
        let cache = match &config.cache_path {
            Some(path) => ChatCache::open(path)?,
            None => ChatCache::ephemeral(),
        };
        Ok(ChatClient {
            backend,
            limiter: InFlightLimit::new(config.max_in_flight),
            cache,
            config,
            pending: Mutex::new(HashMap::new()),
        })
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    pub fn complete(
        &self,
        system: &str,
        user: &str,
        decoding: &DecodingParams,
    ) -> Result<String> {
        let key = cache_key(self.backend.model_id(), system, user, decoding);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let entry = {
            let mut pending = self.pending.lock().expect("pending lock poisoned");
            Arc::clone(pending.entry(key.clone()).or_default())
        };
        let _flight = entry.lock().expect("single-flight lock poisoned");
        // another caller may have filled the cache while we waited
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let response = self.call_with_retries(system, user, decoding)?;
        let exchange = ChatExchange {
            cache_key: key.clone(),
            model_id: self.backend.model_id().to_string(),
            system_prompt: system.to_string(),
            user_prompt: user.to_string(),
            response: response.clone(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        self.cache.put(&exchange)?;
        self.pending
            .lock()
            .expect("pending lock poisoned")
            .remove(&key);
        Ok(response)
    }

    fn call_with_retries(
        &self,
        system: &str,
        user: &str,
        decoding: &DecodingParams,
    ) -> Result<String> {
        let mut attempt = 0u32;
        loop {
            self.limiter.acquire();
            let outcome = self.backend.complete(system, user, decoding);
            self.limiter.release();
            match outcome {
                Ok(response) => return Ok(response),
                Err(Error::UpstreamUnavailable(msg)) if attempt < self.config.max_retries => {
                    let delay = self.config.backoff_base_ms.saturating_mul(1 << attempt);
                    log::warn!(
                        "chat request failed (attempt {}): {msg}; retrying in {delay} ms",
                        attempt + 1
                    );
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// Deterministic offline backend for tests, CI, and `--mock-llm` runs.
///
/// In `sentiment` mode it swaps the toy lexicon's antonym pairs in the user
/// text, so chat-driven methods produce real flips against the built-in toy
/// classifier. A system prompt asking to list important words instead gets
/// the sentiment-bearing words found in the input.
pub struct MockChat {
    model_id: String,
    fixed: Option<String>,
    calls: AtomicUsize,
}

const SWAP_PAIRS: &[(&str, &str)] = &[
    ("loved", "hated"),
    ("adored", "despised"),
    ("liked", "disliked"),
    ("enjoyed", "dreaded"),
    ("good", "bad"),
    ("great", "awful"),
    ("wonderful", "terrible"),
    ("brilliant", "boring"),
    ("amazing", "dull"),
];

/// Marker phrase routing a mock request to the word-listing behavior; the
/// stage-one guided template contains it.
const IMPORTANT_WORDS_MARKER: &str = "list the most important words";

impl MockChat {
    pub fn sentiment() -> Self {
        MockChat {
            model_id: "mock-sentiment-chat".into(),
            fixed: None,
            calls: AtomicUsize::new(0),
        }
    }

    /// Always answer with the same string, whatever the prompts.
    pub fn fixed(response: impl Into<String>) -> Self {
        MockChat {
            model_id: "mock-fixed-chat".into(),
            fixed: Some(response.into()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn upstream_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn swap_word(word: &str) -> Option<&'static str> {
        for &(a, b) in SWAP_PAIRS {
            if word == a {
                return Some(b);
            }
            if word == b {
                return Some(a);
            }
        }
        None
    }

    fn swap_sentiment(text: &str) -> String {
        text.split_whitespace()
            .map(|w| Self::swap_word(w).unwrap_or(w))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn important_words(text: &str) -> String {
        let words: Vec<&str> = text
            .split_whitespace()
            .filter(|w| Self::swap_word(w).is_some())
            .collect();
        if words.is_empty() {
            "none".to_string()
        } else {
            words.join(", ")
        }
    }
}

impl ChatBackend for MockChat {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, system: &str, user: &str, _decoding: &DecodingParams) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(fixed) = &self.fixed {
            return Ok(fixed.clone());
        }
        if system.to_lowercase().contains(IMPORTANT_WORDS_MARKER) {
            Ok(Self::important_words(user))
        } else {
            Ok(Self::swap_sentiment(user))
        }
    }
}

/// OpenAI-compatible chat completion backend. The credential is read from
/// [`API_KEY_ENV`] at construction; a missing credential only becomes an error
/// when a cache miss forces an upstream call.
pub struct OpenAiChat {
    model: String,
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl OpenAiChat {
    pub fn new(model: impl Into<String>, base_url: Option<String>) -> Self {
        OpenAiChat {
            model: model.into(),
            base_url: base_url.unwrap_or_else(|| "https://api.openai.com/v1".to_string()),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("reqwest client"),
        }
    }
}

impl ChatBackend for OpenAiChat {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, system: &str, user: &str, decoding: &DecodingParams) -> Result<String> {
        let key = self.api_key.as_ref().ok_or_else(|| {
            Error::Configuration(format!(
                "chat credential missing: set {API_KEY_ENV} or warm the response cache"
            ))
        })?;
        let body = serde_json::json!({
            "model": self.model,
            "temperature": decoding.temperature,
            "max_tokens": decoding.max_tokens,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| Error::UpstreamUnavailable(format!("chat request failed: {e}")))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Error::UpstreamUnavailable(format!(
                "chat endpoint returned {status}"
            )));
        }
        if !status.is_success() {
            return Err(Error::Configuration(format!(
                "chat endpoint rejected request: {status}"
            )));
        }
        let parsed: serde_json::Value = response
            .json()
            .map_err(|e| Error::UpstreamUnavailable(format!("bad chat response body: {e}")))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| {
                Error::UpstreamUnavailable("chat response missing message content".into())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn client(backend: Arc<dyn ChatBackend>) -> ChatClient {
        ChatClient::new(backend, ChatClientConfig::default()).unwrap()
    }

    #[test]
    fn mock_passthrough_returns_exact_string() {
        let c = client(Arc::new(MockChat::fixed("i hated the movie")));
        let out = c
            .complete("sys", "i loved the movie", &DecodingParams::default())
            .unwrap();
        assert_eq!(out, "i hated the movie");
    }

    #[test]
    fn identical_requests_hit_upstream_once() {
        let backend = Arc::new(MockChat::fixed("answer"));
        let c = ChatClient::new(backend.clone(), ChatClientConfig::default()).unwrap();
        let d = DecodingParams::default();
        let a = c.complete("s", "u", &d).unwrap();
        let b = c.complete("s", "u", &d).unwrap();
        assert_eq!(a, b);
        assert_eq!(backend.upstream_calls(), 1);
    }

    #[test]
    fn cache_hit_needs_no_backend_call() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chat.jsonl");
        let cfg = ChatClientConfig {
            cache_path: Some(path.clone()),
            ..Default::default()
        };
        let backend1 = Arc::new(MockChat::fixed("cached answer"));
        {
            let c = ChatClient::new(backend1.clone(), cfg.clone()).unwrap();
            c.complete("s", "u", &DecodingParams::default()).unwrap();
        }
        // fresh client, same cache file: zero upstream calls
        let backend2 = Arc::new(MockChat::fixed("should never be used"));
        let c = ChatClient::new(backend2.clone(), cfg).unwrap();
        let out = c.complete("s", "u", &DecodingParams::default()).unwrap();
        assert_eq!(out, "cached answer");
        assert_eq!(backend2.upstream_calls(), 0);
    }

    #[test]
    fn concurrent_identical_requests_single_flight() {
        let backend = Arc::new(MockChat::fixed("one"));
        let c = Arc::new(ChatClient::new(backend.clone(), ChatClientConfig::default()).unwrap());
        let mut handles = Vec::new();
        for _ in 0..8 {
            let c = Arc::clone(&c);
            handles.push(std::thread::spawn(move || {
                c.complete("s", "u", &DecodingParams::default()).unwrap()
            }));
        }
        for h in handles {
            assert_eq!(h.join().unwrap(), "one");
        }
        assert_eq!(backend.upstream_calls(), 1);
    }

    #[test]
    fn cache_key_is_deterministic_and_sensitive() {
        let d = DecodingParams::default();
        assert_eq!(cache_key("m", "s", "u", &d), cache_key("m", "s", "u", &d));
        assert_ne!(cache_key("m", "s", "u", &d), cache_key("m", "s", "v", &d));
        assert_ne!(cache_key("m", "s", "u", &d), cache_key("n", "s", "u", &d));
        let hot = DecodingParams {
            temperature: 1.0,
            max_tokens: 256,
        };
        assert_ne!(cache_key("m", "s", "u", &d), cache_key("m", "s", "u", &hot));
    }

    #[test]
    fn sentiment_mock_swaps_lexicon_pairs() {
        assert_eq!(
            MockChat::swap_sentiment("i loved the movie"),
            "i hated the movie"
        );
        assert_eq!(
            MockChat::swap_sentiment("the film was terrible"),
            "the film was wonderful"
        );
    }

    #[test]
    fn retries_then_gives_up() {
        struct Flaky;
        impl ChatBackend for Flaky {
            fn model_id(&self) -> &str {
                "flaky"
            }
            fn complete(&self, _: &str, _: &str, _: &DecodingParams) -> Result<String> {
                Err(Error::UpstreamUnavailable("boom".into()))
            }
        }
        let cfg = ChatClientConfig {
            max_retries: 1,
            backoff_base_ms: 1,
            ..Default::default()
        };
        let c = ChatClient::new(Arc::new(Flaky), cfg).unwrap();
        let err = c.complete("s", "u", &DecodingParams::default());
        assert!(matches!(err, Err(Error::UpstreamUnavailable(_))));
    }
}
