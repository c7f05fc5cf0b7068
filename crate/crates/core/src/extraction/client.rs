//! Text-generation client: pluggable backend behind a content-addressed cache,
//! a request-rate limiter and a retry policy.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::io::{sha256_fields, write_atomic};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    InvalidResponse(String),
    #[error("no cached response for key {0} (replay-cache backend)")]
    CacheMiss(String),
    #[error("missing API key: environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

impl GenError {
    fn retryable(&self) -> bool {
        match self {
            GenError::Transport(_) => true,
            GenError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Something that turns a prompt into text. `sample` distinguishes repeated
/// independent draws of the same prompt.
pub trait GenBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn generate(&self, prompt: &str, sample: u32) -> Result<String, GenError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Remote,
    Mock,
    ReplayCache,
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, base_delay: Duration::from_millis(500) }
    }
}

/// Spaces requests at least `1/rps` apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64) -> Self {
        let interval = if requests_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / requests_per_second)
        } else {
            Duration::ZERO
        };
        RateLimiter { interval, next_slot: Mutex::new(Instant::now()) }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Content-addressed response store: concurrent reads, serialized writes.
/// With a directory, each key is one file `<dir>/<k[0..2]>/<k>.txt`.
#[derive(Debug, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    memory: RwLock<HashMap<String, String>>,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: Some(dir.into()), ..Default::default() }
    }

    pub fn key(model_id: &str, prompt: &str, sample: u32) -> String {
        if sample == 0 {
            sha256_fields(&[model_id, prompt])
        } else {
            sha256_fields(&[model_id, prompt, &sample.to_string()])
        }
    }

    fn path_for(dir: &Path, key: &str) -> PathBuf {
        dir.join(&key[..2]).join(format!("{key}.txt"))
    }

    pub fn get(&self, key: &str) -> Result<Option<String>, GenError> {
        if let Some(hit) = self.memory.read().unwrap().get(key) {
            return Ok(Some(hit.clone()));
        }
        let Some(dir) = &self.dir else { return Ok(None) };
        match fs::read_to_string(Self::path_for(dir, key)) {
            Ok(text) => {
                self.memory.write().unwrap().insert(key.to_string(), text.clone());
                Ok(Some(text))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn put(&self, key: &str, value: &str) -> Result<(), GenError> {
        let _guard = self.write_lock.lock().unwrap();
        if let Some(dir) = &self.dir {
            write_atomic(&Self::path_for(dir, key), value.as_bytes())?;
        }
        self.memory.write().unwrap().insert(key.to_string(), value.to_string());
        Ok(())
    }
}

/// The client every generative stage talks to.
pub struct GenClient {
    kind: BackendKind,
    model_id: String,
    backend: Option<Arc<dyn GenBackend>>,
    cache: ResponseCache,
    limiter: Option<RateLimiter>,
    retry: RetryPolicy,
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl std::fmt::Debug for GenClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenClient")
            .field("kind", &self.kind)
            .field("model_id", &self.model_id)
            .finish_non_exhaustive()
    }
}

impl GenClient {
    pub fn new(kind: BackendKind, backend: Arc<dyn GenBackend>, cache: ResponseCache) -> Self {
        GenClient {
            kind,
            model_id: backend.model_id().to_string(),
            backend: Some(backend),
            cache,
            limiter: None,
            retry: RetryPolicy::default(),
            backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    /// Deterministic offline backend with an in-memory cache.
    pub fn mock() -> Self {
        Self::new(BackendKind::Mock, Arc::new(super::mock::MockGenerator::default()), ResponseCache::in_memory())
    }

    /// Serve only previously cached responses; a miss is an error.
    pub fn replay(model_id: &str, cache_dir: impl Into<PathBuf>) -> Self {
        GenClient {
            kind: BackendKind::ReplayCache,
            model_id: model_id.to_string(),
            backend: None,
            cache: ResponseCache::on_disk(cache_dir),
            limiter: None,
            retry: RetryPolicy::default(),
            backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn with_rate_limit(mut self, requests_per_second: f64) -> Self {
        self.limiter = Some(RateLimiter::new(requests_per_second));
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Number of requests that actually reached the backend.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    pub fn complete(&self, prompt: &str) -> Result<String, GenError> {
        self.complete_sample(prompt, 0)
    }

    /// Cached completion. Identical (prompt, model, sample) triples return
    /// byte-identical text.
    pub fn complete_sample(&self, prompt: &str, sample: u32) -> Result<String, GenError> {
        let key = ResponseCache::key(&self.model_id, prompt, sample);
        if let Some(hit) = self.cache.get(&key)? {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        let Some(backend) = &self.backend else {
            return Err(GenError::CacheMiss(key));
        };
        let mut attempt = 0;
        let text = loop {
            attempt += 1;
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            self.backend_calls.fetch_add(1, Ordering::Relaxed);
            match backend.generate(prompt, sample) {
                Ok(text) => break text,
                Err(e) if e.retryable() && attempt < self.retry.max_attempts => {
                    log::warn!("generation attempt {attempt} failed: {e}; retrying");
                    std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
                }
                Err(e) => return Err(e),
            }
        };
        self.cache.put(&key, &text)?;
        Ok(text)
    }
}

/// OpenAI-compatible chat-completion endpoint.
pub struct RemoteChatBackend {
    base_url: String,
    model_id: String,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl RemoteChatBackend {
    pub fn from_env(base_url: &str, model_id: &str, api_key_env: &str) -> Result<Self, GenError> {
        let api_key = std::env::var(api_key_env).map_err(|_| GenError::MissingApiKey(api_key_env.to_string()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| GenError::Transport(e.to_string()))?;
        Ok(RemoteChatBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            model_id: model_id.to_string(),
            api_key,
            http,
        })
    }
}

impl GenBackend for RemoteChatBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate(&self, prompt: &str, _sample: u32) -> Result<String, GenError> {
        let body = serde_json::json!({
            "model": self.model_id,
            "messages": [{"role": "user", "content": prompt}],
        });
        let resp = self
            .http
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| GenError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GenError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GenError::Http { status: status.as_u16(), body: text });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| GenError::InvalidResponse(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| GenError::InvalidResponse("no choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    struct Flaky {
        failures_left: AtomicU32,
        calls: AtomicU32,
    }

    impl GenBackend for Flaky {
        fn model_id(&self) -> &str {
            "flaky"
        }
        fn generate(&self, prompt: &str, sample: u32) -> Result<String, GenError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.failures_left.load(Ordering::SeqCst) > 0 {
                self.failures_left.fetch_sub(1, Ordering::SeqCst);
                return Err(GenError::Transport("reset".into()));
            }
            Ok(format!("{prompt}#{sample}"))
        }
    }

    fn flaky(failures: u32) -> Arc<Flaky> {
        Arc::new(Flaky { failures_left: AtomicU32::new(failures), calls: AtomicU32::new(0) })
    }

    fn fast_retry(n: u32) -> RetryPolicy {
        RetryPolicy { max_attempts: n, base_delay: Duration::from_millis(1) }
    }

    #[test]
    fn retries_then_caches() {
        let backend = flaky(2);
        let client = GenClient::new(BackendKind::Remote, backend.clone(), ResponseCache::in_memory())
            .with_retry(fast_retry(3));
        assert_eq!(client.complete("p").unwrap(), "p#0");
        assert_eq!(client.complete("p").unwrap(), "p#0");
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
        assert_eq!(client.cache_hits(), 1);
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let client = GenClient::new(BackendKind::Remote, flaky(10), ResponseCache::in_memory()).with_retry(fast_retry(2));
        assert!(matches!(client.complete("p"), Err(GenError::Transport(_))));
        assert_eq!(client.backend_calls(), 2);
    }

    #[test]
    fn samples_are_cached_separately() {
        let client = GenClient::new(BackendKind::Mock, flaky(0), ResponseCache::in_memory());
        assert_eq!(client.complete_sample("p", 0).unwrap(), "p#0");
        assert_eq!(client.complete_sample("p", 1).unwrap(), "p#1");
        assert_eq!(client.backend_calls(), 2);
    }

    #[test]
    fn disk_cache_survives_new_client_and_replays() {
        let dir = tempfile::tempdir().unwrap();
        let first = GenClient::new(BackendKind::Mock, flaky(0), ResponseCache::on_disk(dir.path()));
        let original = first.complete("hello").unwrap();

        let replay = GenClient::replay("flaky", dir.path());
        assert_eq!(replay.complete("hello").unwrap().as_bytes(), original.as_bytes());
        assert!(matches!(replay.complete("unseen"), Err(GenError::CacheMiss(_))));
        assert_eq!(replay.backend_calls(), 0);
    }

    #[test]
    fn cache_key_depends_on_model() {
        assert_ne!(ResponseCache::key("a", "p", 0), ResponseCache::key("b", "p", 0));
        assert_ne!(ResponseCache::key("a", "p", 0), ResponseCache::key("a", "p", 1));
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let limiter = RateLimiter::new(200.0);
        let start = Instant::now();
        for _ in 0..5 {
            limiter.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(19));
    }

    #[test]
    fn missing_api_key() {
        let err = RemoteChatBackend::from_env("http://localhost:1", "m", "SCIATLAS_TEST_UNSET_KEY").err().unwrap();
        assert!(matches!(err, GenError::MissingApiKey(_)));
    }
}
