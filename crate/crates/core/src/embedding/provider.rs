use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::EmbeddingError;
use crate::io::{sha256_fields, write_atomic};
use crate::text::tokenize;

pub trait EmbedBackend: Send + Sync {
    fn provider_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, instruction: &str, body: &str) -> Result<Vec<f32>, EmbeddingError>;
}

pub const HASH_EMBEDDER_DIM: usize = 64;

/// Offline embedder: each token of the body is hashed (seeded, instruction-salted)
/// to a signed unit bump in one of 64 buckets; the sum is L2-normalized.
/// A body without tokens hashes as a single token equal to the trimmed body.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    seed: u64,
    provider_id: String,
}

impl HashEmbedder {
    pub fn new(seed: u64) -> Self {
        HashEmbedder { seed, provider_id: format!("hash64-seed{seed}") }
    }

    fn bucket(&self, instruction: &str, token: &str) -> (usize, f64) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(instruction.as_bytes());
        h.update([0u8]);
        h.update(token.as_bytes());
        let d = h.finalize();
        let idx = u64::from_le_bytes(d[..8].try_into().unwrap()) % HASH_EMBEDDER_DIM as u64;
        let sign = if d[8] & 1 == 1 { -1.0 } else { 1.0 };
        (idx as usize, sign)
    }
}

impl EmbedBackend for HashEmbedder {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dim(&self) -> usize {
        HASH_EMBEDDER_DIM
    }

    fn embed(&self, instruction: &str, body: &str) -> Result<Vec<f32>, EmbeddingError> {
        let mut tokens = tokenize(body);
        if tokens.is_empty() {
            tokens.push(body.trim().to_string());
        }
        let mut acc = [0.0f64; HASH_EMBEDDER_DIM];
        for t in &tokens {
            let (i, s) = self.bucket(instruction, t);
            acc[i] += s;
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Every bump cancelled out; fall back to the first token's bucket.
            let (i, s) = self.bucket(instruction, &tokens[0]);
            acc[i] = s;
            return Ok(acc.iter().map(|&x| x as f32).collect());
        }
        Ok(acc.iter().map(|&x| (x / norm) as f32).collect())
    }
}

/// HTTP embedding endpoint: POST `{base}/embeddings` with
/// `{"model", "instruction", "input"}`, reading `data[0].embedding`.
pub struct RemoteEmbedder {
    base_url: String,
    model_id: String,
    dim: usize,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn from_env(base_url: &str, model_id: &str, dim: usize, api_key_env: &str) -> Result<Self, EmbeddingError> {
        let api_key =
            std::env::var(api_key_env).map_err(|_| EmbeddingError::MissingApiKey(api_key_env.to_string()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        Ok(RemoteEmbedder {
            base_url: base_url.trim_end_matches('/').to_string(),
            model_id: model_id.to_string(),
            dim,
            api_key,
            http,
        })
    }
}

impl EmbedBackend for RemoteEmbedder {
    fn provider_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, instruction: &str, body: &str) -> Result<Vec<f32>, EmbeddingError> {
        let req = serde_json::json!({"model": self.model_id, "instruction": instruction, "input": body});
        let resp = self
            .http
            .post(format!("{}/embeddings", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&req)
            .send()
            .map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(EmbeddingError::Transport(format!("HTTP {status}: {text}")));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        let arr = value["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| EmbeddingError::Transport("no data[0].embedding".into()))?;
        arr.iter()
            .map(|x| x.as_f64().map(|f| f as f32).ok_or(EmbeddingError::NonFinite))
            .collect()
    }
}

/// Caching front for an [`EmbedBackend`]. Keys hash (provider, instruction, body).
pub struct EmbeddingProvider {
    backend: Arc<dyn EmbedBackend>,
    memory: RwLock<HashMap<String, Vec<f32>>>,
    dir: Option<PathBuf>,
    write_lock: Mutex<()>,
    calls: AtomicU64,
}

impl std::fmt::Debug for EmbeddingProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingProvider").field("provider_id", &self.backend.provider_id()).finish()
    }
}

impl EmbeddingProvider {
    pub fn new(backend: Arc<dyn EmbedBackend>) -> Self {
        EmbeddingProvider {
            backend,
            memory: RwLock::new(HashMap::new()),
            dir: None,
            write_lock: Mutex::new(()),
            calls: AtomicU64::new(0),
        }
    }

    /// Persist cached vectors as little-endian f32 files under `dir`.
    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.dir = Some(dir.into());
        self
    }

    pub fn provider_id(&self) -> &str {
        self.backend.provider_id()
    }

    pub fn dim(&self) -> usize {
        self.backend.dim()
    }

    pub fn backend_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn embed(&self, instruction: &str, body: &str) -> Result<Vec<f32>, EmbeddingError> {
        if body.trim().is_empty() {
            return Err(EmbeddingError::EmptyBody);
        }
        let key = sha256_fields(&[self.backend.provider_id(), instruction, body]);
        if let Some(v) = self.memory.read().unwrap().get(&key) {
            return Ok(v.clone());
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(&key[..2]).join(format!("{key}.f32"));
            if let Ok(bytes) = fs::read(&path) {
                let v = super::store::decode_f32(&bytes);
                if v.len() == self.dim() {
                    self.memory.write().unwrap().insert(key, v.clone());
                    return Ok(v);
                }
            }
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let v = self.backend.embed(instruction, body)?;
        if v.len() != self.dim() {
            return Err(EmbeddingError::DimMismatch { expected: self.dim(), actual: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let _guard = self.write_lock.lock().unwrap();
        if let Some(dir) = &self.dir {
            let path = dir.join(&key[..2]).join(format!("{key}.f32"));
            write_atomic(&path, &super::store::encode_f32(&v))?;
        }
        self.memory.write().unwrap().insert(key, v.clone());
        Ok(v)
    }
}
