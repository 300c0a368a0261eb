//! Sentence embedders for oddball surprise scoring.
//!
//! Two providers behind one trait: a remote embeddings endpoint for live
//! evaluation, and a deterministic token-hash bag-of-words fallback so the
//! test suite and replays never require network access.

use std::time::Duration;

use serde_json::{json, Value};

use crate::error::EmbedError;

pub trait Embedder: Send + Sync {
    /// Stable identifier recorded in score breakdowns.
    fn id(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let norm_a: f64 = a.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    let norm_b: f64 = b.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        0.0
    } else {
        dot / (norm_a * norm_b)
    }
}

/// Function words carry no surprise signal and would dominate bag-of-words
/// overlap, so the fallback tokenizer drops them.
const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have", "in",
    "is", "it", "its", "of", "on", "or", "that", "the", "this", "to", "was", "were", "with",
];

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic offline embedder: lowercase alphanumeric tokens, stopwords
/// removed, hashed into a fixed-dimension count vector.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder { dim }
    }

    fn vector(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .map(str::to_lowercase)
            .filter(|t| !t.is_empty() && !STOPWORDS.contains(&t.as_str()))
        {
            let idx = (fnv1a(token.as_bytes()) % self.dim as u64) as usize;
            v[idx] += 1.0;
        }
        v
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(512)
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        "hash-bow"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Remote embeddings endpoint speaking the `/embeddings` wire protocol.
pub struct RemoteEmbedder {
    base_url: String,
    model: String,
    api_key: String,
    retry_budget: u32,
    backoff_base: Duration,
    http: reqwest::blocking::Client,
    id: String,
}

impl RemoteEmbedder {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: impl Into<String>,
        timeout: Duration,
        retry_budget: u32,
        backoff_base: Duration,
    ) -> Result<Self, EmbedError> {
        let base_url = base_url.into();
        let model = model.into();
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Transport { attempts: 0, message: e.to_string() })?;
        let id = format!("remote:{model}");
        Ok(RemoteEmbedder {
            base_url,
            model,
            api_key: api_key.into(),
            retry_budget: retry_budget.max(1),
            backoff_base,
            http,
            id,
        })
    }

    /// Reads the key from `REFLECTION_API_KEY`.
    pub fn from_env(
        base_url: impl Into<String>,
        model: impl Into<String>,
    ) -> Result<Self, EmbedError> {
        let key = std::env::var(crate::agents::remote::API_KEY_ENV)
            .map_err(|_| EmbedError::MissingApiKey(crate::agents::remote::API_KEY_ENV.into()))?;
        Self::new(base_url, model, key, Duration::from_secs(60), 3, Duration::from_millis(500))
    }

    fn request(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, String> {
        let body = json!({ "model": self.model, "input": texts });
        let response = self
            .http
            .post(format!("{}/embeddings", self.base_url.trim_end_matches('/')))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let payload: Value = response.json().map_err(|e| e.to_string())?;
        let data = payload
            .get("data")
            .and_then(Value::as_array)
            .ok_or("missing `data` array")?;
        let mut vectors = vec![Vec::new(); texts.len()];
        for entry in data {
            let index = entry.get("index").and_then(Value::as_u64).ok_or("missing `index`")? as usize;
            let raw = entry
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or("missing `embedding`")?;
            let vector: Vec<f32> = raw.iter().filter_map(Value::as_f64).map(|v| v as f32).collect();
            if vector.len() != raw.len() || index >= vectors.len() {
                return Err("malformed embedding entry".into());
            }
            vectors[index] = vector;
        }
        if vectors.iter().any(Vec::is_empty) {
            return Err("response missing embeddings for some inputs".into());
        }
        Ok(vectors)
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut last_error = String::new();
        for attempt in 1..=self.retry_budget {
            match self.request(texts) {
                Ok(vectors) => return Ok(vectors),
                Err(message) => {
                    log::warn!("embedding attempt {attempt} failed: {message}");
                    last_error = message;
                    if attempt < self.retry_budget {
                        std::thread::sleep(self.backoff_base * attempt);
                    }
                }
            }
        }
        Err(EmbedError::Transport { attempts: self.retry_budget, message: last_error })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_have_unit_cosine() {
        let e = HashEmbedder::default();
        let v = e.embed(&["The quick brown fox jumps".into()]).unwrap();
        assert!((cosine(&v[0], &v[0]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn token_disjoint_texts_are_orthogonal() {
        let e = HashEmbedder::default();
        let v = e
            .embed(&["glacier penguin tundra".into(), "violin sonata crescendo".into()])
            .unwrap();
        assert_eq!(cosine(&v[0], &v[1]), 0.0);
    }

    #[test]
    fn stopwords_do_not_contribute() {
        let e = HashEmbedder::default();
        let v = e.embed(&["the of and".into(), "penguin".into()]).unwrap();
        assert!(v[0].iter().all(|&x| x == 0.0));
        assert_eq!(cosine(&v[0], &v[1]), 0.0);
    }

    #[test]
    fn embedding_is_deterministic() {
        let e = HashEmbedder::default();
        let a = e.embed(&["Bananas are rich in potassium.".into()]).unwrap();
        let b = e.embed(&["Bananas are rich in potassium.".into()]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_vector_cosine_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
    }
}
