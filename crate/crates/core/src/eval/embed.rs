use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::EvalError;

/// Turns texts into vectors. Implementations must return one vector per input, in order.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EvalError>;
}

impl<E: Embedder + ?Sized> Embedder for std::sync::Arc<E> {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EvalError> {
        (**self).embed(texts)
    }
}

impl<E: Embedder + ?Sized> Embedder for &E {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EvalError> {
        (**self).embed(texts)
    }
}

/// `1 - cos(a, b)`. A zero vector is treated as maximally distant.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistOutcome {
    pub correct: bool,
    pub gold_distance: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wrong_distances: Vec<f64>,
}

pub const DEFAULT_TAU: f64 = 0.4;

/// Nearest-reference rule when wrong answers exist, threshold `tau` otherwise.
pub fn score_dist(
    prediction: &str,
    gold: &str,
    wrong: &[String],
    embedder: &dyn Embedder,
    tau: f64,
) -> Result<DistOutcome, EvalError> {
    let mut texts = vec![prediction.to_string(), gold.to_string()];
    texts.extend(wrong.iter().cloned());
    let vectors = embedder.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(EvalError::Embedder(format!("expected {} vectors, got {}", texts.len(), vectors.len())));
    }
    let distance = |i: usize| -> Result<f64, EvalError> {
        if texts[0] == texts[i] {
            Ok(0.0)
        } else {
            cosine_distance(&vectors[0], &vectors[i])
        }
    };
    let gold_distance = distance(1)?;
    let wrong_distances = (2..texts.len()).map(distance).collect::<Result<Vec<_>, _>>()?;
    let correct = if prediction == gold {
        true
    } else if wrong_distances.is_empty() {
        gold_distance <= tau
    } else {
        wrong_distances.iter().all(|w| gold_distance < *w)
    };
    Ok(DistOutcome { correct, gold_distance, wrong_distances })
}

/// Gives each distinct string its own basis vector, so any two different
/// strings sit at cosine distance exactly 1.
pub struct OrthogonalEmbedder {
    dim: usize,
    assigned: Mutex<HashMap<String, usize>>,
}

impl OrthogonalEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim, assigned: Mutex::new(HashMap::new()) }
    }
}

impl Default for OrthogonalEmbedder {
    fn default() -> Self {
        Self::new(4096)
    }
}

impl Embedder for OrthogonalEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EvalError> {
        let mut assigned = self.assigned.lock().unwrap_or_else(|p| p.into_inner());
        texts
            .iter()
            .map(|t| {
                let next = assigned.len();
                let slot = *assigned.entry(t.clone()).or_insert(next);
                if slot >= self.dim {
                    return Err(EvalError::Embedder(format!("more than {} distinct strings", self.dim)));
                }
                let mut v = vec![0.0; self.dim];
                v[slot] = 1.0;
                Ok(v)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Http,
    Orthogonal,
}

/// TOML configuration of the embedding service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    #[serde(default)]
    pub kind: EmbedderKind,
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_batch() -> usize {
    32
}

fn default_timeout() -> u64 {
    60
}

impl EmbedderConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = &mut cfg.cache_dir {
            if dir.is_relative() {
                *dir = path.parent().unwrap_or(std::path::Path::new(".")).join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>, EvalError> {
        match self.kind {
            EmbedderKind::Orthogonal => Ok(Box::new(OrthogonalEmbedder::default())),
            EmbedderKind::Http => {
                let url = self.url.clone().ok_or_else(|| EvalError::Config("http embedder needs `url`".into()))?;
                let api_key = match &self.api_key_env {
                    Some(var) => Some(
                        std::env::var(var).map_err(|_| EvalError::Config(format!("environment variable {var} is not set")))?,
                    ),
                    None => None,
                };
                Ok(Box::new(HttpEmbedder {
                    agent: ureq::Agent::config_builder()
                        .timeout_global(Some(Duration::from_secs(self.timeout_secs)))
                        .http_status_as_error(false)
                        .build()
                        .into(),
                    url,
                    model: self.model.clone(),
                    api_key,
                    batch_size: self.batch_size.max(1),
                    cache_dir: self.cache_dir.clone(),
                }))
            }
        }
    }
}

/// Client for `{"model", "input": [...]}` → `{"data": [{"embedding": [...], "index"}]}` endpoints.
pub struct HttpEmbedder {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
    batch_size: usize,
    cache_dir: Option<PathBuf>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl HttpEmbedder {
    fn cache_path(&self, text: &str) -> Option<PathBuf> {
        let dir = self.cache_dir.as_ref()?;
        let key = json!({"model": self.model, "text": text}).to_string();
        Some(dir.join(format!("{}.json", hex::encode(Sha256::digest(key.as_bytes())))))
    }

    fn cached(&self, text: &str) -> Option<Vec<f64>> {
        let path = self.cache_path(text)?;
        serde_json::from_str(&std::fs::read_to_string(path).ok()?).ok()
    }

    fn store(&self, text: &str, vector: &[f64]) -> Result<(), EvalError> {
        let Some(path) = self.cache_path(text) else { return Ok(()) };
        let io = |e: std::io::Error| EvalError::Embedder(format!("cache {}: {e}", path.display()));
        std::fs::create_dir_all(path.parent().expect("cache file has a parent")).map_err(io)?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_string(vector).expect("vectors serialize")).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)
    }

    fn request(&self, batch: &[String]) -> Result<Vec<Vec<f64>>, EvalError> {
        let body = json!({"model": self.model, "input": batch});
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body.to_string()).map_err(|e| EvalError::Embedder(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| EvalError::Embedder(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(EvalError::Embedder(format!("status {status}: {text}")));
        }
        let parsed: EmbeddingResponse =
            serde_json::from_str(&text).map_err(|e| EvalError::Embedder(format!("malformed response: {e}")))?;
        if parsed.data.len() != batch.len() {
            return Err(EvalError::Embedder(format!("asked for {} vectors, got {}", batch.len(), parsed.data.len())));
        }
        let mut out = vec![Vec::new(); batch.len()];
        for (i, item) in parsed.data.into_iter().enumerate() {
            let slot = item.index.unwrap_or(i);
            if slot >= out.len() {
                return Err(EvalError::Embedder(format!("index {slot} out of range")));
            }
            out[slot] = item.embedding;
        }
        Ok(out)
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EvalError> {
        let mut out: Vec<Option<Vec<f64>>> = texts.iter().map(|t| self.cached(t)).collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        for chunk in missing.chunks(self.batch_size) {
            let batch: Vec<String> = chunk.iter().map(|&i| texts[i].clone()).collect();
            for (&i, v) in chunk.iter().zip(self.request(&batch)?) {
                self.store(&texts[i], &v)?;
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every slot filled")).collect())
    }
}
