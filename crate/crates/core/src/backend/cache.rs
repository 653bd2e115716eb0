use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, BackendRequest, BackendResponse, Usage};

/// Field order is alphabetical; the digest is taken over this exact JSON.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct CanonicalRequest {
    max_tokens: u32,
    model: String,
    prompt: String,
    temperature: String,
}

impl CanonicalRequest {
    fn of(request: &BackendRequest) -> Self {
        Self {
            max_tokens: request.max_tokens,
            model: request.model.clone(),
            prompt: request.prompt.clone(),
            // Shortest decimal that round-trips to the same f64.
            temperature: format!("{}", request.temperature),
        }
    }

    fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("canonical request serializes");
        sha256_hex(json.as_bytes())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// 64 hex characters identifying a request.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn of(request: &BackendRequest) -> Self {
        Self(CanonicalRequest::of(request).digest())
    }

    pub fn digest(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    digest: String,
    request: CanonicalRequest,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    usage: Option<Usage>,
    text_sha256: String,
}

/// One JSON file per request digest. The directory can be deleted at any time.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| BackendError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir, write_lock: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.digest()))
    }

    pub fn get(&self, request: &BackendRequest) -> Result<Option<BackendResponse>, BackendError> {
        let key = CacheKey::of(request);
        let path = self.path_for(&key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(BackendError::Io(format!("{}: {e}", path.display()))),
        };
        let entry = Self::verify(key.digest(), &bytes)?;
        if entry.request != CanonicalRequest::of(request) {
            return Err(corrupt(key.digest(), "stored request differs from lookup request"));
        }
        Ok(Some(BackendResponse { text: entry.text, usage: entry.usage, from_cache: true }))
    }

    fn verify(digest: &str, bytes: &[u8]) -> Result<CacheEntry, BackendError> {
        let entry: CacheEntry =
            serde_json::from_slice(bytes).map_err(|e| corrupt(digest, &format!("unreadable entry: {e}")))?;
        if entry.digest != digest || entry.request.digest() != digest {
            return Err(corrupt(digest, "request digest mismatch"));
        }
        if sha256_hex(entry.text.as_bytes()) != entry.text_sha256 {
            return Err(corrupt(digest, "response digest mismatch"));
        }
        Ok(entry)
    }

    pub fn put(&self, request: &BackendRequest, response: &BackendResponse) -> Result<(), BackendError> {
        let canonical = CanonicalRequest::of(request);
        let digest = canonical.digest();
        let entry = CacheEntry {
            digest: digest.clone(),
            request: canonical,
            text: response.text.clone(),
            usage: response.usage,
            text_sha256: sha256_hex(response.text.as_bytes()),
        };
        let json = serde_json::to_vec_pretty(&entry).map_err(|e| BackendError::Io(e.to_string()))?;
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let final_path = self.dir.join(format!("{digest}.json"));
        let tmp_path = self.dir.join(format!(".{digest}.tmp"));
        let io = |e: std::io::Error| BackendError::Io(format!("{}: {e}", tmp_path.display()));
        let mut f = fs::File::create(&tmp_path).map_err(io)?;
        f.write_all(&json).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp_path, &final_path).map_err(io)?;
        Ok(())
    }

    /// Re-checks every entry on disk; returns (valid, corrupt digests).
    pub fn verify_all(&self) -> Result<(usize, Vec<String>), BackendError> {
        let mut ok = 0;
        let mut bad = Vec::new();
        let entries = fs::read_dir(&self.dir).map_err(|e| BackendError::Io(e.to_string()))?;
        for entry in entries {
            let path = entry.map_err(|e| BackendError::Io(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let digest = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let bytes = fs::read(&path).map_err(|e| BackendError::Io(e.to_string()))?;
            match Self::verify(&digest, &bytes) {
                Ok(_) => ok += 1,
                Err(_) => bad.push(digest),
            }
        }
        bad.sort();
        Ok((ok, bad))
    }
}

fn corrupt(digest: &str, reason: &str) -> BackendError {
    BackendError::CacheCorrupt { digest: digest.to_string(), reason: reason.to_string() }
}

/// Serves repeated requests from a [`ResponseCache`] without touching `inner`.
pub struct CachedBackend<B> {
    inner: B,
    cache: ResponseCache,
    hits: AtomicU64,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, cache: ResponseCache) -> Self {
        Self { inner, cache, hits: AtomicU64::new(0) }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn cache_hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        request.validate()?;
        if let Some(hit) = self.cache.get(request)? {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        let mut response = self.inner.complete(request)?;
        self.cache.put(request, &response)?;
        response.from_cache = false;
        Ok(response)
    }

    fn provider_calls(&self) -> u64 {
        self.inner.provider_calls()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Matcher, ScriptedBackend};

    fn request(prompt: &str) -> BackendRequest {
        BackendRequest::greedy("m", prompt, 16)
    }

    #[test]
    fn digest_is_64_hex_and_stable() {
        let a = CacheKey::of(&request("p"));
        let b = CacheKey::of(&request("p"));
        assert_eq!(a, b);
        assert_eq!(a.digest().len(), 64);
        assert!(a.digest().bytes().all(|c| c.is_ascii_hexdigit()));
        assert_ne!(a, CacheKey::of(&request("q")));
        let mut warm = request("p");
        warm.temperature = 0.7;
        assert_ne!(a, CacheKey::of(&warm));
    }

    #[test]
    fn canonical_form_is_sorted() {
        let json = serde_json::to_string(&CanonicalRequest::of(&request("p"))).unwrap();
        assert_eq!(json, r#"{"max_tokens":16,"model":"m","prompt":"p","temperature":"0"}"#);
    }

    #[test]
    fn second_call_is_served_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let scripted = ScriptedBackend::new(vec![(Matcher::Substring("p".into()), "answer".into())]);
        let backend = CachedBackend::new(scripted, ResponseCache::open(dir.path()).unwrap());
        let first = backend.complete(&request("p")).unwrap();
        let second = backend.complete(&request("p")).unwrap();
        assert!(!first.from_cache);
        assert!(second.from_cache);
        assert_eq!(second.text, "answer");
        assert_eq!(backend.provider_calls(), 1);
    }

    #[test]
    fn tampered_entry_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let req = request("p");
        cache.put(&req, &BackendResponse::text("original")).unwrap();
        let path = dir.path().join(format!("{}.json", CacheKey::of(&req).digest()));
        let text = fs::read_to_string(&path).unwrap().replace("original", "tampered");
        fs::write(&path, text).unwrap();
        assert!(matches!(cache.get(&req), Err(BackendError::CacheCorrupt { .. })));
        let (ok, bad) = cache.verify_all().unwrap();
        assert_eq!((ok, bad.len()), (0, 1));
    }
}
