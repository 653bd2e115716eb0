use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendRequest, BackendResponse};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "match", content = "pattern", rename_all = "snake_case")]
pub enum Matcher {
    Exact(String),
    Substring(String),
}

impl Matcher {
    pub fn matches(&self, prompt: &str) -> bool {
        match self {
            Self::Exact(p) => prompt == p,
            Self::Substring(s) => prompt.contains(s.as_str()),
        }
    }
}

/// One line of a script file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(flatten)]
    pub matcher: Matcher,
    pub response: String,
}

/// Answers prompts from a fixed script; the first matching entry wins.
///
/// Every request is appended to an internal log so tests can inspect
/// exactly what the pipeline sent.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    script: Vec<(Matcher, String)>,
    log: Mutex<Vec<BackendRequest>>,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new(script: Vec<(Matcher, String)>) -> Self {
        Self { script, log: Mutex::new(Vec::new()), calls: AtomicU64::new(0) }
    }

    /// Loads a JSON-lines script: `{"match":"substring","pattern":"...","response":"..."}`.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let mut script = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line)
                .map_err(|e| BackendError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
            script.push((entry.matcher, entry.response));
        }
        Ok(Self::new(script))
    }

    pub fn requests(&self) -> Vec<BackendRequest> {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.requests().into_iter().map(|r| r.prompt).collect()
    }

    pub fn clear_log(&self) {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).clear();
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.log.lock().unwrap_or_else(|p| p.into_inner()).push(request.clone());
        self.script
            .iter()
            .find(|(m, _)| m.matches(&request.prompt))
            .map(|(_, response)| BackendResponse::text(response.clone()))
            .ok_or_else(|| BackendError::NoScriptedMatch(request.prompt.clone()))
    }

    fn provider_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substring_match_answers_percept_step() {
        let backend = ScriptedBackend::new(vec![(
            Matcher::Substring("percept of Luka".into()),
            "Luka does not perceive the change in the environment caused by the wind".into(),
        )]);
        let r = backend
            .complete(&BackendRequest::greedy("m", "What is the percept of Luka regarding the causal event?", 8))
            .unwrap();
        assert_eq!(r.text, "Luka does not perceive the change in the environment caused by the wind");
        assert!(!r.from_cache);
    }

    #[test]
    fn exact_match_and_first_wins() {
        let backend = ScriptedBackend::new(vec![
            (Matcher::Exact("P".into()), "Hiro".into()),
            (Matcher::Substring("P".into()), "other".into()),
        ]);
        assert_eq!(backend.complete(&BackendRequest::greedy("m", "P", 8)).unwrap().text, "Hiro");
        assert_eq!(backend.complete(&BackendRequest::greedy("m", "PP", 8)).unwrap().text, "other");
    }

    #[test]
    fn unmatched_prompt() {
        let backend = ScriptedBackend::new(vec![]);
        assert_eq!(
            backend.complete(&BackendRequest::greedy("m", "hello", 8)),
            Err(BackendError::NoScriptedMatch("hello".into()))
        );
    }

    #[test]
    fn identical_runs_identical_logs() {
        let run = || {
            let b = ScriptedBackend::new(vec![(Matcher::Substring("".into()), "x".into())]);
            for p in ["a", "b", "c"] {
                b.complete(&BackendRequest::greedy("m", p, 8)).unwrap();
            }
            b.requests()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn script_file_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.jsonl");
        fs::write(
            &path,
            "{\"match\":\"substring\",\"pattern\":\"Whose\",\"response\":\"Hiro\"}\n\n{\"match\":\"exact\",\"pattern\":\"x\",\"response\":\"y\"}\n",
        )
        .unwrap();
        let b = ScriptedBackend::from_file(&path).unwrap();
        assert_eq!(b.complete(&BackendRequest::greedy("m", "Whose belief", 8)).unwrap().text, "Hiro");
        assert_eq!(b.complete(&BackendRequest::greedy("m", "x", 8)).unwrap().text, "y");
    }
}
