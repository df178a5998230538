use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;
use sha2::{Digest, Sha256};

use super::{Proposer, ProposerError, ProposerRequest, ProposerResponse};

/// Serves repeated requests from `dir`, one JSON file per request hash.
pub struct CachedProposer {
    inner: Arc<dyn Proposer>,
    dir: PathBuf,
}

impl CachedProposer {
    pub fn new(inner: Arc<dyn Proposer>, dir: PathBuf) -> Result<Self, ProposerError> {
        fs::create_dir_all(&dir).map_err(|source| ProposerError::Cache { path: dir.clone(), source })?;
        Ok(CachedProposer { inner, dir })
    }

    /// SHA-256 over the model, the full message list and the generation
    /// parameters.
    pub fn key(model: &str, request: &ProposerRequest) -> String {
        let canonical = json!({
            "model": model,
            "messages": request.wire_messages(),
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        });
        Sha256::digest(canonical.to_string().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn path_for(&self, request: &ProposerRequest) -> PathBuf {
        self.dir.join(format!("{}.json", Self::key(&self.inner.model(), request)))
    }

    fn store(&self, path: &Path, response: &ProposerResponse) -> Result<(), ProposerError> {
        let err = |source| ProposerError::Cache { path: path.to_path_buf(), source };
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut file = fs::File::create(&tmp).map_err(err)?;
        file.write_all(serde_json::to_string(response).expect("response serializes").as_bytes()).map_err(err)?;
        file.sync_all().map_err(err)?;
        fs::rename(&tmp, path).map_err(err)
    }
}

impl Proposer for CachedProposer {
    fn propose(&self, request: &ProposerRequest) -> Result<ProposerResponse, ProposerError> {
        let path = self.path_for(request);
        if let Ok(text) = fs::read_to_string(&path) {
            match serde_json::from_str::<ProposerResponse>(&text) {
                Ok(mut hit) => {
                    hit.cached = true;
                    hit.attempts = 0;
                    hit.latency_ms = 0;
                    return Ok(hit);
                }
                Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", path.display()),
            }
        }
        let response = self.inner.propose(request)?;
        self.store(&path, &response)?;
        Ok(response)
    }

    fn model(&self) -> String {
        self.inner.model()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proposer::{ChatMessage, GenerationParams, ScriptedProposer};

    fn req(prompt: &str, temperature: f64) -> ProposerRequest {
        ProposerRequest {
            system: None,
            messages: vec![ChatMessage::user(prompt)],
            params: GenerationParams { temperature, max_tokens: 128 },
        }
    }

    #[test]
    fn key_tracks_every_field() {
        let a = CachedProposer::key("m", &req("x", 0.0));
        assert_eq!(a, CachedProposer::key("m", &req("x", 0.0)));
        assert_ne!(a, CachedProposer::key("n", &req("x", 0.0)));
        assert_ne!(a, CachedProposer::key("m", &req("y", 0.0)));
        assert_ne!(a, CachedProposer::key("m", &req("x", 0.5)));
    }

    #[test]
    fn second_call_is_served_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let inner = Arc::new(ScriptedProposer::from_responses(["CCO"]));
        let cache = CachedProposer::new(inner.clone(), dir.path().to_path_buf()).unwrap();
        let first = cache.propose(&req("x", 0.0)).unwrap();
        let second = cache.propose(&req("x", 0.0)).unwrap();
        assert_eq!(first.text, second.text);
        assert!(second.cached && !first.cached);
        assert_eq!(inner.served(), 1);
    }
}
