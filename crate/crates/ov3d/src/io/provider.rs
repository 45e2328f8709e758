//! Embedding provider: a frozen cross-modal encoder abstracted behind
//! either a manifest file on disk or an HTTP endpoint speaking the same
//! schema (`POST /embeddings` with `{"ids": [...]}`).

use std::path::PathBuf;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::io::manifests::{load_embedding_manifest, EmbeddingManifest};
use crate::losses::FeatureVec;

#[derive(Debug, Clone)]
pub enum ProviderConfig {
    File { path: PathBuf },
    Http { endpoint: String, timeout: Duration },
}

impl ProviderConfig {
    pub fn file(path: impl Into<PathBuf>) -> Self {
        ProviderConfig::File { path: path.into() }
    }

    pub fn http(endpoint: impl Into<String>, timeout: Duration) -> Self {
        ProviderConfig::Http { endpoint: endpoint.into(), timeout }
    }
}

/// Fetch the requested ids, in request order, validated and L2-normalized.
pub fn load_embeddings(cfg: &ProviderConfig, ids: &[String]) -> Result<Vec<FeatureVec>> {
    let manifest = match cfg {
        ProviderConfig::File { path } => load_embedding_manifest(path)?,
        ProviderConfig::Http { endpoint, timeout } => fetch_http(endpoint, *timeout, ids)?,
    };
    let features = manifest.to_features()?;
    ids.iter()
        .map(|id| {
            features
                .iter()
                .find(|f| &f.id == id)
                .cloned()
                .ok_or_else(|| Error::MissingId(id.clone()))
        })
        .collect()
}

fn fetch_http(endpoint: &str, timeout: Duration, ids: &[String]) -> Result<EmbeddingManifest> {
    let url = format!("{}/embeddings", endpoint.trim_end_matches('/'));
    let body = serde_json::json!({ "ids": ids }).to_string();
    let agent = ureq::AgentBuilder::new().timeout(timeout).build();
    let response = agent
        .post(&url)
        .set("content-type", "application/json")
        .send_string(&body);
    match response {
        Ok(resp) => {
            let text = resp
                .into_string()
                .map_err(|e| Error::Provider(format!("reading response from {url}: {e}")))?;
            let manifest: EmbeddingManifest = serde_json::from_str(&text)
                .map_err(|e| Error::Provider(format!("malformed manifest from {url}: {e}")))?;
            manifest.validate()?;
            Ok(manifest)
        }
        Err(ureq::Error::Status(404, resp)) => {
            #[derive(serde::Deserialize)]
            struct Missing {
                missing: Vec<String>,
            }
            let text = resp.into_string().unwrap_or_default();
            match serde_json::from_str::<Missing>(&text) {
                Ok(m) if !m.missing.is_empty() => Err(Error::MissingId(m.missing[0].clone())),
                _ => Err(Error::Provider(format!("{url} returned 404"))),
            }
        }
        Err(e) => Err(Error::Provider(format!("{url}: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::manifests::{save_embedding_manifest, EmbeddingEntry};
    use crate::losses::Modality;

    fn manifest() -> EmbeddingManifest {
        EmbeddingManifest {
            dim: 2,
            entries: vec![
                EmbeddingEntry { id: "a".into(), modality: Modality::Text, category: None, vector: vec![2.0, 0.0] },
                EmbeddingEntry { id: "b".into(), modality: Modality::Text, category: None, vector: vec![0.0, 1.0] },
            ],
        }
    }

    #[test]
    fn file_provider_request_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.json");
        save_embedding_manifest(&path, &manifest()).unwrap();
        let cfg = ProviderConfig::file(&path);
        let out = load_embeddings(&cfg, &["b".into(), "a".into()]).unwrap();
        assert_eq!(out[0].id, "b");
        assert_eq!(out[1].id, "a");
        assert_eq!(out[1].values, vec![1.0, 0.0]); // normalized
    }

    #[test]
    fn file_provider_missing_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.json");
        save_embedding_manifest(&path, &manifest()).unwrap();
        let cfg = ProviderConfig::file(&path);
        let err = load_embeddings(&cfg, &["zzz".into()]).unwrap_err();
        assert!(matches!(err, Error::MissingId(ref id) if id == "zzz"));
    }

    #[test]
    fn http_provider_round_trip() {
        use std::io::{Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let body = serde_json::to_string(&manifest()).unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let n = stream.read(&mut buf).unwrap();
            let req = String::from_utf8_lossy(&buf[..n]).to_string();
            assert!(req.starts_with("POST /embeddings"));
            let resp = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(resp.as_bytes()).unwrap();
        });
        let cfg = ProviderConfig::http(format!("http://{addr}"), Duration::from_secs(5));
        let out = load_embeddings(&cfg, &["a".into()]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].values, vec![1.0, 0.0]);
        handle.join().unwrap();
    }

    #[test]
    fn http_provider_404_missing() {
        use std::io::{Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let _ = stream.read(&mut buf).unwrap();
            let body = r#"{"missing":["ghost"]}"#;
            let resp = format!(
                "HTTP/1.1 404 Not Found\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(resp.as_bytes()).unwrap();
        });
        let cfg = ProviderConfig::http(format!("http://{addr}"), Duration::from_secs(5));
        let err = load_embeddings(&cfg, &["ghost".into()]).unwrap_err();
        assert!(matches!(err, Error::MissingId(ref id) if id == "ghost"), "{err:?}");
        handle.join().unwrap();
    }
}
