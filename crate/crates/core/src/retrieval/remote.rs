use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{HttpClient, HttpConfig};

use super::{Embedder, Embedding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub url: String,
    #[serde(default, flatten)]
    pub http: HttpConfig,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

/// Client for an embedding service speaking
/// `{"texts": [...]}` -> `{"embeddings": [[...], ...]}`.
///
/// The dimension of the first response is pinned; any later response with a
/// different dimension is a configuration error.
#[derive(Debug)]
pub struct RemoteEmbedder {
    url: String,
    client: HttpClient,
    dim: OnceLock<usize>,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Self {
        RemoteEmbedder {
            url: config.url,
            client: HttpClient::new(config.http),
            dim: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim.get().copied()
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding> {
        let mut out = self.embed_batch(&[text])?;
        Ok(out.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::validation(format!("text {i} is empty")));
        }
        let response: EmbedResponse = self.client.post_json(&self.url, &EmbedRequest { texts })?;
        if response.embeddings.len() != texts.len() {
            return Err(Error::Capability(format!(
                "embedder returned {} vectors for {} texts",
                response.embeddings.len(),
                texts.len()
            )));
        }
        let expected = match response.embeddings.first() {
            Some(first) => *self.dim.get_or_init(|| first.len()),
            None => return Ok(Vec::new()),
        };
        response
            .embeddings
            .into_iter()
            .map(|values| {
                if values.len() != expected {
                    Err(Error::Config(format!(
                        "embedding dimension {} does not match {expected}",
                        values.len()
                    )))
                } else if values.iter().any(|v| !v.is_finite()) {
                    Err(Error::Capability("non-finite embedding value".into()))
                } else {
                    Ok(Embedding { values })
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::mock;

    fn embedder(url: &str) -> RemoteEmbedder {
        RemoteEmbedder::new(RemoteEmbedderConfig {
            url: url.to_string(),
            http: HttpConfig {
                max_retries: 0,
                ..HttpConfig::default()
            },
        })
    }

    #[test]
    fn pins_dimension_from_first_response() {
        let server = mock::serve(vec![
            (200, r#"{"embeddings": [[1.0, 0.0], [0.0, 1.0]]}"#.into()),
            (200, r#"{"embeddings": [[1.0, 0.0, 0.0]]}"#.into()),
        ]);
        let e = embedder(&server.url);
        let out = e.embed_batch(&["a", "b"]).unwrap();
        assert_eq!(out[1].values, vec![0.0, 1.0]);
        assert_eq!(e.dim(), Some(2));
        assert!(matches!(e.embed("c"), Err(Error::Config(_))));
        let body = server.requests.lock().unwrap()[0].clone();
        assert!(body.contains(r#"{"texts":["a","b"]}"#), "{body}");
    }
}
