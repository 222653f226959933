use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{HttpClient, HttpConfig};
use crate::memory::EditFact;

use super::RelevanceScorer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteScorerConfig {
    pub url: String,
    #[serde(default, flatten)]
    pub http: HttpConfig,
}

#[derive(Serialize)]
struct RemoteFact<'a> {
    subject: &'a str,
    relation: &'a str,
    new_object: &'a str,
    surface_text: &'a str,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    query: &'a str,
    facts: Vec<RemoteFact<'a>>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    probabilities: Vec<f64>,
}

/// Client for a relevance service speaking
/// `{"query": ..., "facts": [...]}` -> `{"probabilities": [...]}`.
/// Thresholding stays local.
#[derive(Debug)]
pub struct RemoteScorer {
    url: String,
    client: HttpClient,
}

impl RemoteScorer {
    pub fn new(config: RemoteScorerConfig) -> Self {
        RemoteScorer {
            url: config.url,
            client: HttpClient::new(config.http),
        }
    }
}

impl RelevanceScorer for RemoteScorer {
    fn probabilities(&self, query: &str, facts: &[&EditFact]) -> Result<Vec<f64>> {
        let request = ScoreRequest {
            query,
            facts: facts
                .iter()
                .map(|f| RemoteFact {
                    subject: &f.subject,
                    relation: &f.relation,
                    new_object: &f.new_object,
                    surface_text: &f.surface_text,
                })
                .collect(),
        };
        let response: ScoreResponse = self.client.post_json(&self.url, &request)?;
        if response.probabilities.len() != facts.len() {
            return Err(Error::Capability(format!(
                "scorer returned {} probabilities for {} facts",
                response.probabilities.len(),
                facts.len()
            )));
        }
        Ok(response.probabilities)
    }
}
