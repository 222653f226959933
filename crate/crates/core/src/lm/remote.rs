//! Client for completion endpoints that expose top-N token log-probabilities
//! (the legacy `/completions` request shape).

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{HttpClient, HttpConfig};

use super::{LanguageModel, TokenDistribution};

const END_OF_TEXT: &str = "<|endoftext|>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteLmConfig {
    /// Full completion endpoint URL.
    pub url: String,
    pub model: String,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Base of the log-probabilities the endpoint returns; converted to
    /// natural log at this boundary.
    #[serde(default = "default_base")]
    pub logprob_base: f64,
    #[serde(default, flatten)]
    pub http: HttpConfig,
}

fn default_top_n() -> usize {
    20
}

fn default_in_flight() -> usize {
    8
}

fn default_base() -> f64 {
    std::f64::consts::E
}

impl RemoteLmConfig {
    pub fn new(url: &str, model: &str) -> Self {
        RemoteLmConfig {
            url: url.to_string(),
            model: model.to_string(),
            top_n: default_top_n(),
            max_in_flight: default_in_flight(),
            logprob_base: default_base(),
            http: HttpConfig::default(),
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: usize,
    logprobs: usize,
    temperature: f64,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    echo: bool,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    logprobs: Option<Logprobs>,
}

#[derive(Deserialize)]
struct Logprobs {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    top_logprobs: Option<Vec<Option<BTreeMap<String, f64>>>>,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    ready: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.ready.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.ready.notify_one();
    }
}

#[derive(Debug)]
pub struct RemoteLm {
    config: RemoteLmConfig,
    client: HttpClient,
    slots: Slots,
}

impl RemoteLm {
    pub fn new(config: RemoteLmConfig) -> Result<Self> {
        if config.top_n == 0 {
            return Err(Error::Config("top_n must be at least 1".into()));
        }
        if config.logprob_base.is_nan() || config.logprob_base <= 1.0 {
            return Err(Error::Config("logprob_base must exceed 1".into()));
        }
        Ok(RemoteLm {
            client: HttpClient::new(config.http.clone()),
            slots: Slots {
                free: Mutex::new(config.max_in_flight.max(1)),
                ready: Condvar::new(),
            },
            config,
        })
    }

    fn complete(&self, prompt: &str, max_tokens: usize, logprobs: usize, echo: bool) -> Result<Logprobs> {
        let request = CompletionRequest {
            model: &self.config.model,
            prompt,
            max_tokens,
            logprobs,
            temperature: 0.0,
            echo,
        };
        let response: CompletionResponse = {
            let _slot = self.slots.acquire();
            self.client.post_json(&self.config.url, &request)?
        };
        response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.logprobs)
            .ok_or_else(|| Error::Capability("completion response carries no logprobs".into()))
    }
}

impl LanguageModel for RemoteLm {
    fn next_token_distribution(&self, prompt: &str) -> Result<TokenDistribution> {
        if prompt.trim().is_empty() {
            return Err(Error::validation("prompt must be non-empty"));
        }
        let logprobs = self.complete(prompt, 1, self.config.top_n, false)?;
        let top = logprobs
            .top_logprobs
            .and_then(|v| v.into_iter().next().flatten())
            .ok_or_else(|| Error::Capability("completion response has no top_logprobs".into()))?;
        let scale = self.config.logprob_base.ln();
        let mut entries = BTreeMap::new();
        for (token, lp) in top {
            if !lp.is_finite() {
                continue;
            }
            entries.insert(token, (lp * scale).min(0.0));
        }
        Ok(TokenDistribution {
            entries,
            complete: false,
        })
    }

    /// Tokenizes `" " + answer` by echoing it back with zero new tokens.
    fn first_token_of(&self, answer: &str) -> Result<String> {
        if answer.trim().is_empty() {
            return Err(Error::validation("answer must be non-empty"));
        }
        let prompt = format!(" {}", answer.trim());
        let logprobs = self.complete(&prompt, 0, 0, true)?;
        logprobs
            .tokens
            .into_iter()
            .next()
            .ok_or_else(|| Error::validation(format!("answer {answer:?} tokenizes to nothing")))
    }

    fn greedy_continue(&self, prompt: &str, forced_first_token: &str, max_tokens: usize) -> Result<String> {
        if max_tokens == 0 {
            return Err(Error::validation("max_tokens must be at least 1"));
        }
        let mut out = forced_first_token.to_string();
        for _ in 1..max_tokens {
            let dist = self.next_token_distribution(&format!("{prompt}{out}"))?;
            let Some((token, _)) = dist.argmax() else { break };
            if token.is_empty() || token == END_OF_TEXT || token.contains('\n') {
                break;
            }
            out.push_str(token);
        }
        Ok(out.trim().to_string())
    }

    fn token_convention(&self) -> &'static str {
        "leading-space/echo"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::mock;

    fn lm(url: &str) -> RemoteLm {
        let mut cfg = RemoteLmConfig::new(url, "test-model");
        cfg.http.max_retries = 0;
        RemoteLm::new(cfg).unwrap()
    }

    fn top(pairs: &[(&str, f64)]) -> String {
        let map: BTreeMap<&str, f64> = pairs.iter().copied().collect();
        serde_json::json!({"choices": [{"text": "", "logprobs": {"tokens": [pairs[0].0], "top_logprobs": [map]}}]})
            .to_string()
    }

    #[test]
    fn parses_top_logprobs_without_fabricating() {
        let server = mock::serve(vec![(200, top(&[(" German", -0.5), (" French", -1.2)]))]);
        let d = lm(&server.url).next_token_distribution("Q:").unwrap();
        assert!(!d.complete);
        assert_eq!(d.entries.len(), 2);
        assert_eq!(d.logprob(" German"), Some(-0.5));
        assert_eq!(d.ranked()[0].0, " German");
        let body = server.requests.lock().unwrap()[0].clone();
        assert!(
            body.contains(r#""logprobs":20"#) && body.contains(r#""max_tokens":1"#),
            "{body}"
        );
    }

    #[test]
    fn converts_base_two_logprobs() {
        let server = mock::serve(vec![(200, top(&[("a", -1.0)]))]);
        let mut cfg = RemoteLmConfig::new(&server.url, "m");
        cfg.logprob_base = 2.0;
        let d = RemoteLm::new(cfg).unwrap().next_token_distribution("x").unwrap();
        assert!((d.logprob("a").unwrap() - (0.5f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn missing_logprobs_is_a_capability_error() {
        let server = mock::serve(vec![(200, r#"{"choices": [{"text": "x"}]}"#.into())]);
        assert!(matches!(
            lm(&server.url).next_token_distribution("x"),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn first_token_uses_echo() {
        let body = serde_json::json!({"choices": [{"logprobs": {"tokens": [" University", " of", " Michigan"]}}]});
        let server = mock::serve(vec![(200, body.to_string())]);
        assert_eq!(
            lm(&server.url).first_token_of("University of Michigan").unwrap(),
            " University"
        );
        let req = server.requests.lock().unwrap()[0].clone();
        assert!(
            req.contains(r#""echo":true"#) && req.contains(r#""prompt":" University of Michigan""#),
            "{req}"
        );
    }

    #[test]
    fn greedy_stops_at_newline() {
        let server = mock::serve(vec![
            (200, top(&[(" of", -0.1)])),
            (200, top(&[(" Michigan", -0.1)])),
            (200, top(&[("\n", -0.1)])),
        ]);
        let out = lm(&server.url).greedy_continue("Q:", " University", 16).unwrap();
        assert_eq!(out, "University of Michigan");
    }

    #[test]
    fn transport_failure_is_a_backend_error() {
        let server = mock::serve(vec![(503, "{}".into())]);
        assert!(matches!(
            lm(&server.url).next_token_distribution("x"),
            Err(Error::Backend { .. })
        ));
    }
}
