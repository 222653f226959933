//! Blocking JSON-over-HTTP client with bounded retries, shared by the remote
//! embedder, scorer and language-model backends.

use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            timeout_ms: 30_000,
            max_retries: 3,
            backoff_ms: 200,
            auth_token: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    config: HttpConfig,
}

enum Attempt<T> {
    Done(T),
    Retry(String),
}

impl HttpClient {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        HttpClient { agent, config }
    }

    /// POST `body` as JSON and decode the JSON response.
    ///
    /// Transport errors, 429 and 5xx are retried with exponential backoff;
    /// other non-2xx statuses fail immediately.
    pub fn post_json<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R> {
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.try_once(url, body, attempt)? {
                Attempt::Done(value) => return Ok(value),
                Attempt::Retry(reason) => last = reason,
            }
            if attempt < attempts {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::debug!("retrying {url} in {wait} ms: {last}");
                thread::sleep(Duration::from_millis(wait));
            }
        }
        Err(Error::Backend {
            message: format!("POST {url}: {last}"),
            attempts,
        })
    }

    fn try_once<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B, attempt: u32) -> Result<Attempt<R>> {
        let payload =
            serde_json::to_vec(body).map_err(|e| Error::validation(format!("request body does not serialize: {e}")))?;
        let mut request = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = &self.config.auth_token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = match request.send(&payload[..]) {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Ok(Attempt::Retry(format!("http status {status}")));
        }
        if !(200..300).contains(&status) {
            let text = response.body_mut().read_to_string().unwrap_or_default();
            return Err(Error::Backend {
                message: format!("POST {url}: http status {status}: {}", text.trim()),
                attempts: attempt,
            });
        }
        response
            .body_mut()
            .read_json::<R>()
            .map(Attempt::Done)
            .map_err(|e| Error::Capability(format!("malformed response from {url}: {e}")))
    }
}

#[cfg(test)]
pub(crate) mod mock {
    //! One-thread canned-response HTTP server for client tests.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    pub struct MockServer {
        pub url: String,
        pub requests: Arc<Mutex<Vec<String>>>,
    }

    /// Serve `responses` (status, body) in order, one per connection.
    pub fn serve(responses: Vec<(u16, String)>) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&requests);
        std::thread::spawn(move || {
            for (status, body) in responses {
                let Ok((stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream);
                let mut length = 0usize;
                let mut head = String::new();
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap_or(0);
                    }
                    head.push_str(&line);
                }
                let mut payload = vec![0u8; length];
                reader.read_exact(&mut payload).ok();
                seen.lock()
                    .unwrap()
                    .push(format!("{head}\n{}", String::from_utf8_lossy(&payload)));
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .ok();
            }
        });
        MockServer { url, requests }
    }
}
