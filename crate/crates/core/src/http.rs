//! Blocking JSON-over-HTTP with retry and exponential backoff.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    api_key: Option<String>,
    retries: u32,
    backoff: Duration,
}

impl JsonClient {
    pub(crate) fn new(timeout: Duration, retries: u32, api_key: Option<String>) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            api_key,
            retries,
            backoff: Duration::from_millis(200),
        }
    }

    pub(crate) fn set_backoff(&mut self, backoff: Duration) {
        self.backoff = backoff;
    }

    /// POSTs `body` and decodes the response. Transport failures, 429 and 5xx
    /// are retried; other statuses fail immediately.
    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R> {
        let mut attempt = 0;
        loop {
            let mut req = self.agent.post(url);
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            let err = match req.send_json(body) {
                Ok(resp) => {
                    return resp
                        .into_json::<R>()
                        .map_err(|e| Error::Transport(format!("{url}: undecodable response: {e}")));
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let body = resp.into_string().unwrap_or_default();
                    let msg = format!("{url}: HTTP {code}: {}", body.chars().take(200).collect::<String>());
                    if code != 429 && code < 500 {
                        return Err(Error::Transport(msg));
                    }
                    msg
                }
                Err(ureq::Error::Transport(t)) => format!("{url}: {t}"),
            };
            if attempt >= self.retries {
                return Err(Error::Transport(format!("{err} (after {} attempts)", attempt + 1)));
            }
            let delay = self.backoff * 2u32.saturating_pow(attempt).min(64);
            tracing::warn!(attempt = attempt + 1, ?delay, "request failed, retrying: {err}");
            std::thread::sleep(delay);
            attempt += 1;
        }
    }
}
