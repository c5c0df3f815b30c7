//! Remote embedding service client.
//!
//! Contract: `POST <endpoint>` with body
//! `{"model": str, "role": "query"|"passage", "instruction": str|null, "texts": [str]}`
//! and response `{"embeddings": [[f32]]}`, one array per text, in order.
//! Texts are sent already preprocessed (lowercased, instruction composed on
//! the query side); `instruction` is informational and must not be applied
//! again by the server. A bearer token is read from [`API_KEY_ENV`].

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{preprocess, EmbedRole, EmbeddingProvider, ProviderConfig, ProviderKind};
use crate::error::{Error, Result};
use crate::http::JsonClient;

pub const API_KEY_ENV: &str = "FGR_EMBED_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model: String,
    pub role: EmbedRole,
    pub instruction: Option<String>,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vec<f32>>,
}

pub struct RemoteProvider {
    cfg: ProviderConfig,
    endpoint: String,
    client: JsonClient,
    pool: rayon::ThreadPool,
}

impl RemoteProvider {
    pub fn new(cfg: ProviderConfig) -> Result<Self> {
        cfg.validate()?;
        let ProviderKind::RemoteService { endpoint } = &cfg.kind else {
            return Err(Error::Config("remote provider needs a service endpoint".into()));
        };
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.fanout)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.clone(),
            client: JsonClient::new(cfg.timeout, cfg.retries, api_key),
            cfg,
            pool,
        })
    }

    /// Base delay between retries, doubled on each attempt.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.client.set_backoff(backoff);
        self
    }

    fn request(&self, texts: &[(String, String)], role: EmbedRole) -> Result<Vec<Vec<f32>>> {
        let body = EmbedRequest {
            model: self.cfg.model.clone(),
            role,
            instruction: match role {
                EmbedRole::Query => self.cfg.instruction.clone(),
                EmbedRole::Passage => None,
            },
            texts: texts
                .iter()
                .map(|(_, t)| preprocess(t, role, &self.cfg))
                .collect(),
        };
        let resp: EmbedResponse = self.client.post(&self.endpoint, &body)?;
        if resp.embeddings.len() != texts.len() {
            return Err(Error::Transport(format!(
                "service returned {} embeddings for {} texts",
                resp.embeddings.len(),
                texts.len()
            )));
        }
        Ok(resp.embeddings)
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn embed_raw(&self, texts: &[(String, String)], role: EmbedRole) -> Result<Vec<Vec<f32>>> {
        let chunks: Vec<_> = texts.chunks(self.cfg.batch_size).collect();
        let results: Vec<Result<Vec<Vec<f32>>>> = self
            .pool
            .install(|| chunks.par_iter().map(|c| self.request(c, role)).collect());
        let mut out = Vec::with_capacity(texts.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}
