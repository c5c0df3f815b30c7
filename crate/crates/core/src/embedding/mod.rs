//! Unit-norm embeddings from pluggable providers.
//!
//! Every vector handed out by a provider is L2-normalized here, whatever the
//! backend claims, so retrieval can score with a plain dot product.

mod remote;
mod vectors;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

pub use remote::{EmbedRequest, EmbedResponse, RemoteProvider, API_KEY_ENV};
pub use vectors::{load_vectors, save_vectors, save_vectors_text, VectorFormat};

/// Query instruction used for instruction-following encoders on caption
/// search.
pub const IMAGE_SEARCH_INSTRUCTION: &str =
    "Given an image search query, retrieve relevant image captions";

/// Allowed deviation of a normalized vector's L2 norm from 1.
pub const NORM_TOLERANCE: f32 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub id: String,
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(id: impl Into<String>, values: Vec<f32>) -> Self {
        Self {
            id: id.into(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f32 {
        self.values.iter().map(|v| v * v).sum::<f32>().sqrt()
    }

    /// Scales to unit L2 norm. Zero and non-finite vectors are rejected.
    pub fn normalized(mut self) -> Result<Self> {
        let norm = self
            .values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidRecord(format!(
                "vector `{}` cannot be normalized (norm {norm})",
                self.id
            )));
        }
        for v in &mut self.values {
            *v = (f64::from(*v) / norm) as f32;
        }
        Ok(self)
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedRole {
    Query,
    Passage,
}

impl fmt::Display for EmbedRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedRole::Query => "query",
            EmbedRole::Passage => "passage",
        })
    }
}

/// How an instruction is composed with query text. `{instruction}` and
/// `{text}` are substituted in a single pass, so neither value is itself
/// scanned for placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstructionTemplate(String);

impl InstructionTemplate {
    pub const PREFIX: &'static str = "{instruction} {text}";
    pub const CONCAT: &'static str = "{instruction}{text}";
    pub const INSTRUCT_QUERY: &'static str = "Instruct: {instruction}\nQuery: {text}";

    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if !template.contains("{text}") {
            return Err(Error::Config(format!(
                "instruction template {template:?} has no {{text}} placeholder"
            )));
        }
        Ok(Self(template))
    }

    /// `prefix`, `concat` or `instruct-query`; anything else is taken as a
    /// literal template.
    pub fn from_preset_or_literal(s: &str) -> Result<Self> {
        match s {
            "prefix" => Self::new(Self::PREFIX),
            "concat" => Self::new(Self::CONCAT),
            "instruct-query" => Self::new(Self::INSTRUCT_QUERY),
            other => Self::new(other.replace("\\n", "\n")),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn compose(&self, instruction: &str, text: &str) -> String {
        let mut out = String::with_capacity(self.0.len() + instruction.len() + text.len());
        let mut rest = self.0.as_str();
        while let Some(pos) = rest.find('{') {
            out.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            if let Some(r) = tail.strip_prefix("{instruction}") {
                out.push_str(instruction);
                rest = r;
            } else if let Some(r) = tail.strip_prefix("{text}") {
                out.push_str(text);
                rest = r;
            } else {
                out.push('{');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        out
    }
}

impl Default for InstructionTemplate {
    fn default() -> Self {
        Self(Self::PREFIX.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProviderKind {
    /// Precomputed vectors, one file per role since query and passage ids
    /// live in separate namespaces.
    VectorFile { passages: PathBuf, queries: PathBuf },
    RemoteService { endpoint: String },
}

impl FromStr for ProviderKind {
    type Err = String;

    /// `file:<passages>,<queries>` or an `http(s)://` URL.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(paths) = s.strip_prefix("file:") {
            let (p, q) = paths
                .split_once(',')
                .ok_or_else(|| format!("expected `file:<passages>,<queries>`, got `{s}`"))?;
            return Ok(ProviderKind::VectorFile {
                passages: p.into(),
                queries: q.into(),
            });
        }
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(ProviderKind::RemoteService {
                endpoint: s.to_owned(),
            });
        }
        Err(format!("unrecognized provider `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub model: String,
    pub instruction: Option<String>,
    #[serde(default)]
    pub template: InstructionTemplate,
    pub batch_size: usize,
    pub timeout: Duration,
    pub retries: u32,
    /// Concurrent in-flight batches for remote providers.
    pub fanout: usize,
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind, model: impl Into<String>) -> Self {
        Self {
            kind,
            model: model.into(),
            instruction: None,
            template: InstructionTemplate::default(),
            batch_size: 64,
            timeout: Duration::from_secs(60),
            retries: 3,
            fanout: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.fanout == 0 {
            return Err(Error::Config("fan-out must be at least 1".into()));
        }
        if let ProviderKind::RemoteService { endpoint } = &self.kind {
            if endpoint.is_empty() {
                return Err(Error::Config("remote provider needs an endpoint".into()));
            }
        }
        Ok(())
    }
}

/// Lowercases, then composes the instruction for query-side text.
pub fn preprocess(text: &str, role: EmbedRole, cfg: &ProviderConfig) -> String {
    let lowered = text::lowercase(text);
    match (role, cfg.instruction.as_deref()) {
        (EmbedRole::Query, Some(instruction)) => cfg.template.compose(instruction, &lowered),
        _ => lowered,
    }
}

/// Source of raw (not yet normalized) vectors.
pub trait EmbeddingProvider: Send + Sync {
    /// One raw vector per `(id, text)`, in input order.
    fn embed_raw(&self, texts: &[(String, String)], role: EmbedRole) -> Result<Vec<Vec<f32>>>;

    /// Embeds and normalizes; checks dimensions agree across the batch.
    fn embed(&self, texts: &[(String, String)], role: EmbedRole) -> Result<Vec<EmbeddingVector>> {
        let raw = self.embed_raw(texts, role)?;
        if raw.len() != texts.len() {
            return Err(Error::Transport(format!(
                "provider returned {} vectors for {} texts",
                raw.len(),
                texts.len()
            )));
        }
        let dim = raw.first().map_or(0, Vec::len);
        texts
            .iter()
            .zip(raw)
            .map(|((id, _), values)| {
                if values.len() != dim {
                    return Err(Error::DimensionMismatch {
                        id: id.clone(),
                        expected: dim,
                        actual: values.len(),
                    });
                }
                EmbeddingVector::new(id.clone(), values).normalized()
            })
            .collect()
    }
}

/// Looks vectors up by id in two preloaded vector files.
#[derive(Debug, Clone)]
pub struct FileProvider {
    passages: HashMap<String, Vec<f32>>,
    queries: HashMap<String, Vec<f32>>,
}

impl FileProvider {
    pub fn open(passages: &std::path::Path, queries: &std::path::Path) -> Result<Self> {
        let to_map = |vs: Vec<EmbeddingVector>| vs.into_iter().map(|v| (v.id, v.values)).collect();
        Ok(Self {
            passages: to_map(load_vectors(passages)?),
            queries: to_map(load_vectors(queries)?),
        })
    }

    pub fn from_vectors(passages: Vec<EmbeddingVector>, queries: Vec<EmbeddingVector>) -> Self {
        let to_map = |vs: Vec<EmbeddingVector>| vs.into_iter().map(|v| (v.id, v.values)).collect();
        Self {
            passages: to_map(passages),
            queries: to_map(queries),
        }
    }
}

impl EmbeddingProvider for FileProvider {
    fn embed_raw(&self, texts: &[(String, String)], role: EmbedRole) -> Result<Vec<Vec<f32>>> {
        let table = match role {
            EmbedRole::Query => &self.queries,
            EmbedRole::Passage => &self.passages,
        };
        texts
            .iter()
            .map(|(id, _)| table.get(id).cloned().ok_or_else(|| Error::MissingVector(id.clone())))
            .collect()
    }
}

/// Instantiates the provider described by `cfg`.
pub fn open_provider(cfg: &ProviderConfig) -> Result<Box<dyn EmbeddingProvider>> {
    cfg.validate()?;
    Ok(match &cfg.kind {
        ProviderKind::VectorFile { passages, queries } => Box::new(FileProvider::open(passages, queries)?),
        ProviderKind::RemoteService { .. } => Box::new(RemoteProvider::new(cfg.clone())?),
    })
}

/// One unit-norm vector per input id, in input order.
pub fn embed_batch(
    texts: &[(String, String)],
    role: EmbedRole,
    cfg: &ProviderConfig,
) -> Result<Vec<EmbeddingVector>> {
    open_provider(cfg)?.embed(texts, role)
}
