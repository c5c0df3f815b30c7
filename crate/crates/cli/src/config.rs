//! Optional TOML defaults. Command-line flags always win over the file.
//!
//! ```toml
//! jobs = 8
//! seed = 7
//!
//! [dataset]
//! path = "data/capretrieval"
//!
//! [provider]
//! source = "http://localhost:8080/embed"
//! model = "bge-base-zh-v1.5"
//! instruction = "..."
//!
//! [tokenizer]
//! kind = "unigram"
//!
//! [bm25]
//! k1 = 1.5
//! b = 0.75
//!
//! [metrics]
//! cutoffs = [1, 5, 10]
//! gain = "linear"
//!
//! [gen]
//! endpoint = "http://localhost:9000/v1/chat/completions"
//! model = "some-llm"
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub dataset: DatasetSection,
    pub provider: ProviderSection,
    pub tokenizer: TokenizerSection,
    pub bm25: Bm25Section,
    pub metrics: MetricsSection,
    pub gen: GenSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSection {
    pub source: Option<String>,
    pub model: Option<String>,
    pub instruction: Option<String>,
    pub template: Option<String>,
    pub batch_size: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub retries: Option<u32>,
    pub fanout: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub kind: Option<String>,
    pub passage_tokens: Option<PathBuf>,
    pub query_tokens: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Section {
    pub k1: Option<f64>,
    pub b: Option<f64>,
    pub idf: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub cutoffs: Option<Vec<usize>>,
    pub gain: Option<String>,
    pub tie_band: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub kinds: Option<Vec<String>>,
    pub temperature: Option<f32>,
    pub max_per_kind: Option<usize>,
    pub sm_template: Option<String>,
    pub kw_template: Option<String>,
    pub concurrency: Option<usize>,
    pub parse_retries: Option<u32>,
    pub leakage_threshold: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&src).with_context(|| format!("parsing {}", path.display()))
    }
}
