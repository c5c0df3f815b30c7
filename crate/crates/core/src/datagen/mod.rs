//! Synthetic training queries: LLM generation, leakage filtering, holdout
//! splitting and export of contrastive training pairs.
//!
//! # Training export format
//!
//! One JSON object per line, in query order:
//!
//! ```text
//! {"query": "...", "positives": ["<source passage text>"], "negatives": []}
//! ```
//!
//! `positives` is never empty. `negatives` is empty unless mined elsewhere;
//! in-batch negatives are supplied by the trainer.

mod llm;
mod rouge;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_lines, Passage};
use crate::error::{Error, Result};
use crate::lexical::Tokenize;

pub use llm::{ChatMessage, HttpLlmClient, LlmClient, LlmRequest, LLM_API_KEY_ENV};
pub use rouge::{
    filter_leakage, filter_leakage_with, lcs_len, rouge_l_f1, DroppedPassage, LeakageConfig,
    LeakageSplit, RougeMeasure,
};

pub const DEFAULT_LEAKAGE_THRESHOLD: f64 = 0.6;

/// Summary-style queries or keyword-style queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryKind {
    #[serde(rename = "SM")]
    Sm,
    #[serde(rename = "KW")]
    Kw,
}

impl QueryKind {
    pub const ALL: [QueryKind; 2] = [QueryKind::Sm, QueryKind::Kw];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::Sm => "SM",
            QueryKind::Kw => "KW",
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sm" | "summary" => Ok(QueryKind::Sm),
            "kw" | "keyword" | "keywords" => Ok(QueryKind::Kw),
            _ => Err(Error::Config(format!("unknown query kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQuery {
    pub passage_id: String,
    pub kind: QueryKind,
    pub text: String,
}

impl GeneratedQuery {
    pub fn new(passage_id: impl Into<String>, kind: QueryKind, text: impl Into<String>) -> Self {
        Self {
            passage_id: passage_id.into(),
            kind,
            text: text.into(),
        }
    }
}

/// Dedup key: lowercased with whitespace runs collapsed.
pub fn normalize_query(text: &str) -> String {
    crate::text::lowercase(text)
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Prompt with a system part and a user part. On disk the two are separated
/// by a line holding only `---`. The user part must contain `{passage}`;
/// `{max}` is optional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn parse(id: impl Into<String>, source: &str) -> Result<Self> {
        let id = id.into();
        let source = source.replace("\r\n", "\n");
        let (system, user) = match source.split_once("\n---\n") {
            Some((s, u)) => (s.trim().to_owned(), u.trim().to_owned()),
            None => (String::new(), source.trim().to_owned()),
        };
        if !user.contains("{passage}") {
            return Err(Error::Config(format!("prompt template '{id}' lacks a {{passage}} placeholder")));
        }
        Ok(Self { id, system, user })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(id, &src)
    }

    pub fn builtin(kind: QueryKind) -> Self {
        let (id, src) = match kind {
            QueryKind::Sm => ("sm_v1", include_str!("../../prompts/sm_v1.txt")),
            QueryKind::Kw => ("kw_v1", include_str!("../../prompts/kw_v1.txt")),
        };
        Self::parse(id, src).expect("builtin prompt is valid")
    }

    /// Resolves a builtin id (`sm_v1`, `kw_v1`) or else a file path.
    pub fn resolve(spec: &str) -> Result<Self> {
        match spec {
            "sm_v1" => Ok(Self::builtin(QueryKind::Sm)),
            "kw_v1" => Ok(Self::builtin(QueryKind::Kw)),
            path => Self::load(Path::new(path)),
        }
    }

    pub fn render(&self, passage: &str, max: usize) -> (String, String) {
        let max = max.to_string();
        let fill = |s: &str| {
            // single pass so passage text containing "{max}" stays literal
            let mut out = String::with_capacity(s.len() + passage.len());
            let mut rest = s;
            while let Some(pos) = rest.find('{') {
                out.push_str(&rest[..pos]);
                let tail = &rest[pos..];
                if let Some(t) = tail.strip_prefix("{passage}") {
                    out.push_str(passage);
                    rest = t;
                } else if let Some(t) = tail.strip_prefix("{max}") {
                    out.push_str(&max);
                    rest = t;
                } else {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
            out.push_str(rest);
            out
        };
        (fill(&self.system), fill(&self.user))
    }
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub kinds: Vec<QueryKind>,
    pub model: String,
    pub temperature: f32,
    pub max_per_kind: usize,
    pub sm_template: PromptTemplate,
    pub kw_template: PromptTemplate,
    /// Upper bound on in-flight LLM calls.
    pub concurrency: usize,
    pub leakage_threshold: f64,
    /// Extra attempts after a reply that does not parse.
    pub parse_retries: u32,
}

impl GenConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            kinds: QueryKind::ALL.to_vec(),
            model: model.into(),
            temperature: 0.7,
            max_per_kind: 10,
            sm_template: PromptTemplate::builtin(QueryKind::Sm),
            kw_template: PromptTemplate::builtin(QueryKind::Kw),
            concurrency: 4,
            leakage_threshold: DEFAULT_LEAKAGE_THRESHOLD,
            parse_retries: 2,
        }
    }

    pub fn template(&self, kind: QueryKind) -> &PromptTemplate {
        match kind {
            QueryKind::Sm => &self.sm_template,
            QueryKind::Kw => &self.kw_template,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Config("no query kinds selected".into()));
        }
        if self.max_per_kind == 0 {
            return Err(Error::Config("max queries per kind must be at least 1".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        if !(self.leakage_threshold > 0.0 && self.leakage_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "leakage threshold must lie in (0, 1], got {}",
                self.leakage_threshold
            )));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config(format!("bad temperature {}", self.temperature)));
        }
        Ok(())
    }
}

fn list_item_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*(?:\d+\s*[.)、:：]|[-*•])\s*(.*?)\s*$").expect("static regex")
    })
}

/// Extracts the items of a numbered (or bulleted) list. Lines that are not
/// list items are ignored. Returns `None` when no item is found.
pub fn parse_numbered_list(reply: &str) -> Option<Vec<String>> {
    let mut items = Vec::new();
    for line in reply.lines() {
        let Some(caps) = list_item_re().captures(line) else { continue };
        let item = caps[1]
            .trim_matches(|c: char| matches!(c, '"' | '\'' | '“' | '”' | '「' | '」' | '`'))
            .trim();
        if !item.is_empty() {
            items.push(item.to_owned());
        }
    }
    (!items.is_empty()).then_some(items)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseFailure {
    pub passage_id: String,
    pub kind: QueryKind,
    pub attempts: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GenOutput {
    pub queries: Vec<GeneratedQuery>,
    /// (passage, kind) pairs whose replies never parsed.
    pub parse_failures: Vec<ParseFailure>,
    pub duplicates_dropped: usize,
    pub verbatim_dropped: usize,
}

fn request_list(
    client: &dyn LlmClient,
    cfg: &GenConfig,
    passage: &Passage,
    kind: QueryKind,
) -> Result<std::result::Result<Vec<String>, u32>> {
    let (system, user) = cfg.template(kind).render(&passage.text, cfg.max_per_kind);
    let req = LlmRequest::new(&cfg.model, &system, &user, cfg.temperature);
    let attempts = cfg.parse_retries + 1;
    for attempt in 1..=attempts {
        let reply = client.complete(&req)?;
        if let Some(items) = parse_numbered_list(&reply) {
            return Ok(Ok(items));
        }
        tracing::warn!(
            passage = %passage.id,
            kind = %kind,
            attempt,
            "LLM reply is not a numbered list"
        );
    }
    Ok(Err(attempts))
}

/// Generates queries for every passage and kind. Output order is passage
/// order, then kind order, then list order, whatever the completion order.
pub fn generate_queries(
    passages: &[Passage],
    cfg: &GenConfig,
    client: &dyn LlmClient,
) -> Result<GenOutput> {
    cfg.validate()?;
    let jobs: Vec<(&Passage, QueryKind)> = passages
        .iter()
        .flat_map(|p| cfg.kinds.iter().map(move |&k| (p, k)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let replies: Vec<Result<std::result::Result<Vec<String>, u32>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, k)| request_list(client, cfg, p, k))
            .collect()
    });

    let mut out = GenOutput::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (&(passage, kind), reply) in jobs.iter().zip(replies) {
        let items = match reply? {
            Ok(items) => items,
            Err(attempts) => {
                out.parse_failures.push(ParseFailure {
                    passage_id: passage.id.clone(),
                    kind,
                    attempts,
                });
                continue;
            }
        };
        let passage_norm = normalize_query(&passage.text);
        let mut taken = 0;
        for item in items {
            if taken == cfg.max_per_kind {
                break;
            }
            let norm = normalize_query(&item);
            if norm == passage_norm {
                out.verbatim_dropped += 1;
                continue;
            }
            if !seen.insert((passage.id.clone(), norm)) {
                out.duplicates_dropped += 1;
                continue;
            }
            out.queries.push(GeneratedQuery::new(passage.id.clone(), kind, item));
            taken += 1;
        }
    }
    if !out.parse_failures.is_empty() {
        tracing::warn!("{} passage/kind pairs skipped after unparseable replies", out.parse_failures.len());
    }
    Ok(out)
}

/// Random holdout stratified by kind. The holdout holds `round(fraction*N)`
/// queries; per-kind quotas follow the largest-remainder rule. Both halves
/// keep input order.
pub fn split_holdout(
    queries: &[GeneratedQuery],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<GeneratedQuery>, Vec<GeneratedQuery>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("holdout fraction must lie in (0, 1), got {fraction}")));
    }
    let mut by_kind: BTreeMap<QueryKind, Vec<usize>> = BTreeMap::new();
    for (i, q) in queries.iter().enumerate() {
        by_kind.entry(q.kind).or_default().push(i);
    }
    let total = (fraction * queries.len() as f64).round() as usize;
    let mut quotas: Vec<(QueryKind, usize, f64)> = by_kind
        .iter()
        .map(|(&k, idx)| {
            let exact = fraction * idx.len() as f64;
            (k, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        quotas[i].1 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = vec![false; queries.len()];
    for (kind, quota, _) in quotas {
        let idx = &by_kind[&kind];
        for j in rand::seq::index::sample(&mut rng, idx.len(), quota.min(idx.len())) {
            held[idx[j]] = true;
        }
    }
    let (mut train, mut holdout) = (Vec::new(), Vec::new());
    for (q, h) in queries.iter().zip(held) {
        if h {
            holdout.push(q.clone());
        } else {
            train.push(q.clone());
        }
    }
    Ok((train, holdout))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub query: String,
    pub positives: Vec<String>,
    #[serde(default)]
    pub negatives: Vec<String>,
}

impl TrainingExample {
    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::InvalidRecord(format!("query '{}' has no positives", self.query)));
        }
        if self.query.trim().is_empty() {
            return Err(Error::InvalidRecord("empty training query".into()));
        }
        if self.positives.contains(&self.query) {
            return Err(Error::InvalidRecord(format!(
                "query '{}' equals its positive passage",
                self.query
            )));
        }
        Ok(())
    }
}

/// Pairs each query with its source passage text, in query order.
pub fn training_examples(
    queries: &[GeneratedQuery],
    passages: &[Passage],
) -> Result<Vec<TrainingExample>> {
    let by_id: HashMap<&str, &str> = passages.iter().map(|p| (p.id.as_str(), p.text.as_str())).collect();
    queries
        .iter()
        .map(|q| {
            let text = by_id.get(q.passage_id.as_str()).ok_or_else(|| Error::DanglingId {
                kind: "passage",
                id: q.passage_id.clone(),
            })?;
            let ex = TrainingExample {
                query: q.text.clone(),
                positives: vec![(*text).to_owned()],
                negatives: Vec::new(),
            };
            ex.validate()?;
            Ok(ex)
        })
        .collect()
}

pub fn write_training(examples: &[TrainingExample], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for ex in examples {
        let line = serde_json::to_string(ex).map_err(|e| Error::InvalidRecord(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the training export and returns the record count.
pub fn export_training(queries: &[GeneratedQuery], passages: &[Passage], path: &Path) -> Result<usize> {
    let examples = training_examples(queries, passages)?;
    write_training(&examples, path)?;
    Ok(examples.len())
}

pub fn read_training(path: &Path) -> Result<Vec<TrainingExample>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            let ex: TrainingExample =
                serde_json::from_str(&line).map_err(|e| Error::parse(path, n, e.to_string()))?;
            ex.validate().map_err(|e| Error::parse(path, n, e.to_string()))?;
            Ok(ex)
        })
        .collect()
}

pub fn write_generated(queries: &[GeneratedQuery], path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for q in queries {
        let line = serde_json::to_string(q).map_err(|e| Error::InvalidRecord(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_generated(path: &Path) -> Result<Vec<GeneratedQuery>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            let q: GeneratedQuery =
                serde_json::from_str(&line).map_err(|e| Error::parse(path, n, e.to_string()))?;
            if q.text.trim().is_empty() {
                return Err(Error::parse(path, n, "empty query text"));
            }
            Ok(q)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindStats {
    pub kind: QueryKind,
    pub queries: usize,
    pub queries_per_passage: f64,
    pub tokens_per_query: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenStats {
    pub passages: usize,
    pub rows: Vec<KindStats>,
}

impl fmt::Display for GenStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<6}{:>10}{:>12}{:>12}", "kind", "queries", "q/passage", "tok/query")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<6}{:>10}{:>12.2}{:>12.2}",
                r.kind.as_str(),
                r.queries,
                r.queries_per_passage,
                r.tokens_per_query
            )?;
        }
        write!(f, "passages: {}", self.passages)
    }
}

/// Per kind present in `queries`: queries per passage (over all of
/// `passages`) and mean tokens per query.
pub fn gen_stats(queries: &[GeneratedQuery], passages: &[Passage], tokenizer: &dyn Tokenize) -> GenStats {
    let mut acc: BTreeMap<QueryKind, (usize, usize)> = BTreeMap::new();
    for q in queries {
        let e = acc.entry(q.kind).or_default();
        e.0 += 1;
        e.1 += tokenizer.tokenize(&q.text).len();
    }
    let n = passages.len();
    let rows = acc
        .into_iter()
        .map(|(kind, (count, tokens))| KindStats {
            kind,
            queries: count,
            queries_per_passage: if n == 0 { 0.0 } else { count as f64 / n as f64 },
            tokens_per_query: tokens as f64 / count as f64,
        })
        .collect();
    GenStats { passages: n, rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexical::UnigramTokenizer;
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<HashMap<String, Vec<String>>>,
        calls: Mutex<usize>,
    }

    impl Scripted {
        fn new(entries: &[(&str, &[&str])]) -> Self {
            let replies = entries
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().rev().map(|s| s.to_string()).collect()))
                .collect();
            Self {
                replies: Mutex::new(replies),
                calls: Mutex::new(0),
            }
        }
    }

    impl LlmClient for Scripted {
        fn complete(&self, req: &LlmRequest) -> Result<String> {
            *self.calls.lock().unwrap() += 1;
            let user = &req.messages[1].content;
            let mut map = self.replies.lock().unwrap();
            let key = map
                .keys()
                .find(|k| user.contains(k.as_str()))
                .cloned()
                .ok_or_else(|| Error::Transport("no script".into()))?;
            let queue = map.get_mut(&key).unwrap();
            Ok(if queue.len() > 1 { queue.pop().unwrap() } else { queue[0].clone() })
        }
    }

    #[test]
    fn parses_numbered_and_bulleted_lists() {
        let reply = "Here you go:\n1. Bill\n2) Electricity fee\n3、 \"Utility payment screenshot\"\n- extra\n\n";
        assert_eq!(
            parse_numbered_list(reply).unwrap(),
            vec!["Bill", "Electricity fee", "Utility payment screenshot", "extra"]
        );
        assert_eq!(parse_numbered_list("no list here"), None);
        assert_eq!(parse_numbered_list("1. \n2.   "), None);
    }

    #[test]
    fn template_rendering_is_single_pass() {
        let t = PromptTemplate::parse("t", "sys {max}\n---\nP: {passage} M: {max} {other}").unwrap();
        let (s, u) = t.render("text with {max}", 3);
        assert_eq!(s, "sys 3");
        assert_eq!(u, "P: text with {max} M: 3 {other}");
        assert!(PromptTemplate::parse("bad", "no placeholder").is_err());
        for k in QueryKind::ALL {
            assert!(PromptTemplate::builtin(k).user.contains("{passage}"));
        }
    }

    #[test]
    fn generation_dedups_and_keeps_order() {
        let passages = vec![
            Passage::new("p1", "电费账单截图"),
            Passage::new("p2", "一只猫"),
        ];
        let client = Scripted::new(&[
            ("电费账单截图", &["1. Bill\n2. bill\n3. Electricity  fee\n4. 电费账单截图"]),
            ("一只猫", &["1. 猫\n2. 宠物"]),
        ]);
        let mut cfg = GenConfig::new("m");
        cfg.kinds = vec![QueryKind::Kw];
        let out = generate_queries(&passages, &cfg, &client).unwrap();
        let texts: Vec<_> = out.queries.iter().map(|q| (q.passage_id.as_str(), q.text.as_str())).collect();
        assert_eq!(
            texts,
            vec![("p1", "Bill"), ("p1", "Electricity  fee"), ("p2", "猫"), ("p2", "宠物")]
        );
        assert_eq!(out.duplicates_dropped, 1);
        assert_eq!(out.verbatim_dropped, 1);
    }

    #[test]
    fn unparseable_reply_is_retried_then_skipped() {
        let passages = vec![Passage::new("p1", "alpha"), Passage::new("p2", "beta")];
        let client = Scripted::new(&[("alpha", &["sorry", "1. a"]), ("beta", &["nope"])]);
        let mut cfg = GenConfig::new("m");
        cfg.kinds = vec![QueryKind::Sm];
        cfg.parse_retries = 1;
        let out = generate_queries(&passages, &cfg, &client).unwrap();
        assert_eq!(out.queries, vec![GeneratedQuery::new("p1", QueryKind::Sm, "a")]);
        assert_eq!(out.parse_failures.len(), 1);
        assert_eq!(out.parse_failures[0].passage_id, "p2");
        assert_eq!(*client.calls.lock().unwrap(), 4);
    }

    #[test]
    fn transport_errors_propagate() {
        let client = Scripted::new(&[]);
        let cfg = GenConfig::new("m");
        let err = generate_queries(&[Passage::new("p", "x")], &cfg, &client).unwrap_err();
        assert!(matches!(err, Error::Transport(_)));
        assert!(generate_queries(&[], &cfg, &client).unwrap().queries.is_empty());
    }

    #[test]
    fn max_per_kind_caps_output() {
        let client = Scripted::new(&[("x", &["1. a\n2. b\n3. c"])]);
        let mut cfg = GenConfig::new("m");
        cfg.kinds = vec![QueryKind::Kw];
        cfg.max_per_kind = 2;
        let out = generate_queries(&[Passage::new("p", "x")], &cfg, &client).unwrap();
        assert_eq!(out.queries.len(), 2);
    }

    fn synthetic(n_sm: usize, n_kw: usize) -> Vec<GeneratedQuery> {
        (0..n_sm)
            .map(|i| GeneratedQuery::new(format!("p{i}"), QueryKind::Sm, format!("s{i}")))
            .chain((0..n_kw).map(|i| GeneratedQuery::new(format!("p{i}"), QueryKind::Kw, format!("k{i}"))))
            .collect()
    }

    #[test]
    fn holdout_sizes_and_stratification() {
        let qs = synthetic(333, 667);
        let (train, hold) = split_holdout(&qs, 0.05, 7).unwrap();
        assert_eq!(hold.len(), 50);
        assert_eq!(train.len() + hold.len(), 1000);
        let sm = hold.iter().filter(|q| q.kind == QueryKind::Sm).count() as f64;
        assert!((sm - 0.05 * 333.0).abs() <= 1.0);
        let again = split_holdout(&qs, 0.05, 7).unwrap();
        assert_eq!(again.1, hold);
        assert!(split_holdout(&qs, 1.0, 7).is_err());
        assert!(split_holdout(&qs, 0.0, 7).is_err());
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        let passages = vec![Passage::new("p1", "账单")];
        let qs = vec![GeneratedQuery::new("p1", QueryKind::Kw, "Bill")];
        assert_eq!(export_training(&qs, &passages, &path).unwrap(), 1);
        let back = read_training(&path).unwrap();
        assert_eq!(back, training_examples(&qs, &passages).unwrap());
        assert_eq!(back[0].positives, vec!["账单"]);

        let dangling = vec![GeneratedQuery::new("zz", QueryKind::Kw, "Bill")];
        assert!(matches!(
            export_training(&dangling, &passages, &path),
            Err(Error::DanglingId { .. })
        ));
        let verbatim = vec![GeneratedQuery::new("p1", QueryKind::Kw, "账单")];
        assert!(export_training(&verbatim, &passages, &path).is_err());
    }

    #[test]
    fn stats_single_passage() {
        let passages = vec![Passage::new("p", "x")];
        let qs = vec![
            GeneratedQuery::new("p", QueryKind::Kw, "a b"),
            GeneratedQuery::new("p", QueryKind::Kw, "c"),
            GeneratedQuery::new("p", QueryKind::Kw, "d e f"),
        ];
        let s = gen_stats(&qs, &passages, &UnigramTokenizer);
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].queries_per_passage, 3.0);
        assert_eq!(s.rows[0].tokens_per_query, 2.0);
    }
}
