//! Error worksheets: relevant passages a run missed, split into literal and
//! semantic misses, and irrelevant passages it ranked above relevant ones.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Query, QueryType, RelevanceGrade};
use crate::error::{Error, Result};
use crate::lexical::{Bm25Index, Tokenize};
use crate::retrieval::Run;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCategory {
    LiteralMiss,
    SemanticMiss,
    FalsePositive,
}

impl FromStr for ErrorCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "literalmiss" | "literal" => Ok(ErrorCategory::LiteralMiss),
            "semanticmiss" | "semantic" => Ok(ErrorCategory::SemanticMiss),
            "falsepositive" | "fp" => Ok(ErrorCategory::FalsePositive),
            _ => Err(format!("unknown error category `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub query_id: String,
    pub query_type: QueryType,
    pub passage_id: String,
    pub grade: RelevanceGrade,
    /// 1-based rank in the run, if the passage appears at all.
    pub rank_in_run: Option<usize>,
    pub score: Option<f64>,
    pub category: ErrorCategory,
    /// Query tokens found verbatim among the passage tokens.
    pub evidence: Vec<String>,
}

/// How a missed relevant passage is judged literal.
pub enum LiteralCriterion<'a> {
    /// Query tokens occurring among the passage tokens: all of them when
    /// `min_tokens` is `None`, otherwise at least that many.
    Containment {
        tokenizer: &'a dyn Tokenize,
        min_tokens: Option<usize>,
    },
    /// BM25 over the corpus ranks the passage within its top `k`.
    Bm25 {
        index: &'a Bm25Index,
        tokenizer: &'a dyn Tokenize,
        k: usize,
    },
}

impl LiteralCriterion<'_> {
    fn tokenizer(&self) -> &dyn Tokenize {
        match self {
            LiteralCriterion::Containment { tokenizer, .. } | LiteralCriterion::Bm25 { tokenizer, .. } => *tokenizer,
        }
    }
}

fn unique_tokens(tokenizer: &dyn Tokenize, text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    tokenizer
        .tokenize(text)
        .into_iter()
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

fn query_misses(
    run: &Run,
    d: &Dataset,
    q: &Query,
    k: usize,
    criterion: &LiteralCriterion<'_>,
) -> Vec<ErrorRecord> {
    let row = d.labels().row(&q.id);
    if row.is_empty() {
        return Vec::new();
    }
    let list = run.get(&q.id);
    let top: HashSet<&str> = list
        .map(|l| l.truncated(k).iter().map(|e| e.passage_id.as_str()).collect())
        .unwrap_or_default();
    let mut missed: Vec<(&String, RelevanceGrade)> = row
        .iter()
        .filter(|(p, _)| !top.contains(p.as_str()))
        .map(|(p, g)| (p, *g))
        .collect();
    if missed.is_empty() {
        return Vec::new();
    }
    missed.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let tokenizer = criterion.tokenizer();
    let query_tokens = unique_tokens(tokenizer, &q.text);
    let bm25_top: Option<HashSet<String>> = match criterion {
        LiteralCriterion::Bm25 { index, k, .. } => Some(
            index
                .search_tokens(&q.id, &tokenizer.tokenize(&q.text), *k)
                .entries
                .into_iter()
                .map(|e| e.passage_id)
                .collect(),
        ),
        LiteralCriterion::Containment { .. } => None,
    };

    missed
        .into_iter()
        .map(|(pid, grade)| {
            let text = &d.passage(pid).expect("labels reference known passages").text;
            let passage_tokens: HashSet<String> = tokenizer.tokenize(text).into_iter().collect();
            let evidence: Vec<String> = query_tokens
                .iter()
                .filter(|t| passage_tokens.contains(*t))
                .cloned()
                .collect();
            let literal = match (criterion, &bm25_top) {
                (LiteralCriterion::Containment { min_tokens, .. }, _) => match min_tokens {
                    None => !query_tokens.is_empty() && evidence.len() == query_tokens.len(),
                    Some(n) => evidence.len() >= (*n).max(1),
                },
                (LiteralCriterion::Bm25 { .. }, Some(top)) => top.contains(pid),
                (LiteralCriterion::Bm25 { .. }, None) => unreachable!(),
            };
            let (rank, score) = list
                .and_then(|l| l.rank_of(pid).map(|r| (Some(r), Some(l.entries[r - 1].score))))
                .unwrap_or((None, None));
            ErrorRecord {
                query_id: q.id.clone(),
                query_type: q.qtype,
                passage_id: pid.clone(),
                grade,
                rank_in_run: rank,
                score,
                category: if literal {
                    ErrorCategory::LiteralMiss
                } else {
                    ErrorCategory::SemanticMiss
                },
                evidence,
            }
        })
        .collect()
}

/// Every passage of grade >= 1 outside the run's top `k`, classified as a
/// literal or semantic miss. Ordered by query id, then grade descending,
/// then passage id.
pub fn false_negatives(run: &Run, d: &Dataset, k: usize, criterion: &LiteralCriterion<'_>) -> Vec<ErrorRecord> {
    let mut queries: Vec<&Query> = d.queries().iter().collect();
    queries.sort_by(|a, b| a.id.cmp(&b.id));
    queries
        .par_iter()
        .flat_map_iter(|q| query_misses(run, d, q, k, criterion))
        .collect()
}

/// Grade-0 passages in the top `k` that rank above at least one relevant
/// passage (retrieved lower or not at all). Ordered by query id, then rank.
pub fn false_positives(run: &Run, d: &Dataset, k: usize) -> Vec<ErrorRecord> {
    let mut queries: Vec<&Query> = d.queries().iter().collect();
    queries.sort_by(|a, b| a.id.cmp(&b.id));
    queries
        .par_iter()
        .flat_map_iter(|q| {
            let positives = d.labels().positives(&q.id);
            let mut out = Vec::new();
            let Some(list) = run.get(&q.id) else {
                return out;
            };
            let mut seen_positive = 0;
            for (i, e) in list.truncated(k).iter().enumerate() {
                let grade = d.grade(&q.id, &e.passage_id);
                if grade.is_positive() {
                    seen_positive += 1;
                } else if seen_positive < positives {
                    out.push(ErrorRecord {
                        query_id: q.id.clone(),
                        query_type: q.qtype,
                        passage_id: e.passage_id.clone(),
                        grade,
                        rank_in_run: Some(i + 1),
                        score: Some(e.score),
                        category: ErrorCategory::FalsePositive,
                        evidence: Vec::new(),
                    });
                }
            }
            out
        })
        .collect()
}

/// Writes records as JSON lines, with passage and query text attached for
/// manual review.
pub fn write_worksheet(records: &[ErrorRecord], d: &Dataset, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        let mut v = serde_json::to_value(r).map_err(|e| Error::InvalidRecord(e.to_string()))?;
        v["query_text"] = d.query(&r.query_id).map(|q| q.text.clone()).into();
        v["passage_text"] = d.passage(&r.passage_id).map(|p| p.text.clone()).into();
        writeln!(w, "{v}").map_err(io)?;
    }
    w.flush().map_err(io)
}
