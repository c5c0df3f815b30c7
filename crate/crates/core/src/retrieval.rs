//! Exact top-k retrieval over unit-norm embeddings, and runs.
//!
//! Ranked lists are ordered by descending score with ties broken by
//! ascending passage id, so results never depend on input order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_lines, Dataset};
use crate::embedding::{open_provider, EmbedRole, EmbeddingProvider, EmbeddingVector, ProviderConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub passage_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn new(query_id: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            entries: Vec::new(),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.passage_id.as_str())
    }

    /// 1-based rank of a passage, if present.
    pub fn rank_of(&self, passage_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.passage_id == passage_id)
            .map(|i| i + 1)
    }

    pub fn truncated(&self, k: usize) -> &[RankedEntry] {
        &self.entries[..self.entries.len().min(k)]
    }
}

/// Descending score, then ascending id. `-0.0` and `0.0` tie.
pub fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    // adding +0.0 maps -0.0 to +0.0, which total_cmp would otherwise order apart
    (b_score + 0.0).total_cmp(&(a_score + 0.0)).then_with(|| a_id.cmp(b_id))
}

struct Candidate<'a> {
    score: f64,
    id: &'a str,
}

// Heap order: the greatest element is the worst-ranked candidate.
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(self.score, self.id, other.score, other.id)
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

/// Bounded selection of the `k` best `(id, score)` pairs in one pass.
pub struct TopK<'a> {
    k: usize,
    heap: BinaryHeap<Candidate<'a>>,
}

impl<'a> TopK<'a> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.saturating_add(1).min(1 << 16)),
        }
    }

    pub fn push(&mut self, id: &'a str, score: f64) {
        if self.k == 0 {
            return;
        }
        let cand = Candidate { score: score + 0.0, id };
        if self.heap.len() < self.k {
            self.heap.push(cand);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if cand < *worst {
                *worst = cand;
            }
        }
    }

    pub fn into_ranked_list(self, query_id: &str) -> RankedList {
        RankedList {
            query_id: query_id.to_owned(),
            entries: self
                .heap
                .into_sorted_vec()
                .into_iter()
                .map(|c| RankedEntry {
                    passage_id: c.id.to_owned(),
                    score: c.score,
                })
                .collect(),
        }
    }
}

/// Row-major matrix of unit-norm passage vectors.
#[derive(Debug, Clone)]
pub struct PassageMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl PassageMatrix {
    pub fn new(vectors: Vec<EmbeddingVector>) -> Result<Self> {
        let dim = vectors.first().map_or(0, EmbeddingVector::dim);
        let mut ids = Vec::with_capacity(vectors.len());
        let mut data = Vec::with_capacity(vectors.len() * dim);
        for v in vectors {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    actual: v.dim(),
                    expected: dim,
                    id: v.id,
                });
            }
            if !v.is_unit() {
                return Err(Error::InvalidRecord(format!(
                    "passage vector `{}` is not unit-norm (norm {})",
                    v.id,
                    v.norm()
                )));
            }
            data.extend_from_slice(&v.values);
            ids.push(v.id);
        }
        Ok(Self { ids, dim, data })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim.max(1)))
    }
}

/// Sequential `f32` dot product.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact top-k by dot product (cosine under unit norm).
pub fn search_topk(query: &EmbeddingVector, passages: &PassageMatrix, k: usize) -> Result<RankedList> {
    if !passages.is_empty() && query.dim() != passages.dim() {
        return Err(Error::DimensionMismatch {
            id: query.id.clone(),
            expected: passages.dim(),
            actual: query.dim(),
        });
    }
    let mut top = TopK::new(k);
    for (id, row) in passages.rows() {
        top.push(id, f64::from(dot(&query.values, row)));
    }
    Ok(top.into_ranked_list(&query.id))
}

/// Per-query ranked lists plus free-form provenance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Run {
    pub name: String,
    pub lists: BTreeMap<String, RankedList>,
    pub metadata: BTreeMap<String, String>,
}

impl Run {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn insert(&mut self, list: RankedList) {
        self.lists.insert(list.query_id.clone(), list);
    }

    pub fn get(&self, query_id: &str) -> Option<&RankedList> {
        self.lists.get(query_id)
    }

    /// Adds an empty list for each dataset query the run lacks. The
    /// six-column format cannot represent queries without results.
    pub fn fill_missing(&mut self, d: &Dataset) -> Vec<String> {
        let mut added = Vec::new();
        for q in d.queries() {
            if !self.lists.contains_key(&q.id) {
                self.insert(RankedList::new(q.id.clone()));
                added.push(q.id.clone());
            }
        }
        added
    }

    /// Writes `query_id Q0 passage_id rank score run_name` lines, queries in
    /// ascending id order, scores with six decimals.
    pub fn write_trec(&self, w: &mut impl Write) -> std::io::Result<()> {
        for list in self.lists.values() {
            for (i, e) in list.entries.iter().enumerate() {
                writeln!(
                    w,
                    "{} Q0 {} {} {:.6} {}",
                    list.query_id,
                    e.passage_id,
                    i + 1,
                    e.score,
                    self.name
                )?;
            }
        }
        Ok(())
    }

    /// Fails if any id or the run name cannot be written as a run field.
    pub fn check_fields(&self) -> Result<()> {
        for token in std::iter::once(self.name.as_str())
            .chain(self.lists.values().flat_map(|l| std::iter::once(l.query_id.as_str()).chain(l.ids())))
        {
            if token.is_empty() || token.contains(char::is_whitespace) {
                return Err(Error::InvalidRecord(format!(
                    "`{token}` cannot be written as a run field (empty or contains whitespace)"
                )));
            }
        }
        Ok(())
    }

    pub fn save_trec(&self, path: &Path) -> Result<()> {
        self.check_fields()?;
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        self.write_trec(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Reads a six-column run. Lines of each query are ordered by their rank
    /// column.
    pub fn load_trec(path: &Path) -> Result<Self> {
        let mut rows: BTreeMap<String, Vec<(usize, RankedEntry)>> = BTreeMap::new();
        let mut name: Option<String> = None;
        for (n, line) in read_lines(path)? {
            let f: Vec<&str> = line.split_whitespace().collect();
            let [qid, _, pid, rank, score, tag] = f[..] else {
                return Err(Error::parse(path, n, "expected six whitespace-separated columns"));
            };
            let rank: usize = rank
                .parse()
                .map_err(|_| Error::parse(path, n, format!("bad rank `{rank}`")))?;
            let score: f64 = score
                .parse()
                .map_err(|_| Error::parse(path, n, format!("bad score `{score}`")))?;
            match &name {
                None => name = Some(tag.to_owned()),
                Some(existing) if existing != tag => {
                    return Err(Error::parse(path, n, format!("run name `{tag}` differs from `{existing}`")));
                }
                _ => {}
            }
            rows.entry(qid.to_owned()).or_default().push((
                rank,
                RankedEntry {
                    passage_id: pid.to_owned(),
                    score,
                },
            ));
        }
        let mut run = Run::new(name.unwrap_or_default());
        for (qid, mut entries) in rows {
            entries.sort_by_key(|(rank, _)| *rank);
            let mut seen = HashSet::new();
            for (_, e) in &entries {
                if !seen.insert(e.passage_id.as_str()) {
                    return Err(Error::InvalidRecord(format!(
                        "passage `{}` listed twice for query `{qid}`",
                        e.passage_id
                    )));
                }
            }
            run.insert(RankedList {
                query_id: qid,
                entries: entries.into_iter().map(|(_, e)| e).collect(),
            });
        }
        Ok(run)
    }
}

/// Embeds every passage and query once with `provider` and searches all
/// queries in parallel, zero-positive ones included.
pub fn run_with_provider(
    d: &Dataset,
    provider: &dyn EmbeddingProvider,
    k: usize,
    name: &str,
) -> Result<Run> {
    let passages: Vec<(String, String)> = d
        .passages()
        .iter()
        .map(|p| (p.id.clone(), p.text.clone()))
        .collect();
    let queries: Vec<(String, String)> = d
        .queries()
        .iter()
        .map(|q| (q.id.clone(), q.text.clone()))
        .collect();
    let matrix = PassageMatrix::new(provider.embed(&passages, EmbedRole::Passage)?)?;
    let query_vecs = provider.embed(&queries, EmbedRole::Query)?;
    let lists = query_vecs
        .par_iter()
        .map(|q| search_topk(q, &matrix, k))
        .collect::<Result<Vec<_>>>()?;
    let mut run = Run::new(name);
    for l in lists {
        run.insert(l);
    }
    run.metadata.insert("k".into(), k.to_string());
    run.metadata.insert("passages".into(), matrix.len().to_string());
    run.metadata.insert("dim".into(), matrix.dim().to_string());
    Ok(run)
}

pub fn run_all(d: &Dataset, cfg: &ProviderConfig, k: usize) -> Result<Run> {
    let provider = open_provider(cfg)?;
    let name = cfg.model.replace(char::is_whitespace, "_");
    let mut run = run_with_provider(d, provider.as_ref(), k, &name)?;
    run.metadata.insert("model".into(), cfg.model.clone());
    if let Some(i) = &cfg.instruction {
        run.metadata.insert("instruction".into(), i.clone());
        run.metadata.insert("template".into(), cfg.template.as_str().to_owned());
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_zero_scores_tie_by_id() {
        assert_eq!(rank_order(-0.0, "a", 0.0, "b"), Ordering::Less);
        assert_eq!(rank_order(0.0, "b", -0.0, "a"), Ordering::Greater);
        let mut top = TopK::new(2);
        top.push("b", 0.0);
        top.push("a", -0.0);
        top.push("c", 0.0);
        let list = top.into_ranked_list("q");
        assert_eq!(list.ids().collect::<Vec<_>>(), ["a", "b"]);
        assert!(list.entries[0].score.is_sign_positive());
    }

    fn ev(id: &str, v: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(id, v.to_vec()).normalized().unwrap()
    }

    #[test]
    fn identical_vector_ranks_first_with_unit_score() {
        let m = PassageMatrix::new(vec![ev("a", &[1.0, 0.0, 0.0]), ev("b", &[0.6, 0.8, 0.0]), ev("c", &[0.0, 0.0, 1.0])]).unwrap();
        let list = search_topk(&ev("q", &[0.6, 0.8, 0.0]), &m, 3).unwrap();
        assert_eq!(list.entries[0].passage_id, "b");
        assert!((list.entries[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_query_orders_by_id() {
        let m = PassageMatrix::new(vec![ev("c", &[1.0, 0.0, 0.0]), ev("a", &[0.0, 1.0, 0.0]), ev("b", &[0.0, 1.0, 0.0])]).unwrap();
        let list = search_topk(&ev("q", &[0.0, 0.0, 1.0]), &m, 10).unwrap();
        assert_eq!(list.ids().collect::<Vec<_>>(), ["a", "b", "c"]);
        assert!(list.entries.iter().all(|e| e.score == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = PassageMatrix::new(vec![ev("a", &[1.0, 0.0])]).unwrap();
        assert!(matches!(search_topk(&ev("q", &[1.0, 0.0, 0.0]), &m, 1), Err(Error::DimensionMismatch { .. })));
        assert!(PassageMatrix::new(vec![ev("a", &[1.0, 0.0]), ev("b", &[1.0])]).is_err());
        assert!(PassageMatrix::new(vec![EmbeddingVector::new("a", vec![2.0, 0.0])]).is_err());
    }

    #[test]
    fn k_bounds_list_length() {
        let m = PassageMatrix::new(vec![ev("a", &[1.0, 0.0]), ev("b", &[0.0, 1.0])]).unwrap();
        assert_eq!(search_topk(&ev("q", &[1.0, 1.0]), &m, 1).unwrap().entries.len(), 1);
        assert!(search_topk(&ev("q", &[1.0, 1.0]), &m, 0).unwrap().entries.is_empty());
    }

    #[test]
    fn trec_round_trip() {
        let mut run = Run::new("bge");
        run.insert(RankedList {
            query_id: "q2".into(),
            entries: vec![
                RankedEntry { passage_id: "p1".into(), score: 0.5 },
                RankedEntry { passage_id: "p0".into(), score: 0.25 },
            ],
        });
        run.insert(RankedList {
            query_id: "q1".into(),
            entries: vec![RankedEntry { passage_id: "p3".into(), score: 1.0 }],
        });
        let mut buf = Vec::new();
        run.write_trec(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "q1 Q0 p3 1 1.000000 bge\nq2 Q0 p1 1 0.500000 bge\nq2 Q0 p0 2 0.250000 bge\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.txt");
        run.save_trec(&path).unwrap();
        assert_eq!(Run::load_trec(&path).unwrap(), run);
    }

    #[test]
    fn trec_reader_orders_by_rank_and_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.txt");
        std::fs::write(&path, "q Q0 b 2 0.1 r\nq Q0 a 1 0.2 r\n").unwrap();
        let run = Run::load_trec(&path).unwrap();
        assert_eq!(run.get("q").unwrap().ids().collect::<Vec<_>>(), ["a", "b"]);
        std::fs::write(&path, "q Q0 a 1 0.2 r\nq Q0 a 2 0.1 r\n").unwrap();
        assert!(Run::load_trec(&path).is_err());
        std::fs::write(&path, "q Q0 a 1 0.2\n").unwrap();
        assert!(matches!(Run::load_trec(&path), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn whitespace_ids_cannot_be_written() {
        let mut run = Run::new("r");
        run.insert(RankedList {
            query_id: "q 1".into(),
            entries: vec![RankedEntry { passage_id: "p".into(), score: 1.0 }],
        });
        let dir = tempfile::tempdir().unwrap();
        assert!(run.save_trec(&dir.path().join("r.txt")).is_err());
    }
}
