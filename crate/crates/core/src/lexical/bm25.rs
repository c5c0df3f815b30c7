use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Passage;
use crate::error::{Error, Result};
use crate::lexical::Tokenize;
use crate::retrieval::{RankedList, TopK};

/// How inverse document frequency is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub enum IdfMode {
    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, always positive.
    #[default]
    Positive,
    /// `ln((N - df + 0.5) / (df + 0.5))`, where negative values are replaced
    /// by `epsilon` times the mean idf over the vocabulary.
    ClassicEps { epsilon: f64 },
}


impl IdfMode {
    pub const CLASSIC_EPSILON: f64 = 0.25;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
    pub idf: IdfMode,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: 1.5,
            b: 0.75,
            idf: IdfMode::Positive,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::Config(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("b must lie in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Okapi BM25 inverted index. Immutable once built.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_index: HashMap<String, u32>,
    doc_len: Vec<u32>,
    avgdl: f64,
    postings: HashMap<String, Vec<Posting>>,
    idf: HashMap<String, f64>,
}

impl Bm25Index {
    pub fn build(passages: &[Passage], tokenizer: &dyn Tokenize, params: Bm25Params) -> Result<Self> {
        Self::from_tokens(
            passages
                .iter()
                .map(|p| (p.id.clone(), tokenizer.tokenize(&p.text))),
            params,
        )
    }

    pub fn from_tokens<I>(docs: I, params: Bm25Params) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<String>)>,
    {
        params.validate()?;
        let mut doc_ids = Vec::new();
        let mut doc_index = HashMap::new();
        let mut doc_len = Vec::new();
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut total: u64 = 0;

        for (id, tokens) in docs {
            let doc = u32::try_from(doc_ids.len()).expect("more than u32::MAX documents");
            if doc_index.insert(id.clone(), doc).is_some() {
                return Err(Error::DuplicateId { kind: "document", id });
            }
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens.iter() {
                *tf.entry(t.clone()).or_insert(0) += 1;
            }
            for (term, n) in tf {
                postings.entry(term).or_default().push(Posting { doc, tf: n });
            }
            doc_len.push(tokens.len() as u32);
            total += tokens.len() as u64;
            doc_ids.push(id);
        }

        let n = doc_ids.len();
        let avgdl = if n == 0 { 0.0 } else { total as f64 / n as f64 };
        let idf = compute_idf(&postings, n, params.idf);
        Ok(Self {
            params,
            doc_ids,
            doc_index,
            doc_len,
            avgdl,
            postings,
            idf,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<u32> {
        self.doc_index.get(doc_id).map(|&d| self.doc_len[d as usize])
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// Zero for terms outside the vocabulary.
    pub fn idf(&self, term: &str) -> f64 {
        self.idf.get(term).copied().unwrap_or(0.0)
    }

    fn term_weight(&self, idf: f64, tf: u32, dl: u32) -> f64 {
        let Bm25Params { k1, b, .. } = self.params;
        let tf = f64::from(tf);
        let norm = 1.0 - b + b * f64::from(dl) / self.avgdl;
        idf * (tf * (k1 + 1.0)) / (tf + k1 * norm)
    }

    /// BM25 score of one document. Repeated query tokens contribute once per
    /// occurrence.
    pub fn score(&self, query_tokens: &[String], doc_id: &str) -> Result<f64> {
        let &doc = self
            .doc_index
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_owned()))?;
        let dl = self.doc_len[doc as usize];
        let mut score = 0.0;
        for t in query_tokens {
            let Some(list) = self.postings.get(t) else {
                continue;
            };
            if let Ok(i) = list.binary_search_by_key(&doc, |p| p.doc) {
                score += self.term_weight(self.idf[t], list[i].tf, dl);
            }
        }
        Ok(score)
    }

    /// Term-at-a-time scoring of every document sharing a token with the
    /// query. Documents scoring 0 are omitted.
    pub fn score_all(&self, query_tokens: &[String]) -> Vec<(u32, f64)> {
        let mut acc = vec![0.0f64; self.doc_ids.len()];
        let mut seen = vec![false; self.doc_ids.len()];
        let mut touched = Vec::new();
        for t in query_tokens {
            let Some(list) = self.postings.get(t) else {
                continue;
            };
            let idf = self.idf[t];
            for p in list {
                let d = p.doc as usize;
                if !seen[d] {
                    seen[d] = true;
                    touched.push(p.doc);
                }
                acc[d] += self.term_weight(idf, p.tf, self.doc_len[d]);
            }
        }
        touched.sort_unstable();
        touched
            .into_iter()
            .map(|d| (d, acc[d as usize]))
            .filter(|&(_, s)| s > 0.0)
            .collect()
    }

    pub fn search_tokens(&self, query_id: &str, query_tokens: &[String], k: usize) -> RankedList {
        let mut top = TopK::new(k);
        for (doc, score) in self.score_all(query_tokens) {
            top.push(&self.doc_ids[doc as usize], score);
        }
        top.into_ranked_list(query_id)
    }
}

fn compute_idf(postings: &HashMap<String, Vec<Posting>>, n: usize, mode: IdfMode) -> HashMap<String, f64> {
    let n = n as f64;
    let raw = |df: usize| (n - df as f64 + 0.5) / (df as f64 + 0.5);
    match mode {
        IdfMode::Positive => postings
            .iter()
            .map(|(t, list)| (t.clone(), raw(list.len()).ln_1p()))
            .collect(),
        IdfMode::ClassicEps { epsilon } => {
            let mut idf: HashMap<String, f64> = postings
                .iter()
                .map(|(t, list)| (t.clone(), raw(list.len()).ln()))
                .collect();
            if idf.is_empty() {
                return idf;
            }
            // summed in term order so the floor is reproducible
            let mut terms: Vec<(&String, &f64)> = idf.iter().collect();
            terms.sort_unstable_by(|a, b| a.0.cmp(b.0));
            let mean = terms.iter().map(|(_, v)| **v).sum::<f64>() / idf.len() as f64;
            let floor = epsilon * mean;
            for v in idf.values_mut() {
                if *v < 0.0 {
                    *v = floor;
                }
            }
            idf
        }
    }
}

/// Builds an index over passages with the given tokenizer.
pub fn build_index(passages: &[Passage], tokenizer: &dyn Tokenize, k1: f64, b: f64) -> Result<Bm25Index> {
    Bm25Index::build(
        passages,
        tokenizer,
        Bm25Params {
            k1,
            b,
            idf: IdfMode::Positive,
        },
    )
}

pub fn bm25_score(index: &Bm25Index, query_tokens: &[String], doc_id: &str) -> Result<f64> {
    index.score(query_tokens, doc_id)
}

/// Top-k documents by descending score, ties by ascending id; zero-score
/// documents are never returned.
pub fn bm25_search(
    index: &Bm25Index,
    query_id: &str,
    query: &str,
    tokenizer: &dyn Tokenize,
    k: usize,
) -> RankedList {
    index.search_tokens(query_id, &tokenizer.tokenize(query), k)
}
