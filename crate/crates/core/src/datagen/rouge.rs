use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Passage;
use crate::error::{Error, Result};
use crate::lexical::Tokenize;

/// Length of the longest common subsequence, in O(|a|*|b|) time and
/// O(min(|a|,|b|)) memory.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for x in long {
        for (j, y) in short.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Which ROUGE-L figure the leakage filter compares against the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeMeasure {
    #[default]
    F1,
    /// LCS / |reference|.
    Recall,
}

impl std::str::FromStr for RougeMeasure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" | "f" => Ok(Self::F1),
            "recall" | "r" => Ok(Self::Recall),
            _ => Err(Error::Config(format!("unknown ROUGE-L measure '{s}'"))),
        }
    }
}

impl RougeMeasure {
    fn score(self, lcs: usize, candidate_len: usize, reference_len: usize) -> f64 {
        if lcs == 0 {
            return 0.0;
        }
        let p = lcs as f64 / candidate_len as f64;
        let r = lcs as f64 / reference_len as f64;
        match self {
            Self::F1 => 2.0 * p * r / (p + r),
            Self::Recall => r,
        }
    }

    /// Best score reachable given only the two lengths.
    fn bound(self, candidate_len: usize, reference_len: usize) -> f64 {
        self.score(candidate_len.min(reference_len), candidate_len, reference_len)
    }
}

fn f1_from(lcs: usize, candidate_len: usize, reference_len: usize) -> f64 {
    RougeMeasure::F1.score(lcs, candidate_len, reference_len)
}

/// Character-level ROUGE-L F1. Precision is taken against `candidate`,
/// recall against `reference`. Zero when either side is empty.
pub fn rouge_l_f1(candidate: &str, reference: &str) -> f64 {
    let a: Vec<char> = candidate.chars().collect();
    let b: Vec<char> = reference.chars().collect();
    f1_from(lcs_len(&a, &b), a.len(), b.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedPassage {
    pub passage: Passage,
    /// Test passage whose similarity exceeded the threshold.
    pub test_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LeakageSplit {
    pub kept: Vec<Passage>,
    pub dropped: Vec<DroppedPassage>,
}

/// Leakage filter settings. Characters are the default unit; supplying a
/// tokenizer switches to token-level LCS.
#[derive(Clone, Copy, Default)]
pub struct LeakageConfig<'a> {
    pub threshold: f64,
    pub measure: RougeMeasure,
    pub tokenizer: Option<&'a dyn Tokenize>,
}

impl<'a> LeakageConfig<'a> {
    pub fn new(threshold: f64) -> Self {
        Self {
            threshold,
            measure: RougeMeasure::F1,
            tokenizer: None,
        }
    }
}

/// A score leaks when it exceeds the threshold, or when it is saturated
/// (1.0), so that a threshold of 1.0 still drops exact duplicates.
fn leaks(score: f64, threshold: f64) -> bool {
    score > threshold || score >= 1.0
}

/// Drops each training passage whose character-level ROUGE-L F1 against
/// some test passage exceeds `threshold`. Input order is preserved in both
/// halves.
pub fn filter_leakage(train: &[Passage], test: &[Passage], threshold: f64) -> Result<LeakageSplit> {
    filter_leakage_with(train, test, &LeakageConfig::new(threshold))
}

pub fn filter_leakage_with(
    train: &[Passage],
    test: &[Passage],
    cfg: &LeakageConfig<'_>,
) -> Result<LeakageSplit> {
    let threshold = cfg.threshold;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("leakage threshold must lie in (0, 1], got {threshold}")));
    }
    let units = |text: &str| -> Vec<String> {
        match cfg.tokenizer {
            Some(t) => t.tokenize(text),
            None => text.chars().map(String::from).collect(),
        }
    };
    let test_units: Vec<(&str, Vec<String>)> =
        test.iter().map(|p| (p.id.as_str(), units(&p.text))).collect();
    let verdicts: Vec<Option<(String, f64)>> = train
        .par_iter()
        .map(|p| {
            let a = units(&p.text);
            for (id, b) in &test_units {
                if !leaks(cfg.measure.bound(a.len(), b.len()), threshold) {
                    continue;
                }
                let score = cfg.measure.score(lcs_len(&a, b), a.len(), b.len());
                if leaks(score, threshold) {
                    return Some((id.to_string(), score));
                }
            }
            None
        })
        .collect();
    let mut out = LeakageSplit::default();
    for (p, v) in train.iter().zip(verdicts) {
        match v {
            Some((test_id, score)) => out.dropped.push(DroppedPassage {
                passage: p.clone(),
                test_id,
                score,
            }),
            None => out.kept.push(p.clone()),
        }
    }
    Ok(out)
}
