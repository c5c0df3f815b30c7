//! Graded nDCG@k, macro aggregation, per-type breakdowns and run
//! comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CoarseType, Dataset, QrelsRow, QueryType};
use crate::error::{Error, Result};
use crate::retrieval::{RankedList, Run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `g(r) = r`
    #[default]
    Linear,
    /// `g(r) = 2^r - 1`
    Exponential,
}

impl Gain {
    pub fn apply(self, grade: u8) -> f64 {
        match self {
            Gain::Linear => f64::from(grade),
            Gain::Exponential => f64::from((1u32 << grade) - 1),
        }
    }
}

impl FromStr for Gain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Gain::Linear),
            "exponential" | "exp" => Ok(Gain::Exponential),
            _ => Err(format!("unknown gain `{s}` (linear | exponential)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub cutoffs: Vec<usize>,
    pub gain: Gain,
    /// Absolute nDCG difference (on the 0..1 scale) under which two runs
    /// count as similar for a query.
    pub tie_band: f64,
    pub by_type: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            cutoffs: vec![1, 5, 10],
            gain: Gain::Linear,
            tie_band: 0.01,
            by_type: false,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cutoffs.is_empty() {
            return Err(Error::Config("at least one cutoff is required".into()));
        }
        if self.cutoffs[0] == 0 || self.cutoffs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "cutoffs must be positive and strictly increasing, got {:?}",
                self.cutoffs
            )));
        }
        if !(self.tie_band >= 0.0) {
            return Err(Error::Config(format!("tie band must be >= 0, got {}", self.tie_band)));
        }
        Ok(())
    }
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// nDCG@k of a ranking given as passage ids, best first.
pub fn ndcg_ids<'a>(
    query_id: &str,
    ranked: impl IntoIterator<Item = &'a str>,
    qrels: &QrelsRow,
    k: usize,
    gain: Gain,
) -> Result<f64> {
    let mut ideal: Vec<u8> = qrels.values().map(|g| g.value()).filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return Err(Error::UndefinedMetric(query_id.to_owned()));
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.apply(g) / discount(i + 1))
        .sum();
    let dcg: f64 = ranked
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, pid)| {
            let g = qrels.get(pid).map_or(0, |g| g.value());
            gain.apply(g) / discount(i + 1)
        })
        .sum();
    Ok(dcg / idcg)
}

/// `DCG@k / IDCG@k`. Fails for queries without positives.
pub fn ndcg_at_k(ranked: &RankedList, qrels: &QrelsRow, k: usize, gain: Gain) -> Result<f64> {
    ndcg_ids(&ranked.query_id, ranked.ids(), qrels, k, gain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_name: String,
    pub cutoffs: Vec<usize>,
    pub gain: Gain,
    /// nDCG (0..1) per cutoff for each evaluated query.
    pub per_query: BTreeMap<String, Vec<f64>>,
    /// Macro mean x 100 per cutoff.
    pub aggregate: Vec<f64>,
    /// Zero-positive queries left out of every mean.
    pub excluded: Vec<String>,
    pub by_type: Option<BTreeMap<QueryType, Vec<f64>>>,
}

impl MetricReport {
    pub fn cutoff_index(&self, k: usize) -> Result<usize> {
        self.cutoffs
            .iter()
            .position(|&c| c == k)
            .ok_or_else(|| Error::Config(format!("cutoff {k} not in report cutoffs {:?}", self.cutoffs)))
    }

    /// One JSON object per line: a `query` record per evaluated query, then
    /// an `aggregate` record.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for (qid, scores) in &self.per_query {
            let rec = serde_json::json!({
                "record": "query",
                "run": self.run_name,
                "query_id": qid,
                "ndcg": self.cutoffs.iter().zip(scores).map(|(k, s)| (format!("@{k}"), *s)).collect::<BTreeMap<_, _>>(),
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        let agg = serde_json::json!({
            "record": "aggregate",
            "run": self.run_name,
            "gain": self.gain,
            "queries": self.per_query.len(),
            "excluded": self.excluded.len(),
            "ndcg": self.cutoffs.iter().zip(&self.aggregate).map(|(k, s)| (format!("@{k}"), *s)).collect::<BTreeMap<_, _>>(),
        });
        out.push_str(&agg.to_string());
        out.push('\n');
        out
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut n, mut sum) = (0usize, 0.0);
    for x in xs {
        n += 1;
        sum += x;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl fmt::Display for MetricReport {
    /// Table with one row for the run.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<24}", "run")?;
        for k in &self.cutoffs {
            write!(f, " {:>9}", format!("nDCG@{k}"))?;
        }
        writeln!(f)?;
        write!(f, "{:<24}", self.run_name)?;
        for s in &self.aggregate {
            write!(f, " {:>9.2}", s)?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "({} queries evaluated, {} zero-positive excluded, {:?} gain)",
            self.per_query.len(),
            self.excluded.len(),
            self.gain
        )
    }
}

/// Scores every query with at least one positive; zero-positive queries are
/// listed in `excluded`.
pub fn evaluate_run(run: &Run, d: &Dataset, cfg: &MetricConfig) -> Result<MetricReport> {
    cfg.validate()?;
    let excluded = d.zero_positive_queries();
    let mut missing: Vec<String> = Vec::new();
    let mut per_query = BTreeMap::new();
    for q in d.queries() {
        let row = d.labels().row(&q.id);
        if row.is_empty() {
            continue;
        }
        let Some(list) = run.get(&q.id) else {
            missing.push(q.id.clone());
            continue;
        };
        let scores = cfg
            .cutoffs
            .iter()
            .map(|&k| ndcg_at_k(list, row, k, cfg.gain))
            .collect::<Result<Vec<_>>>()?;
        per_query.insert(q.id.clone(), scores);
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::Coverage(missing));
    }
    let aggregate = (0..cfg.cutoffs.len())
        .map(|i| 100.0 * mean(per_query.values().map(|s: &Vec<f64>| s[i])))
        .collect();
    let by_type = cfg.by_type.then(|| {
        let mut groups: BTreeMap<QueryType, Vec<&Vec<f64>>> = BTreeMap::new();
        for (qid, scores) in &per_query {
            let t = d.query(qid).expect("evaluated query exists").qtype;
            groups.entry(t).or_default().push(scores);
        }
        groups
            .into_iter()
            .map(|(t, rows)| {
                let means = (0..cfg.cutoffs.len())
                    .map(|i| 100.0 * mean(rows.iter().map(|s| s[i])))
                    .collect();
                (t, means)
            })
            .collect()
    });
    Ok(MetricReport {
        run_name: run.name.clone(),
        cutoffs: cfg.cutoffs.clone(),
        gain: cfg.gain,
        per_query,
        aggregate,
        excluded,
        by_type,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Fine8,
    Coarse5,
}

impl FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fine8" | "fine" => Ok(Grouping::Fine8),
            "coarse5" | "coarse" => Ok(Grouping::Coarse5),
            _ => Err(format!("unknown grouping `{s}` (fine8 | coarse5)")),
        }
    }
}

fn group_label(t: QueryType, grouping: Grouping) -> (usize, &'static str) {
    match grouping {
        Grouping::Fine8 => (t as usize, t.as_str()),
        Grouping::Coarse5 => {
            let c = t.coarse();
            (c as usize, c.as_str())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub group: String,
    pub queries: usize,
    /// Mean nDCG x 100.
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeTable {
    pub cutoff: usize,
    pub rows: Vec<TypeRow>,
}

impl fmt::Display for TypeTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>7} {:>9}", "type", "queries", format!("nDCG@{}", self.cutoff))?;
        for r in &self.rows {
            writeln!(f, "{:<20} {:>7} {:>9.2}", r.group, r.queries, r.ndcg)?;
        }
        Ok(())
    }
}

/// Mean nDCG@`cutoff` per query-type group. Groups without evaluated
/// queries are omitted.
pub fn by_type_report(report: &MetricReport, d: &Dataset, grouping: Grouping, cutoff: usize) -> Result<TypeTable> {
    let idx = report.cutoff_index(cutoff)?;
    let mut groups: BTreeMap<usize, (&'static str, Vec<f64>)> = BTreeMap::new();
    for (qid, scores) in &report.per_query {
        let q = d
            .query(qid)
            .ok_or_else(|| Error::QuerySetMismatch(format!("query `{qid}` not in dataset")))?;
        let (order, label) = group_label(q.qtype, grouping);
        groups.entry(order).or_insert((label, Vec::new())).1.push(scores[idx]);
    }
    Ok(TypeTable {
        cutoff,
        rows: groups
            .into_values()
            .map(|(label, xs)| TypeRow {
                group: label.to_owned(),
                queries: xs.len(),
                ndcg: 100.0 * mean(xs.iter().copied()),
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub group: String,
    pub queries: usize,
    /// Mean nDCG x 100 of run A.
    pub ndcg_a: f64,
    pub ndcg_b: f64,
    /// Fraction of queries where A exceeds B by more than the tie band.
    pub greater: f64,
    pub less: f64,
    pub similar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub run_a: String,
    pub run_b: String,
    pub cutoff: usize,
    pub tie_band: f64,
    pub rows: Vec<CompareRow>,
    pub overall: CompareRow,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "A = {}, B = {}, nDCG@{}, similar when |A-B| <= {}",
            self.run_a, self.run_b, self.cutoff, self.tie_band
        )?;
        writeln!(
            f,
            "{:<20} {:>7} {:>9} {:>9} {:>6} {:>6} {:>6}",
            "type", "queries", "A", "B", "A>B", "A<B", "A=B"
        )?;
        let pct = |x: f64| format!("{:.0}%", 100.0 * x);
        for r in self.rows.iter().chain(std::iter::once(&self.overall)) {
            writeln!(
                f,
                "{:<20} {:>7} {:>9.2} {:>9.2} {:>6} {:>6} {:>6}",
                r.group,
                r.queries,
                r.ndcg_a,
                r.ndcg_b,
                pct(r.greater),
                pct(r.less),
                pct(r.similar)
            )?;
        }
        Ok(())
    }
}

fn compare_row(group: &str, pairs: &[(f64, f64)], tie_band: f64) -> CompareRow {
    let n = pairs.len();
    let (mut gt, mut lt, mut eq) = (0usize, 0usize, 0usize);
    for &(a, b) in pairs {
        if (a - b).abs() <= tie_band {
            eq += 1;
        } else if a > b {
            gt += 1;
        } else {
            lt += 1;
        }
    }
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    CompareRow {
        group: group.to_owned(),
        queries: n,
        ndcg_a: 100.0 * mean(pairs.iter().map(|p| p.0)),
        ndcg_b: 100.0 * mean(pairs.iter().map(|p| p.1)),
        greater: frac(gt),
        less: frac(lt),
        similar: frac(eq),
    }
}

/// Per-query comparison of two reports at one cutoff, grouped by coarse
/// query type.
pub fn compare_runs(
    a: &MetricReport,
    b: &MetricReport,
    d: &Dataset,
    tie_band: f64,
    cutoff: usize,
) -> Result<Comparison> {
    if !(tie_band >= 0.0) {
        return Err(Error::Config(format!("tie band must be >= 0, got {tie_band}")));
    }
    let ia = a.cutoff_index(cutoff)?;
    let ib = b.cutoff_index(cutoff)?;
    if a.per_query.len() != b.per_query.len() || a.per_query.keys().any(|q| !b.per_query.contains_key(q)) {
        let only_a: Vec<_> = a.per_query.keys().filter(|q| !b.per_query.contains_key(*q)).cloned().collect();
        let only_b: Vec<_> = b.per_query.keys().filter(|q| !a.per_query.contains_key(*q)).cloned().collect();
        return Err(Error::QuerySetMismatch(format!(
            "only in A: [{}]; only in B: [{}]",
            only_a.join(", "),
            only_b.join(", ")
        )));
    }
    let mut groups: BTreeMap<CoarseType, Vec<(f64, f64)>> = BTreeMap::new();
    let mut all = Vec::with_capacity(a.per_query.len());
    for (qid, sa) in &a.per_query {
        let pair = (sa[ia], b.per_query[qid][ib]);
        let q = d
            .query(qid)
            .ok_or_else(|| Error::QuerySetMismatch(format!("query `{qid}` not in dataset")))?;
        groups.entry(q.qtype.coarse()).or_default().push(pair);
        all.push(pair);
    }
    Ok(Comparison {
        run_a: a.run_name.clone(),
        run_b: b.run_name.clone(),
        cutoff,
        tie_band,
        rows: groups
            .iter()
            .map(|(t, pairs)| compare_row(t.as_str(), pairs, tie_band))
            .collect(),
        overall: compare_row("All", &all, tie_band),
    })
}
