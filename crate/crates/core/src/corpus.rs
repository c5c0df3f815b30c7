//! Fully annotated graded-relevance datasets.
//!
//! A dataset is a pool of passages, a set of typed queries and a complete
//! query x passage grade matrix. On disk only nonzero grades are listed; any
//! pair that is not listed has grade 0.
//!
//! Two on-disk layouts are supported:
//!
//! * three tab-separated files, one record per line:
//!   `id \t text` (passages), `id \t text \t qtype` (queries) and
//!   `query_id \t passage_id \t grade` (labels);
//! * a single JSON-lines file whose objects carry a `record` tag of
//!   `passage`, `query` or `label` (see [`JsonRecord`]).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexical::Tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub text: String,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// The closed vocabulary of query types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryType {
    SingletonPerson,
    SingletonPlace,
    SingletonObject,
    SingletonConcept,
    SingletonEvent,
    Conjunction,
    SimpleCondition,
    ComplexCondition,
}

impl QueryType {
    pub const ALL: [QueryType; 8] = [
        QueryType::SingletonPerson,
        QueryType::SingletonPlace,
        QueryType::SingletonObject,
        QueryType::SingletonConcept,
        QueryType::SingletonEvent,
        QueryType::Conjunction,
        QueryType::SimpleCondition,
        QueryType::ComplexCondition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryType::SingletonPerson => "SingletonPerson",
            QueryType::SingletonPlace => "SingletonPlace",
            QueryType::SingletonObject => "SingletonObject",
            QueryType::SingletonConcept => "SingletonConcept",
            QueryType::SingletonEvent => "SingletonEvent",
            QueryType::Conjunction => "Conjunction",
            QueryType::SimpleCondition => "SimpleCondition",
            QueryType::ComplexCondition => "ComplexCondition",
        }
    }

    /// Person, place, object and concept queries together form the
    /// singleton-entity group.
    pub fn is_singleton_entity(self) -> bool {
        matches!(
            self,
            QueryType::SingletonPerson
                | QueryType::SingletonPlace
                | QueryType::SingletonObject
                | QueryType::SingletonConcept
        )
    }

    pub fn coarse(self) -> CoarseType {
        match self {
            t if t.is_singleton_entity() => CoarseType::SingletonEntity,
            QueryType::SingletonEvent => CoarseType::SingletonEvent,
            QueryType::Conjunction => CoarseType::Conjunction,
            QueryType::SimpleCondition => CoarseType::SimpleCondition,
            _ => CoarseType::ComplexCondition,
        }
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryType {
    type Err = String;

    /// Case-insensitive; `_`, `-`, `.` and spaces are ignored, and the
    /// `Singleton` prefix and `Cond`/`Condition` suffix may be abbreviated.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | ' ' | '.'))
            .flat_map(char::to_lowercase)
            .collect();
        let key = key.strip_prefix("singleton").unwrap_or(&key);
        let t = match key {
            "person" => QueryType::SingletonPerson,
            "place" => QueryType::SingletonPlace,
            "object" => QueryType::SingletonObject,
            "concept" => QueryType::SingletonConcept,
            "event" => QueryType::SingletonEvent,
            "conjunction" => QueryType::Conjunction,
            "simplecondition" | "simplecond" => QueryType::SimpleCondition,
            "complexcondition" | "complexcond" => QueryType::ComplexCondition,
            _ => return Err(format!("unknown query type `{s}`")),
        };
        Ok(t)
    }
}

/// Five-way grouping where the four singleton-entity types are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoarseType {
    SingletonEntity,
    SingletonEvent,
    Conjunction,
    SimpleCondition,
    ComplexCondition,
}

impl CoarseType {
    pub const ALL: [CoarseType; 5] = [
        CoarseType::SingletonEntity,
        CoarseType::SingletonEvent,
        CoarseType::Conjunction,
        CoarseType::SimpleCondition,
        CoarseType::ComplexCondition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CoarseType::SingletonEntity => "SingletonEntity",
            CoarseType::SingletonEvent => "SingletonEvent",
            CoarseType::Conjunction => "Conjunction",
            CoarseType::SimpleCondition => "SimpleCondition",
            CoarseType::ComplexCondition => "ComplexCondition",
        }
    }
}

impl fmt::Display for CoarseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub qtype: QueryType,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>, qtype: QueryType) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            qtype,
        }
    }
}

/// No, weak or strong relevance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(u8)]
pub enum RelevanceGrade {
    #[default]
    Irrelevant = 0,
    Weak = 1,
    Strong = 2,
}

impl RelevanceGrade {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn is_positive(self) -> bool {
        self != RelevanceGrade::Irrelevant
    }
}

impl TryFrom<u8> for RelevanceGrade {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(RelevanceGrade::Irrelevant),
            1 => Ok(RelevanceGrade::Weak),
            2 => Ok(RelevanceGrade::Strong),
            _ => Err(format!("grade {v} outside {{0, 1, 2}}")),
        }
    }
}

impl FromStr for RelevanceGrade {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v: u8 = s
            .trim()
            .parse()
            .map_err(|_| format!("grade `{s}` is not an integer"))?;
        RelevanceGrade::try_from(v)
    }
}

impl Serialize for RelevanceGrade {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.value())
    }
}

impl<'de> Deserialize<'de> for RelevanceGrade {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        RelevanceGrade::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// Nonzero grades of a single query, keyed by passage id.
pub type QrelsRow = HashMap<String, RelevanceGrade>;

/// Total grade lookup over the query x passage cross product. Only nonzero
/// grades are stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: HashMap<String, QrelsRow>,
}

static EMPTY_ROW: std::sync::OnceLock<QrelsRow> = std::sync::OnceLock::new();

impl LabelMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets a grade. Grade 0 removes any stored entry.
    pub fn set(&mut self, query_id: &str, passage_id: &str, grade: RelevanceGrade) {
        if grade.is_positive() {
            self.rows
                .entry(query_id.to_owned())
                .or_default()
                .insert(passage_id.to_owned(), grade);
        } else if let Some(row) = self.rows.get_mut(query_id) {
            row.remove(passage_id);
            if row.is_empty() {
                self.rows.remove(query_id);
            }
        }
    }

    pub fn grade(&self, query_id: &str, passage_id: &str) -> RelevanceGrade {
        self.rows
            .get(query_id)
            .and_then(|row| row.get(passage_id))
            .copied()
            .unwrap_or_default()
    }

    /// Nonzero grades of one query; empty for unknown or zero-positive queries.
    pub fn row(&self, query_id: &str) -> &QrelsRow {
        self.rows
            .get(query_id)
            .unwrap_or_else(|| EMPTY_ROW.get_or_init(HashMap::new))
    }

    pub fn positives(&self, query_id: &str) -> usize {
        self.row(query_id).len()
    }

    pub fn positive_count(&self) -> usize {
        self.rows.values().map(HashMap::len).sum()
    }

    /// `(query_id, passage_id, grade)` for every stored nonzero entry, in
    /// arbitrary order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, RelevanceGrade)> {
        self.rows.iter().flat_map(|(q, row)| {
            row.iter()
                .map(move |(p, g)| (q.as_str(), p.as_str(), *g))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    passages: Vec<Passage>,
    queries: Vec<Query>,
    labels: LabelMatrix,
    passage_index: HashMap<String, usize>,
    query_index: HashMap<String, usize>,
}

impl Dataset {
    /// Validates ids, texts and label references.
    pub fn new(
        name: impl Into<String>,
        passages: Vec<Passage>,
        queries: Vec<Query>,
        labels: LabelMatrix,
    ) -> Result<Self> {
        let mut passage_index = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            if p.id.is_empty() {
                return Err(Error::InvalidRecord(format!("passage #{i} has an empty id")));
            }
            if p.text.is_empty() {
                return Err(Error::InvalidRecord(format!("passage `{}` has empty text", p.id)));
            }
            if passage_index.insert(p.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "passage",
                    id: p.id.clone(),
                });
            }
        }
        let mut query_index = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if q.id.is_empty() {
                return Err(Error::InvalidRecord(format!("query #{i} has an empty id")));
            }
            if q.text.is_empty() {
                return Err(Error::InvalidRecord(format!("query `{}` has empty text", q.id)));
            }
            if query_index.insert(q.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "query",
                    id: q.id.clone(),
                });
            }
        }
        for (q, p, _) in labels.iter() {
            if !query_index.contains_key(q) {
                return Err(Error::DanglingId {
                    kind: "query",
                    id: q.to_owned(),
                });
            }
            if !passage_index.contains_key(p) {
                return Err(Error::DanglingId {
                    kind: "passage",
                    id: p.to_owned(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            passages,
            queries,
            labels,
            passage_index,
            query_index,
        })
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn labels(&self) -> &LabelMatrix {
        &self.labels
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.passage_index.get(id).map(|&i| &self.passages[i])
    }

    pub fn query(&self, id: &str) -> Option<&Query> {
        self.query_index.get(id).map(|&i| &self.queries[i])
    }

    pub fn grade(&self, query_id: &str, passage_id: &str) -> RelevanceGrade {
        self.labels.grade(query_id, passage_id)
    }

    pub fn positive_count(&self) -> usize {
        self.labels.positive_count()
    }

    /// Ids of queries with no passage of grade >= 1, ascending.
    pub fn zero_positive_queries(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .queries
            .iter()
            .filter(|q| self.labels.positives(&q.id) == 0)
            .map(|q| q.id.clone())
            .collect();
        ids.sort();
        ids
    }

    /// Writes the three tab-separated files. Labels are written in query
    /// order, then passage order.
    pub fn save_tsv(&self, passages: &Path, queries: &Path, labels: &Path) -> Result<()> {
        write_lines(passages, self.passages.iter().map(|p| {
            check_field(&p.id)?;
            check_field(&p.text)?;
            Ok(format!("{}\t{}", p.id, p.text))
        }))?;
        write_lines(queries, self.queries.iter().map(|q| {
            check_field(&q.id)?;
            check_field(&q.text)?;
            Ok(format!("{}\t{}\t{}", q.id, q.text, q.qtype))
        }))?;
        write_lines(labels, self.sorted_labels().into_iter().map(|(q, p, g)| {
            Ok(format!("{q}\t{p}\t{}", g.value()))
        }))
    }

    /// Writes the single-file JSON-lines layout.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let passages = self.passages.iter().map(|p| JsonRecord::Passage {
            id: p.id.clone(),
            text: p.text.clone(),
        });
        let queries = self.queries.iter().map(|q| JsonRecord::Query {
            id: q.id.clone(),
            text: q.text.clone(),
            qtype: q.qtype.to_string(),
        });
        let labels = self
            .sorted_labels()
            .into_iter()
            .map(|(q, p, g)| JsonRecord::Label {
                query_id: q.to_owned(),
                passage_id: p.to_owned(),
                grade: g.value(),
            });
        write_lines(
            path,
            passages.chain(queries).chain(labels).map(|r| {
                serde_json::to_string(&r).map_err(|e| Error::InvalidRecord(e.to_string()))
            }),
        )
    }

    fn sorted_labels(&self) -> Vec<(&str, &str, RelevanceGrade)> {
        let mut out: Vec<_> = self.labels.iter().collect();
        out.sort_by_key(|(q, p, _)| (self.query_index[*q], self.passage_index[*p]));
        out
    }
}

/// One line of the single-file dataset layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum JsonRecord {
    Passage {
        id: String,
        text: String,
    },
    Query {
        id: String,
        text: String,
        qtype: String,
    },
    Label {
        query_id: String,
        passage_id: String,
        grade: u8,
    },
}

fn check_field(s: &str) -> Result<()> {
    if s.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidRecord(format!(
            "field {s:?} contains a tab or line break"
        )));
    }
    Ok(())
}

fn write_lines(path: &Path, lines: impl Iterator<Item = Result<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{}", line?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Iterates `(line_number, line)` over non-blank lines, stripping a leading
/// byte-order mark and trailing `\r`.
pub(crate) fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let mut line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 && line.starts_with('\u{feff}') {
            line.drain(..'\u{feff}'.len_utf8());
        }
        if line.ends_with('\r') {
            line.pop();
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, line));
    }
    Ok(out)
}

fn dataset_name(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned())
}

fn insert_label(
    labels: &mut LabelMatrix,
    seen: &mut HashSet<(String, String)>,
    query_id: &str,
    passage_id: &str,
    grade: RelevanceGrade,
) -> Result<()> {
    if !seen.insert((query_id.to_owned(), passage_id.to_owned())) {
        return Err(Error::DuplicateLabel {
            query_id: query_id.to_owned(),
            passage_id: passage_id.to_owned(),
        });
    }
    labels.set(query_id, passage_id, grade);
    Ok(())
}

/// Loads the three-file tab-separated layout. The dataset is named after the
/// directory holding the passages file.
pub fn load_dataset(passages_path: &Path, queries_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut passages = Vec::new();
    for (n, line) in read_lines(passages_path)? {
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(passages_path, n, "expected `id<TAB>text`"))?;
        passages.push(Passage::new(id, text));
    }

    let mut queries = Vec::new();
    for (n, line) in read_lines(queries_path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, text, qtype] = fields[..] else {
            return Err(Error::parse(queries_path, n, "expected `id<TAB>text<TAB>qtype`"));
        };
        let qtype = qtype
            .trim()
            .parse()
            .map_err(|e: String| Error::parse(queries_path, n, e))?;
        queries.push(Query::new(id, text, qtype));
    }

    let mut labels = LabelMatrix::new();
    let mut seen = HashSet::new();
    for (n, line) in read_lines(labels_path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        let [q, p, g] = fields[..] else {
            return Err(Error::parse(labels_path, n, "expected `query_id<TAB>passage_id<TAB>grade`"));
        };
        let grade = g.parse().map_err(|e: String| Error::parse(labels_path, n, e))?;
        insert_label(&mut labels, &mut seen, q, p, grade)?;
    }

    Dataset::new(dataset_name(passages_path), passages, queries, labels)
}

/// Loads the single-file JSON-lines layout. The dataset is named after the
/// file stem.
pub fn load_jsonl(path: &Path) -> Result<Dataset> {
    let mut passages = Vec::new();
    let mut queries = Vec::new();
    let mut labels = LabelMatrix::new();
    let mut seen = HashSet::new();
    for (n, line) in read_lines(path)? {
        let rec: JsonRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, n, e.to_string()))?;
        match rec {
            JsonRecord::Passage { id, text } => passages.push(Passage { id, text }),
            JsonRecord::Query { id, text, qtype } => {
                let qtype = qtype.parse().map_err(|e: String| Error::parse(path, n, e))?;
                queries.push(Query { id, text, qtype });
            }
            JsonRecord::Label {
                query_id,
                passage_id,
                grade,
            } => {
                let grade =
                    RelevanceGrade::try_from(grade).map_err(|e| Error::parse(path, n, e))?;
                insert_label(&mut labels, &mut seen, &query_id, &passage_id, grade)?;
            }
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned());
    Dataset::new(name, passages, queries, labels)
}

/// Reads a standalone `id \t text` passage file, such as a training pool.
pub fn load_passages(path: &Path) -> Result<Vec<Passage>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in read_lines(path)? {
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, n, "expected `id<TAB>text`"))?;
        if id.is_empty() || text.trim().is_empty() {
            return Err(Error::parse(path, n, "empty id or text"));
        }
        if !seen.insert(id.to_owned()) {
            return Err(Error::DuplicateId {
                kind: "passage",
                id: id.to_owned(),
            });
        }
        out.push(Passage::new(id, text));
    }
    Ok(out)
}

pub fn save_passages(passages: &[Passage], path: &Path) -> Result<()> {
    write_lines(path, passages.iter().map(|p| {
        check_field(&p.id)?;
        check_field(&p.text)?;
        Ok(format!("{}\t{}", p.id, p.text))
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenStats {
    pub records: usize,
    pub min: usize,
    pub max: usize,
    pub avg: f64,
}

impl TokenStats {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Self {
        let (mut records, mut min, mut max, mut sum) = (0usize, usize::MAX, 0usize, 0usize);
        for len in lengths {
            records += 1;
            min = min.min(len);
            max = max.max(len);
            sum += len;
        }
        if records == 0 {
            return Self {
                records,
                min: 0,
                max: 0,
                avg: 0.0,
            };
        }
        Self {
            records,
            min,
            max,
            avg: sum as f64 / records as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub passages: TokenStats,
    pub queries: TokenStats,
    pub positive_pairs: usize,
    pub strong_pairs: usize,
    pub weak_pairs: usize,
    pub zero_positive_queries: usize,
    /// Number of positives per query -> number of queries with that count.
    pub positives_histogram: BTreeMap<usize, usize>,
}

pub fn dataset_stats(d: &Dataset, tokenizer: &dyn Tokenize) -> StatsReport {
    let passages = TokenStats::from_lengths(d.passages().iter().map(|p| tokenizer.tokenize(&p.text).len()));
    let queries = TokenStats::from_lengths(d.queries().iter().map(|q| tokenizer.tokenize(&q.text).len()));
    let mut histogram = BTreeMap::new();
    for q in d.queries() {
        *histogram.entry(d.labels().positives(&q.id)).or_insert(0) += 1;
    }
    let strong_pairs = d
        .labels()
        .iter()
        .filter(|(_, _, g)| *g == RelevanceGrade::Strong)
        .count();
    let positive_pairs = d.positive_count();
    StatsReport {
        passages,
        queries,
        positive_pairs,
        strong_pairs,
        weak_pairs: positive_pairs - strong_pairs,
        zero_positive_queries: histogram.get(&0).copied().unwrap_or(0),
        positives_histogram: histogram,
    }
}

/// Ids of queries with no positive passage, ascending.
pub fn zero_positive_queries(d: &Dataset) -> Vec<String> {
    d.zero_positive_queries()
}
