//! Acceptance checks, one PASS/FAIL line each.
//!
//! Self-contained checks always run. Checks that need the CapRetrieval
//! release read it from the environment:
//!
//! * `FGR_CAPRETRIEVAL_DIR`: dataset directory (`passages.tsv`,
//!   `queries.tsv`, `labels.tsv`, or `dataset.jsonl`);
//! * `FGR_CAPRETRIEVAL_VECTORS`: directory holding `passages.fgrvec` and
//!   `queries.fgrvec` produced by the 0.1B BGE baseline (query side with the
//!   image-search instruction), or else `FGR_EMBED_ENDPOINT` plus
//!   `FGR_EMBED_MODEL` to embed through a live service;
//! * `FGR_CAPRETRIEVAL_TOKENS`: directory holding `passages.tok.tsv` and
//!   `queries.tok.tsv` (`id<TAB>space-separated words`) from a Chinese word
//!   segmenter.
//!
//! A data-dependent check without its data prints FAIL with the reason. Only
//! failures of checks that could actually run make the process exit nonzero.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fgr_core::corpus::{
    load_dataset, load_jsonl, CoarseType, Dataset, LabelMatrix, Passage, QrelsRow, Query, QueryType, RelevanceGrade,
};
use fgr_core::datagen::{filter_leakage, rouge_l_f1};
use fgr_core::embedding::{
    open_provider, EmbeddingVector, FileProvider, ProviderConfig, ProviderKind, IMAGE_SEARCH_INSTRUCTION,
};
use fgr_core::lexical::{build_index, bm25_search, Bm25Index, Bm25Params, PretokenizedTokenizer, Tokenize, UnigramTokenizer};
use fgr_core::metrics::{
    by_type_report, compare_runs, evaluate_run, ndcg_ids, Gain, Grouping, MetricConfig, MetricReport,
};
use fgr_core::retrieval::{run_with_provider, search_topk, PassageMatrix, RankedList, Run};

const NDCG_TOL: f64 = 1e-9;
const ROUGE_TOL: f64 = 1e-12;
const BM25_TOL: f64 = 1e-9;
const ZERO_SHOT_TOL: f64 = 0.3;
const BM25_SEGMENTED_TOL: f64 = 1.0;
const BM25_UNIGRAM_TOL: f64 = 4.0;
const FRACTION_TOL: f64 = 0.05;

const ZERO_SHOT_TARGET: [f64; 3] = [81.30, 78.97, 78.86];
const BM25_TARGET: [f64; 3] = [74.40, 69.30, 66.54];
/// nDCG@10 of the embedding run and its >, <, = fractions against BM25.
const PER_TYPE_TARGET: [(CoarseType, f64, f64, f64, f64); 5] = [
    (CoarseType::SingletonEntity, 82.05, 0.28, 0.40, 0.32),
    (CoarseType::SingletonEvent, 73.21, 0.50, 0.25, 0.25),
    (CoarseType::Conjunction, 80.60, 0.38, 0.38, 0.25),
    (CoarseType::SimpleCondition, 73.80, 0.58, 0.20, 0.22),
    (CoarseType::ComplexCondition, 77.30, 0.73, 0.07, 0.20),
];

enum Verdict {
    Pass(String),
    Fail(String),
    /// The check could not run; counts as FAIL but not as a regression.
    Unavailable(String),
}

struct Line {
    name: &'static str,
    verdict: Verdict,
    elapsed: Duration,
    limit: Option<Duration>,
}

fn timed(name: &'static str, limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> Line {
    let start = Instant::now();
    let mut verdict = f();
    let elapsed = start.elapsed();
    if let (Some(l), Verdict::Pass(msg)) = (limit, &verdict) {
        if elapsed > l {
            verdict = Verdict::Fail(format!("{msg}; too slow"));
        }
    }
    Line {
        name,
        verdict,
        elapsed,
        limit,
    }
}

fn main() -> ExitCode {
    let data = CapData::from_env();
    let lines = vec![
        timed("metric-oracle-equivalence", Some(Duration::from_secs(5)), ndcg_oracle),
        timed("retrieval-exactness", Some(Duration::from_secs(30)), retrieval_exactness),
        timed("bm25-oracle-equivalence", Some(Duration::from_secs(10)), bm25_oracle),
        timed("zero-shot-reproduction", None, || zero_shot(&data)),
        timed("bm25-reproduction", None, || bm25_reproduction(&data)),
        timed("comparator", None, || comparator(&data)),
        timed("leakage-filter", None, leakage_filter),
        timed("dataset-integrity", None, || dataset_integrity(&data)),
    ];
    let mut regressions = 0;
    for l in &lines {
        let (tag, msg) = match &l.verdict {
            Verdict::Pass(m) => ("PASS", m.clone()),
            Verdict::Fail(m) => {
                regressions += 1;
                ("FAIL", m.clone())
            }
            Verdict::Unavailable(m) => ("FAIL", format!("not verifiable here: {m}")),
        };
        let limit = l.limit.map(|d| format!(" (limit {}s)", d.as_secs())).unwrap_or_default();
        println!(
            "{tag}  {:<26} {msg} [{:.2}s{limit}]",
            l.name,
            l.elapsed.as_secs_f64()
        );
    }
    if regressions > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

// ---------------------------------------------------------------- nDCG

fn oracle_ndcg(ranked: &[String], grades: &HashMap<String, u8>, k: usize, exponential: bool) -> Option<f64> {
    let gain = |g: u8| if exponential { (2f64).powi(i32::from(g)) - 1.0 } else { f64::from(g) };
    let mut dcg = 0.0;
    for (i, pid) in ranked.iter().enumerate() {
        if i >= k {
            break;
        }
        let g = grades.get(pid).copied().unwrap_or(0);
        dcg += gain(g) / ((i + 2) as f64).log2();
    }
    let mut all: Vec<u8> = grades.values().copied().collect();
    all.sort_unstable_by(|a, b| b.cmp(a));
    let mut idcg = 0.0;
    for (i, &g) in all.iter().enumerate() {
        if i >= k {
            break;
        }
        idcg += gain(g) / ((i + 2) as f64).log2();
    }
    if idcg == 0.0 {
        None
    } else {
        Some(dcg / idcg)
    }
}

fn ndcg_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut undefined = 0;
    for case in 0..500 {
        let n = rng.gen_range(1..=20);
        let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let mut grades = HashMap::new();
        let mut row = QrelsRow::new();
        for id in &ids {
            let g: u8 = rng.gen_range(0..=2);
            grades.insert(id.clone(), g);
            row.insert(id.clone(), RelevanceGrade::try_from(g).unwrap());
        }
        let mut ranked = ids.clone();
        ranked.shuffle(&mut rng);
        ranked.truncate(rng.gen_range(0..=n));
        if rng.gen_bool(0.2) {
            ranked.insert(rng.gen_range(0..=ranked.len()), "unlabelled".into());
        }
        let k = [1, 3, 5, 10, 20, 30][rng.gen_range(0..6)];
        for (gain, exp) in [(Gain::Linear, false), (Gain::Exponential, true)] {
            let got = ndcg_ids("q", ranked.iter().map(String::as_str), &row, k, gain);
            match (oracle_ndcg(&ranked, &grades, k, exp), got) {
                (Some(want), Ok(got)) => worst = worst.max((want - got).abs()),
                (None, Err(_)) => undefined += 1,
                (want, got) => {
                    return Verdict::Fail(format!("case {case}: oracle {want:?}, library {got:?}"));
                }
            }
        }
    }
    if worst <= NDCG_TOL {
        Verdict::Pass(format!(
            "500 instances x 2 gains, max |diff| {worst:.1e} <= {NDCG_TOL:e}; {undefined} zero-positive rows rejected as undefined"
        ))
    } else {
        Verdict::Fail(format!("max |diff| {worst:.3e} > {NDCG_TOL:e}"))
    }
}

// ---------------------------------------------------------------- dense retrieval

fn random_unit(rng: &mut ChaCha8Rng, id: String, dim: usize, coarse: bool) -> EmbeddingVector {
    loop {
        let values: Vec<f32> = (0..dim)
            .map(|_| {
                if coarse {
                    rng.gen_range(-1i8..=1) as f32
                } else {
                    rng.gen_range(-1.0f32..1.0)
                }
            })
            .collect();
        if let Ok(v) = EmbeddingVector::new(id.clone(), values).normalized() {
            return v;
        }
    }
}

fn oracle_topk(query: &[f32], passages: &[EmbeddingVector], k: usize) -> Vec<(String, f32)> {
    let mut scored: Vec<(String, f32)> = passages
        .iter()
        .map(|p| {
            let mut s = 0.0f32;
            for i in 0..query.len() {
                s += query[i] * p.values[i];
            }
            (p.id.clone(), s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

fn retrieval_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut queries = 0;
    let mut tied_boundaries = 0;
    for corpus in 0..200 {
        let n = if corpus % 10 == 0 { 2000 } else { rng.gen_range(1..=2000) };
        let dim = rng.gen_range(1..=64);
        // small ternary vectors produce many exact score ties
        let coarse = corpus % 3 == 0;
        let mut passages: Vec<EmbeddingVector> = Vec::with_capacity(n);
        for i in 0..n {
            let id = format!("d{}", rng.gen_range(0..1_000_000)) + &format!("_{i}");
            if i > 0 && rng.gen_bool(0.1) {
                let src = passages[rng.gen_range(0..i)].values.clone();
                passages.push(EmbeddingVector::new(id, src));
            } else {
                passages.push(random_unit(&mut rng, id, dim, coarse));
            }
        }
        let matrix = match PassageMatrix::new(passages.clone()) {
            Ok(m) => m,
            Err(e) => return Verdict::Fail(format!("corpus {corpus}: {e}")),
        };
        for qi in 0..3 {
            let q = if qi == 0 {
                EmbeddingVector::new("q", passages[rng.gen_range(0..n)].values.clone())
            } else {
                random_unit(&mut rng, "q".into(), dim, coarse)
            };
            let k = [1, 5, 10, 100, n, n + 7][rng.gen_range(0..6)];
            let want = oracle_topk(&q.values, &passages, k);
            let got = search_topk(&q, &matrix, k).expect("search");
            let got: Vec<(String, f64)> = got.entries.into_iter().map(|e| (e.passage_id, e.score)).collect();
            let want_f64: Vec<(String, f64)> = want.iter().map(|(i, s)| (i.clone(), f64::from(*s))).collect();
            if got != want_f64 {
                let first = got.iter().zip(&want_f64).position(|(a, b)| a != b);
                return Verdict::Fail(format!(
                    "corpus {corpus} (n={n}, d={dim}, k={k}): first difference at {first:?}: {:?} vs {:?}",
                    first.map(|i| &got[i]), first.map(|i| &want_f64[i])
                ));
            }
            if k < n && want.len() == k && oracle_topk(&q.values, &passages, k + 1)[k].1 == want[k - 1].1 {
                tied_boundaries += 1;
            }
            queries += 1;
        }
    }
    Verdict::Pass(format!(
        "200 corpora, {queries} queries identical to exhaustive sort incl. tie order ({tied_boundaries} with a tie across the cutoff)"
    ))
}

// ---------------------------------------------------------------- BM25

struct OracleBm25 {
    docs: Vec<(String, Vec<String>)>,
    k1: f64,
    b: f64,
}

impl OracleBm25 {
    fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.docs.iter().filter(|(_, t)| t.iter().any(|x| x == term)).count() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn search(&self, query: &[String], k: usize) -> Vec<(String, f64)> {
        let avgdl = self.docs.iter().map(|(_, t)| t.len()).sum::<usize>() as f64 / self.docs.len() as f64;
        let mut out = Vec::new();
        for (id, toks) in &self.docs {
            let dl = toks.len() as f64;
            let mut score = 0.0;
            for q in query {
                let tf = toks.iter().filter(|t| *t == q).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                score += self.idf(q) * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * dl / avgdl));
            }
            if score > 0.0 {
                out.push((id.clone(), score));
            }
        }
        out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        out.truncate(k);
        out
    }
}

/// Same scores within tolerance, and the same ids except for reorderings
/// inside groups of near-equal scores.
fn same_ranking(got: &RankedList, want: &[(String, f64)]) -> Result<(), String> {
    if got.entries.len() != want.len() {
        return Err(format!("length {} vs {}", got.entries.len(), want.len()));
    }
    let close = |a: f64, b: f64| (a - b).abs() <= BM25_TOL * a.abs().max(1.0);
    for (i, (e, (_, s))) in got.entries.iter().zip(want).enumerate() {
        if !close(e.score, *s) {
            return Err(format!("rank {}: score {} vs {}", i + 1, e.score, s));
        }
    }
    let mut i = 0;
    while i < want.len() {
        let mut j = i + 1;
        while j < want.len() && close(want[j].1, want[i].1) {
            j += 1;
        }
        let g: BTreeSet<&str> = got.entries[i..j].iter().map(|e| e.passage_id.as_str()).collect();
        let w: BTreeSet<&str> = want[i..j].iter().map(|(id, _)| id.as_str()).collect();
        let truncated_group = j == want.len();
        if g != w && !truncated_group {
            return Err(format!("ranks {}..{}: {g:?} vs {w:?}", i + 1, j));
        }
        i = j;
    }
    Ok(())
}

fn bm25_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let mut queries = 0;
    let mut terms_checked = 0;
    for corpus in 0..40 {
        let n = if corpus == 0 { 500 } else { rng.gen_range(1..=500) };
        let vocab = rng.gen_range(3..=150);
        let docs: Vec<(String, Vec<String>)> = (0..n)
            .map(|i| {
                let len = rng.gen_range(1..=30);
                let mut toks: Vec<String> = (0..len)
                    .map(|_| {
                        // skewed draw so some terms are very frequent
                        let r: f64 = rng.gen();
                        format!("w{}", ((r * r) * vocab as f64) as usize)
                    })
                    .collect();
                if corpus % 4 == 0 {
                    toks.push("common".into());
                }
                (format!("doc{i}"), toks)
            })
            .collect();
        let passages: Vec<Passage> = docs.iter().map(|(id, t)| Passage::new(id.clone(), t.join(" "))).collect();
        let index = match build_index(&passages, &UnigramTokenizer, 1.5, 0.75) {
            Ok(i) => i,
            Err(e) => return Verdict::Fail(format!("corpus {corpus}: {e}")),
        };
        for t in index.vocabulary() {
            terms_checked += 1;
            if !(index.idf(t) > 0.0) {
                return Verdict::Fail(format!("corpus {corpus}: idf({t}) = {} not positive", index.idf(t)));
            }
        }
        let oracle = OracleBm25 { docs, k1: 1.5, b: 0.75 };
        for _ in 0..5 {
            let qlen = rng.gen_range(1..=6);
            let q: Vec<String> = (0..qlen)
                .map(|_| match rng.gen_range(0..10) {
                    0 => "unseen".to_owned(),
                    1 => "common".to_owned(),
                    _ => format!("w{}", rng.gen_range(0..vocab)),
                })
                .collect();
            let k = [1, 10, 100, 1000][rng.gen_range(0..4)];
            let got = bm25_search(&index, "q", &q.join(" "), &UnigramTokenizer, k);
            let want = oracle.search(&q, k);
            if let Err(e) = same_ranking(&got, &want) {
                return Verdict::Fail(format!("corpus {corpus}, query {q:?}: {e}"));
            }
            queries += 1;
        }
    }
    Verdict::Pass(format!(
        "40 corpora (<= 500 docs), {queries} queries match direct formula; {terms_checked} idf values all > 0"
    ))
}

// ---------------------------------------------------------------- leakage filter

fn oracle_lcs(a: &[char], b: &[char]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

fn random_text(rng: &mut ChaCha8Rng, alphabet: &[char], len: usize) -> String {
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

fn mutate(rng: &mut ChaCha8Rng, s: &str, rate: f64, alphabet: &[char]) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if rng.gen_bool(rate) {
            match rng.gen_range(0..3) {
                0 => {}
                1 => out.push(alphabet[rng.gen_range(0..alphabet.len())]),
                _ => {
                    out.push(c);
                    out.push(alphabet[rng.gen_range(0..alphabet.len())]);
                }
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn leakage_filter() -> Verdict {
    let alphabet: Vec<char> = "一只猫在沙发上睡觉图片展示了红色的花朵背景是蓝天白云abc".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(41);

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let la = rng.gen_range(0..=40);
        let lb = rng.gen_range(0..=40);
        let small = &alphabet[..rng.gen_range(1..=alphabet.len())];
        let a = random_text(&mut rng, small, la);
        let b = if rng.gen_bool(0.3) {
            mutate(&mut rng, &a, 0.3, small)
        } else {
            random_text(&mut rng, small, lb)
        };
        let (ac, bc): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        let lcs = oracle_lcs(&ac, &bc);
        let want = if lcs == 0 { 0.0 } else { 2.0 * lcs as f64 / (ac.len() + bc.len()) as f64 };
        worst = worst.max((rouge_l_f1(&a, &b) - want).abs());
    }
    if worst > ROUGE_TOL {
        return Verdict::Fail(format!("ROUGE-L differs from DP oracle by {worst:.3e}"));
    }

    let thetas: Vec<f64> = (1..=20).map(|i| i as f64 * 0.05).collect();
    let mut duplicates = 0;
    for corpus in 0..25 {
        let test: Vec<Passage> = (0..20)
            .map(|i| {
                let len = rng.gen_range(5..40);
                Passage::new(format!("x{i}"), random_text(&mut rng, &alphabet, len))
            })
            .collect();
        let mut train = Vec::new();
        for i in 0..60 {
            let text = match i % 4 {
                0 => test[rng.gen_range(0..test.len())].text.clone(),
                1 | 2 => {
                    let src = test[rng.gen_range(0..test.len())].text.clone();
                    let rate = rng.gen_range(0.0..0.7);
                    mutate(&mut rng, &src, rate, &alphabet)
                }
                _ => {
                    let len = rng.gen_range(5..40);
                    random_text(&mut rng, &alphabet, len)
                }
            };
            if text.is_empty() {
                continue;
            }
            train.push(Passage::new(format!("t{i}"), text));
        }
        let exact: BTreeSet<String> = train
            .iter()
            .filter(|p| test.iter().any(|t| t.text == p.text))
            .map(|p| p.id.clone())
            .collect();
        let mut previous: Option<BTreeSet<String>> = None;
        for &theta in &thetas {
            let split = filter_leakage(&train, &test, theta).expect("valid threshold");
            if split.kept.len() + split.dropped.len() != train.len() {
                return Verdict::Fail(format!("corpus {corpus}: kept + dropped != input at {theta}"));
            }
            let dropped: BTreeSet<String> = split.dropped.iter().map(|d| d.passage.id.clone()).collect();
            if let Some(prev) = &previous {
                if !dropped.is_subset(prev) {
                    return Verdict::Fail(format!("corpus {corpus}: dropped set grows at threshold {theta:.2}"));
                }
            }
            if (theta - 0.6).abs() < 1e-9 {
                if !exact.is_subset(&dropped) {
                    return Verdict::Fail(format!("corpus {corpus}: an exact duplicate survived at 0.6"));
                }
                duplicates += exact.len();
            }
            previous = Some(dropped);
        }
        let at_one = filter_leakage(&train, &test, 1.0).expect("valid threshold");
        let at_one: BTreeSet<String> = at_one.dropped.iter().map(|d| d.passage.id.clone()).collect();
        if at_one != exact {
            return Verdict::Fail(format!("corpus {corpus}: threshold 1.0 dropped {at_one:?}, exact copies {exact:?}"));
        }
    }
    Verdict::Pass(format!(
        "1000 pairs within {worst:.1e} of DP oracle; 25 corpora nested over 20 thresholds; {duplicates} exact duplicates dropped at 0.6, only those at 1.0"
    ))
}

// ---------------------------------------------------------------- CapRetrieval

struct CapData {
    dataset_dir: Option<PathBuf>,
    vectors_dir: Option<PathBuf>,
    endpoint: Option<(String, String)>,
    tokens_dir: Option<PathBuf>,
}

impl CapData {
    fn from_env() -> Self {
        let path = |k: &str| std::env::var_os(k).map(PathBuf::from);
        Self {
            dataset_dir: path("FGR_CAPRETRIEVAL_DIR"),
            vectors_dir: path("FGR_CAPRETRIEVAL_VECTORS"),
            endpoint: std::env::var("FGR_EMBED_ENDPOINT")
                .ok()
                .zip(std::env::var("FGR_EMBED_MODEL").ok()),
            tokens_dir: path("FGR_CAPRETRIEVAL_TOKENS"),
        }
    }

    fn dataset(&self) -> Result<Dataset, Verdict> {
        let dir = self
            .dataset_dir
            .as_ref()
            .ok_or_else(|| Verdict::Unavailable("CapRetrieval files absent (set FGR_CAPRETRIEVAL_DIR)".into()))?;
        let jsonl = dir.join("dataset.jsonl");
        let loaded = if jsonl.is_file() {
            load_jsonl(&jsonl)
        } else {
            load_dataset(&dir.join("passages.tsv"), &dir.join("queries.tsv"), &dir.join("labels.tsv"))
        };
        loaded.map_err(|e| Verdict::Fail(format!("cannot load {}: {e}", dir.display())))
    }

    fn embedding_run(&self, d: &Dataset) -> Result<Run, Verdict> {
        let run = if let Some(dir) = &self.vectors_dir {
            let provider = FileProvider::open(&dir.join("passages.fgrvec"), &dir.join("queries.fgrvec"))
                .map_err(|e| Verdict::Fail(format!("vectors: {e}")))?;
            run_with_provider(d, &provider, 100, "embedding")
        } else if let Some((endpoint, model)) = &self.endpoint {
            let mut cfg = ProviderConfig::new(
                ProviderKind::RemoteService {
                    endpoint: endpoint.clone(),
                },
                model.clone(),
            );
            cfg.instruction = Some(IMAGE_SEARCH_INSTRUCTION.to_owned());
            open_provider(&cfg).and_then(|p| run_with_provider(d, p.as_ref(), 100, "embedding"))
        } else {
            return Err(Verdict::Unavailable(
                "baseline embeddings absent (set FGR_CAPRETRIEVAL_VECTORS or FGR_EMBED_ENDPOINT/FGR_EMBED_MODEL)".into(),
            ));
        };
        run.map_err(|e| Verdict::Fail(format!("embedding run: {e}")))
    }

    fn segmented_tokenizer(&self, d: &Dataset) -> Result<PretokenizedTokenizer, Verdict> {
        let dir = self
            .tokens_dir
            .as_ref()
            .ok_or_else(|| Verdict::Unavailable("segmented tokens absent (set FGR_CAPRETRIEVAL_TOKENS)".into()))?;
        PretokenizedTokenizer::for_dataset(
            d,
            Some(&dir.join("passages.tok.tsv")),
            Some(&dir.join("queries.tok.tsv")),
        )
        .map_err(|e| Verdict::Fail(format!("tokens: {e}")))
    }
}

fn bm25_run(d: &Dataset, tok: &dyn Tokenize) -> Run {
    let index = Bm25Index::build(d.passages(), tok, Bm25Params::default()).expect("index");
    let mut run = Run::new("bm25");
    for q in d.queries() {
        run.insert(index.search_tokens(&q.id, &tok.tokenize(&q.text), 100));
    }
    run
}

fn report(run: &Run, d: &Dataset) -> Result<MetricReport, Verdict> {
    evaluate_run(run, d, &MetricConfig::default()).map_err(|e| Verdict::Fail(format!("evaluation: {e}")))
}

fn within(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.iter().zip(want).all(|(g, w)| (g - w).abs() <= tol)
}

fn fmt3(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/")
}

fn zero_shot(data: &CapData) -> Verdict {
    let d = match data.dataset() {
        Ok(d) => d,
        Err(v) => return v,
    };
    let run = match data.embedding_run(&d) {
        Ok(r) => r,
        Err(v) => return v,
    };
    let rep = match report(&run, &d) {
        Ok(r) => r,
        Err(v) => return v,
    };
    let table = by_type_report(&rep, &d, Grouping::Coarse5, 10).expect("cutoff 10 present");
    let mut per_type_ok = true;
    let mut per_type = Vec::new();
    for (ct, want, ..) in PER_TYPE_TARGET {
        let got = table.rows.iter().find(|r| r.group == ct.as_str()).map_or(f64::NAN, |r| r.ndcg);
        per_type_ok &= (got - want).abs() <= ZERO_SHOT_TOL;
        per_type.push(format!("{}={got:.2}", ct.as_str()));
    }
    let msg = format!(
        "nDCG@1/5/10 {} vs {} (±{ZERO_SHOT_TOL}); per type {}",
        fmt3(&rep.aggregate),
        fmt3(&ZERO_SHOT_TARGET),
        per_type.join(" ")
    );
    if within(&rep.aggregate, &ZERO_SHOT_TARGET, ZERO_SHOT_TOL) && per_type_ok {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

fn bm25_reproduction(data: &CapData) -> Verdict {
    let d = match data.dataset() {
        Ok(d) => d,
        Err(v) => return v,
    };
    let unigram = match report(&bm25_run(&d, &UnigramTokenizer), &d) {
        Ok(r) => r,
        Err(v) => return v,
    };
    let unigram_ok = within(&unigram.aggregate, &BM25_TARGET, BM25_UNIGRAM_TOL);
    let unigram_msg = format!(
        "unigram {} vs {} (±{BM25_UNIGRAM_TOL}): {}",
        fmt3(&unigram.aggregate),
        fmt3(&BM25_TARGET),
        if unigram_ok { "ok" } else { "off" }
    );
    let segmented = match data.segmented_tokenizer(&d) {
        Ok(t) => t,
        Err(Verdict::Unavailable(m)) => return Verdict::Unavailable(format!("{m}; {unigram_msg}")),
        Err(v) => return v,
    };
    let seg = match report(&bm25_run(&d, &segmented), &d) {
        Ok(r) => r,
        Err(v) => return v,
    };
    let seg_ok = within(&seg.aggregate, &BM25_TARGET, BM25_SEGMENTED_TOL);
    let msg = format!(
        "segmented {} vs {} (±{BM25_SEGMENTED_TOL}); {unigram_msg}",
        fmt3(&seg.aggregate),
        fmt3(&BM25_TARGET)
    );
    if seg_ok && unigram_ok {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

fn synthetic_typed_dataset() -> (Dataset, Run) {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let passages: Vec<Passage> = (0..60).map(|i| Passage::new(format!("p{i}"), format!("passage {i}"))).collect();
    let mut queries = Vec::new();
    let mut labels = LabelMatrix::new();
    let mut run = Run::new("r");
    for i in 0..80 {
        let qt = QueryType::ALL[i % QueryType::ALL.len()];
        let qid = format!("q{i}");
        queries.push(Query::new(qid.clone(), format!("query {i}"), qt));
        let npos = rng.gen_range(1..6);
        for p in passages.choose_multiple(&mut rng, npos) {
            let g = if rng.gen_bool(0.5) { RelevanceGrade::Strong } else { RelevanceGrade::Weak };
            labels.set(&qid, &p.id, g);
        }
        let mut ranked: Vec<&Passage> = passages.iter().collect();
        ranked.shuffle(&mut rng);
        let mut list = RankedList::new(qid.clone());
        for (r, p) in ranked.iter().take(10).enumerate() {
            list.entries.push(fgr_core::retrieval::RankedEntry {
                passage_id: p.id.clone(),
                score: 1.0 - r as f64 * 0.01,
            });
        }
        run.insert(list);
    }
    (Dataset::new("synthetic", passages, queries, labels).expect("valid"), run)
}

fn comparator(data: &CapData) -> Verdict {
    let (d, run) = synthetic_typed_dataset();
    let rep = report(&run, &d).unwrap_or_else(|_| unreachable!());
    let cmp = compare_runs(&rep, &rep, &d, 0.01, 10).expect("self comparison");
    let self_ok = cmp.rows.len() == CoarseType::ALL.len()
        && cmp.rows.iter().chain([&cmp.overall]).all(|r| r.similar == 1.0 && r.greater == 0.0 && r.less == 0.0);
    if !self_ok {
        return Verdict::Fail(format!("self comparison not all '=': {cmp:?}"));
    }
    let self_msg = format!("self comparison 100% '=' in {} groups", cmp.rows.len());

    let d = match data.dataset() {
        Ok(d) => d,
        Err(Verdict::Unavailable(m)) => return Verdict::Unavailable(format!("{m}; {self_msg}")),
        Err(v) => return v,
    };
    let emb = match data.embedding_run(&d) {
        Ok(r) => r,
        Err(Verdict::Unavailable(m)) => return Verdict::Unavailable(format!("{m}; {self_msg}")),
        Err(v) => return v,
    };
    let (bm25, tok_note) = match data.segmented_tokenizer(&d) {
        Ok(t) => (bm25_run(&d, &t), "segmented"),
        Err(Verdict::Unavailable(_)) => (bm25_run(&d, &UnigramTokenizer), "unigram"),
        Err(v) => return v,
    };
    let (ra, rb) = match (report(&emb, &d), report(&bm25, &d)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(v), _) | (_, Err(v)) => return v,
    };
    let cmp = compare_runs(&ra, &rb, &d, 0.01, 10).expect("same query set");
    let mut ok = true;
    let mut parts = Vec::new();
    for (ct, _, gt, lt, eq) in PER_TYPE_TARGET {
        let Some(r) = cmp.rows.iter().find(|r| r.group == ct.as_str()) else {
            ok = false;
            continue;
        };
        let row_ok = (r.greater - gt).abs() <= FRACTION_TOL
            && (r.less - lt).abs() <= FRACTION_TOL
            && (r.similar - eq).abs() <= FRACTION_TOL;
        ok &= row_ok;
        parts.push(format!(
            "{} {:.0}/{:.0}/{:.0}",
            ct.as_str(),
            100.0 * r.greater,
            100.0 * r.less,
            100.0 * r.similar
        ));
    }
    let msg = format!("{self_msg}; vs BM25 ({tok_note}) >/</= {}", parts.join(", "));
    if ok {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

fn dataset_integrity(data: &CapData) -> Verdict {
    let d = match data.dataset() {
        Ok(d) => d,
        Err(v) => return v,
    };
    let got = (
        d.passages().len(),
        d.queries().len(),
        d.positive_count(),
        d.zero_positive_queries().len(),
    );
    let msg = format!(
        "passages/queries/positives/zero-positive = {}/{}/{}/{} (want 3024/404/4683/27)",
        got.0, got.1, got.2, got.3
    );
    if got == (3024, 404, 4683, 27) {
        Verdict::Pass(msg)
    } else {
        Verdict::Fail(msg)
    }
}

