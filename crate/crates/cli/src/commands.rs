use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use fgr_core::analysis::{false_negatives, false_positives, write_worksheet, ErrorCategory, LiteralCriterion};
use fgr_core::corpus::{dataset_stats, load_dataset, load_jsonl, load_passages, save_passages, Dataset, Passage};
use fgr_core::datagen::{
    export_training, filter_leakage_with, gen_stats, generate_queries, read_generated, split_holdout,
    write_generated, GenConfig, HttpLlmClient, LeakageConfig, PromptTemplate, QueryKind, RougeMeasure,
    DEFAULT_LEAKAGE_THRESHOLD,
};
use fgr_core::embedding::{
    load_vectors, open_provider, save_vectors, save_vectors_text, EmbedRole, InstructionTemplate, ProviderConfig,
    ProviderKind,
};
use fgr_core::lexical::{
    Bm25Index, Bm25Params, CharTokenizer, DictionaryTokenizer, IdfMode, PretokenizedTokenizer, Tokenize,
    UnigramTokenizer,
};
use fgr_core::metrics::{by_type_report, compare_runs, evaluate_run, Gain, Grouping, MetricConfig, MetricReport};
use fgr_core::retrieval::{run_with_provider, Run};

use crate::config::FileConfig;
use crate::meta::Recorder;
use crate::{
    usage, AnalyzeArgs, Bm25Args, Command, CompareArgs, ConvertArgs, ConvertWhat, DatasetArgs, EmbedArgs, EvalArgs,
    ExportArgs, FilterArgs, GenArgs, MetricArgs, ProviderArgs, SearchArgs, SplitArgs, StatsArgs, TokenizerArgs,
};

pub fn dispatch(cmd: &Command, cfg: &FileConfig, seed: u64) -> Result<()> {
    match cmd {
        Command::Embed(a) => embed(a, cfg),
        Command::Search(a) => search(a, cfg),
        Command::Bm25(a) => bm25(a, cfg),
        Command::Eval(a) => eval(a, cfg),
        Command::Compare(a) => compare(a, cfg),
        Command::Analyze(a) => analyze(a, cfg),
        Command::Gen(a) => gen(a, cfg),
        Command::Filter(a) => filter(a, cfg),
        Command::Split(a) => split(a, seed),
        Command::Export(a) => export(a),
        Command::Stats(a) => stats(a, cfg),
        Command::Convert(a) => convert(a),
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "layout", rename_all = "lowercase")]
enum DatasetSource {
    Tsv {
        passages: PathBuf,
        queries: PathBuf,
        labels: PathBuf,
    },
    Jsonl {
        path: PathBuf,
    },
}

impl DatasetSource {
    fn from_path(path: &Path) -> Self {
        if path.is_dir() {
            let jsonl = path.join("dataset.jsonl");
            if jsonl.is_file() {
                return DatasetSource::Jsonl { path: jsonl };
            }
            return DatasetSource::Tsv {
                passages: path.join("passages.tsv"),
                queries: path.join("queries.tsv"),
                labels: path.join("labels.tsv"),
            };
        }
        DatasetSource::Jsonl { path: path.to_owned() }
    }

    fn resolve(a: &DatasetArgs, cfg: &FileConfig) -> Result<Self> {
        if let (Some(p), Some(q), Some(l)) = (&a.passages, &a.queries, &a.labels) {
            return Ok(DatasetSource::Tsv {
                passages: p.clone(),
                queries: q.clone(),
                labels: l.clone(),
            });
        }
        match a.dataset.as_ref().or(cfg.dataset.path.as_ref()) {
            Some(path) => Ok(Self::from_path(path)),
            None => Err(usage("no dataset given: use --dataset or --passages/--queries/--labels")),
        }
    }

    fn load(&self) -> Result<Dataset> {
        let d = match self {
            DatasetSource::Tsv {
                passages,
                queries,
                labels,
            } => load_dataset(passages, queries, labels)?,
            DatasetSource::Jsonl { path } => load_jsonl(path)?,
        };
        tracing::info!(
            "dataset {}: {} passages, {} queries, {} positive labels",
            d.name,
            d.passages().len(),
            d.queries().len(),
            d.positive_count()
        );
        Ok(d)
    }
}

fn provider_config(a: &ProviderArgs, cfg: &FileConfig) -> Result<ProviderConfig> {
    let sec = &cfg.provider;
    let source = a
        .provider
        .as_ref()
        .or(sec.source.as_ref())
        .ok_or_else(|| usage("no embedding provider given: use --provider"))?;
    let kind: ProviderKind = source.parse().map_err(usage)?;
    let model = match (a.model.as_ref().or(sec.model.as_ref()), &kind) {
        (Some(m), _) => m.clone(),
        (None, ProviderKind::VectorFile { .. }) => "dense".to_owned(),
        (None, ProviderKind::RemoteService { .. }) => {
            return Err(usage("--model is required with a remote provider"));
        }
    };
    let mut pc = ProviderConfig::new(kind, model);
    pc.instruction = a.instruction.clone().or_else(|| sec.instruction.clone());
    if let Some(t) = a.template.as_ref().or(sec.template.as_ref()) {
        pc.template = InstructionTemplate::from_preset_or_literal(t)?;
    }
    if let Some(v) = a.batch_size.or(sec.batch_size) {
        pc.batch_size = v;
    }
    if let Some(v) = a.timeout_secs.or(sec.timeout_secs) {
        pc.timeout = Duration::from_secs(v);
    }
    if let Some(v) = a.retries.or(sec.retries) {
        pc.retries = v;
    }
    if let Some(v) = a.fanout.or(sec.fanout) {
        pc.fanout = v;
    }
    pc.validate().map_err(|e| usage(e.to_string()))?;
    Ok(pc)
}

#[derive(Debug, Clone, Serialize)]
struct TokenizerSpec {
    kind: String,
    passage_tokens: Option<PathBuf>,
    query_tokens: Option<PathBuf>,
}

impl TokenizerSpec {
    fn resolve(a: &TokenizerArgs, cfg: &FileConfig) -> Self {
        let sec = &cfg.tokenizer;
        let passage_tokens = a.passage_tokens.clone().or_else(|| sec.passage_tokens.clone());
        let query_tokens = a.query_tokens.clone().or_else(|| sec.query_tokens.clone());
        let kind = a.tokenizer.clone().or_else(|| sec.kind.clone()).unwrap_or_else(|| {
            if passage_tokens.is_some() || query_tokens.is_some() {
                "pretokenized".into()
            } else {
                "unigram".into()
            }
        });
        Self {
            kind,
            passage_tokens,
            query_tokens,
        }
    }

    fn build(&self, d: Option<&Dataset>) -> Result<Box<dyn Tokenize>> {
        Ok(match self.kind.as_str() {
            "unigram" => Box::new(UnigramTokenizer),
            "char" => Box::new(CharTokenizer),
            "pretokenized" => {
                let d = d.ok_or_else(|| usage("pre-tokenized input needs a dataset"))?;
                if self.passage_tokens.is_none() && self.query_tokens.is_none() {
                    return Err(usage("--tokenizer pretokenized needs --passage-tokens and/or --query-tokens"));
                }
                let t = PretokenizedTokenizer::for_dataset(
                    d,
                    self.passage_tokens.as_deref(),
                    self.query_tokens.as_deref(),
                )?;
                tracing::info!("{} pre-tokenized texts loaded", t.len());
                Box::new(t)
            }
            other => match other.strip_prefix("dict:") {
                Some(path) => Box::new(DictionaryTokenizer::from_file(Path::new(path))?),
                None => return Err(usage(format!("unknown tokenizer `{other}`"))),
            },
        })
    }
}

fn bm25_params(a: &Bm25Args, cfg: &FileConfig) -> Result<Bm25Params> {
    let d = Bm25Params::default();
    let idf = match a.idf.as_ref().or(cfg.bm25.idf.as_ref()).map(String::as_str) {
        None | Some("positive") => IdfMode::Positive,
        Some("classic") => IdfMode::ClassicEps {
            epsilon: IdfMode::CLASSIC_EPSILON,
        },
        Some(other) => return Err(usage(format!("unknown idf mode `{other}` (positive | classic)"))),
    };
    let p = Bm25Params {
        k1: a.k1.or(cfg.bm25.k1).unwrap_or(d.k1),
        b: a.b.or(cfg.bm25.b).unwrap_or(d.b),
        idf,
    };
    p.validate().map_err(|e| usage(e.to_string()))?;
    Ok(p)
}

fn metric_config(cutoffs: Option<&Vec<usize>>, gain: Option<&String>, cfg: &FileConfig) -> Result<MetricConfig> {
    let mut mc = MetricConfig::default();
    if let Some(c) = cutoffs.or(cfg.metrics.cutoffs.as_ref()) {
        mc.cutoffs = c.clone();
    }
    if let Some(g) = gain.or(cfg.metrics.gain.as_ref()) {
        mc.gain = g.parse::<Gain>().map_err(usage)?;
    }
    if let Some(t) = cfg.metrics.tie_band {
        mc.tie_band = t;
    }
    mc.validate().map_err(|e| usage(e.to_string()))?;
    Ok(mc)
}

/// Writes `text` to `out`, or to stdout.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut w = std::io::stdout().lock();
            w.write_all(text.as_bytes())?;
            w.flush()?;
            Ok(())
        }
    }
}

fn emit_run(run: &Run, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => run.save_trec(p)?,
        None => {
            run.check_fields()?;
            let mut w = BufWriter::new(std::io::stdout().lock());
            run.write_trec(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn outputs(out: Option<&Path>) -> Vec<&Path> {
    out.into_iter().collect()
}

fn load_run(path: &Path, d: &Dataset, strict: bool) -> Result<Run> {
    let mut run = Run::load_trec(path)?;
    if !strict {
        let added = run.fill_missing(d);
        if !added.is_empty() {
            tracing::warn!(
                "{}: {} queries have no results and are scored as empty rankings",
                path.display(),
                added.len()
            );
        }
    }
    Ok(run)
}

fn embed(a: &EmbedArgs, cfg: &FileConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Settings<'a> {
        dataset: DatasetSource,
        provider: &'a ProviderConfig,
        out_dir: &'a Path,
        text: bool,
    }
    let src = DatasetSource::resolve(&a.dataset, cfg)?;
    let pc = provider_config(&a.provider, cfg)?;
    let rec = Recorder::start(
        "embed",
        Settings {
            dataset: src.clone(),
            provider: &pc,
            out_dir: &a.out_dir,
            text: a.text,
        },
    )?;
    let d = src.load()?;
    let provider = open_provider(&pc)?;
    let pairs = |it: &mut dyn Iterator<Item = (&String, &String)>| -> Vec<(String, String)> {
        it.map(|(i, t)| (i.clone(), t.clone())).collect()
    };
    let passages = provider.embed(
        &pairs(&mut d.passages().iter().map(|p| (&p.id, &p.text))),
        EmbedRole::Passage,
    )?;
    let queries = provider.embed(&pairs(&mut d.queries().iter().map(|q| (&q.id, &q.text))), EmbedRole::Query)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let (pp, qp) = (a.out_dir.join("passages.fgrvec"), a.out_dir.join("queries.fgrvec"));
    let save = if a.text { save_vectors_text } else { save_vectors };
    save(&passages, &pp)?;
    save(&queries, &qp)?;
    eprintln!(
        "embedded {} passages and {} queries into {}",
        passages.len(),
        queries.len(),
        a.out_dir.display()
    );
    rec.finish(&[&a.out_dir])
}

fn search(a: &SearchArgs, cfg: &FileConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Settings<'a> {
        dataset: DatasetSource,
        provider: &'a ProviderConfig,
        k: usize,
        name: &'a str,
    }
    if a.k == 0 {
        return Err(usage("-k must be at least 1"));
    }
    let src = DatasetSource::resolve(&a.dataset, cfg)?;
    let pc = provider_config(&a.provider, cfg)?;
    let name = a.name.clone().unwrap_or_else(|| pc.model.replace(char::is_whitespace, "_"));
    let rec = Recorder::start(
        "search",
        Settings {
            dataset: src.clone(),
            provider: &pc,
            k: a.k,
            name: &name,
        },
    )?;
    let d = src.load()?;
    let provider = open_provider(&pc)?;
    let run = run_with_provider(&d, provider.as_ref(), a.k, &name)?;
    emit_run(&run, a.out.as_deref())?;
    rec.finish(&outputs(a.out.as_deref()))
}

fn bm25(a: &Bm25Args, cfg: &FileConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Settings<'a> {
        dataset: DatasetSource,
        tokenizer: &'a TokenizerSpec,
        params: Bm25Params,
        k: usize,
        name: &'a str,
    }
    if a.k == 0 {
        return Err(usage("-k must be at least 1"));
    }
    let src = DatasetSource::resolve(&a.dataset, cfg)?;
    let spec = TokenizerSpec::resolve(&a.tokenizer, cfg);
    let params = bm25_params(a, cfg)?;
    let rec = Recorder::start(
        "bm25",
        Settings {
            dataset: src.clone(),
            tokenizer: &spec,
            params,
            k: a.k,
            name: &a.name,
        },
    )?;
    let d = src.load()?;
    let tok = spec.build(Some(&d))?;
    let index = Bm25Index::build(d.passages(), tok.as_ref(), params)?;
    let lists: Vec<_> = d
        .queries()
        .par_iter()
        .map(|q| index.search_tokens(&q.id, &tok.tokenize(&q.text), a.k))
        .collect();
    let mut run = Run::new(a.name.clone());
    for l in lists {
        run.insert(l);
    }
    emit_run(&run, a.out.as_deref())?;
    rec.finish(&outputs(a.out.as_deref()))
}

fn eval(a: &EvalArgs, cfg: &FileConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Settings<'a> {
        dataset: DatasetSource,
        runs: &'a [PathBuf],
        metrics: &'a MetricConfig,
        strict: bool,
        by_type: Option<Grouping>,
        type_cutoff: Option<usize>,
    }
    let src = DatasetSource::resolve(&a.dataset, cfg)?;
    let MetricArgs { cutoffs, gain, strict } = &a.metrics;
    let mut mc = metric_config(cutoffs.as_ref(), gain.as_ref(), cfg)?;
    let grouping = a.by_type.as_deref().map(str::parse::<Grouping>).transpose().map_err(usage)?;
    mc.by_type = grouping.is_some();
    let type_cutoff = grouping.map(|_| a.type_cutoff.unwrap_or(*mc.cutoffs.last().expect("validated")));
    if let Some(k) = type_cutoff {
        if !mc.cutoffs.contains(&k) {
            return Err(usage(format!("--type-cutoff {k} is not among the cutoffs {:?}", mc.cutoffs)));
        }
    }
    let rec = Recorder::start(
        "eval",
        Settings {
            dataset: src.clone(),
            runs: &a.run,
            metrics: &mc,
            strict: *strict,
            by_type: grouping,
            type_cutoff,
        },
    )?;
    let d = src.load()?;
    let mut text = String::new();
    for path in &a.run {
        let run = load_run(path, &d, *strict)?;
        let report = evaluate_run(&run, &d, &mc)?;
        if a.json {
            text.push_str(&report.to_json_lines());
            continue;
        }
        text.push_str(&report.to_string());
        if let (Some(g), Some(k)) = (grouping, type_cutoff) {
            text.push('\n');
            text.push_str(&by_type_report(&report, &d, g, k)?.to_string());
        }
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)?;
    rec.finish(&outputs(a.out.as_deref()))
}

fn compare(a: &CompareArgs, cfg: &FileConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Settings<'a> {
        dataset: DatasetSource,
        run_a: &'a Path,
        run_b: &'a Path,
        cutoff: usize,
        tie_band: f64,
        gain: Gain,
        strict: bool,
        by_type: bool,
    }
    let src = DatasetSource::resolve(&a.dataset, cfg)?;
    let mut mc = metric_config(Some(&vec![a.cutoff]), a.gain.as_ref(), cfg)?;
    if let Some(t) = a.tie_band {
        mc.tie_band = t;
    }
    mc.validate().map_err(|e| usage(e.to_string()))?;
    let rec = Recorder::start(
        "compare",
        Settings {
            dataset: src.clone(),
            run_a: &a.run_a,
            run_b: &a.run_b,
            cutoff: a.cutoff,
            tie_band: mc.tie_band,
            gain: mc.gain,
            strict: a.strict,
            by_type: a.by_type,
        },
    )?;
    let d = src.load()?;
    let report = |p: &Path| -> Result<MetricReport> { Ok(evaluate_run(&load_run(p, &d, a.strict)?, &d, &mc)?) };
    let mut cmp = compare_runs(&report(&a.run_a)?, &report(&a.run_b)?, &d, mc.tie_band, a.cutoff)?;
    if !a.by_type {
        cmp.rows.clear();
    }
    let text = if a.json {
        serde_json::to_string(&cmp)? + "\n"
    } else {
        cmp.to_string()
    };
    emit(a.out.as_deref(), &text)?;
    rec.finish(&outputs(a.out.as_deref()))
}

fn analyze(a: &AnalyzeArgs, cfg: &FileConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Settings<'a> {
        dataset: DatasetSource,
        run: &'a Path,
        tokenizer: &'a TokenizerSpec,
        k: usize,
        literal: &'a str,
        min_tokens: Option<usize>,
        bm25_k: usize,
        false_positives: bool,
    }
    if a.k == 0 || a.bm25_k == 0 {
        return Err(usage("-k and --bm25-k must be at least 1"));
    }
    let src = DatasetSource::resolve(&a.dataset, cfg)?;
    let spec = TokenizerSpec::resolve(&a.tokenizer, cfg);
    let rec = Recorder::start(
        "analyze",
        Settings {
            dataset: src.clone(),
            run: &a.run,
            tokenizer: &spec,
            k: a.k,
            literal: &a.literal,
            min_tokens: a.min_tokens,
            bm25_k: a.bm25_k,
            false_positives: a.false_positives,
        },
    )?;
    let d = src.load()?;
    let run = load_run(&a.run, &d, false)?;
    let tok = spec.build(Some(&d))?;
    let index;
    let criterion = match a.literal.as_str() {
        "containment" => LiteralCriterion::Containment {
            tokenizer: tok.as_ref(),
            min_tokens: a.min_tokens,
        },
        "bm25" => {
            index = Bm25Index::build(d.passages(), tok.as_ref(), Bm25Params::default())?;
            LiteralCriterion::Bm25 {
                index: &index,
                tokenizer: tok.as_ref(),
                k: a.bm25_k,
            }
        }
        other => return Err(usage(format!("unknown literal rule `{other}` (containment | bm25)"))),
    };
    let mut records = false_negatives(&run, &d, a.k, &criterion);
    if a.false_positives {
        records.extend(false_positives(&run, &d, a.k));
    }
    write_worksheet(&records, &d, &a.out)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &records {
        let label = match r.category {
            ErrorCategory::LiteralMiss => "literal miss",
            ErrorCategory::SemanticMiss => "semantic miss",
            ErrorCategory::FalsePositive => "false positive",
        };
        *counts.entry(label).or_default() += 1;
    }
    let mut text = format!("{} records written to {}\n", records.len(), a.out.display());
    for (label, n) in counts {
        text.push_str(&format!("{label:<16} {n:>7}\n"));
    }
    emit(None, &text)?;
    rec.finish(&[&a.out])
}

fn gen(a: &GenArgs, cfg: &FileConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Settings<'a> {
        passages: &'a Path,
        endpoint: &'a str,
        model: &'a str,
        kinds: &'a [QueryKind],
        temperature: f32,
        max_per_kind: usize,
        sm_template: &'a str,
        kw_template: &'a str,
        sm_template_text: (&'a str, &'a str),
        kw_template_text: (&'a str, &'a str),
        concurrency: usize,
        parse_retries: u32,
        timeout_secs: u64,
        retries: u32,
    }
    let sec = &cfg.gen;
    let endpoint = a
        .endpoint
        .clone()
        .or_else(|| sec.endpoint.clone())
        .ok_or_else(|| usage("no LLM endpoint given: use --endpoint"))?;
    let model = a
        .model
        .clone()
        .or_else(|| sec.model.clone())
        .ok_or_else(|| usage("no LLM model given: use --model"))?;
    let mut gc = GenConfig::new(model);
    if let Some(kinds) = a.kinds.as_ref().or(sec.kinds.as_ref()) {
        gc.kinds = kinds
            .iter()
            .map(|k| k.parse::<QueryKind>())
            .collect::<Result<_, _>>()
            .map_err(|e| usage(e.to_string()))?;
    }
    if let Some(t) = a.temperature.or(sec.temperature) {
        gc.temperature = t;
    }
    if let Some(m) = a.max_per_kind.or(sec.max_per_kind) {
        gc.max_per_kind = m;
    }
    let sm_id = a.sm_template.clone().or_else(|| sec.sm_template.clone()).unwrap_or_else(|| "sm_v1".into());
    let kw_id = a.kw_template.clone().or_else(|| sec.kw_template.clone()).unwrap_or_else(|| "kw_v1".into());
    gc.sm_template = PromptTemplate::resolve(&sm_id)?;
    gc.kw_template = PromptTemplate::resolve(&kw_id)?;
    if let Some(c) = a.concurrency.or(sec.concurrency) {
        gc.concurrency = c;
    }
    if let Some(r) = a.parse_retries.or(sec.parse_retries) {
        gc.parse_retries = r;
    }
    gc.validate().map_err(|e| usage(e.to_string()))?;
    let rec = Recorder::start(
        "gen",
        Settings {
            passages: &a.passages,
            endpoint: &endpoint,
            model: &gc.model,
            kinds: &gc.kinds,
            temperature: gc.temperature,
            max_per_kind: gc.max_per_kind,
            sm_template: &sm_id,
            kw_template: &kw_id,
            sm_template_text: (&gc.sm_template.system, &gc.sm_template.user),
            kw_template_text: (&gc.kw_template.system, &gc.kw_template.user),
            concurrency: gc.concurrency,
            parse_retries: gc.parse_retries,
            timeout_secs: a.timeout_secs,
            retries: a.retries,
        },
    )?;
    let passages = load_passages(&a.passages)?;
    let mut client = HttpLlmClient::new(endpoint, Duration::from_secs(a.timeout_secs), a.retries);
    if let Some(p) = &a.audit_log {
        client = client.with_audit_log(p)?;
    }
    let out = generate_queries(&passages, &gc, &client)?;
    write_generated(&out.queries, &a.out)?;
    eprintln!(
        "{} queries for {} passages ({} duplicates and {} verbatim copies dropped, {} passage/kind pairs unparseable)",
        out.queries.len(),
        passages.len(),
        out.duplicates_dropped,
        out.verbatim_dropped,
        out.parse_failures.len()
    );
    for f in &out.parse_failures {
        eprintln!("  skipped {} {} after {} attempts", f.passage_id, f.kind, f.attempts);
    }
    rec.finish(&[&a.out])
}

/// A passage file, or the passages of a dataset directory or JSON-lines file.
fn load_passage_pool(path: &Path) -> Result<Vec<Passage>> {
    let is_dataset = path.is_dir() || path.extension().is_some_and(|e| e == "jsonl");
    if is_dataset {
        Ok(DatasetSource::from_path(path).load()?.passages().to_vec())
    } else {
        Ok(load_passages(path)?)
    }
}

fn filter(a: &FilterArgs, cfg: &FileConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Settings<'a> {
        train: &'a Path,
        test: &'a Path,
        threshold: f64,
        measure: RougeMeasure,
        unit: &'a str,
    }
    let threshold = a
        .threshold
        .or(cfg.gen.leakage_threshold)
        .unwrap_or(DEFAULT_LEAKAGE_THRESHOLD);
    let measure: RougeMeasure = a.measure.parse().map_err(|e: fgr_core::Error| usage(e.to_string()))?;
    let unigram = UnigramTokenizer;
    let mut lc = LeakageConfig::new(threshold);
    lc.measure = measure;
    lc.tokenizer = match a.unit.as_str() {
        "char" => None,
        "unigram" => Some(&unigram),
        other => return Err(usage(format!("unknown unit `{other}` (char | unigram)"))),
    };
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(usage(format!("--threshold must lie in (0, 1], got {threshold}")));
    }
    let rec = Recorder::start(
        "filter",
        Settings {
            train: &a.train,
            test: &a.test,
            threshold,
            measure,
            unit: &a.unit,
        },
    )?;
    let train = load_passages(&a.train)?;
    let test = load_passage_pool(&a.test)?;
    let split = filter_leakage_with(&train, &test, &lc)?;
    save_passages(&split.kept, &a.out)?;
    let mut outs: Vec<&Path> = vec![&a.out];
    if let Some(p) = &a.dropped {
        let io = |e| anyhow::anyhow!("writing {}: {e}", p.display());
        let mut w = BufWriter::new(File::create(p).map_err(io)?);
        for dp in &split.dropped {
            writeln!(w, "{}", serde_json::to_string(dp)?).map_err(io)?;
        }
        w.flush().map_err(io)?;
        outs.push(p);
    }
    eprintln!(
        "kept {} of {} training passages, dropped {} (threshold {threshold})",
        split.kept.len(),
        train.len(),
        split.dropped.len()
    );
    rec.finish(&outs)
}

fn split(a: &SplitArgs, seed: u64) -> Result<()> {
    #[derive(Serialize)]
    struct Settings<'a> {
        queries: &'a Path,
        fraction: f64,
        seed: u64,
    }
    if !(a.fraction > 0.0 && a.fraction < 1.0) {
        return Err(usage(format!("--fraction must lie in (0, 1), got {}", a.fraction)));
    }
    let rec = Recorder::start(
        "split",
        Settings {
            queries: &a.queries,
            fraction: a.fraction,
            seed,
        },
    )?;
    let queries = read_generated(&a.queries)?;
    let (train, holdout) = split_holdout(&queries, a.fraction, seed)?;
    write_generated(&train, &a.train_out)?;
    write_generated(&holdout, &a.holdout_out)?;
    eprintln!("{} train, {} holdout (seed {seed})", train.len(), holdout.len());
    rec.finish(&[&a.train_out, &a.holdout_out])
}

fn export(a: &ExportArgs) -> Result<()> {
    #[derive(Serialize)]
    struct Settings<'a> {
        queries: &'a Path,
        passages: &'a Path,
    }
    let rec = Recorder::start(
        "export",
        Settings {
            queries: &a.queries,
            passages: &a.passages,
        },
    )?;
    let queries = read_generated(&a.queries)?;
    let passages = load_passages(&a.passages)?;
    let n = export_training(&queries, &passages, &a.out)?;
    eprintln!("{n} training examples written to {}", a.out.display());
    rec.finish(&[&a.out])
}

fn stats(a: &StatsArgs, cfg: &FileConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Settings<'a> {
        dataset: Option<DatasetSource>,
        generated: Option<&'a Path>,
        passages_file: Option<&'a Path>,
        tokenizer: &'a TokenizerSpec,
    }
    let spec = TokenizerSpec::resolve(&a.tokenizer, cfg);
    if let (Some(gpath), Some(ppath)) = (&a.generated, &a.passages_file) {
        let rec = Recorder::start(
            "stats",
            Settings {
                dataset: None,
                generated: Some(gpath),
                passages_file: Some(ppath),
                tokenizer: &spec,
            },
        )?;
        let tok = spec.build(None)?;
        let s = gen_stats(&read_generated(gpath)?, &load_passages(ppath)?, tok.as_ref());
        emit(a.out.as_deref(), &format!("{s}\n"))?;
        return rec.finish(&outputs(a.out.as_deref()));
    }
    let src = DatasetSource::resolve(&a.dataset, cfg)?;
    let rec = Recorder::start(
        "stats",
        Settings {
            dataset: Some(src.clone()),
            generated: None,
            passages_file: None,
            tokenizer: &spec,
        },
    )?;
    let d = src.load()?;
    let tok = spec.build(Some(&d))?;
    let report = dataset_stats(&d, tok.as_ref());
    let text = serde_json::to_string_pretty(&report)? + "\n";
    emit(a.out.as_deref(), &text)?;
    rec.finish(&outputs(a.out.as_deref()))
}

fn convert(a: &ConvertArgs) -> Result<()> {
    match &a.what {
        ConvertWhat::Dataset { dataset, to, out } => {
            #[derive(Serialize)]
            struct Settings<'a> {
                dataset: DatasetSource,
                to: &'a str,
            }
            let src = DatasetSource::resolve(dataset, &FileConfig::default())?;
            if to != "tsv" && to != "jsonl" {
                return Err(usage(format!("unknown dataset layout `{to}` (tsv | jsonl)")));
            }
            let rec = Recorder::start("convert", Settings { dataset: src.clone(), to })?;
            let d = src.load()?;
            if to == "tsv" {
                std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
                d.save_tsv(&out.join("passages.tsv"), &out.join("queries.tsv"), &out.join("labels.tsv"))?;
            } else {
                d.save_jsonl(out)?;
            }
            rec.finish(&[out])
        }
        ConvertWhat::Vectors { input, to, out } => {
            #[derive(Serialize)]
            struct Settings<'a> {
                input: &'a Path,
                to: &'a str,
            }
            let save = match to.as_str() {
                "binary" => save_vectors,
                "text" => save_vectors_text,
                other => return Err(usage(format!("unknown vector format `{other}` (binary | text)"))),
            };
            let rec = Recorder::start("convert", Settings { input, to })?;
            save(&load_vectors(input)?, out)?;
            rec.finish(&[out])
        }
    }
}
