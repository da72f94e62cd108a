// Copyright 2026 Geoscope Contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! The pipeline stages. Each reads its inputs from the run directory and
//! writes its outputs there; nothing is kept in memory between stages.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use geoscope_core::chunking::{build_datasets, DatasetConfig, WebsiteRow};
use geoscope_core::corpus::{
    load_documents, load_query_records, summarize, CorpusError, DocumentReport, DocumentStore, QueryRecord,
};
use geoscope_core::econ::{
    citation_design, condition_pair_design, ks_test, logit_fe, lpm_fe, ols_robust, outcome_design, pair_design,
    paired_ttest, render_table, write_results_csv, CitationObs, Column, DesignMatrix, EconError, FitResult,
    LogitOptions, OutcomeVar, PairObs, SampleVariant,
};
use geoscope_core::io;
use geoscope_core::metrics::{embed_unit, pairwise_similarity, vendi_score, KernelSpec, VendiReport};
use geoscope_core::pipeline::{
    outcome_obs, pair_obs, rag_citation_obs, rag_pair_obs, score_sentence_rows, score_website_rows,
    website_citation_obs, website_pair_inputs,
};
use geoscope_core::ragx::{
    read_ledger, write_ledger, ChunkSet, Condition, ConditionResult, ExperimentConfig, PolishMode, RagRunner,
};
use geoscope_core::{seeds, Exec};

use crate::backends;
use crate::config::{ModelName, RunConfig, VariantName};

pub const MANIFEST: &str = "manifest.json";
pub const WEBSITE_CSV: &str = "website.csv";
pub const SENTENCE_CSV: &str = "sentence.csv";
pub const PAIRS_CSV: &str = "pairs.csv";
pub const CHUNKSETS: &str = "chunksets.jsonl";
pub const RAG_CHUNKSETS: &str = "rag_chunksets.jsonl";
pub const LEDGER: &str = "ledger.jsonl";

/// Outcome of a stage that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    /// Number of estimates that did not converge.
    NonConverged(usize),
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub dir: PathBuf,
    pub exec: Exec,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Self {
        let dir = cfg.run_dir();
        let exec = if cfg.parallel { Exec::Parallel } else { Exec::Sequential };
        Ctx { cfg, dir, exec }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Path of an output of an earlier stage, or an error naming the stage.
    fn require(&self, name: &str, stage: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if !p.is_file() {
            bail!("{} is missing; run `geoscope {stage}` first", p.display());
        }
        Ok(p)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path(name);
        Ok(BufWriter::new(File::create(&p).with_context(|| format!("cannot create {}", p.display()))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn open(&self, name: &str, stage: &str) -> Result<BufReader<File>> {
        let p = self.require(name, stage)?;
        Ok(BufReader::new(File::open(&p).with_context(|| format!("cannot open {}", p.display()))?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub inputs: Vec<InputFile>,
    pub summary: serde_json::Value,
    pub document_report: serde_json::Value,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn input_files(cfg: &RunConfig) -> Result<Vec<InputFile>> {
    [("records", &cfg.corpus.records), ("documents", &cfg.corpus.documents)]
        .into_iter()
        .map(|(role, p)| Ok(InputFile { role: role.into(), path: p.clone(), sha256: sha256_file(p)? }))
        .collect()
}

type Corpus = (Vec<QueryRecord>, DocumentStore, DocumentReport);

fn load_corpus(cfg: &RunConfig) -> std::result::Result<Corpus, CorpusError> {
    let records = load_query_records(&cfg.corpus.records)?;
    let (docs, report) = load_documents(&cfg.corpus.documents)?;
    Ok((records, docs, report))
}

#[derive(Serialize)]
struct IngestErrors<'a> {
    source: &'a str,
    errors: &'a [geoscope_core::corpus::LineError],
}

pub fn ingest(ctx: &Ctx) -> Result<Status> {
    fs::create_dir_all(&ctx.dir).with_context(|| format!("cannot create {}", ctx.dir.display()))?;
    let (records, docs, report) = match load_corpus(&ctx.cfg) {
        Ok(v) => v,
        Err(e) => {
            if let CorpusError::Malformed { source_name, errors } = &e {
                ctx.write_json("ingest_errors.json", &IngestErrors { source: source_name, errors })?;
            }
            return Err(e.into());
        }
    };
    let summary = summarize(&records, &docs, &report);
    let manifest = Manifest {
        config_hash: ctx.cfg.hash(),
        inputs: input_files(&ctx.cfg)?,
        summary: serde_json::to_value(&summary)?,
        document_report: serde_json::to_value(&report)?,
    };
    ctx.write_json(MANIFEST, &manifest)?;
    fs::write(ctx.path("config.toml"), toml::to_string(&ctx.cfg)?)?;
    log::info!("ingested {} records and {} documents", summary.records, summary.documents);
    Ok(Status::Done)
}

/// Records and documents, after checking that the inputs still match the
/// manifest written by `ingest`.
fn load_inputs(ctx: &Ctx) -> Result<(Vec<QueryRecord>, DocumentStore)> {
    let manifest: Manifest = serde_json::from_reader(ctx.open(MANIFEST, "ingest")?)?;
    for f in &manifest.inputs {
        if sha256_file(&f.path)? != f.sha256 {
            bail!("{} changed since ingest; run `geoscope ingest` again", f.path.display());
        }
    }
    let (records, docs, _) = load_corpus(&ctx.cfg)?;
    Ok((records, docs))
}

#[derive(Serialize)]
struct DatasetsSummary {
    website_rows: usize,
    sentence_rows: usize,
    pairs: usize,
    report: geoscope_core::chunking::DatasetReport,
    score_failures: Vec<(String, String, String)>,
}

fn vendi_of(texts: &[&str], embedder: &dyn geoscope_core::chunking::EmbeddingBackend) -> Result<Option<VendiReport>> {
    if texts.is_empty() {
        return Ok(None);
    }
    let embs = texts.iter().map(|t| embed_unit(embedder, t)).collect::<Result<Vec<_>, _>>()?;
    Ok(Some(vendi_score(&embs, KernelSpec::Cosine)?))
}

pub fn build_datasets_stage(ctx: &Ctx) -> Result<Status> {
    let (records, docs) = load_inputs(ctx)?;
    let b = &ctx.cfg.backends;
    let matcher = backends::embedder(&b.matching_embedder);
    let sim = backends::embedder(&b.similarity_embedder);
    let scorer = backends::token_backend(&b.token_probability, &docs);
    let dcfg = DatasetConfig {
        window: ctx.cfg.chunking.window,
        step: ctx.cfg.chunking.step,
        include_end_only: ctx.cfg.chunking.include_end_only,
        exec: ctx.exec,
    };
    let mut data = build_datasets(&records, &docs, &*matcher, &dcfg);
    let mut failures = score_website_rows(&mut data.website, &*scorer, ctx.exec);
    failures.extend(score_sentence_rows(&mut data.sentence, &*scorer, ctx.exec));
    let pairs = pairwise_similarity(&website_pair_inputs(&data.website), &*sim, ctx.exec)?;

    let mut by_query: BTreeMap<&str, Vec<&WebsiteRow>> = BTreeMap::new();
    for r in &data.website {
        by_query.entry(&r.query_id).or_default().push(r);
    }
    let mut vendi = Vec::new();
    for (q, rows) in &by_query {
        for (tag, keep) in [("all", None), ("cited", Some(1)), ("uncited", Some(0))] {
            let texts: Vec<&str> =
                rows.iter().filter(|r| keep.is_none_or(|k| r.chat_cite == k)).map(|r| r.chunk.text.as_str()).collect();
            if let Some(rep) = vendi_of(&texts, &*sim)? {
                vendi.push((format!("{q}:{tag}"), rep));
            }
        }
    }

    io::write_website_rows(ctx.create(WEBSITE_CSV)?, &data.website)?;
    io::write_sentence_rows(ctx.create(SENTENCE_CSV)?, &data.sentence)?;
    io::write_pair_rows(ctx.create(PAIRS_CSV)?, &pairs)?;
    io::write_vendi(ctx.create("vendi.csv")?, &vendi)?;
    ctx.write_json(
        "datasets_report.json",
        &DatasetsSummary {
            website_rows: data.website.len(),
            sentence_rows: data.sentence.len(),
            pairs: pairs.len(),
            report: data.report,
            score_failures: failures,
        },
    )?;
    Ok(Status::Done)
}

/// One chunk set per query from the website rows, in file order, capped at
/// `experiment.max_chunks` chunks.
fn chunk_sets_from_rows(ctx: &Ctx, records: &[QueryRecord]) -> Result<Vec<ChunkSet>> {
    let rows = io::read_website_rows(ctx.open(WEBSITE_CSV, "build-datasets")?)?;
    let texts: HashMap<&str, &str> = records.iter().map(|r| (r.query_id.as_str(), r.query_text.as_str())).collect();
    let mut sets: Vec<ChunkSet> = Vec::new();
    for r in rows {
        if sets.last().is_none_or(|s| s.query_id != r.query_id) {
            let text = texts.get(r.query_id.as_str()).copied().unwrap_or_default();
            sets.push(ChunkSet::new(r.query_id.clone(), text, Vec::new()));
        }
        let set = sets.last_mut().expect("pushed above");
        if ctx.cfg.experiment.max_chunks.is_none_or(|m| set.original.len() < m) {
            set.original.push(r.chunk);
        }
    }
    Ok(sets)
}

fn write_jsonl<T: Serialize>(ctx: &Ctx, name: &str, items: &[T]) -> Result<()> {
    let mut w = ctx.create(name)?;
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn read_chunk_sets(r: impl BufRead) -> Result<Vec<ChunkSet>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("chunk set line {}", i + 1))?);
    }
    Ok(out)
}

pub fn polish(ctx: &Ctx) -> Result<Status> {
    let (records, docs) = load_inputs(ctx)?;
    let mut sets = chunk_sets_from_rows(ctx, &records)?;
    let scorer = backends::token_backend(&ctx.cfg.backends.token_probability, &docs);
    let (client, retry) = backends::llm_client(&ctx.cfg.llm, scorer.clone(), &docs)?;
    let runner = RagRunner::new(client, &*scorer).with_retry(retry).with_exec(ctx.exec);
    let general = runner.polish_sets(&mut sets, PolishMode::General);
    let objective = runner.polish_sets(&mut sets, PolishMode::Objective);
    write_jsonl(ctx, CHUNKSETS, &sets)?;
    ctx.write_json("polish_report.json", &serde_json::json!({ "general": general, "objective": objective }))?;
    Ok(Status::Done)
}

pub fn rag_run(ctx: &Ctx) -> Result<Status> {
    let (records, docs) = load_inputs(ctx)?;
    let sets = if ctx.path(CHUNKSETS).is_file() {
        read_chunk_sets(ctx.open(CHUNKSETS, "polish")?)?
    } else {
        chunk_sets_from_rows(ctx, &records)?
    };
    let conditions = &ctx.cfg.experiment.conditions;
    for c in conditions {
        if let Some(s) = sets.iter().find(|s| s.variant(*c).is_none()) {
            bail!("query {} has no {} chunks; run `geoscope polish` first", s.query_id, c.as_str());
        }
    }
    let scorer = backends::token_backend(&ctx.cfg.backends.token_probability, &docs);
    let (client, retry) = backends::llm_client(&ctx.cfg.llm, scorer.clone(), &docs)?;
    let runner = RagRunner::new(client, &*scorer).with_retry(retry).with_exec(ctx.exec);
    let ecfg = ExperimentConfig {
        conditions: conditions.clone(),
        base_seed: seeds::derive(ctx.cfg.seed, "rag"),
        independent_orders: ctx.cfg.experiment.independent_orders,
    };
    let report = runner.run_condition_experiment(&sets, &ecfg);
    let mut w = ctx.create(LEDGER)?;
    write_ledger(&mut w, &report.results)?;
    w.flush()?;
    write_jsonl(ctx, RAG_CHUNKSETS, &sets)?;
    io::write_rag_cites(ctx.create("rag_cites.csv")?, &report.results)?;
    io::write_rag_outcomes(ctx.create("rag_outcomes.csv")?, &report.results)?;
    ctx.write_json("rag_failures.json", &report.failures)?;
    if !report.failures.is_empty() {
        log::warn!("{} RAG runs failed; see rag_failures.json", report.failures.len());
    }
    Ok(Status::Done)
}

#[derive(Debug, Clone, Serialize)]
struct AnalysisError {
    spec: String,
    error: String,
}

#[derive(Debug, Clone, Serialize)]
struct TestRecord {
    test: String,
    statistic: f64,
    p: f64,
    n_a: usize,
    n_b: usize,
}

/// Collects fitted columns grouped into tables, plus failures.
#[derive(Default)]
struct Results {
    tables: Vec<(String, Vec<Column>)>,
    errors: Vec<AnalysisError>,
    non_converged: usize,
}

impl Results {
    fn table(&mut self, title: &str) {
        self.tables.push((title.to_string(), Vec::new()));
    }

    fn add(&mut self, id: String, fit: Result<FitResult, EconError>, notes: &[(&str, String)]) {
        match fit {
            Ok(f) => {
                if !f.converged {
                    self.non_converged += 1;
                }
                let mut col = Column::new(id, f);
                for (k, v) in notes {
                    col = col.note(*k, v.clone());
                }
                self.tables.last_mut().expect("table opened").1.push(col);
            }
            Err(e) => {
                if matches!(e, EconError::Separation { .. }) {
                    self.non_converged += 1;
                }
                self.errors.push(AnalysisError { spec: id, error: e.to_string() });
            }
        }
    }
}

fn variants(ctx: &Ctx) -> Vec<SampleVariant> {
    ctx.cfg
        .analysis
        .variants
        .iter()
        .map(|v| match v {
            VariantName::Full => SampleVariant::Full,
            VariantName::TrimTopPpl => SampleVariant::TrimTopPpl,
            VariantName::BalancedPerQuery => {
                SampleVariant::BalancedPerQuery { seed: seeds::derive(ctx.cfg.seed, "balanced") }
            }
        })
        .collect()
}

fn fit(model: ModelName, d: Result<DesignMatrix, EconError>) -> Result<FitResult, EconError> {
    let d = d?;
    match model {
        ModelName::Lpm => lpm_fe(&d),
        ModelName::Logit => logit_fe(&d, LogitOptions::default()),
    }
}

fn model_id(m: ModelName) -> &'static str {
    match m {
        ModelName::Lpm => "lpm",
        ModelName::Logit => "logit",
    }
}

fn short(v: &SampleVariant) -> &'static str {
    match v {
        SampleVariant::Full => "full",
        SampleVariant::TrimTopPpl => "trim",
        SampleVariant::BalancedPerQuery { .. } => "balanced",
        SampleVariant::CitedOnly => "cited",
        SampleVariant::CrossCategory { .. } => "cross",
    }
}

fn citation_specs(res: &mut Results, ctx: &Ctx, obs: &[CitationObs], outcome: &str) {
    for v in variants(ctx) {
        for &m in &ctx.cfg.analysis.models {
            let id = format!("{}_{}_{}", model_id(m), outcome.to_ascii_lowercase(), short(&v));
            res.add(id, fit(m, citation_design(obs, outcome, &[v])), &[("Sample", v.name())]);
        }
    }
}

fn similarity_specs(res: &mut Results, ctx: &Ctx, pairs: &[PairObs], prefix: &str) {
    for v in variants(ctx) {
        for cross in [true, false] {
            let mut vs = vec![v];
            if !cross {
                vs.push(SampleVariant::CrossCategory { include: false });
            }
            let id = format!("{prefix}_similarity_{}{}", short(&v), if cross { "" } else { "_nocross" });
            let notes = [("Sample", v.name()), ("Cross-Category", if cross { "Yes" } else { "No" }.to_string())];
            res.add(id, pair_design(pairs, "BothCite", &vs).and_then(|d| lpm_fe(&d)), &notes);
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-query mean similarity of both-cited pairs against the other pairs,
/// over queries that have both kinds.
fn similarity_ttest(pairs: &[PairObs]) -> Result<TestRecord, EconError> {
    let mut by_query: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in pairs {
        let e = by_query.entry(&p.query_id).or_default();
        if p.both_cite() {
            e.0.push(p.similarity)
        } else {
            e.1.push(p.similarity)
        }
    }
    let (a, b): (Vec<f64>, Vec<f64>) =
        by_query.values().filter(|(c, o)| !c.is_empty() && !o.is_empty()).map(|(c, o)| (mean(c), mean(o))).unzip();
    let t = paired_ttest(&a, &b)?;
    Ok(TestRecord {
        test: "paired_t_similarity_cited_vs_other".into(),
        statistic: t.t,
        p: t.p,
        n_a: a.len(),
        n_b: b.len(),
    })
}

fn ppl_ks(obs: &[CitationObs]) -> Result<TestRecord, EconError> {
    let a: Vec<f64> = obs.iter().filter(|o| o.cited).map(|o| o.ppl).collect();
    let b: Vec<f64> = obs.iter().filter(|o| !o.cited).map(|o| o.ppl).collect();
    let k = ks_test(&a, &b)?;
    Ok(TestRecord { test: "ks_ppl_cited_vs_uncited".into(), statistic: k.d, p: k.p, n_a: a.len(), n_b: b.len() })
}

fn rag_results(ctx: &Ctx) -> Result<Vec<ConditionResult>> {
    let entries = read_ledger(ctx.open(LEDGER, "rag-run")?)?;
    entries
        .iter()
        .map(|e| e.to_result().with_context(|| format!("ledger entry {} {}", e.query_id, e.condition.as_str())))
        .collect()
}

pub fn analyze(ctx: &Ctx) -> Result<Status> {
    let website = io::read_website_rows(ctx.open(WEBSITE_CSV, "build-datasets")?)?;
    let sentence = io::read_sentence_rows(ctx.open(SENTENCE_CSV, "build-datasets")?)?;
    let pair_rows = io::read_pair_rows(ctx.open(PAIRS_CSV, "build-datasets")?)?;
    let mut res = Results::default();
    let mut tests = Vec::new();
    let mut test_errors = Vec::new();

    let chat = website_citation_obs(&website);
    res.table("ChatCite on PPL");
    citation_specs(&mut res, ctx, &chat, "ChatCite");

    let sent: Vec<CitationObs> = sentence
        .iter()
        .filter_map(|r| {
            Some(CitationObs {
                query_id: r.query_id.clone(),
                unit: format!("{}#{}", r.url, r.sentence_id),
                cited: r.sentence_cite == 1,
                ppl: r.ppl?,
                pos: None,
            })
        })
        .collect();
    res.table("SentenceCite on PPL");
    citation_specs(&mut res, ctx, &sent, "SentenceCite");

    let pairs = pair_obs(&pair_rows, None);
    res.table("Similarity on BothCite");
    similarity_specs(&mut res, ctx, &pairs, "website");

    let ranked: Vec<(&WebsiteRow, f64, f64)> =
        website.iter().filter_map(|r| Some((r, f64::from(r.organic_rank?), r.ppl?))).collect();
    res.table("Rank on PPL");
    let design = DesignMatrix::new("Rank", ranked.iter().map(|t| t.1).collect())
        .column("PPL", ranked.iter().map(|t| t.2).collect())
        .groups(ranked.iter().map(|t| t.0.query_id.clone()).collect());
    let fit_rank = if ranked.is_empty() { Err(EconError::EmptySample) } else { lpm_fe(&design) };
    res.add("lpm_rank_full".into(), fit_rank, &[("Sample", "full".into())]);

    match similarity_ttest(&pairs) {
        Ok(t) => tests.push(t),
        Err(e) => test_errors.push(AnalysisError { spec: "paired_t_similarity".into(), error: e.to_string() }),
    }
    match ppl_ks(&chat) {
        Ok(t) => tests.push(t),
        Err(e) => test_errors.push(AnalysisError { spec: "ks_ppl".into(), error: e.to_string() }),
    }

    if ctx.path(LEDGER).is_file() {
        let (_, docs) = load_inputs(ctx)?;
        let scorer = backends::token_backend(&ctx.cfg.backends.token_probability, &docs);
        let sim = backends::embedder(&ctx.cfg.backends.similarity_embedder);
        let sets = read_chunk_sets(ctx.open(RAG_CHUNKSETS, "rag-run")?)?;
        let results = rag_results(ctx)?;
        let original: Vec<ConditionResult> =
            results.iter().filter(|r| r.condition == Condition::Original).cloned().collect();
        if !original.is_empty() {
            let obs = rag_citation_obs(&sets, &original, &*scorer, ctx.exec)?;
            res.table("RAGCite on PPL and position");
            citation_specs(&mut res, ctx, &obs, "RAGCite");
        }
        let rag_pairs = rag_pair_obs(&sets, &results, &*sim, ctx.exec)?;
        let several = results.iter().any(|r| r.condition != Condition::Original);
        if several {
            res.table("Similarity on condition");
            for v in [SampleVariant::Full, SampleVariant::CitedOnly] {
                let id = format!("rag_condition_similarity_{}", short(&v));
                res.add(id, condition_pair_design(&rag_pairs, &[v]).and_then(|d| lpm_fe(&d)), &[("Sample", v.name())]);
            }
            res.table("Answer outcomes on condition");
            let outcomes = outcome_obs(&results);
            for (var, id) in [(OutcomeVar::NumCite, "ols_numcite"), (OutcomeVar::OutputPpl, "ols_outputppl")] {
                res.add(id.into(), outcome_design(&outcomes, var).and_then(|d| ols_robust(&d, true)), &[]);
            }
        } else {
            res.table("RAG similarity on BothCite");
            let id = "rag_similarity_full".to_string();
            res.add(id, pair_design(&rag_pairs, "BothCite", &[SampleVariant::Full]).and_then(|d| lpm_fe(&d)), &[]);
        }
    }

    let all: Vec<Column> = res.tables.iter().flat_map(|(_, c)| c.iter().cloned()).collect();
    let mut w = ctx.create("results.csv")?;
    write_results_csv(&mut w, &all)?;
    w.flush()?;
    let mut text = String::new();
    for (title, cols) in &res.tables {
        if !cols.is_empty() {
            text.push_str(&render_table(title, cols));
            text.push('\n');
        }
    }
    fs::write(ctx.path("tables.txt"), &text)?;
    io::write_records(ctx.create("tests.csv")?, &tests)?;
    res.errors.extend(test_errors);
    ctx.write_json("analysis_errors.json", &res.errors)?;
    if res.non_converged > 0 {
        return Ok(Status::NonConverged(res.non_converged));
    }
    Ok(Status::Done)
}

fn read_optional(ctx: &Ctx, name: &str) -> Option<String> {
    fs::read_to_string(ctx.path(name)).ok()
}

pub fn report(ctx: &Ctx) -> Result<Status> {
    let manifest: Manifest = serde_json::from_reader(ctx.open(MANIFEST, "ingest")?)?;
    let tables = fs::read_to_string(ctx.require("tables.txt", "analyze")?)?;
    let mut out = String::new();
    out.push_str(&format!("run {}\n\n", ctx.dir.display()));
    out.push_str(&format!("config hash: {}\n", manifest.config_hash));
    for f in &manifest.inputs {
        out.push_str(&format!("{}: {} (sha256 {})\n", f.role, f.path.display(), f.sha256));
    }
    out.push_str(&format!("\ningest summary\n{}\n", serde_json::to_string_pretty(&manifest.summary)?));
    for (name, title) in [
        ("datasets_report.json", "datasets"),
        ("polish_report.json", "polishing"),
        ("rag_failures.json", "failed RAG runs"),
        ("analysis_errors.json", "estimates that could not be computed"),
    ] {
        if let Some(s) = read_optional(ctx, name) {
            out.push_str(&format!("\n{title}\n{s}"));
        }
    }
    out.push('\n');
    out.push_str(&tables);
    if let Some(t) = read_optional(ctx, "tests.csv") {
        out.push_str("\ntests\n");
        out.push_str(&t);
    }
    fs::write(ctx.path("report.txt"), &out)?;
    print!("{out}");
    Ok(Status::Done)
}
