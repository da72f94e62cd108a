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

//! RAG citation runs and the three-condition polishing experiment.

pub mod doubles;
mod ledger;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunking::Chunk;
use crate::citeparse::{
    assemble_source_document, map_citations, permutation, render_in_order, ChunkOutcome, CiteError, Lint, RagAnswer,
    SourceDoc,
};
use crate::error::BackendError;
use crate::metrics::{perplexity, MetricError, TokenProbabilityBackend};
use crate::par::Exec;
use crate::seeds;

pub use ledger::{read_ledger, write_ledger, LedgerEntry};

pub const RAG_SYSTEM_PROMPT: &str = "Assume that you are the Google AI Overview generator, a feature integrated into Google Search that provides AI-generated summaries of search results. Please answer the following query based on the website content contained in the attached PDF file. Within the PDF file, there is a list of numbered paragraphs, each of which represents a website's content indicated by a unique ID in the format \"Source 11,\" etc. Please mimic Google AI Overview's answering style. For each sentence, if you can find references from the PDF, cite the specific ID of that website's content. For citations, use the EXACT format: %%%X,Y,Z%%%. Separate multiple source IDs with commas. Do NOT use any other citation format, such as (Source X). Example: \"This is an example statement. %%%1,5,12%%%.\"";

pub const POLISH_PROMPT: &str = "Here is an excerpt from a webpage: '{excerpt}'. Please polish the excerpt so that it is clearer and more engaging. Try to keep the length roughly unchanged. Only return the polished excerpt itself.";

pub const POLISH_OBJECTIVE_PROMPT: &str = "Here is an excerpt from a webpage: '{excerpt}'. Please polish the excerpt so that it is clearer and more engaging. Try to keep the length roughly unchanged. The primary goal is to make this specific excerpt (and, by extension, the overall webpage) more likely to be selected and highlighted by Google Search's AI Overview feature. Only return the polished excerpt itself.";

/// One call to a language model. `attachment` carries a rendered source
/// document for RAG calls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub system_prompt: String,
    pub user_content: String,
    pub attachment: Option<String>,
}

/// A chat-style language model. Implementations enforce their own
/// per-call timeout; the runner uses `max_concurrency` to bound in-flight
/// calls.
pub trait LlmClient: Send + Sync {
    fn generate(&self, request: &LlmRequest) -> Result<String, BackendError>;

    fn max_concurrency(&self) -> usize {
        4
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs(60)
    }
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn generate(&self, request: &LlmRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }
    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
    fn timeout(&self) -> Duration {
        (**self).timeout()
    }
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn generate(&self, request: &LlmRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }
    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
    fn timeout(&self) -> Duration {
        (**self).timeout()
    }
}

impl<T: LlmClient + ?Sized> LlmClient for Arc<T> {
    fn generate(&self, request: &LlmRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }
    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
    fn timeout(&self) -> Duration {
        (**self).timeout()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(500), factor: 2.0 }
    }
}

impl RetryPolicy {
    /// Same attempt count, no sleeping.
    pub fn immediate() -> Self {
        RetryPolicy { base_delay: Duration::ZERO, ..Self::default() }
    }

    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(attempt as i32))
    }
}

/// Call `client`, retrying failures with exponential backoff. Returns the
/// response and the number of attempts used.
pub fn call_with_retry<C: LlmClient + ?Sized>(
    client: &C,
    request: &LlmRequest,
    policy: &RetryPolicy,
) -> Result<(String, u32), (BackendError, u32)> {
    let attempts = policy.max_attempts.max(1);
    let mut last = None;
    for attempt in 0..attempts {
        if attempt > 0 {
            let d = policy.delay(attempt - 1);
            if !d.is_zero() {
                std::thread::sleep(d);
            }
        }
        match client.generate(request) {
            Ok(text) => return Ok((text, attempt + 1)),
            Err(e) => {
                log::warn!("llm call failed (attempt {} of {attempts}): {e}", attempt + 1);
                last = Some(e);
            }
        }
    }
    Err((last.expect("at least one attempt"), attempts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Original,
    Polished,
    ObjectivePolished,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Original, Condition::Polished, Condition::ObjectivePolished];

    pub fn code(self) -> u8 {
        match self {
            Condition::Original => 0,
            Condition::Polished => 1,
            Condition::ObjectivePolished => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Condition::ALL.into_iter().find(|c| c.code() == code)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Original => "original",
            Condition::Polished => "polished",
            Condition::ObjectivePolished => "objective_polished",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s || c.code().to_string() == s)
            .ok_or_else(|| format!("unknown condition {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolishMode {
    General,
    Objective,
}

impl PolishMode {
    pub fn condition(self) -> Condition {
        match self {
            PolishMode::General => Condition::Polished,
            PolishMode::Objective => Condition::ObjectivePolished,
        }
    }
}

pub fn polish_prompt(mode: PolishMode, excerpt: &str) -> String {
    let template = match mode {
        PolishMode::General => POLISH_PROMPT,
        PolishMode::Objective => POLISH_OBJECTIVE_PROMPT,
    };
    template.replace("{excerpt}", excerpt)
}

/// The excerpt and mode of a polishing prompt built by [`polish_prompt`].
pub fn parse_polish_prompt(prompt: &str) -> Option<(PolishMode, &str)> {
    let (head, _) = POLISH_PROMPT.split_once("{excerpt}")?;
    let rest = prompt.strip_prefix(head)?;
    for mode in [PolishMode::Objective, PolishMode::General] {
        let full = match mode {
            PolishMode::General => POLISH_PROMPT,
            PolishMode::Objective => POLISH_OBJECTIVE_PROMPT,
        };
        let (_, tail) = full.split_once("{excerpt}")?;
        if let Some(excerpt) = rest.strip_suffix(tail) {
            return Some((mode, excerpt));
        }
    }
    None
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RagError {
    #[error("query {query_id} has no chunks")]
    EmptyChunks { query_id: String },
    #[error("chunk {index} of {url} has empty text")]
    EmptyChunk { url: String, index: usize },
    #[error("client failed after {attempts} attempts: {source}")]
    Client {
        attempts: u32,
        #[source]
        source: BackendError,
    },
    #[error("unparseable answer: {0}")]
    Parse(#[from] CiteError),
    #[error("output perplexity: {0}")]
    Metric(#[from] MetricError),
    #[error("query {query_id} has no {} variant", condition.as_str())]
    MissingVariant { query_id: String, condition: Condition },
}

/// A polished chunk: provenance unchanged, text replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolishOutcome {
    pub chunk: Chunk,
    /// The client returned nothing and the original text was kept.
    pub kept_original: bool,
    /// Polished length over original length, in characters.
    pub length_ratio: f64,
    pub length_lint: bool,
}

/// A query's chunks with optional polished variants. Variants must list
/// the same chunks in the same order as `original`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkSet {
    pub query_id: String,
    pub query_text: String,
    pub original: Vec<Chunk>,
    pub polished: Option<Vec<Chunk>>,
    pub objective: Option<Vec<Chunk>>,
}

impl ChunkSet {
    pub fn new(query_id: impl Into<String>, query_text: impl Into<String>, original: Vec<Chunk>) -> Self {
        ChunkSet { query_id: query_id.into(), query_text: query_text.into(), original, polished: None, objective: None }
    }

    pub fn variant(&self, condition: Condition) -> Option<&[Chunk]> {
        match condition {
            Condition::Original => Some(&self.original),
            Condition::Polished => self.polished.as_deref(),
            Condition::ObjectivePolished => self.objective.as_deref(),
        }
    }

    fn variant_mut(&mut self, mode: PolishMode) -> &mut Option<Vec<Chunk>> {
        match mode {
            PolishMode::General => &mut self.polished,
            PolishMode::Objective => &mut self.objective,
        }
    }
}

/// The outcome of one RAG call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub query_id: String,
    pub condition: Condition,
    pub seed: u64,
    /// `order[k - 1]` is the chunk shown as `Source k`.
    pub order: Vec<usize>,
    /// One row per chunk in chunk-set order.
    pub outcomes: Vec<ChunkOutcome>,
    /// Distinct in-range cited sources.
    pub num_cite: usize,
    /// Perplexity of the marker-free answer; `None` when it has no tokens.
    pub output_ppl: Option<f64>,
    pub answer: RagAnswer,
    pub lints: Vec<Lint>,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub query_id: String,
    pub condition: Condition,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub conditions: Vec<Condition>,
    pub base_seed: u64,
    /// Draw a fresh chunk order per condition instead of sharing one per
    /// query.
    pub independent_orders: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { conditions: vec![Condition::Original], base_seed: 0, independent_orders: false }
    }
}

impl ExperimentConfig {
    /// Seed of the chunk order for a (query, condition).
    pub fn seed_for(&self, query_id: &str, condition: Condition) -> u64 {
        let q = seeds::derive(self.base_seed, query_id);
        if self.independent_orders {
            seeds::derive(q, condition.as_str())
        } else {
            q
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Ordered by query (input order) then condition.
    pub results: Vec<ConditionResult>,
    pub failures: Vec<FailedRun>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolishReport {
    pub polished: usize,
    pub kept_original: usize,
    pub length_lints: usize,
    /// Queries whose variant could not be produced, with the error.
    pub failures: Vec<(String, String)>,
}

/// Couples an LLM client with the scorer used for answer perplexity.
pub struct RagRunner<C, S> {
    pub client: C,
    pub scorer: S,
    pub retry: RetryPolicy,
    pub exec: Exec,
}

impl<C: LlmClient, S: TokenProbabilityBackend> RagRunner<C, S> {
    pub fn new(client: C, scorer: S) -> Self {
        RagRunner { client, scorer, retry: RetryPolicy::default(), exec: Exec::default() }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// Send `chunks` in the order given by `doc` and score the answer.
    pub fn run_with_document(
        &self,
        query_id: &str,
        query_text: &str,
        doc: &SourceDoc,
        condition: Condition,
    ) -> Result<ConditionResult, RagError> {
        let request = LlmRequest {
            system_prompt: RAG_SYSTEM_PROMPT.to_string(),
            user_content: query_text.to_string(),
            attachment: Some(doc.rendered_text.clone()),
        };
        let (raw, attempts) = call_with_retry(&self.client, &request, &self.retry)
            .map_err(|(source, attempts)| RagError::Client { attempts, source })?;
        let answer = RagAnswer::parse(&raw)?;
        let map = map_citations(&answer, doc);
        let output_ppl = match perplexity(&self.scorer, &answer.answer_body) {
            Ok(r) => Some(r.ppl),
            Err(MetricError::EmptyText | MetricError::NoTokens) => None,
            Err(e) => return Err(e.into()),
        };
        let mut lints = answer.lints.clone();
        lints.extend(map.lints);
        Ok(ConditionResult {
            query_id: query_id.to_string(),
            condition,
            seed: doc.seed,
            order: doc.order.clone(),
            outcomes: map.outcomes,
            num_cite: map.num_cite,
            output_ppl,
            answer,
            lints,
            attempts,
        })
    }

    /// One RAG call over a seeded random ordering of `chunks`.
    pub fn run_rag_query(
        &self,
        query_id: &str,
        query_text: &str,
        chunks: &[Chunk],
        condition: Condition,
        seed: u64,
    ) -> Result<ConditionResult, RagError> {
        if chunks.is_empty() {
            return Err(RagError::EmptyChunks { query_id: query_id.to_string() });
        }
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        let doc = assemble_source_document(&texts, seed)?;
        self.run_with_document(query_id, query_text, &doc, condition)
    }

    /// Polish one chunk. An empty response keeps the original text.
    pub fn polish_chunk(&self, chunk: &Chunk, mode: PolishMode) -> Result<PolishOutcome, RagError> {
        if chunk.text.trim().is_empty() {
            return Err(RagError::EmptyChunk { url: chunk.url.clone(), index: chunk.index });
        }
        let request = LlmRequest {
            system_prompt: polish_prompt(mode, &chunk.text),
            user_content: String::new(),
            attachment: None,
        };
        let (raw, _) = call_with_retry(&self.client, &request, &self.retry)
            .map_err(|(source, attempts)| RagError::Client { attempts, source })?;
        let text = raw.trim();
        let kept_original = text.is_empty();
        if kept_original {
            log::warn!("empty polish response for {} chunk {}; keeping original", chunk.url, chunk.index);
        }
        // an unchanged excerpt keeps its surrounding whitespace
        let new_text = if kept_original || text == chunk.text.trim() { chunk.text.clone() } else { text.to_string() };
        let length_ratio = new_text.chars().count() as f64 / chunk.text.chars().count() as f64;
        let length_lint = !(0.5..=2.0).contains(&length_ratio);
        Ok(PolishOutcome { chunk: Chunk { text: new_text, ..chunk.clone() }, kept_original, length_ratio, length_lint })
    }

    /// Fill the `mode` variant of every set. A set whose chunks cannot all
    /// be polished keeps no variant for that mode.
    pub fn polish_sets(&self, sets: &mut [ChunkSet], mode: PolishMode) -> PolishReport {
        let jobs: Vec<(usize, usize)> =
            sets.iter().enumerate().flat_map(|(s, set)| (0..set.original.len()).map(move |c| (s, c))).collect();
        let shared: &[ChunkSet] = sets;
        let outcomes = self.exec.map_bounded(self.client.max_concurrency(), &jobs, |&(s, c)| {
            self.polish_chunk(&shared[s].original[c], mode)
        });
        let mut report = PolishReport::default();
        let mut per_set: BTreeMap<usize, Result<Vec<Chunk>, String>> = BTreeMap::new();
        for (&(s, _), out) in jobs.iter().zip(outcomes) {
            let entry = per_set.entry(s).or_insert_with(|| Ok(Vec::new()));
            match out {
                Ok(o) => {
                    report.polished += 1;
                    report.kept_original += usize::from(o.kept_original);
                    report.length_lints += usize::from(o.length_lint);
                    if let Ok(v) = entry {
                        v.push(o.chunk);
                    }
                }
                Err(e) => {
                    if entry.is_ok() {
                        *entry = Err(e.to_string());
                    }
                }
            }
        }
        for (s, res) in per_set {
            match res {
                Ok(chunks) => *sets[s].variant_mut(mode) = Some(chunks),
                Err(e) => {
                    *sets[s].variant_mut(mode) = None;
                    report.failures.push((sets[s].query_id.clone(), e));
                }
            }
        }
        report
    }

    /// Run every requested condition for every set. Within a query all
    /// conditions share one chunk order unless `independent_orders` is
    /// set. Failed calls are reported, never partially recorded.
    pub fn run_condition_experiment(&self, sets: &[ChunkSet], cfg: &ExperimentConfig) -> ExperimentReport {
        let jobs: Vec<(usize, Condition)> =
            (0..sets.len()).flat_map(|s| cfg.conditions.iter().map(move |&c| (s, c))).collect();
        let outs = self.exec.map_bounded(self.client.max_concurrency(), &jobs, |&(s, cond)| {
            let set = &sets[s];
            let chunks = set
                .variant(cond)
                .ok_or_else(|| RagError::MissingVariant { query_id: set.query_id.clone(), condition: cond })?;
            if chunks.is_empty() {
                return Err(RagError::EmptyChunks { query_id: set.query_id.clone() });
            }
            let seed = cfg.seed_for(&set.query_id, cond);
            let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
            let doc = render_in_order(&texts, permutation(texts.len(), seed), seed)?;
            self.run_with_document(&set.query_id, &set.query_text, &doc, cond)
        });
        let mut report = ExperimentReport::default();
        for (&(s, cond), out) in jobs.iter().zip(outs) {
            match out {
                Ok(r) => report.results.push(r),
                Err(e) => report.failures.push(FailedRun {
                    query_id: sets[s].query_id.clone(),
                    condition: cond,
                    error: e.to_string(),
                }),
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::doubles::*;
    use super::*;
    use crate::metrics::reference::ConstantProbability;

    fn chunks(texts: &[&str]) -> Vec<Chunk> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Chunk {
                url: format!("https://site{i}.test/"),
                start: 0,
                end: t.chars().count(),
                index: 0,
                text: t.to_string(),
            })
            .collect()
    }

    fn runner<C: LlmClient>(c: C) -> RagRunner<C, ConstantProbability> {
        RagRunner::new(c, ConstantProbability::new(0.5)).with_retry(RetryPolicy::immediate())
    }

    #[test]
    fn prompt_templates_round_trip() {
        for mode in [PolishMode::General, PolishMode::Objective] {
            let p = polish_prompt(mode, "It's a test.");
            assert_eq!(parse_polish_prompt(&p), Some((mode, "It's a test.")));
        }
        assert!(POLISH_OBJECTIVE_PROMPT.contains("The primary goal is"));
        assert!(RAG_SYSTEM_PROMPT.contains("%%%X,Y,Z%%%"));
    }

    #[test]
    fn fixed_citer_always_position_one() {
        let r = runner(FixedCiteClient::new(vec![1]));
        let res = r.run_rag_query("q", "what", &chunks(&["a b", "c d", "e f"]), Condition::Original, 3).unwrap();
        let mut by_pos: Vec<(usize, u8)> = res.outcomes.iter().map(|o| (o.position, o.rag_cite)).collect();
        by_pos.sort();
        assert_eq!(by_pos, vec![(1, 1), (2, 0), (3, 0)]);
        assert_eq!(res.num_cite, 1);
        assert!(res.output_ppl.is_some());
    }

    #[test]
    fn no_markers_means_no_citations() {
        let r = runner(NoMarkerClient);
        let res = r.run_rag_query("q", "what", &chunks(&["a", "b"]), Condition::Original, 0).unwrap();
        assert_eq!(res.num_cite, 0);
        assert!(res.outcomes.iter().all(|o| o.rag_cite == 0));
    }

    #[test]
    fn retries_then_succeeds_or_fails_whole() {
        let r = runner(FlakyClient::new(FixedCiteClient::new(vec![1]), 2));
        let res = r.run_rag_query("q", "x", &chunks(&["a"]), Condition::Original, 0).unwrap();
        assert_eq!(res.attempts, 3);

        let r = runner(FlakyClient::new(FixedCiteClient::new(vec![1]), 3));
        let err = r.run_rag_query("q", "x", &chunks(&["a"]), Condition::Original, 0).unwrap_err();
        assert!(matches!(err, RagError::Client { attempts: 3, .. }));
    }

    #[test]
    fn polish_preserves_provenance() {
        let c = Chunk { url: "u".into(), start: 16, end: 30, index: 1, text: "Hello World Again".into() };
        let echo = runner(EchoClient).polish_chunk(&c, PolishMode::General).unwrap();
        assert_eq!(echo.chunk, c);
        let low = runner(LowercaseClient).polish_chunk(&c, PolishMode::Objective).unwrap();
        assert_eq!(low.chunk.text, "hello world again");
        assert_eq!((low.chunk.url.as_str(), low.chunk.start, low.chunk.end, low.chunk.index), ("u", 16, 30, 1));
    }

    #[test]
    fn empty_polish_keeps_original() {
        let c = Chunk { url: "u".into(), start: 0, end: 5, index: 0, text: "hello".into() };
        let out = runner(EmptyClient).polish_chunk(&c, PolishMode::General).unwrap();
        assert!(out.kept_original);
        assert_eq!(out.chunk.text, "hello");
    }

    #[test]
    fn conditions_share_order_per_query() {
        let mut sets = vec![
            ChunkSet::new("q1", "first", chunks(&["one two", "three four", "five six", "seven"])),
            ChunkSet::new("q2", "second", chunks(&["alpha", "beta", "gamma"])),
        ];
        let r = runner(FixedCiteClient::new(vec![2]));
        r.polish_sets(&mut sets, PolishMode::General);
        let r2 = runner(LowercaseClient);
        r2.polish_sets(&mut sets, PolishMode::Objective);
        let cfg = ExperimentConfig { conditions: Condition::ALL.to_vec(), base_seed: 5, independent_orders: false };
        let rep = r.run_condition_experiment(&sets, &cfg);
        assert_eq!(rep.results.len(), 6);
        assert!(rep.failures.is_empty());
        for q in ["q1", "q2"] {
            let orders: Vec<&Vec<usize>> = rep.results.iter().filter(|x| x.query_id == q).map(|x| &x.order).collect();
            assert!(orders.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn missing_variant_is_a_failure() {
        let sets = vec![ChunkSet::new("q", "x", chunks(&["a", "b"]))];
        let cfg = ExperimentConfig { conditions: vec![Condition::Original, Condition::Polished], ..Default::default() };
        let rep = runner(FixedCiteClient::new(vec![1])).run_condition_experiment(&sets, &cfg);
        assert_eq!(rep.results.len(), 1);
        assert_eq!(rep.failures.len(), 1);
        assert_eq!(rep.failures[0].condition, Condition::Polished);
    }

    #[test]
    fn condition_codes() {
        for c in Condition::ALL {
            assert_eq!(Condition::from_code(c.code()), Some(c));
            assert_eq!(c.as_str().parse::<Condition>(), Ok(c));
        }
    }
}
