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

//! Deterministic in-process clients for tests and offline runs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{parse_polish_prompt, LlmClient, LlmRequest};
use crate::citeparse::{parse_source_document, render_answer, CitedSentence};
use crate::error::BackendError;
use crate::metrics::{perplexity, TokenProbabilityBackend};
use crate::seeds;

/// Polishing returns the excerpt unchanged; RAG calls return the query
/// text without citations.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoClient;

impl LlmClient for EchoClient {
    fn generate(&self, req: &LlmRequest) -> Result<String, BackendError> {
        Ok(match parse_polish_prompt(&req.system_prompt) {
            Some((_, excerpt)) => excerpt.to_string(),
            None => req.user_content.clone(),
        })
    }
}

/// Like [`EchoClient`] but lowercases its output.
#[derive(Debug, Clone, Copy, Default)]
pub struct LowercaseClient;

impl LlmClient for LowercaseClient {
    fn generate(&self, req: &LlmRequest) -> Result<String, BackendError> {
        EchoClient.generate(req).map(|s| s.to_lowercase())
    }
}

/// Answers every RAG call with one sentence citing a fixed id set; echoes
/// polishing prompts.
#[derive(Debug, Clone, Default)]
pub struct FixedCiteClient {
    pub ids: Vec<u32>,
}

impl FixedCiteClient {
    pub fn new(ids: Vec<u32>) -> Self {
        FixedCiteClient { ids }
    }
}

impl LlmClient for FixedCiteClient {
    fn generate(&self, req: &LlmRequest) -> Result<String, BackendError> {
        if let Some((_, excerpt)) = parse_polish_prompt(&req.system_prompt) {
            return Ok(excerpt.to_string());
        }
        let ids: Vec<String> = self.ids.iter().map(u32::to_string).collect();
        Ok(format!("The sources answer the question. %%%{}%%%", ids.join(",")))
    }
}

/// Answers without any citation marker.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoMarkerClient;

impl LlmClient for NoMarkerClient {
    fn generate(&self, _req: &LlmRequest) -> Result<String, BackendError> {
        Ok("An answer that cites nothing.".to_string())
    }
}

/// Always returns an empty string.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmptyClient;

impl LlmClient for EmptyClient {
    fn generate(&self, _req: &LlmRequest) -> Result<String, BackendError> {
        Ok(String::new())
    }
}

/// Fails the first `failures` calls, then delegates.
#[derive(Debug)]
pub struct FlakyClient<C> {
    inner: C,
    failures: usize,
    calls: AtomicUsize,
}

impl<C> FlakyClient<C> {
    pub fn new(inner: C, failures: usize) -> Self {
        FlakyClient { inner, failures, calls: AtomicUsize::new(0) }
    }
}

impl<C: LlmClient> LlmClient for FlakyClient<C> {
    fn generate(&self, req: &LlmRequest) -> Result<String, BackendError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) < self.failures {
            return Err(BackendError::Unavailable("injected failure".into()));
        }
        self.inner.generate(req)
    }
}

/// How [`OracleCiter`] decides which sources to cite, given each source's
/// perplexity under its scorer and its 1-based position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CiteRule {
    /// Cite every source with perplexity at or below `max_ppl`.
    Threshold { max_ppl: f64 },
    /// Cite the `k` sources with the lowest perplexity.
    LowestPpl { k: usize },
    /// Cite independently with probability
    /// `sigmoid(intercept + ppl_slope * ppl + pos_slope * pos)`.
    Logistic { intercept: f64, ppl_slope: f64, pos_slope: f64 },
}

/// A RAG stand-in whose citation behaviour is known in advance.
///
/// It scores each `Source k` block of the attachment with `scorer`, picks
/// sources by `rule`, and writes `sentences` sentences of words drawn from
/// `vocabulary`, spreading the cited ids over them. Randomness is seeded
/// from a hash of the request, so identical requests get identical answers.
/// Polishing prompts are echoed.
pub struct OracleCiter {
    pub scorer: Arc<dyn TokenProbabilityBackend>,
    pub rule: CiteRule,
    pub vocabulary: Vec<String>,
    pub sentences: usize,
    pub words_per_sentence: usize,
}

impl OracleCiter {
    pub fn new(scorer: Arc<dyn TokenProbabilityBackend>, rule: CiteRule, vocabulary: Vec<String>) -> Self {
        OracleCiter { scorer, rule, vocabulary, sentences: 4, words_per_sentence: 8 }
    }

    fn sentence<R: Rng>(&self, rng: &mut R) -> String {
        let words: Vec<&str> = (0..self.words_per_sentence.max(1))
            .map(|_| self.vocabulary[rng.random_range(0..self.vocabulary.len())].as_str())
            .collect();
        let mut s = words.join(" ");
        if let Some(first) = s.get(0..1) {
            s.replace_range(0..1, &first.to_uppercase());
        }
        s.push('.');
        s
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LlmClient for OracleCiter {
    fn generate(&self, req: &LlmRequest) -> Result<String, BackendError> {
        if let Some((_, excerpt)) = parse_polish_prompt(&req.system_prompt) {
            return Ok(excerpt.to_string());
        }
        if self.vocabulary.is_empty() {
            return Err(BackendError::Other("oracle citer needs a vocabulary".into()));
        }
        let attachment = req.attachment.as_deref().unwrap_or_default();
        let key = format!("{}\u{0}{}\u{0}{}", req.system_prompt, req.user_content, attachment);
        let mut rng = seeds::rng(seeds::mix(seeds::fnv1a(key.as_bytes())));

        let mut scored = Vec::new();
        for (pos, text) in parse_source_document(attachment) {
            let ppl = perplexity(&*self.scorer, &text).map_err(|e| BackendError::Other(e.to_string()))?.ppl;
            scored.push((pos, ppl));
        }
        let mut cited: Vec<u32> = match self.rule {
            CiteRule::Threshold { max_ppl } => {
                scored.iter().filter(|(_, p)| *p <= max_ppl).map(|(k, _)| *k as u32).collect()
            }
            CiteRule::LowestPpl { k } => {
                let mut s = scored.clone();
                s.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                s.iter().take(k).map(|(k, _)| *k as u32).collect()
            }
            CiteRule::Logistic { intercept, ppl_slope, pos_slope } => scored
                .iter()
                .filter(|(pos, ppl)| {
                    rng.random::<f64>() < sigmoid(intercept + ppl_slope * ppl + pos_slope * *pos as f64)
                })
                .map(|(k, _)| *k as u32)
                .collect(),
        };
        cited.sort_unstable();

        let n = self.sentences.max(1);
        let mut sentences: Vec<CitedSentence> =
            (0..n).map(|_| CitedSentence { text: self.sentence(&mut rng), ids: Default::default() }).collect();
        for (i, id) in cited.into_iter().enumerate() {
            sentences[i % n].ids.insert(id);
        }
        Ok(render_answer(&sentences))
    }
}
