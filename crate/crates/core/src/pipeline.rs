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

//! Glue between dataset rows, RAG results and regression samples.

use crate::chunking::{EmbeddingBackend, SentenceWebsiteRow, WebsiteRow};
use crate::econ::{CitationObs, OutcomeObs, PairObs};
use crate::metrics::{pairwise_similarity, perplexity, MetricError, PairInput, PairRow, TokenProbabilityBackend};
use crate::par::Exec;
use crate::ragx::{ChunkSet, ConditionResult};

/// A row that could not be scored, as `(query_id, url, error)`.
pub type ScoreFailure = (String, String, String);

fn score_texts<B: TokenProbabilityBackend + ?Sized>(
    texts: &[&str],
    scorer: &B,
    exec: Exec,
) -> Vec<Result<f64, MetricError>> {
    exec.map(texts, |t| perplexity(scorer, t).map(|r| r.ppl))
}

/// Fill `ppl` on every website row. Rows that fail keep `None`.
pub fn score_website_rows<B: TokenProbabilityBackend + ?Sized>(
    rows: &mut [WebsiteRow],
    scorer: &B,
    exec: Exec,
) -> Vec<ScoreFailure> {
    let texts: Vec<&str> = rows.iter().map(|r| r.chunk.text.as_str()).collect();
    let scores = score_texts(&texts, scorer, exec);
    let mut failed = Vec::new();
    for (row, s) in rows.iter_mut().zip(scores) {
        match s {
            Ok(p) => row.ppl = Some(p),
            Err(e) => failed.push((row.query_id.clone(), row.url.clone(), e.to_string())),
        }
    }
    failed
}

pub fn score_sentence_rows<B: TokenProbabilityBackend + ?Sized>(
    rows: &mut [SentenceWebsiteRow],
    scorer: &B,
    exec: Exec,
) -> Vec<ScoreFailure> {
    let texts: Vec<&str> = rows.iter().map(|r| r.chunk.text.as_str()).collect();
    let scores = score_texts(&texts, scorer, exec);
    let mut failed = Vec::new();
    for (row, s) in rows.iter_mut().zip(scores) {
        match s {
            Ok(p) => row.ppl = Some(p),
            Err(e) => failed.push((row.query_id.clone(), row.url.clone(), e.to_string())),
        }
    }
    failed
}

/// Chat-citation observations from scored website rows; unscored rows are
/// skipped.
pub fn website_citation_obs(rows: &[WebsiteRow]) -> Vec<CitationObs> {
    rows.iter()
        .filter_map(|r| {
            Some(CitationObs {
                query_id: r.query_id.clone(),
                unit: r.url.clone(),
                cited: r.chat_cite == 1,
                ppl: r.ppl?,
                pos: None,
            })
        })
        .collect()
}

pub fn website_pair_inputs(rows: &[WebsiteRow]) -> Vec<PairInput<'_>> {
    rows.iter()
        .map(|r| PairInput {
            query_id: &r.query_id,
            url: &r.url,
            text: &r.chunk.text,
            cited: r.chat_cite == 1,
            ppl: r.ppl,
        })
        .collect()
}

pub fn pair_obs(rows: &[PairRow], condition: Option<u8>) -> Vec<PairObs> {
    rows.iter()
        .map(|r| PairObs {
            query_id: r.query_id.clone(),
            unit_a: r.url_a.clone(),
            unit_b: r.url_b.clone(),
            similarity: r.similarity,
            cite_a: r.cite_a == 1,
            cite_b: r.cite_b == 1,
            ppl_a: r.ppl_a,
            ppl_b: r.ppl_b,
            condition,
        })
        .collect()
}

fn find_set<'a>(sets: &'a [ChunkSet], query_id: &str) -> Option<&'a ChunkSet> {
    sets.iter().find(|s| s.query_id == query_id)
}

/// RAG-citation observations: one per chunk per run, with the PPL of the
/// chunk text shown in that condition and its 1-based source position.
pub fn rag_citation_obs<B: TokenProbabilityBackend + ?Sized>(
    sets: &[ChunkSet],
    results: &[ConditionResult],
    scorer: &B,
    exec: Exec,
) -> Result<Vec<CitationObs>, MetricError> {
    let per_run = exec.try_map(results, |res| {
        let Some(chunks) = find_set(sets, &res.query_id).and_then(|s| s.variant(res.condition)) else {
            return Ok(Vec::new());
        };
        res.outcomes
            .iter()
            .map(|o| {
                let c = &chunks[o.chunk];
                Ok(CitationObs {
                    query_id: res.query_id.clone(),
                    unit: c.url.clone(),
                    cited: o.rag_cite == 1,
                    ppl: perplexity(scorer, &c.text)?.ppl,
                    pos: Some(o.position as f64),
                })
            })
            .collect::<Result<Vec<_>, MetricError>>()
    })?;
    Ok(per_run.into_iter().flatten().collect())
}

/// Within-query chunk pairs for each RAG run, tagged with the condition.
pub fn rag_pair_obs<E: EmbeddingBackend + ?Sized>(
    sets: &[ChunkSet],
    results: &[ConditionResult],
    embedder: &E,
    exec: Exec,
) -> Result<Vec<PairObs>, MetricError> {
    let mut out = Vec::new();
    for res in results {
        let Some(chunks) = find_set(sets, &res.query_id).and_then(|s| s.variant(res.condition)) else {
            continue;
        };
        let inputs: Vec<PairInput<'_>> = res
            .outcomes
            .iter()
            .map(|o| PairInput {
                query_id: &res.query_id,
                url: &chunks[o.chunk].url,
                text: &chunks[o.chunk].text,
                cited: o.rag_cite == 1,
                ppl: None,
            })
            .collect();
        let rows = pairwise_similarity(&inputs, embedder, exec)?;
        out.extend(pair_obs(&rows, Some(res.condition.code())));
    }
    Ok(out)
}

pub fn outcome_obs(results: &[ConditionResult]) -> Vec<OutcomeObs> {
    results
        .iter()
        .map(|r| OutcomeObs {
            query_id: r.query_id.clone(),
            condition: r.condition.code(),
            num_cite: r.num_cite as f64,
            output_ppl: r.output_ppl,
        })
        .collect()
}
