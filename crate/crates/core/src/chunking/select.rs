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

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{window_chunks, ChunkError, EmbeddedChunks, EmbeddingBackend, DEFAULT_STEP, DEFAULT_WINDOW};
use crate::corpus::{
    collapse_whitespace, label_citations, CitationCategory, CitationLabel, DocumentStore, QueryRecord,
};
use crate::metrics::{embed_unit, UnitVector};
use crate::par::Exec;

/// Which matching target picked a website's representative chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Best (chunk, citing sentence) pair; holds the sentence index.
    Sentence(usize),
    /// Whole overview text.
    Overview,
    /// Query text, used when a listed-only website has no overview text.
    Query,
    /// First chunk containing the organic snippet.
    SnippetContained,
    /// Similarity to the snippet when no chunk contains it.
    SnippetSimilarity,
}

/// One representative chunk per (query, website).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebsiteRow {
    pub query_id: String,
    pub url: String,
    pub category: CitationCategory,
    pub chat_cite: u8,
    pub chunk: super::Chunk,
    pub match_score: f64,
    pub selection: Selection,
    pub organic_rank: Option<u32>,
    pub ppl: Option<f64>,
}

/// One candidate chunk per (citing sentence, website).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceWebsiteRow {
    pub query_id: String,
    pub sentence_id: usize,
    pub url: String,
    pub chunk: super::Chunk,
    pub match_score: f64,
    pub sentence_cite: u8,
    pub ppl: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub window: usize,
    pub step: usize,
    /// Keep queries whose references are listed only at the end in the
    /// website-level dataset.
    pub include_end_only: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, step: DEFAULT_STEP, include_end_only: true, exec: Exec::default() }
    }
}

/// Embedded chunks for every labelled website of a query plus embedded
/// overview sentences, computed once and shared by both selectors.
struct QueryIndex<'r> {
    record: &'r QueryRecord,
    labels: Vec<CitationLabel>,
    docs: HashMap<String, EmbeddedChunks>,
    sentences: Vec<Option<UnitVector>>,
}

impl<'r> QueryIndex<'r> {
    fn build<B: EmbeddingBackend + ?Sized>(
        record: &'r QueryRecord,
        labels: Vec<CitationLabel>,
        store: &DocumentStore,
        backend: &B,
        cfg: &DatasetConfig,
    ) -> Result<Self, ChunkError> {
        let mut docs = HashMap::new();
        for l in &labels {
            let doc = store.get(&l.url).expect("labelled websites have documents");
            let chunks = window_chunks(&doc.url, &doc.text, cfg.window, cfg.step)?;
            docs.insert(l.url.clone(), EmbeddedChunks::new(chunks, backend)?);
        }
        let sentences = record
            .overview_sentences
            .iter()
            .map(|s| {
                if s.cited_urls.is_empty() {
                    return Ok(None);
                }
                embed_unit(backend, &s.text).map(Some).map_err(|source| ChunkError::Embedding {
                    url: s.cited_urls[0].clone(),
                    index: None,
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { record, labels, docs, sentences })
    }

    fn embed_target<B: EmbeddingBackend + ?Sized>(
        &self,
        backend: &B,
        url: &str,
        text: &str,
    ) -> Result<UnitVector, ChunkError> {
        embed_unit(backend, text).map_err(|source| ChunkError::Embedding { url: url.to_string(), index: None, source })
    }

    fn website_rows<B: EmbeddingBackend + ?Sized>(&self, backend: &B) -> Result<Vec<WebsiteRow>, ChunkError> {
        let record = self.record;
        let mut rows = Vec::with_capacity(self.labels.len());
        for label in &self.labels {
            let emb = &self.docs[&label.url];
            let (pos, score, selection) = match label.category {
                CitationCategory::SentenceCited => {
                    let mut best: Option<(usize, f64, usize)> = None;
                    for (sid, s) in record.overview_sentences.iter().enumerate() {
                        if !s.cited_urls.contains(&label.url) {
                            continue;
                        }
                        let target = self.sentences[sid].as_ref().expect("citing sentences are embedded");
                        let (p, sc) = emb.best(target)?;
                        let better = match best {
                            None => true,
                            Some((bp, bs, _)) => sc > bs || (sc == bs && emb.chunks[p].index < emb.chunks[bp].index),
                        };
                        if better {
                            best = Some((p, sc, sid));
                        }
                    }
                    let (p, sc, sid) = best.expect("sentence-cited website has a citing sentence");
                    (p, sc, Selection::Sentence(sid))
                }
                CitationCategory::ListedOnly => {
                    let overview = record.overview_text();
                    let (text, selection) = if !overview.trim().is_empty() {
                        (overview, Selection::Overview)
                    } else if !record.query_text.trim().is_empty() {
                        (record.query_text.clone(), Selection::Query)
                    } else {
                        return Err(ChunkError::NoMatchTarget {
                            query_id: record.query_id.clone(),
                            url: label.url.clone(),
                        });
                    };
                    let target = self.embed_target(backend, &label.url, &text)?;
                    let (p, sc) = emb.best(&target)?;
                    (p, sc, selection)
                }
                CitationCategory::OrganicOnly => {
                    let snippet = record.organic_for(&label.url).map(|o| o.snippet.as_str()).unwrap_or("");
                    let snippet = collapse_whitespace(snippet);
                    let (text, fallback) = if !snippet.is_empty() {
                        (snippet, Selection::SnippetSimilarity)
                    } else if !record.query_text.trim().is_empty() {
                        (record.query_text.clone(), Selection::Query)
                    } else {
                        return Err(ChunkError::NoMatchTarget {
                            query_id: record.query_id.clone(),
                            url: label.url.clone(),
                        });
                    };
                    let target = self.embed_target(backend, &label.url, &text)?;
                    let contained = (fallback == Selection::SnippetSimilarity)
                        .then(|| {
                            emb.chunks
                                .iter()
                                .enumerate()
                                .filter(|(_, c)| collapse_whitespace(&c.text).contains(text.as_str()))
                                .min_by_key(|(_, c)| c.index)
                                .map(|(p, _)| p)
                        })
                        .flatten();
                    match contained {
                        Some(p) => {
                            let sc = crate::metrics::cosine(&emb.vectors[p], &target).unwrap_or(f64::NAN);
                            (p, sc, Selection::SnippetContained)
                        }
                        None => {
                            let (p, sc) = emb.best(&target)?;
                            (p, sc, fallback)
                        }
                    }
                }
            };
            rows.push(WebsiteRow {
                query_id: record.query_id.clone(),
                url: label.url.clone(),
                category: label.category,
                chat_cite: label.chat_cite,
                chunk: emb.chunks[pos].clone(),
                match_score: score,
                selection,
                organic_rank: record.organic_for(&label.url).map(|o| o.rank),
                ppl: None,
            });
        }
        Ok(rows)
    }

    fn sentence_rows(&self) -> Result<Vec<SentenceWebsiteRow>, ChunkError> {
        let record = self.record;
        let mut rows = Vec::new();
        for (sid, s) in record.overview_sentences.iter().enumerate() {
            let Some(target) = &self.sentences[sid] else { continue };
            for label in &self.labels {
                let emb = &self.docs[&label.url];
                let (p, score) = emb.best(target)?;
                rows.push(SentenceWebsiteRow {
                    query_id: record.query_id.clone(),
                    sentence_id: sid,
                    url: label.url.clone(),
                    chunk: emb.chunks[p].clone(),
                    match_score: score,
                    sentence_cite: u8::from(s.cited_urls.contains(&label.url)),
                    ppl: None,
                });
            }
        }
        Ok(rows)
    }
}

/// One representative chunk per labelled website of `record`.
///
/// Sentence-cited websites use the best (chunk, citing sentence) pair;
/// listed-only websites are matched against the whole overview text;
/// organic-only websites take the first chunk containing the snippet and fall
/// back to similarity with the snippet.
pub fn representative_chunks<B: EmbeddingBackend + ?Sized>(
    record: &QueryRecord,
    labels: &[CitationLabel],
    docs: &DocumentStore,
    backend: &B,
    cfg: &DatasetConfig,
) -> Result<Vec<WebsiteRow>, ChunkError> {
    let labels: Vec<CitationLabel> = labels.iter().filter(|l| docs.get(&l.url).is_some()).cloned().collect();
    QueryIndex::build(record, labels, docs, backend, cfg)?.website_rows(backend)
}

/// For every citing sentence and every related website with a document, the
/// chunk most similar to the sentence. Records without sentence-level
/// citations produce no rows.
pub fn sentence_website_chunks<B: EmbeddingBackend + ?Sized>(
    record: &QueryRecord,
    docs: &DocumentStore,
    backend: &B,
    cfg: &DatasetConfig,
) -> Result<Vec<SentenceWebsiteRow>, ChunkError> {
    if !record.has_sentence_citations() {
        return Ok(Vec::new());
    }
    let labeling = label_citations(record, docs)?;
    QueryIndex::build(record, labeling.labels, docs, backend, cfg)?.sentence_rows()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetReport {
    pub queries: usize,
    /// (query_id, url) pairs dropped because the website has no document.
    pub missing_documents: Vec<(String, String)>,
    /// End-only-reference queries left out of the website-level dataset.
    pub excluded_end_only: Vec<String>,
    /// (query_id, error) for queries that could not be processed.
    pub failed: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default)]
pub struct Datasets {
    pub website: Vec<WebsiteRow>,
    pub sentence: Vec<SentenceWebsiteRow>,
    pub report: DatasetReport,
}

/// Build the website-level and sentence-website-level datasets for a batch
/// of records, in parallel over records. Output order follows `records`.
pub fn build_datasets<B: EmbeddingBackend + ?Sized>(
    records: &[QueryRecord],
    docs: &DocumentStore,
    backend: &B,
    cfg: &DatasetConfig,
) -> Datasets {
    type PerQuery = Result<(Vec<WebsiteRow>, Vec<SentenceWebsiteRow>, Vec<String>, bool), String>;
    let per_query: Vec<PerQuery> = cfg.exec.map(records, |r| {
        let labeling = label_citations(r, docs).map_err(|e| e.to_string())?;
        let end_only = !r.reference_urls.is_empty() && !r.has_sentence_citations();
        let index = QueryIndex::build(r, labeling.labels, docs, backend, cfg).map_err(|e| e.to_string())?;
        let website = if end_only && !cfg.include_end_only {
            Vec::new()
        } else {
            index.website_rows(backend).map_err(|e| e.to_string())?
        };
        let sentence = index.sentence_rows().map_err(|e| e.to_string())?;
        Ok((website, sentence, labeling.missing, end_only && !cfg.include_end_only))
    });

    let mut out =
        Datasets { report: DatasetReport { queries: records.len(), ..Default::default() }, ..Default::default() };
    for (r, res) in records.iter().zip(per_query) {
        match res {
            Ok((w, s, missing, excluded)) => {
                out.website.extend(w);
                out.sentence.extend(s);
                out.report.missing_documents.extend(missing.into_iter().map(|u| (r.query_id.clone(), u)));
                if excluded {
                    out.report.excluded_end_only.push(r.query_id.clone());
                }
            }
            Err(e) => out.report.failed.push((r.query_id.clone(), e)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{OrganicResult, OverviewSentence};
    use crate::metrics::reference::{HashedBagOfWords, OneHotEmbedder};

    fn cfg(window: usize, step: usize) -> DatasetConfig {
        DatasetConfig { window, step, include_end_only: true, exec: Exec::Sequential }
    }

    fn record() -> QueryRecord {
        QueryRecord {
            query_id: "q".into(),
            query_text: "query".into(),
            overview_sentences: vec![
                OverviewSentence { text: "cccc".into(), cited_urls: vec!["s".into()] },
                OverviewSentence { text: "no cite".into(), cited_urls: vec![] },
                OverviewSentence { text: "kkkk".into(), cited_urls: vec!["s".into(), "l".into()] },
            ],
            reference_urls: vec!["s".into(), "l".into(), "r".into()],
            organic: vec![
                OrganicResult { rank: 1, title: "t".into(), url: "o".into(), snippet: "ee ff".into() },
                OrganicResult { rank: 2, title: "t".into(), url: "p".into(), snippet: "zzzz".into() },
            ],
        }
    }

    fn docs() -> DocumentStore {
        [("s", "aaaabbbbcccc"), ("l", "kkkkxxxx"), ("r", "rrrrrrrr"), ("o", "ddddee ffgg"), ("p", "qqqqwwww")]
            .into_iter()
            .map(|(u, t)| (u.to_string(), t.to_string()))
            .collect()
    }

    #[test]
    fn one_row_per_website_with_expected_paths() {
        let r = record();
        let d = docs();
        let labels = label_citations(&r, &d).unwrap().labels;
        let rows = representative_chunks(&r, &labels, &d, &OneHotEmbedder::new(256), &cfg(4, 4)).unwrap();
        let got: Vec<(&str, &str, Selection, u8)> =
            rows.iter().map(|w| (w.url.as_str(), w.chunk.text.as_str(), w.selection, w.chat_cite)).collect();
        assert_eq!(got[0], ("s", "cccc", Selection::Sentence(0), 1));
        // "l" is sentence-cited by sentence 2, whose text equals its first chunk
        assert_eq!(got[1], ("l", "kkkk", Selection::Sentence(2), 1));
        assert_eq!(got[2].2, Selection::Overview);
        // no 4-char window contains "ee ff": similarity fallback, all scores 0
        assert_eq!(got[3], ("o", "dddd", Selection::SnippetSimilarity, 0));
    }

    #[test]
    fn organic_snippet_fallbacks() {
        let r = record();
        let d = docs();
        let labels = label_citations(&r, &d).unwrap().labels;
        let rows = representative_chunks(&r, &labels, &d, &OneHotEmbedder::new(256), &cfg(6, 2)).unwrap();
        let o = rows.iter().find(|w| w.url == "o").unwrap();
        assert_eq!(o.selection, Selection::SnippetContained);
        assert!(o.chunk.text.contains("ee ff"));
        let p = rows.iter().find(|w| w.url == "p").unwrap();
        assert_eq!(p.selection, Selection::SnippetSimilarity);
        assert_eq!(p.chunk.index, 0, "no similarity signal: lowest index wins");
        assert_eq!(p.organic_rank, Some(2));
    }

    #[test]
    fn sentence_rows_cardinality_and_labels() {
        let r = record();
        let d = docs();
        let rows = sentence_website_chunks(&r, &d, &HashedBagOfWords::new(64), &cfg(4, 2)).unwrap();
        // 2 citing sentences x 5 websites
        assert_eq!(rows.len(), 10);
        let cited: Vec<(usize, &str)> =
            rows.iter().filter(|x| x.sentence_cite == 1).map(|x| (x.sentence_id, x.url.as_str())).collect();
        assert_eq!(cited, vec![(0, "s"), (2, "s"), (2, "l")]);
    }

    #[test]
    fn end_only_records() {
        let mut r = record();
        r.overview_sentences.iter_mut().for_each(|s| s.cited_urls.clear());
        let d = docs();
        assert!(sentence_website_chunks(&r, &d, &HashedBagOfWords::new(64), &cfg(4, 2)).unwrap().is_empty());

        let mut c = cfg(4, 2);
        let all = build_datasets(std::slice::from_ref(&r), &d, &HashedBagOfWords::new(64), &c);
        assert_eq!(all.website.len(), 5);
        assert!(all.website.iter().all(|w| w.selection != Selection::Sentence(0)));
        c.include_end_only = false;
        let none = build_datasets(std::slice::from_ref(&r), &d, &HashedBagOfWords::new(64), &c);
        assert!(none.website.is_empty());
        assert_eq!(none.report.excluded_end_only, vec!["q".to_string()]);
    }

    #[test]
    fn batch_reports_missing_and_failed() {
        let r = record();
        let mut d = docs();
        d = d.iter().filter(|doc| doc.url != "r").map(|doc| (doc.url.clone(), doc.text.clone())).collect();
        let empty = QueryRecord {
            query_id: "e".into(),
            query_text: String::new(),
            overview_sentences: vec![],
            reference_urls: vec![],
            organic: vec![],
        };
        let out = build_datasets(&[r, empty], &d, &HashedBagOfWords::new(64), &cfg(4, 2));
        assert_eq!(out.website.len(), 4);
        assert_eq!(out.report.missing_documents, vec![("q".to_string(), "r".to_string())]);
        assert_eq!(out.report.failed.len(), 1);
        assert_eq!(out.report.failed[0].0, "e");
    }
}
