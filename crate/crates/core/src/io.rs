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

//! CSV readers and writers for the stage outputs.
//!
//! Website and sentence rows carry the chunk text and its perplexity after
//! the documented leading columns, so a later stage can re-read them
//! without the source documents.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunking::{Chunk, Selection, SentenceWebsiteRow, WebsiteRow};
use crate::corpus::CitationCategory;
use crate::metrics::{PairKind, PairRow, VendiReport};
use crate::ragx::ConditionResult;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    Invalid { row: usize, msg: String },
}

pub fn write_records<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records<R: Read, T: DeserializeOwned>(r: R) -> Result<Vec<T>, IoError> {
    csv::Reader::from_reader(r).deserialize().map(|x| x.map_err(IoError::from)).collect()
}

fn selection_str(s: Selection) -> String {
    match s {
        Selection::Sentence(i) => format!("sentence:{i}"),
        Selection::Overview => "overview".into(),
        Selection::Query => "query".into(),
        Selection::SnippetContained => "snippet_contained".into(),
        Selection::SnippetSimilarity => "snippet_similarity".into(),
    }
}

fn parse_selection(s: &str) -> Option<Selection> {
    Some(match s {
        "overview" => Selection::Overview,
        "query" => Selection::Query,
        "snippet_contained" => Selection::SnippetContained,
        "snippet_similarity" => Selection::SnippetSimilarity,
        _ => Selection::Sentence(s.strip_prefix("sentence:")?.parse().ok()?),
    })
}

fn parse_category(s: &str) -> Option<CitationCategory> {
    [CitationCategory::SentenceCited, CitationCategory::ListedOnly, CitationCategory::OrganicOnly]
        .into_iter()
        .find(|c| c.as_str() == s)
}

#[derive(Debug, Serialize, Deserialize)]
struct WebsiteRecord {
    query_id: String,
    url: String,
    chunk_start: usize,
    chunk_end: usize,
    chunk_index: usize,
    category: String,
    chat_cite: u8,
    match_score: f64,
    selection: String,
    organic_rank: Option<u32>,
    ppl: Option<f64>,
    text: String,
}

pub fn write_website_rows<W: Write>(w: W, rows: &[WebsiteRow]) -> Result<(), IoError> {
    write_records(
        w,
        rows.iter().map(|r| WebsiteRecord {
            query_id: r.query_id.clone(),
            url: r.url.clone(),
            chunk_start: r.chunk.start,
            chunk_end: r.chunk.end,
            chunk_index: r.chunk.index,
            category: r.category.as_str().into(),
            chat_cite: r.chat_cite,
            match_score: r.match_score,
            selection: selection_str(r.selection),
            organic_rank: r.organic_rank,
            ppl: r.ppl,
            text: r.chunk.text.clone(),
        }),
    )
}

pub fn read_website_rows<R: Read>(r: R) -> Result<Vec<WebsiteRow>, IoError> {
    let recs: Vec<WebsiteRecord> = read_records(r)?;
    recs.into_iter()
        .enumerate()
        .map(|(i, x)| {
            let bad = |msg: String| IoError::Invalid { row: i + 1, msg };
            let category =
                parse_category(&x.category).ok_or_else(|| bad(format!("unknown category {:?}", x.category)))?;
            let selection =
                parse_selection(&x.selection).ok_or_else(|| bad(format!("unknown selection {:?}", x.selection)))?;
            Ok(WebsiteRow {
                chunk: Chunk {
                    url: x.url.clone(),
                    start: x.chunk_start,
                    end: x.chunk_end,
                    index: x.chunk_index,
                    text: x.text,
                },
                query_id: x.query_id,
                url: x.url,
                category,
                chat_cite: x.chat_cite,
                match_score: x.match_score,
                selection,
                organic_rank: x.organic_rank,
                ppl: x.ppl,
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SentenceRecord {
    query_id: String,
    url: String,
    chunk_start: usize,
    chunk_end: usize,
    chunk_index: usize,
    sentence_id: usize,
    sentence_cite: u8,
    match_score: f64,
    ppl: Option<f64>,
    text: String,
}

pub fn write_sentence_rows<W: Write>(w: W, rows: &[SentenceWebsiteRow]) -> Result<(), IoError> {
    write_records(
        w,
        rows.iter().map(|r| SentenceRecord {
            query_id: r.query_id.clone(),
            url: r.url.clone(),
            chunk_start: r.chunk.start,
            chunk_end: r.chunk.end,
            chunk_index: r.chunk.index,
            sentence_id: r.sentence_id,
            sentence_cite: r.sentence_cite,
            match_score: r.match_score,
            ppl: r.ppl,
            text: r.chunk.text.clone(),
        }),
    )
}

pub fn read_sentence_rows<R: Read>(r: R) -> Result<Vec<SentenceWebsiteRow>, IoError> {
    let recs: Vec<SentenceRecord> = read_records(r)?;
    Ok(recs
        .into_iter()
        .map(|x| SentenceWebsiteRow {
            chunk: Chunk {
                url: x.url.clone(),
                start: x.chunk_start,
                end: x.chunk_end,
                index: x.chunk_index,
                text: x.text,
            },
            query_id: x.query_id,
            sentence_id: x.sentence_id,
            url: x.url,
            match_score: x.match_score,
            sentence_cite: x.sentence_cite,
            ppl: x.ppl,
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct PairRecord {
    query_id: String,
    url_a: String,
    url_b: String,
    similarity: f64,
    both_cite: u8,
    kind: String,
    cite_a: u8,
    cite_b: u8,
    ppl_a: Option<f64>,
    ppl_b: Option<f64>,
}

pub fn write_pair_rows<W: Write>(w: W, rows: &[PairRow]) -> Result<(), IoError> {
    write_records(
        w,
        rows.iter().map(|r| PairRecord {
            query_id: r.query_id.clone(),
            url_a: r.url_a.clone(),
            url_b: r.url_b.clone(),
            similarity: r.similarity,
            both_cite: r.both_cite,
            kind: r.kind.as_str().into(),
            cite_a: r.cite_a,
            cite_b: r.cite_b,
            ppl_a: r.ppl_a,
            ppl_b: r.ppl_b,
        }),
    )
}

pub fn read_pair_rows<R: Read>(r: R) -> Result<Vec<PairRow>, IoError> {
    let recs: Vec<PairRecord> = read_records(r)?;
    recs.into_iter()
        .enumerate()
        .map(|(i, x)| {
            let kind = PairKind::from_flags(x.cite_a == 1, x.cite_b == 1);
            if kind.as_str() != x.kind {
                return Err(IoError::Invalid {
                    row: i + 1,
                    msg: format!("kind {:?} disagrees with cite flags", x.kind),
                });
            }
            Ok(PairRow {
                query_id: x.query_id,
                url_a: x.url_a,
                url_b: x.url_b,
                similarity: x.similarity,
                both_cite: x.both_cite,
                kind,
                cite_a: x.cite_a,
                cite_b: x.cite_b,
                ppl_a: x.ppl_a,
                ppl_b: x.ppl_b,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct VendiRecord<'a> {
    id: &'a str,
    score: f64,
    entropy: f64,
    n: usize,
}

pub fn write_vendi<W: Write>(w: W, reports: &[(String, VendiReport)]) -> Result<(), IoError> {
    write_records(w, reports.iter().map(|(id, r)| VendiRecord { id, score: r.score, entropy: r.entropy, n: r.n }))
}

/// Per-chunk RAG labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagCiteRecord {
    pub query_id: String,
    pub condition: String,
    pub seed: u64,
    pub chunk: usize,
    pub position: usize,
    pub rag_cite: u8,
}

/// Per-run answer outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagOutcomeRecord {
    pub query_id: String,
    pub condition: String,
    pub num_cite: usize,
    pub output_ppl: Option<f64>,
}

pub fn write_rag_cites<W: Write>(w: W, results: &[ConditionResult]) -> Result<(), IoError> {
    write_records(
        w,
        results.iter().flat_map(|r| {
            r.outcomes.iter().map(|o| RagCiteRecord {
                query_id: r.query_id.clone(),
                condition: r.condition.as_str().into(),
                seed: r.seed,
                chunk: o.chunk,
                position: o.position,
                rag_cite: o.rag_cite,
            })
        }),
    )
}

pub fn write_rag_outcomes<W: Write>(w: W, results: &[ConditionResult]) -> Result<(), IoError> {
    write_records(
        w,
        results.iter().map(|r| RagOutcomeRecord {
            query_id: r.query_id.clone(),
            condition: r.condition.as_str().into(),
            num_cite: r.num_cite,
            output_ppl: r.output_ppl,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn website() -> WebsiteRow {
        WebsiteRow {
            query_id: "q1".into(),
            url: "https://a.example/x".into(),
            category: CitationCategory::ListedOnly,
            chat_cite: 1,
            chunk: Chunk {
                url: "https://a.example/x".into(),
                start: 200,
                end: 712,
                index: 2,
                text: "some \"quoted\", text".into(),
            },
            match_score: 0.25,
            selection: Selection::Sentence(3),
            organic_rank: None,
            ppl: Some(12.5),
        }
    }

    #[test]
    fn website_round_trip() {
        let rows =
            vec![website(), WebsiteRow { selection: Selection::Query, organic_rank: Some(4), ppl: None, ..website() }];
        let mut buf = Vec::new();
        write_website_rows(&mut buf, &rows).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with("query_id,url,chunk_start,chunk_end,chunk_index,category,chat_cite,"));
        assert_eq!(read_website_rows(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn bad_category_names_row() {
        let mut buf = Vec::new();
        write_website_rows(&mut buf, &[website()]).unwrap();
        let s = String::from_utf8(buf).unwrap().replace("listed_only", "bogus");
        match read_website_rows(s.as_bytes()) {
            Err(IoError::Invalid { row, .. }) => assert_eq!(row, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pair_round_trip() {
        let rows = vec![PairRow {
            query_id: "q".into(),
            url_a: "a".into(),
            url_b: "b".into(),
            similarity: 0.125,
            both_cite: 0,
            kind: PairKind::Mixed,
            cite_a: 1,
            cite_b: 0,
            ppl_a: Some(3.0),
            ppl_b: None,
        }];
        let mut buf = Vec::new();
        write_pair_rows(&mut buf, &rows).unwrap();
        assert_eq!(read_pair_rows(&buf[..]).unwrap(), rows);
    }
}
