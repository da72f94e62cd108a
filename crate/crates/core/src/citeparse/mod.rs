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

//! Labelled source documents and the `%%%X,Y,Z%%%` citation protocol.
//!
//! A source document lists chunks as `Source <k>:\n<text>\n\n` in a seeded
//! random order. Generated answers cite sources with markers such as
//! `%%%1,5,12%%%`, each bound to the sentence it follows.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{collapse_whitespace, split_sentences};
use crate::seeds;

pub const MARKER: &str = "%%%";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CiteError {
    #[error("cannot assemble a source document from zero chunks")]
    EmptyChunks,
    #[error("unterminated citation marker starting at byte {offset}")]
    Unterminated { offset: usize },
    #[error("order is not a permutation of 0..{0}")]
    InvalidOrder(usize),
}

/// A rendered source document and the mapping from 1-based position to the
/// index of the chunk in the caller's list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDoc {
    pub rendered_text: String,
    /// `order[k - 1]` is the input index of the chunk labelled `Source k`.
    pub order: Vec<usize>,
    pub seed: u64,
}

impl SourceDoc {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Input index of the chunk at a 1-based position.
    pub fn chunk_at(&self, position: usize) -> Option<usize> {
        position.checked_sub(1).and_then(|p| self.order.get(p)).copied()
    }

    /// 1-based position of each input chunk, indexed by input order.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (p, &idx) in self.order.iter().enumerate() {
            pos[idx] = p + 1;
        }
        pos
    }
}

/// Uniformly random permutation of `0..n`, determined solely by `seed`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeds::rng(seed));
    order
}

/// Render chunks in the given order.
pub fn render_in_order<S: AsRef<str>>(chunks: &[S], order: Vec<usize>, seed: u64) -> Result<SourceDoc, CiteError> {
    if chunks.is_empty() {
        return Err(CiteError::EmptyChunks);
    }
    let mut seen = vec![false; chunks.len()];
    if order.len() != chunks.len() || order.iter().any(|&i| i >= chunks.len() || std::mem::replace(&mut seen[i], true))
    {
        return Err(CiteError::InvalidOrder(chunks.len()));
    }
    let mut rendered_text = String::new();
    for (p, &idx) in order.iter().enumerate() {
        rendered_text.push_str(&format!("Source {}:\n{}\n\n", p + 1, chunks[idx].as_ref()));
    }
    Ok(SourceDoc { rendered_text, order, seed })
}

/// Render chunks in a seeded random order. Identical seeds give
/// byte-identical documents.
pub fn assemble_source_document<S: AsRef<str>>(chunks: &[S], seed: u64) -> Result<SourceDoc, CiteError> {
    if chunks.is_empty() {
        return Err(CiteError::EmptyChunks);
    }
    render_in_order(chunks, permutation(chunks.len(), seed), seed)
}

/// Recover `(position, text)` blocks from a rendered source document.
pub fn parse_source_document(rendered: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut current: Option<(usize, Vec<&str>)> = None;
    for line in rendered.split('\n') {
        let label =
            line.strip_prefix("Source ").and_then(|r| r.strip_suffix(':')).and_then(|n| n.parse::<usize>().ok());
        match label {
            Some(k) if current.as_ref().is_none_or(|(_, body)| body.last() == Some(&"")) => {
                if let Some((p, body)) = current.take() {
                    out.push((p, body.join("\n").trim_end_matches('\n').to_string()));
                }
                current = Some((k, Vec::new()));
            }
            _ => {
                if let Some((_, body)) = current.as_mut() {
                    body.push(line);
                }
            }
        }
    }
    if let Some((p, body)) = current {
        out.push((p, body.join("\n").trim_end_matches('\n').to_string()));
    }
    out
}

/// Parser diagnostics. None of them abort parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lint {
    /// Marker content that is not a list of positive integers.
    InvalidMarker { offset: usize, content: String },
    /// A `(Source X)` style citation, which the prompt forbids.
    ForbiddenStyle { offset: usize, text: String },
    /// A cited id beyond the number of sources.
    Hallucinated { id: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedSentence {
    pub text: String,
    pub ids: BTreeSet<u32>,
}

enum Segment<'a> {
    Text(&'a str),
    Marker { content: &'a str, offset: usize },
}

fn segments(text: &str) -> Result<Vec<Segment<'_>>, CiteError> {
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(rel) = text[i..].find(MARKER) {
        let open = i + rel;
        let body = open + MARKER.len();
        let Some(close_rel) = text[body..].find(MARKER) else {
            return Err(CiteError::Unterminated { offset: open });
        };
        out.push(Segment::Text(&text[i..open]));
        out.push(Segment::Marker { content: &text[body..body + close_rel], offset: open });
        i = body + close_rel + MARKER.len();
    }
    out.push(Segment::Text(&text[i..]));
    Ok(out)
}

/// Ids of one marker; `None` when the content is malformed.
fn marker_ids(content: &str) -> Option<BTreeSet<u32>> {
    let mut ids = BTreeSet::new();
    for item in content.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        match item.parse::<u32>() {
            Ok(id) if id > 0 => {
                ids.insert(id);
            }
            _ => return None,
        }
    }
    (!ids.is_empty()).then_some(ids)
}

fn forbidden_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\(\s*sources?\s+\d+(\s*,\s*\d+)*\s*\)").unwrap())
}

fn has_word(s: &str) -> bool {
    s.chars().any(char::is_alphanumeric)
}

/// Tidy a sentence whose markers were removed: collapse whitespace and
/// re-attach or drop punctuation left dangling behind a marker.
fn clean_sentence(s: &str) -> String {
    let mut toks: Vec<&str> = s.split_whitespace().collect();
    let mut tail = String::new();
    while toks.len() > 1 && !has_word(toks[toks.len() - 1]) {
        let t = toks.pop().unwrap();
        let prev = toks[toks.len() - 1];
        if !prev.ends_with(['.', '!', '?']) {
            tail = format!("{t}{tail}");
        }
    }
    let mut out = toks.join(" ");
    out.push_str(&tail);
    out
}

/// Split an answer into sentences and attach each citation marker to the
/// sentence it follows. A marker before any sentence binds to the first
/// sentence. Duplicate ids collapse.
pub fn parse_citation_markers(text: &str) -> Result<(Vec<CitedSentence>, Vec<Lint>), CiteError> {
    let mut lints = Vec::new();
    for m in forbidden_re().find_iter(text) {
        lints.push(Lint::ForbiddenStyle { offset: m.start(), text: m.as_str().to_string() });
    }

    // Body with each marker replaced by a space; markers remember where they were.
    let mut body = String::with_capacity(text.len());
    let mut markers: Vec<(usize, BTreeSet<u32>)> = Vec::new();
    for seg in segments(text)? {
        match seg {
            Segment::Text(t) => body.push_str(t),
            Segment::Marker { content, offset } => {
                match marker_ids(content) {
                    Some(ids) => markers.push((body.len(), ids)),
                    None => lints.push(Lint::InvalidMarker { offset, content: content.to_string() }),
                }
                body.push(' ');
            }
        }
    }

    let spans = split_sentences(&body);
    let mut sentences: Vec<CitedSentence> = Vec::new();
    let mut starts: Vec<usize> = Vec::new();
    for s in &spans {
        let cleaned = clean_sentence(s.text);
        // punctuation-only fragments fold into the previous sentence
        if has_word(&cleaned) {
            sentences.push(CitedSentence { text: cleaned, ids: BTreeSet::new() });
            starts.push(s.start);
        }
    }
    if sentences.is_empty() {
        return Ok((sentences, lints));
    }
    for (pos, ids) in markers {
        let idx = starts.iter().rposition(|&s| s < pos).unwrap_or(0);
        sentences[idx].ids.extend(ids);
    }
    Ok((sentences, lints))
}

/// Remove every complete marker, leaving unterminated ones as text, and
/// collapse whitespace. Idempotent.
pub fn strip_markers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while let Some(rel) = text[i..].find(MARKER) {
        let open = i + rel;
        let body = open + MARKER.len();
        match text[body..].find(MARKER) {
            Some(close_rel) => {
                out.push_str(&text[i..open]);
                out.push(' ');
                i = body + close_rel + MARKER.len();
            }
            None => break,
        }
    }
    out.push_str(&text[i..]);
    collapse_whitespace(&out)
}

/// Inverse of the parser for well-formed input: each sentence followed by
/// its marker (if any), joined by spaces.
pub fn render_answer(sentences: &[CitedSentence]) -> String {
    sentences
        .iter()
        .map(|s| {
            if s.ids.is_empty() {
                s.text.clone()
            } else {
                let ids: Vec<String> = s.ids.iter().map(u32::to_string).collect();
                format!("{} {MARKER}{}{MARKER}", s.text, ids.join(","))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A parsed generated answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagAnswer {
    pub raw_text: String,
    pub sentences: Vec<CitedSentence>,
    /// Number of distinct cited ids.
    pub num_cite: usize,
    /// Raw text with markers removed.
    pub answer_body: String,
    pub lints: Vec<Lint>,
}

impl RagAnswer {
    pub fn parse(raw: &str) -> Result<Self, CiteError> {
        let (sentences, lints) = parse_citation_markers(raw)?;
        let num_cite = sentences.iter().flat_map(|s| s.ids.iter()).collect::<BTreeSet<_>>().len();
        Ok(RagAnswer { raw_text: raw.to_string(), sentences, num_cite, answer_body: strip_markers(raw), lints })
    }

    pub fn cited_ids(&self) -> BTreeSet<u32> {
        self.sentences.iter().flat_map(|s| s.ids.iter().copied()).collect()
    }
}

/// Citation outcome for one chunk of a source document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkOutcome {
    /// Index in the caller's chunk list.
    pub chunk: usize,
    /// 1-based position in the source document.
    pub position: usize,
    pub rag_cite: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationMap {
    /// One row per chunk, in the caller's chunk order.
    pub outcomes: Vec<ChunkOutcome>,
    /// Distinct in-range cited positions.
    pub num_cite: usize,
    pub lints: Vec<Lint>,
}

/// Relabel the chunks of `doc` with whether the answer cited them. Ids
/// beyond the document length are reported as hallucinated and ignored.
pub fn map_citations(answer: &RagAnswer, doc: &SourceDoc) -> CitationMap {
    let n = doc.len();
    let cited = answer.cited_ids();
    let mut lints = Vec::new();
    let mut valid = BTreeSet::new();
    for id in cited {
        if (id as usize) <= n {
            valid.insert(id as usize);
        } else {
            lints.push(Lint::Hallucinated { id });
        }
    }
    let outcomes = doc
        .positions()
        .into_iter()
        .enumerate()
        .map(|(chunk, position)| ChunkOutcome { chunk, position, rag_cite: u8::from(valid.contains(&position)) })
        .collect();
    CitationMap { outcomes, num_cite: valid.len(), lints }
}
