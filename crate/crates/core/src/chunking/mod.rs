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

//! Sliding-window chunking and embedding-based chunk selection.

mod select;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::error::BackendError;
use crate::metrics::{cosine, embed_unit, MetricError, UnitVector};
use crate::par::Serialized;

pub use select::{
    build_datasets, representative_chunks, sentence_website_chunks, DatasetConfig, DatasetReport, Datasets, Selection,
    SentenceWebsiteRow, WebsiteRow,
};

pub const DEFAULT_WINDOW: usize = 128;
pub const DEFAULT_STEP: usize = 16;

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("cannot chunk empty text")]
    EmptyText,
    #[error("invalid window {window} / step {step}: both must be positive and step <= window")]
    InvalidWindow { window: usize, step: usize },
    #[error("no chunks to select from")]
    NoChunks,
    #[error("embedding failed for {url} chunk {index:?}: {source}")]
    Embedding {
        url: String,
        index: Option<usize>,
        #[source]
        source: MetricError,
    },
    #[error("query {query_id}: no matching target for {url}")]
    NoMatchTarget { query_id: String, url: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// A character window of a document. Offsets count Unicode scalar values;
/// `end` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub url: String,
    pub start: usize,
    pub end: usize,
    pub index: usize,
    pub text: String,
}

/// Overlapping fixed-width windows over `text`.
///
/// Full windows start at `0, step, 2*step, ...` while they fit. If the last
/// full window stops short of the end, one more window anchored at
/// `len - window` is appended, so the windows always cover the whole text.
/// Text shorter than `window` yields a single chunk.
pub fn window_chunks(url: &str, text: &str, window: usize, step: usize) -> Result<Vec<Chunk>, ChunkError> {
    if window == 0 || step == 0 || step > window {
        return Err(ChunkError::InvalidWindow { window, step });
    }
    if text.is_empty() {
        return Err(ChunkError::EmptyText);
    }
    let bounds: Vec<usize> = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len())).collect();
    let len = bounds.len() - 1;

    let mut spans = Vec::new();
    if len <= window {
        spans.push((0, len));
    } else {
        let mut start = 0;
        while start + window <= len {
            spans.push((start, start + window));
            start += step;
        }
        if spans.last().is_some_and(|&(_, end)| end < len) {
            spans.push((len - window, len));
        }
    }
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(index, (start, end))| Chunk {
            url: url.to_string(),
            start,
            end,
            index,
            text: text[bounds[start]..bounds[end]].to_string(),
        })
        .collect())
}

/// Text embedder used to match chunks against targets and to compute
/// pairwise similarity. Outputs are L2-normalized by the toolkit.
pub trait EmbeddingBackend: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;
}

impl<T: EmbeddingBackend + ?Sized> EmbeddingBackend for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        (**self).embed(text)
    }
}

impl<T: EmbeddingBackend + ?Sized> EmbeddingBackend for Box<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        (**self).embed(text)
    }
}

/// An embedder that needs exclusive access for each call. Wrap it in
/// [`Serialized`] to use it with the pipeline.
pub trait LocalEmbedder: Send {
    fn dimension(&self) -> usize;
    fn embed(&mut self, text: &str) -> Result<Vec<f64>, BackendError>;
}

impl<B: LocalEmbedder> EmbeddingBackend for Serialized<B> {
    fn dimension(&self) -> usize {
        self.lock().dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        self.lock().embed(text)
    }
}

/// Chunks of one document together with their unit embeddings.
#[derive(Debug, Clone)]
pub struct EmbeddedChunks {
    pub chunks: Vec<Chunk>,
    pub vectors: Vec<UnitVector>,
}

impl EmbeddedChunks {
    pub fn new<B: EmbeddingBackend + ?Sized>(chunks: Vec<Chunk>, backend: &B) -> Result<Self, ChunkError> {
        let vectors = chunks
            .iter()
            .map(|c| {
                embed_unit(backend, &c.text).map_err(|source| ChunkError::Embedding {
                    url: c.url.clone(),
                    index: Some(c.index),
                    source,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { chunks, vectors })
    }

    /// Position (in `chunks`) and score of the chunk most similar to
    /// `target`; ties go to the lowest chunk index.
    pub fn best(&self, target: &UnitVector) -> Result<(usize, f64), ChunkError> {
        let mut best: Option<(usize, f64)> = None;
        for (pos, v) in self.vectors.iter().enumerate() {
            let s = cosine(v, target).map_err(|source| ChunkError::Embedding {
                url: self.chunks[pos].url.clone(),
                index: Some(self.chunks[pos].index),
                source,
            })?;
            let better = match best {
                None => true,
                Some((bp, bs)) => s > bs || (s == bs && self.chunks[pos].index < self.chunks[bp].index),
            };
            if better {
                best = Some((pos, s));
            }
        }
        best.ok_or(ChunkError::NoChunks)
    }
}

/// The chunk whose embedding is most cosine-similar to `target`, with its
/// score. Ties are broken by the lowest chunk index.
pub fn best_chunk<'a, B: EmbeddingBackend + ?Sized>(
    chunks: &'a [Chunk],
    target: &str,
    backend: &B,
) -> Result<(&'a Chunk, f64), ChunkError> {
    if chunks.is_empty() {
        return Err(ChunkError::NoChunks);
    }
    let t = embed_unit(backend, target).map_err(|source| ChunkError::Embedding {
        url: chunks[0].url.clone(),
        index: None,
        source,
    })?;
    let embedded = EmbeddedChunks::new(chunks.to_vec(), backend)?;
    let (pos, score) = embedded.best(&t)?;
    Ok((&chunks[pos], score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::reference::{HashedBagOfWords, OneHotEmbedder};
    use proptest::prelude::*;

    fn starts(chunks: &[Chunk]) -> Vec<(usize, usize)> {
        chunks.iter().map(|c| (c.start, c.end)).collect()
    }

    #[test]
    fn short_text_single_chunk() {
        let t = "x".repeat(100);
        assert_eq!(starts(&window_chunks("u", &t, 128, 16).unwrap()), vec![(0, 100)]);
    }

    #[test]
    fn exact_fit_single_chunk() {
        let t = "x".repeat(128);
        assert_eq!(starts(&window_chunks("u", &t, 128, 16).unwrap()), vec![(0, 128)]);
    }

    #[test]
    fn tail_window_appended() {
        let t: String = (0..200).map(|i| char::from(b'a' + (i % 26) as u8)).collect();
        let c = window_chunks("u", &t, 128, 16).unwrap();
        assert_eq!(starts(&c), vec![(0, 128), (16, 144), (32, 160), (48, 176), (64, 192), (72, 200)]);
        assert_eq!(c[5].index, 5);
        assert_eq!(c[5].text, &t[72..]);
    }

    #[test]
    fn counts_unicode_scalars() {
        let t = "é".repeat(10);
        let c = window_chunks("u", &t, 4, 4).unwrap();
        assert_eq!(starts(&c), vec![(0, 4), (4, 8), (6, 10)]);
        assert_eq!(c[2].text, "éééé");
    }

    #[test]
    fn window_errors() {
        assert!(matches!(window_chunks("u", "", 4, 2), Err(ChunkError::EmptyText)));
        assert!(matches!(window_chunks("u", "abc", 4, 5), Err(ChunkError::InvalidWindow { .. })));
        assert!(matches!(window_chunks("u", "abc", 0, 0), Err(ChunkError::InvalidWindow { .. })));
    }

    fn chunk(index: usize, text: &str) -> Chunk {
        Chunk { url: "u".into(), start: index, end: index + 1, index, text: text.into() }
    }

    #[test]
    fn best_chunk_examples() {
        let e = OneHotEmbedder::new(16);
        let single = [chunk(0, "only")];
        let (c, s) = best_chunk(&single, "other", &e).unwrap();
        assert_eq!((c.index, s), (0, 0.0));

        let chunks = [chunk(0, "zero"), chunk(1, "one"), chunk(2, "two"), chunk(3, "three")];
        let (c, s) = best_chunk(&chunks, "two", &e).unwrap();
        assert_eq!((c.index, s), (2, 1.0));

        let dup = [chunk(1, "same"), chunk(0, "same")];
        let (c, _) = best_chunk(&dup, "same", &e).unwrap();
        assert_eq!(c.index, 0);

        assert!(matches!(best_chunk(&[], "x", &e), Err(ChunkError::NoChunks)));
    }

    #[test]
    fn backend_failure_carries_provenance() {
        let e = OneHotEmbedder::new(1);
        let chunks = [chunk(0, "a"), chunk(7, "b")];
        let err = best_chunk(&chunks, "a", &e).unwrap_err();
        assert!(matches!(err, ChunkError::Embedding { index: Some(7), .. }), "{err}");
    }

    proptest! {
        #[test]
        fn windows_cover_text(len in 1usize..700, window in 1usize..150, step_frac in 0.01f64..1.0) {
            let step = ((window as f64 * step_frac).ceil() as usize).clamp(1, window);
            let t: String = (0..len).map(|i| if i % 7 == 0 { 'ß' } else { 'a' }).collect();
            let c = window_chunks("u", &t, window, step).unwrap();
            prop_assert_eq!(c[0].start, 0);
            prop_assert_eq!(c.last().unwrap().end, len);
            for (i, w) in c.iter().enumerate() {
                prop_assert_eq!(w.index, i);
                prop_assert!(w.start < w.end && w.end <= len);
                prop_assert_eq!(w.text.chars().count(), w.end - w.start);
                if len >= window {
                    prop_assert_eq!(w.end - w.start, window);
                }
            }
            for pair in c.windows(2) {
                prop_assert!(pair[1].start <= pair[0].end, "gap in coverage");
            }
        }

        #[test]
        fn best_chunk_permutation_invariant(words in proptest::collection::vec("[a-d]{1,2}( [a-d]{1,2}){0,3}", 2..8), target in "[a-d]{1,2}( [a-d]{1,2}){0,2}", rot in 0usize..8) {
            let e = HashedBagOfWords::new(64);
            let chunks: Vec<Chunk> = words.iter().enumerate().map(|(i, w)| chunk(i, w)).collect();
            let mut permuted = chunks.clone();
            permuted.rotate_left(rot % chunks.len());
            let (a, sa) = best_chunk(&chunks, &target, &e).unwrap();
            let (b, sb) = best_chunk(&permuted, &target, &e).unwrap();
            prop_assert_eq!(a.index, b.index);
            prop_assert_eq!(sa, sb);
        }
    }
}
