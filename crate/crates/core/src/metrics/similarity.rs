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

use super::MetricError;
use crate::chunking::EmbeddingBackend;
use crate::par::Exec;

/// An L2-normalized embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    pub fn new(mut v: Vec<f64>) -> Result<Self, MetricError> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(MetricError::NonFiniteVector);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(MetricError::ZeroVector);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(UnitVector(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Cosine similarity of two unit vectors, i.e. their dot product, clamped to
/// [-1, 1] against rounding.
pub fn cosine(u: &UnitVector, v: &UnitVector) -> Result<f64, MetricError> {
    if u.dim() != v.dim() {
        return Err(MetricError::DimensionMismatch(u.dim(), v.dim()));
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Embed `text` and L2-normalize the result, checking the declared dimension.
pub fn embed_unit<B: EmbeddingBackend + ?Sized>(backend: &B, text: &str) -> Result<UnitVector, MetricError> {
    let v = backend.embed(text)?;
    if v.len() != backend.dimension() {
        return Err(MetricError::DimensionMismatch(v.len(), backend.dimension()));
    }
    UnitVector::new(v)
}

/// One chunk entering the pairwise similarity computation.
#[derive(Debug, Clone, Copy)]
pub struct PairInput<'a> {
    pub query_id: &'a str,
    pub url: &'a str,
    pub text: &'a str,
    pub cited: bool,
    pub ppl: Option<f64>,
}

/// Citation make-up of a chunk pair. `Mixed` and `NeitherCited` are the two
/// possible control groups for the both-cited comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    BothCited,
    Mixed,
    NeitherCited,
}

impl PairKind {
    pub fn from_flags(a: bool, b: bool) -> Self {
        match (a, b) {
            (true, true) => PairKind::BothCited,
            (false, false) => PairKind::NeitherCited,
            _ => PairKind::Mixed,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairKind::BothCited => "both_cited",
            PairKind::Mixed => "mixed",
            PairKind::NeitherCited => "neither_cited",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub query_id: String,
    pub url_a: String,
    pub url_b: String,
    pub similarity: f64,
    pub both_cite: u8,
    pub kind: PairKind,
    pub cite_a: u8,
    pub cite_b: u8,
    pub ppl_a: Option<f64>,
    pub ppl_b: Option<f64>,
}

/// Cosine similarity for every unordered pair of chunks within each query.
///
/// Queries appear in order of first occurrence; within a query pairs are
/// `(i, j)` with `i < j` in input order. Queries with fewer than two chunks
/// contribute no pairs.
pub fn pairwise_similarity<B: EmbeddingBackend + ?Sized>(
    items: &[PairInput<'_>],
    backend: &B,
    exec: Exec,
) -> Result<Vec<PairRow>, MetricError> {
    let embeddings = exec.try_map(items, |it| embed_unit(backend, it.text))?;

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, it) in items.iter().enumerate() {
        let g = *index.entry(it.query_id).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }

    let mut out = Vec::new();
    for members in &groups {
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                let (a, b) = (&items[i], &items[j]);
                let kind = PairKind::from_flags(a.cited, b.cited);
                out.push(PairRow {
                    query_id: a.query_id.to_string(),
                    url_a: a.url.to_string(),
                    url_b: b.url.to_string(),
                    similarity: cosine(&embeddings[i], &embeddings[j])?,
                    both_cite: u8::from(kind == PairKind::BothCited),
                    kind,
                    cite_a: u8::from(a.cited),
                    cite_b: u8::from(b.cited),
                    ppl_a: a.ppl,
                    ppl_b: b.ppl,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::reference::HashedBagOfWords;
    use proptest::prelude::*;

    fn uv(v: &[f64]) -> UnitVector {
        UnitVector::new(v.to_vec()).unwrap()
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn cosine_examples() {
        let e1 = uv(&[1.0, 0.0]);
        let e2 = uv(&[0.0, 1.0]);
        let d = uv(&[2f64.sqrt() / 2.0, 2f64.sqrt() / 2.0]);
        assert!((cosine(&e1, &e1).unwrap() - 1.0).abs() < 1e-9);
        assert!(cosine(&e1, &e2).unwrap().abs() < 1e-9);
        assert!((cosine(&e1, &d).unwrap() - 0.70710678).abs() < 1e-8);
        assert_eq!(cosine(&e1, &uv(&[1.0, 0.0, 0.0])), Err(MetricError::DimensionMismatch(2, 3)));
        assert_eq!(UnitVector::new(vec![0.0, 0.0]), Err(MetricError::ZeroVector));
        assert_eq!(UnitVector::new(vec![f64::NAN]), Err(MetricError::NonFiniteVector));
    }

    fn items<'a>(q: &'a str, n: usize, texts: &'a [String]) -> Vec<PairInput<'a>> {
        (0..n)
            .map(|i| PairInput { query_id: q, url: &texts[i], text: &texts[i], cited: i % 2 == 0, ppl: None })
            .collect()
    }

    #[test]
    fn pair_counts_and_flags() {
        let texts: Vec<String> = (0..5).map(|i| format!("word{i} shared")).collect();
        let mut input = items("q1", 3, &texts);
        input.extend(items("q2", 2, &texts[3..]));
        input.push(PairInput { query_id: "q3", url: "solo", text: "solo", cited: true, ppl: None });
        let rows = pairwise_similarity(&input, &HashedBagOfWords::new(64), Exec::Sequential).unwrap();
        assert_eq!(rows.len(), 3 + 1);
        // q1: items 0 and 2 are cited
        let both: Vec<_> = rows.iter().filter(|r| r.both_cite == 1).collect();
        assert_eq!(both.len(), 1);
        assert_eq!((both[0].url_a.as_str(), both[0].url_b.as_str()), ("word0 shared", "word2 shared"));
        assert_eq!(rows[0].kind, PairKind::Mixed);
        assert_eq!(rows[3].kind, PairKind::Mixed);
    }

    #[test]
    fn pair_count_matches_combinatorial_recount() {
        // 98 rows spread unevenly across 13 queries.
        let texts: Vec<String> = (0..98).map(|i| format!("t{i} x{}", i % 7)).collect();
        let qids: Vec<String> = (0..98).map(|i| format!("q{}", (i * i) % 13)).collect();
        let input: Vec<PairInput> = (0..98)
            .map(|i| PairInput { query_id: &qids[i], url: &texts[i], text: &texts[i], cited: i % 3 == 0, ppl: None })
            .collect();
        let rows = pairwise_similarity(&input, &HashedBagOfWords::new(32), Exec::Parallel).unwrap();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for q in &qids {
            *counts.entry(q).or_default() += 1;
        }
        let expected: usize = counts.values().map(|&n| n * (n - 1) / 2).sum();
        assert_eq!(rows.len(), expected);
    }

    proptest! {
        #[test]
        fn cosine_symmetric(a in proptest::collection::vec(-5.0f64..5.0, 8), b in proptest::collection::vec(-5.0f64..5.0, 8)) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let (u, v) = (uv(&a), uv(&b));
            let (x, y) = (cosine(&u, &v).unwrap(), cosine(&v, &u).unwrap());
            prop_assert!((x - y).abs() <= 1e-15);
            prop_assert!((-1.0..=1.0).contains(&x));
        }
    }
}
