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

//! Synthetic corpora with planted effects.
//!
//! [`ChainModel`] is a toy language in which every word has one likely
//! successor. Text that follows the chain is predictable; each "break"
//! (a jump to an unrelated word) raises perplexity by a known amount, so
//! chunk perplexity can be dialled in exactly. [`TopicCorpus`] builds
//! search records whose cited websites share a topic vocabulary.

use std::collections::{BTreeMap, HashMap};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::chunking::Chunk;
use crate::corpus::{DocumentStore, OrganicResult, OverviewSentence, QueryRecord};
use crate::error::BackendError;
use crate::metrics::reference::{tokenize, BigramScorer};
use crate::ragx::{parse_polish_prompt, ChunkSet, LlmClient, LlmRequest, PolishMode};
use crate::seeds;

const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

/// `n` distinct four-letter consonant-vowel words, in a fixed order.
pub fn syllable_words(n: usize) -> Vec<String> {
    let syl: Vec<String> = CONSONANTS.iter().flat_map(|c| VOWELS.iter().map(move |v| format!("{c}{v}"))).collect();
    let mut out = Vec::with_capacity(n);
    'outer: for (i, a) in syl.iter().enumerate() {
        for j in 0..syl.len() {
            // stride through the second syllable so neighbours differ
            let b = &syl[(i * 7 + j * 11) % syl.len()];
            if out.len() == n {
                break 'outer;
            }
            let w = format!("{a}{b}");
            if !out.contains(&w) {
                out.push(w);
            }
        }
    }
    assert_eq!(out.len(), n, "not enough syllable words");
    out
}

/// A language over `vocab` where word `i` is followed by word `i + 1`
/// (mod V) with probability `q` and by each other word with probability
/// `(1 - q) / (V - 1)`. Sentences start uniformly.
#[derive(Debug, Clone)]
pub struct ChainModel {
    pub vocab: Vec<String>,
    pub q: f64,
    index: HashMap<String, usize>,
}

impl ChainModel {
    pub fn new(v: usize, q: f64) -> Self {
        assert!(v >= 3 && q > 0.0 && q < 1.0);
        let vocab = syllable_words(v);
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        ChainModel { vocab, q, index }
    }

    pub fn v(&self) -> usize {
        self.vocab.len()
    }

    pub fn succ(&self, i: usize) -> usize {
        (i + 1) % self.v()
    }

    pub fn off_chain_prob(&self) -> f64 {
        (1.0 - self.q) / (self.v() as f64 - 1.0)
    }

    /// The exact model as a scorer.
    pub fn scorer(&self) -> BigramScorer {
        let v = self.v() as f64;
        let mut lm = BigramScorer::new(1e-12);
        lm.set_start_unseen(1.0 / v);
        for (i, w) in self.vocab.iter().enumerate() {
            lm.set_bigram(w, &self.vocab[self.succ(i)], self.q);
            lm.set_context_unseen(w, self.off_chain_prob());
        }
        lm
    }

    /// Perplexity of any `len`-word text with exactly `breaks` breaks.
    pub fn expected_ppl(&self, len: usize, breaks: usize) -> f64 {
        let v = self.v() as f64;
        let on = (len - 1 - breaks) as f64;
        let ll = -v.ln() + on * self.q.ln() + breaks as f64 * self.off_chain_prob().ln();
        (-ll / len as f64).exp()
    }

    /// Word indices with breaks at `positions` (each in `1..len`). A break
    /// jumps half-way round the chain, so it is never the successor.
    pub fn chain_with_breaks(&self, start: usize, len: usize, positions: &[usize]) -> Vec<usize> {
        let mut w = Vec::with_capacity(len);
        w.push(start % self.v());
        for i in 1..len {
            let prev = w[i - 1];
            w.push(if positions.contains(&i) { (prev + 1 + self.v() / 2) % self.v() } else { self.succ(prev) });
        }
        w
    }

    /// A `len`-word text with `breaks` breaks at uniformly chosen positions
    /// and uniformly chosen jump targets.
    pub fn sample_words(&self, rng: &mut ChaCha8Rng, len: usize, breaks: usize) -> Vec<usize> {
        assert!(len >= 1 && breaks < len);
        let mut positions: Vec<usize> = index::sample(rng, len - 1, breaks).into_iter().map(|p| p + 1).collect();
        positions.sort_unstable();
        let mut w = vec![rng.random_range(0..self.v())];
        for i in 1..len {
            let s = self.succ(w[i - 1]);
            if positions.binary_search(&i).is_ok() {
                let mut t = rng.random_range(0..self.v() - 1);
                if t >= s {
                    t += 1;
                }
                w.push(t);
            } else {
                w.push(s);
            }
        }
        w
    }

    pub fn render(&self, words: &[usize]) -> String {
        words.iter().map(|&i| self.vocab[i].as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn sample_text(&self, rng: &mut ChaCha8Rng, len: usize, breaks: usize) -> String {
        let w = self.sample_words(rng, len, breaks);
        self.render(&w)
    }

    /// Word indices of `text`, or `None` if it has a word outside the
    /// vocabulary.
    pub fn parse(&self, text: &str) -> Option<Vec<usize>> {
        tokenize(text).iter().map(|t| self.index.get(t).copied()).collect()
    }

    /// Positions `i` where word `i` is not the successor of word `i - 1`.
    pub fn break_positions(&self, words: &[usize]) -> Vec<usize> {
        (1..words.len()).filter(|&i| words[i] != self.succ(words[i - 1])).collect()
    }

    /// Remove the first `r` breaks of `text`, keeping its first word, its
    /// length and the positions of the remaining breaks.
    pub fn repair(&self, text: &str, r: usize) -> Option<String> {
        let words = self.parse(text)?;
        if words.is_empty() {
            return Some(String::new());
        }
        let breaks = self.break_positions(&words);
        let keep: Vec<usize> = breaks.into_iter().skip(r).collect();
        Some(self.render(&self.chain_with_breaks(words[0], words.len(), &keep)))
    }
}

/// Mock polisher for chain text: general polishing removes
/// `general_repairs` breaks, objective polishing `objective_repairs`.
/// Text outside the chain vocabulary is returned unchanged.
#[derive(Debug, Clone)]
pub struct ChainPolisher {
    pub model: ChainModel,
    pub general_repairs: usize,
    pub objective_repairs: usize,
}

impl LlmClient for ChainPolisher {
    fn generate(&self, req: &LlmRequest) -> Result<String, BackendError> {
        let Some((mode, excerpt)) = parse_polish_prompt(&req.system_prompt) else {
            return Err(BackendError::Other("chain polisher only handles polishing prompts".into()));
        };
        let r = match mode {
            PolishMode::General => self.general_repairs,
            PolishMode::Objective => self.objective_repairs,
        };
        Ok(self.model.repair(excerpt, r).unwrap_or_else(|| excerpt.to_string()))
    }
}

fn synthetic_chunk(query: usize, j: usize, text: String) -> Chunk {
    let len = text.chars().count();
    Chunk { url: format!("https://q{query}.example/site{j}"), start: 0, end: len, index: 0, text }
}

/// Chunk sets whose chunks have break counts drawn uniformly from
/// `0..=max_breaks`, so perplexity varies within every query.
pub fn ppl_gradient_sets(
    model: &ChainModel,
    seed: u64,
    queries: usize,
    chunks_per_query: usize,
    words: usize,
    max_breaks: usize,
) -> Vec<ChunkSet> {
    (0..queries)
        .map(|q| {
            let mut rng = seeds::rng(seeds::derive(seed, &format!("q{q}")));
            let chunks = (0..chunks_per_query)
                .map(|j| {
                    let b = rng.random_range(0..=max_breaks);
                    synthetic_chunk(q, j, model.sample_text(&mut rng, words, b))
                })
                .collect();
            ChunkSet::new(format!("q{q}"), format!("query {q}"), chunks)
        })
        .collect()
}

/// Chunk sets with a fixed break profile per query, e.g. `[1, 1, 1, 5, 5,
/// 7, 12, 12, 12, 12]`, shuffled within each query.
pub fn profile_sets(model: &ChainModel, seed: u64, queries: usize, words: usize, profile: &[usize]) -> Vec<ChunkSet> {
    (0..queries)
        .map(|q| {
            let mut rng = seeds::rng(seeds::derive(seed, &format!("q{q}")));
            let mut breaks = profile.to_vec();
            breaks.shuffle(&mut rng);
            let chunks = breaks
                .iter()
                .enumerate()
                .map(|(j, &b)| synthetic_chunk(q, j, model.sample_text(&mut rng, words, b)))
                .collect();
            ChunkSet::new(format!("q{q}"), format!("query {q}"), chunks)
        })
        .collect()
}

/// Parameters of [`TopicCorpus::generate`].
#[derive(Debug, Clone)]
pub struct TopicConfig {
    pub queries: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    pub common_words: usize,
    /// Share of topic words in a document; the rest are common words.
    pub topic_share: f64,
    pub cited_per_query: usize,
    pub uncited_per_query: usize,
    pub doc_words: usize,
}

impl Default for TopicConfig {
    fn default() -> Self {
        TopicConfig {
            queries: 40,
            topics: 25,
            words_per_topic: 30,
            common_words: 60,
            topic_share: 0.6,
            cited_per_query: 4,
            uncited_per_query: 5,
            doc_words: 60,
        }
    }
}

/// Search records plus documents. Websites cited by the overview are
/// written in the query's topic vocabulary; organic-only websites each use
/// a randomly drawn topic.
#[derive(Debug, Clone)]
pub struct TopicCorpus {
    pub records: Vec<QueryRecord>,
    pub documents: DocumentStore,
}

impl TopicCorpus {
    pub fn generate(cfg: &TopicConfig, seed: u64) -> Self {
        let vocab = syllable_words(cfg.topics * cfg.words_per_topic + cfg.common_words);
        let (topic_words, common) = vocab.split_at(cfg.topics * cfg.words_per_topic);
        let topic = |t: usize| &topic_words[t * cfg.words_per_topic..(t + 1) * cfg.words_per_topic];
        let mut rng = seeds::rng(seed);
        let mut docs: BTreeMap<String, String> = BTreeMap::new();

        let text = |rng: &mut ChaCha8Rng, t: usize, n: usize| -> String {
            let words: Vec<&str> = (0..n)
                .map(|_| {
                    if rng.random::<f64>() < cfg.topic_share {
                        topic(t)[rng.random_range(0..cfg.words_per_topic)].as_str()
                    } else {
                        common[rng.random_range(0..common.len())].as_str()
                    }
                })
                .collect();
            words.join(" ")
        };

        let mut records = Vec::with_capacity(cfg.queries);
        for q in 0..cfg.queries {
            let t_q = rng.random_range(0..cfg.topics);
            let cited: Vec<String> =
                (0..cfg.cited_per_query).map(|j| format!("https://q{q}.example/cited{j}")).collect();
            let uncited: Vec<String> =
                (0..cfg.uncited_per_query).map(|j| format!("https://q{q}.example/organic{j}")).collect();
            for u in &cited {
                docs.insert(u.clone(), text(&mut rng, t_q, cfg.doc_words));
            }
            let mut organic = Vec::new();
            for (r, u) in uncited.iter().enumerate() {
                let t = rng.random_range(0..cfg.topics);
                let body = text(&mut rng, t, cfg.doc_words);
                let snippet: String = body.split(' ').skip(3).take(8).collect::<Vec<_>>().join(" ");
                docs.insert(u.clone(), body);
                organic.push(OrganicResult {
                    rank: r as u32 + 1,
                    title: format!("result {r}"),
                    url: u.clone(),
                    snippet,
                });
            }
            let overview_sentences = cited
                .chunks(2)
                .map(|pair| {
                    let mut s = text(&mut rng, t_q, 10);
                    s.push('.');
                    OverviewSentence { text: s, cited_urls: pair.to_vec() }
                })
                .collect();
            records.push(QueryRecord {
                query_id: format!("q{q}"),
                query_text: text(&mut rng, t_q, 5),
                overview_sentences,
                reference_urls: cited.clone(),
                organic,
            });
        }
        TopicCorpus { records, documents: docs.into_iter().collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::perplexity;

    #[test]
    fn words_are_distinct_and_fixed_width() {
        let w = syllable_words(200);
        let mut s = w.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 200);
        assert!(w.iter().all(|x| x.len() == 4));
    }

    #[test]
    fn sampled_text_has_planted_ppl() {
        let m = ChainModel::new(120, 0.7);
        let lm = m.scorer();
        let mut rng = seeds::rng(3);
        for b in [0, 1, 5, 12] {
            let words = m.sample_words(&mut rng, 24, b);
            assert_eq!(m.break_positions(&words).len(), b);
            let ppl = perplexity(&lm, &m.render(&words)).unwrap().ppl;
            assert!((ppl - m.expected_ppl(24, b)).abs() < 1e-9, "b={b}: {ppl}");
        }
        assert!(m.expected_ppl(24, 2) < 3.1 && m.expected_ppl(24, 3) > 3.1);
    }

    #[test]
    fn repair_removes_exactly_r_breaks() {
        let m = ChainModel::new(120, 0.7);
        let mut rng = seeds::rng(9);
        for b in [1, 5, 7, 12] {
            let t = m.sample_text(&mut rng, 24, b);
            for r in [0, 4, 6] {
                let fixed = m.repair(&t, r).unwrap();
                let words = m.parse(&fixed).unwrap();
                assert_eq!(words.len(), 24);
                assert_eq!(m.break_positions(&words).len(), b.saturating_sub(r));
            }
        }
        assert_eq!(m.repair("not chain words", 2), None);
    }

    #[test]
    fn topic_corpus_is_consistent() {
        let c = TopicCorpus::generate(&TopicConfig { queries: 3, ..Default::default() }, 1);
        assert_eq!(c.records.len(), 3);
        for r in &c.records {
            for u in r.reference_urls.iter().chain(r.organic.iter().map(|o| &o.url)) {
                assert!(c.documents.get(u).is_some());
            }
            for o in &r.organic {
                assert!(c.documents.get(&o.url).unwrap().text.contains(&o.snippet));
            }
        }
    }
}
