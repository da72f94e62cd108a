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

//! Deterministic in-tree backends. They need no network or model weights and
//! are what the test suite and offline pipeline runs use.

use std::collections::HashMap;
use std::sync::Mutex;

use super::perplexity::{TokenLogProb, TokenProbabilityBackend};
use crate::chunking::EmbeddingBackend;
use crate::error::BackendError;
use crate::seeds::fnv1a;

/// Lowercased whitespace tokens with surrounding punctuation trimmed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Assigns the same probability to every token.
#[derive(Debug, Clone, Copy)]
pub struct ConstantProbability {
    log_p: f64,
}

impl ConstantProbability {
    pub fn new(p: f64) -> Self {
        assert!(p > 0.0 && p <= 1.0, "probability must lie in (0, 1]");
        Self { log_p: p.ln() }
    }
}

impl TokenProbabilityBackend for ConstantProbability {
    fn score(&self, text: &str) -> Result<Vec<TokenLogProb>, BackendError> {
        Ok(tokenize(text).into_iter().map(|token| TokenLogProb { token, log_prob: self.log_p }).collect())
    }
}

/// Fixed-table bigram model.
///
/// The first token is scored with the start table, later tokens with
/// `P(token | previous)`. Pairs missing from the table fall back to the
/// per-context probability when one is set, else to the global `unseen`
/// probability.
#[derive(Debug, Clone)]
pub struct BigramScorer {
    start: HashMap<String, f64>,
    bigram: HashMap<String, HashMap<String, f64>>,
    context_unseen: HashMap<String, f64>,
    start_unseen: Option<f64>,
    unseen: f64,
}

impl BigramScorer {
    pub fn new(unseen: f64) -> Self {
        assert!(unseen > 0.0 && unseen <= 1.0);
        Self {
            start: HashMap::new(),
            bigram: HashMap::new(),
            context_unseen: HashMap::new(),
            start_unseen: None,
            unseen,
        }
    }

    pub fn with_start(mut self, token: &str, p: f64) -> Self {
        self.set_start(token, p);
        self
    }

    pub fn with_bigram(mut self, prev: &str, next: &str, p: f64) -> Self {
        self.set_bigram(prev, next, p);
        self
    }

    pub fn set_start(&mut self, token: &str, p: f64) {
        self.start.insert(token.to_lowercase(), p);
    }

    pub fn set_bigram(&mut self, prev: &str, next: &str, p: f64) {
        self.bigram.entry(prev.to_lowercase()).or_default().insert(next.to_lowercase(), p);
    }

    /// Probability for successors of `prev` that are not in the table.
    pub fn set_context_unseen(&mut self, prev: &str, p: f64) {
        self.context_unseen.insert(prev.to_lowercase(), p);
    }

    pub fn set_start_unseen(&mut self, p: f64) {
        self.start_unseen = Some(p);
    }

    /// Add-k smoothed maximum-likelihood estimate from a set of texts.
    pub fn from_corpus<'a, I: IntoIterator<Item = &'a str>>(texts: I, add_k: f64) -> Self {
        assert!(add_k > 0.0);
        let mut start_counts: HashMap<String, f64> = HashMap::new();
        let mut pair_counts: HashMap<String, HashMap<String, f64>> = HashMap::new();
        let mut n_texts = 0.0;
        let mut vocab: HashMap<String, ()> = HashMap::new();
        for text in texts {
            let toks = tokenize(text);
            let Some(first) = toks.first() else { continue };
            n_texts += 1.0;
            *start_counts.entry(first.clone()).or_default() += 1.0;
            for w in toks.windows(2) {
                *pair_counts.entry(w[0].clone()).or_default().entry(w[1].clone()).or_default() += 1.0;
            }
            for t in toks {
                vocab.insert(t, ());
            }
        }
        // one extra slot for out-of-vocabulary tokens
        let v = vocab.len() as f64 + 1.0;
        let mut lm = BigramScorer::new(1.0 / v);
        let start_total = n_texts + add_k * v;
        for (t, c) in start_counts {
            lm.set_start(&t, (c + add_k) / start_total);
        }
        lm.set_start_unseen(add_k / start_total);
        for (prev, nexts) in pair_counts {
            let total: f64 = nexts.values().sum::<f64>() + add_k * v;
            for (next, c) in &nexts {
                lm.set_bigram(&prev, next, (c + add_k) / total);
            }
            lm.set_context_unseen(&prev, add_k / total);
        }
        lm
    }

    fn start_prob(&self, tok: &str) -> f64 {
        self.start.get(tok).copied().or(self.start_unseen).unwrap_or(self.unseen)
    }

    fn next_prob(&self, prev: &str, tok: &str) -> f64 {
        self.bigram
            .get(prev)
            .and_then(|m| m.get(tok))
            .copied()
            .or_else(|| self.context_unseen.get(prev).copied())
            .unwrap_or(self.unseen)
    }
}

impl TokenProbabilityBackend for BigramScorer {
    fn score(&self, text: &str) -> Result<Vec<TokenLogProb>, BackendError> {
        let toks = tokenize(text);
        let mut out = Vec::with_capacity(toks.len());
        for (i, t) in toks.iter().enumerate() {
            let p = if i == 0 { self.start_prob(t) } else { self.next_prob(&toks[i - 1], t) };
            out.push(TokenLogProb { token: t.clone(), log_prob: p.ln() });
        }
        Ok(out)
    }
}

/// Maps every distinct input string to its own basis vector, so cosine is 1
/// for equal strings and 0 otherwise. Fails once `dimension` distinct strings
/// have been seen.
#[derive(Debug)]
pub struct OneHotEmbedder {
    dim: usize,
    vocab: Mutex<HashMap<String, usize>>,
}

impl OneHotEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        Self { dim, vocab: Mutex::new(HashMap::new()) }
    }
}

impl EmbeddingBackend for OneHotEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let mut vocab = self.vocab.lock().map_err(|_| BackendError::Other("vocabulary lock poisoned".into()))?;
        let next = vocab.len();
        let idx = *vocab.entry(text.to_string()).or_insert(next);
        if idx >= self.dim {
            vocab.remove(text);
            return Err(BackendError::Other(format!("one-hot vocabulary exhausted at {} entries", self.dim)));
        }
        let mut v = vec![0.0; self.dim];
        v[idx] = 1.0;
        Ok(v)
    }
}

/// Bag-of-words counts over a hashed vocabulary. Slot 0 is reserved for text
/// without any word tokens so every input has a non-zero embedding.
#[derive(Debug, Clone, Copy)]
pub struct HashedBagOfWords {
    dim: usize,
}

impl HashedBagOfWords {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2);
        Self { dim }
    }
}

impl EmbeddingBackend for HashedBagOfWords {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let mut v = vec![0.0; self.dim];
        let toks = tokenize(text);
        if toks.is_empty() {
            v[0] = 1.0;
        }
        for t in toks {
            let slot = 1 + (fnv1a(t.as_bytes()) % (self.dim as u64 - 1)) as usize;
            v[slot] += 1.0;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{embed_unit, perplexity};

    #[test]
    fn tokenizer_trims_punctuation() {
        assert_eq!(tokenize("Hello, World! -- a.b"), vec!["hello", "world", "a.b"]);
    }

    #[test]
    fn corpus_bigram_prefers_seen_text() {
        let lm = BigramScorer::from_corpus(["the cat sat", "the cat ran", "a dog sat"], 0.1);
        let seen = perplexity(&lm, "the cat sat").unwrap().ppl;
        let odd = perplexity(&lm, "sat the dog").unwrap().ppl;
        assert!(seen < odd, "{seen} vs {odd}");
        // distribution over successors of "the" sums to one (seen + unseen mass)
        let v = 6.0 + 1.0;
        let total = lm.next_prob("the", "cat") + (v - 1.0) * lm.next_prob("the", "zzz");
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_hot_distinct_strings_orthogonal() {
        let e = OneHotEmbedder::new(3);
        let a = embed_unit(&e, "a").unwrap();
        let b = embed_unit(&e, "b").unwrap();
        let a2 = embed_unit(&e, "a").unwrap();
        assert_eq!(a, a2);
        assert_eq!(crate::metrics::cosine(&a, &b).unwrap(), 0.0);
        embed_unit(&e, "c").unwrap();
        assert!(e.embed("d").is_err());
        assert!(e.embed("a").is_ok());
    }

    #[test]
    fn bag_of_words_overlap() {
        let e = HashedBagOfWords::new(512);
        let a = embed_unit(&e, "red apple pie").unwrap();
        let b = embed_unit(&e, "apple pie recipe").unwrap();
        let c = embed_unit(&e, "quantum chromodynamics lecture").unwrap();
        let ab = crate::metrics::cosine(&a, &b).unwrap();
        let ac = crate::metrics::cosine(&a, &c).unwrap();
        assert!(ab > ac);
        assert!(embed_unit(&e, "...").is_ok());
    }
}
