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

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::error::BackendError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProb {
    pub token: String,
    /// Natural log of P(token | preceding tokens).
    pub log_prob: f64,
}

/// A language model that scores each token of a text given its prefix.
pub trait TokenProbabilityBackend: Send + Sync {
    fn score(&self, text: &str) -> Result<Vec<TokenLogProb>, BackendError>;
}

impl<T: TokenProbabilityBackend + ?Sized> TokenProbabilityBackend for &T {
    fn score(&self, text: &str) -> Result<Vec<TokenLogProb>, BackendError> {
        (**self).score(text)
    }
}

impl<T: TokenProbabilityBackend + ?Sized> TokenProbabilityBackend for Box<T> {
    fn score(&self, text: &str) -> Result<Vec<TokenLogProb>, BackendError> {
        (**self).score(text)
    }
}

/// A scorer that needs exclusive access per call; wrap in
/// [`Serialized`](crate::par::Serialized) to share it.
pub trait LocalTokenScorer: Send {
    fn score(&mut self, text: &str) -> Result<Vec<TokenLogProb>, BackendError>;
}

impl<B: LocalTokenScorer> TokenProbabilityBackend for crate::par::Serialized<B> {
    fn score(&self, text: &str) -> Result<Vec<TokenLogProb>, BackendError> {
        self.lock().score(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub ppl: f64,
    pub token_count: usize,
    pub mean_log_prob: f64,
}

// Rounding in a backend can push log(1) a hair above zero.
const POSITIVE_SLACK: f64 = 1e-12;

/// Perplexity from per-token log-probabilities, computed in log space:
/// `exp(-(1/N) * sum(log p_i))`.
pub fn perplexity_from_log_probs(log_probs: &[f64]) -> Result<PerplexityReport, MetricError> {
    if log_probs.is_empty() {
        return Err(MetricError::NoTokens);
    }
    let mut sum = 0.0;
    for (i, &lp) in log_probs.iter().enumerate() {
        if !lp.is_finite() {
            return Err(MetricError::NonFiniteLogProb(i));
        }
        if lp > POSITIVE_SLACK {
            return Err(MetricError::PositiveLogProb { index: i, value: lp });
        }
        sum += lp.min(0.0);
    }
    let n = log_probs.len();
    let mean_log_prob = sum / n as f64;
    Ok(PerplexityReport { ppl: (-mean_log_prob).exp(), token_count: n, mean_log_prob })
}

pub fn perplexity<B: TokenProbabilityBackend + ?Sized>(
    backend: &B,
    text: &str,
) -> Result<PerplexityReport, MetricError> {
    if text.trim().is_empty() {
        return Err(MetricError::EmptyText);
    }
    let scored = backend.score(text)?;
    let lps: Vec<f64> = scored.iter().map(|t| t.log_prob).collect();
    perplexity_from_log_probs(&lps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::reference::{BigramScorer, ConstantProbability};
    use proptest::prelude::*;

    #[test]
    fn certain_tokens_give_unit_perplexity() {
        let r = perplexity(&ConstantProbability::new(1.0), "a b c d").unwrap();
        assert_eq!(r.ppl, 1.0);
        assert_eq!(r.token_count, 4);
    }

    #[test]
    fn uniform_sixteenth_gives_sixteen() {
        for text in ["x", "x y", "one two three four five six seven"] {
            let r = perplexity(&ConstantProbability::new(1.0 / 16.0), text).unwrap();
            assert!((r.ppl - 16.0).abs() < 1e-9, "{}", r.ppl);
        }
    }

    #[test]
    fn bigram_fixture_gives_four() {
        let lm = BigramScorer::new(1e-6).with_start("a", 0.5).with_bigram("a", "b", 0.25).with_bigram("b", "c", 0.125);
        let r = perplexity(&lm, "a b c").unwrap();
        assert!((r.ppl - 4.0).abs() < 1e-9, "{}", r.ppl);
    }

    #[test]
    fn error_paths() {
        assert_eq!(perplexity(&ConstantProbability::new(0.5), "  "), Err(MetricError::EmptyText));
        assert_eq!(perplexity_from_log_probs(&[]), Err(MetricError::NoTokens));
        assert_eq!(perplexity_from_log_probs(&[-1.0, f64::NEG_INFINITY]), Err(MetricError::NonFiniteLogProb(1)));
        assert!(matches!(perplexity_from_log_probs(&[0.5]), Err(MetricError::PositiveLogProb { .. })));
        // punctuation-only text tokenizes to nothing
        assert_eq!(perplexity(&ConstantProbability::new(0.5), "!!"), Err(MetricError::NoTokens));
    }

    proptest! {
        #[test]
        fn recomputing_from_mean_reproduces_ppl(lps in proptest::collection::vec(-20.0f64..0.0, 1..200)) {
            let r = perplexity_from_log_probs(&lps).unwrap();
            prop_assert!(r.ppl >= 1.0);
            prop_assert!(((-r.mean_log_prob).exp() - r.ppl).abs() <= 1e-12 * r.ppl);
        }
    }
}
