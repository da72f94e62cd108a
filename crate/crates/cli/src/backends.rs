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

use std::collections::BTreeSet;
use std::sync::Arc;

use anyhow::Result;

use geoscope_core::chunking::EmbeddingBackend;
use geoscope_core::corpus::DocumentStore;
use geoscope_core::metrics::reference::{
    tokenize, BigramScorer, ConstantProbability, HashedBagOfWords, OneHotEmbedder,
};
use geoscope_core::metrics::TokenProbabilityBackend;
use geoscope_core::ragx::doubles::{CiteRule, OracleCiter};
use geoscope_core::ragx::{LlmClient, RetryPolicy};

use crate::config::{EmbedderConfig, LlmConfig, OfflineRule, TokenBackendConfig};
use crate::http::HttpClient;

pub fn token_backend(cfg: &TokenBackendConfig, docs: &DocumentStore) -> Arc<dyn TokenProbabilityBackend> {
    match *cfg {
        TokenBackendConfig::Bigram { add_k } => {
            Arc::new(BigramScorer::from_corpus(docs.iter().map(|d| d.text.as_str()), add_k))
        }
        TokenBackendConfig::Constant { p } => Arc::new(ConstantProbability::new(p)),
    }
}

pub fn embedder(cfg: &EmbedderConfig) -> Box<dyn EmbeddingBackend> {
    match *cfg {
        EmbedderConfig::Bow { dim } => Box::new(HashedBagOfWords::new(dim)),
        EmbedderConfig::Onehot { dim } => Box::new(OneHotEmbedder::new(dim)),
    }
}

/// Up to 200 distinct corpus tokens, sorted, for the offline citer's
/// answer text.
fn answer_vocabulary(docs: &DocumentStore) -> Vec<String> {
    let words: BTreeSet<String> = docs.iter().flat_map(|d| tokenize(&d.text)).collect();
    let v: Vec<String> = words.into_iter().take(200).collect();
    if v.is_empty() {
        vec!["answer".into()]
    } else {
        v
    }
}

pub fn llm_client(
    cfg: &LlmConfig,
    scorer: Arc<dyn TokenProbabilityBackend>,
    docs: &DocumentStore,
) -> Result<(Box<dyn LlmClient>, RetryPolicy)> {
    Ok(match cfg {
        LlmConfig::Offline { citer } => {
            let rule = match *citer {
                OfflineRule::LowestPpl { k } => CiteRule::LowestPpl { k },
                OfflineRule::Threshold { max_ppl } => CiteRule::Threshold { max_ppl },
                OfflineRule::Logistic { intercept, ppl_slope, pos_slope } => {
                    CiteRule::Logistic { intercept, ppl_slope, pos_slope }
                }
            };
            (Box::new(OracleCiter::new(scorer, rule, answer_vocabulary(docs))), RetryPolicy::immediate())
        }
        LlmConfig::Http(h) => {
            let policy = RetryPolicy { max_attempts: h.max_attempts, ..RetryPolicy::default() };
            (Box::new(HttpClient::from_config(h)?), policy)
        }
    })
}
