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

//! Chunk-level metrics: perplexity, cosine similarity and Vendi diversity.

mod perplexity;
pub mod reference;
mod similarity;
mod vendi;

use thiserror::Error;

use crate::error::BackendError;

pub use perplexity::{
    perplexity, perplexity_from_log_probs, LocalTokenScorer, PerplexityReport, TokenLogProb, TokenProbabilityBackend,
};
pub use similarity::{cosine, embed_unit, pairwise_similarity, PairInput, PairKind, PairRow, UnitVector};
pub use vendi::{vendi_score, KernelSpec, VendiReport};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("empty text")]
    EmptyText,
    #[error("backend returned zero tokens")]
    NoTokens,
    #[error("non-finite log-probability at token {0}")]
    NonFiniteLogProb(usize),
    #[error("positive log-probability {value} at token {index}")]
    PositiveLogProb { index: usize, value: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("vector has non-finite components")]
    NonFiniteVector,
    #[error("kernel matrix has non-finite or non-positive diagonal entries")]
    NonFiniteKernel,
    #[error("eigenvalue {0} is below the clamp tolerance")]
    NegativeEigenvalue(f64),
    #[error("at least one item is required")]
    EmptyInput,
    #[error("rbf gamma must be finite and positive, got {0}")]
    InvalidGamma(f64),
    #[error(transparent)]
    Backend(#[from] BackendError),
}
