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

//! Analysis toolkit for generative-search citation studies.
//!
//! The crate is organised as a batch pipeline:
//!
//! - [`corpus`] ingests pre-collected search records and website text and
//!   assigns each (query, website) pair a citation category.
//! - [`chunking`] slices documents into overlapping character windows and
//!   selects one representative chunk per website (or per sentence/website
//!   pair) by embedding similarity.
//! - [`metrics`] scores chunks: perplexity, cosine similarity, Vendi score.
//! - [`citeparse`] renders labelled source documents and parses the
//!   `%%%X,Y,Z%%%` citation markers out of generated answers.
//! - [`ragx`] drives RAG and content-polishing experiments against a
//!   pluggable LLM client.
//! - [`econ`] estimates fixed-effects linear probability and logit models,
//!   robust OLS, paired t and two-sample KS tests.
//! - [`synth`] builds planted-effect synthetic corpora used by the
//!   acceptance suite and benchmarks.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod chunking;
pub mod citeparse;
pub mod corpus;
pub mod econ;
pub mod error;
pub mod io;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod ragx;
pub mod seeds;
pub mod synth;

pub use error::BackendError;
pub use par::Exec;
