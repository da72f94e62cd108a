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

//! Search-record and website-text ingestion, plus the citation categories
//! that drive representative-chunk selection.

mod text;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use text::{collapse_whitespace, normalize_url, split_sentences, strip_markup, SentenceSpan};

/// A malformed input line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}: {} malformed line(s), first {}", errors.len(), errors[0])]
    Malformed { source_name: String, errors: Vec<LineError> },
    #[error("query {0}: record has no overview and no organic results")]
    EmptyRecord(String),
}

/// Record-level schema violations.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("record missing query_id")]
    MissingQueryId,
    #[error("organic rank {0} is not positive")]
    NonPositiveRank(i64),
    #[error("duplicate organic rank {0}")]
    DuplicateRank(u32),
    #[error("cited url {0} is not in the reference list")]
    CitationNotReferenced(String),
    #[error("empty url")]
    EmptyUrl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverviewSentence {
    pub text: String,
    pub cited_urls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrganicResult {
    pub rank: u32,
    pub title: String,
    pub url: String,
    pub snippet: String,
}

/// One search query with its AI-overview sentences, reference list and
/// organic results. All URLs are normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub query_text: String,
    pub overview_sentences: Vec<OverviewSentence>,
    pub reference_urls: Vec<String>,
    pub organic: Vec<OrganicResult>,
}

impl QueryRecord {
    /// Full overview text, sentences joined by single spaces.
    pub fn overview_text(&self) -> String {
        self.overview_sentences.iter().map(|s| s.text.trim()).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(" ")
    }

    /// True when at least one overview sentence carries a citation. Records
    /// with references listed only at the end return false.
    pub fn has_sentence_citations(&self) -> bool {
        self.overview_sentences.iter().any(|s| !s.cited_urls.is_empty())
    }

    pub fn is_empty(&self) -> bool {
        self.overview_sentences.is_empty() && self.reference_urls.is_empty() && self.organic.is_empty()
    }

    pub fn organic_for(&self, url: &str) -> Option<&OrganicResult> {
        self.organic.iter().find(|o| o.url == url)
    }

    /// Parse one ingestion line, normalizing URLs and enforcing invariants.
    pub fn from_json_line(line: &str) -> Result<Self, String> {
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
        raw.into_record().map_err(|e| e.to_string())
    }
}

#[derive(Deserialize)]
struct RawRecord {
    query_id: Option<String>,
    #[serde(default)]
    query_text: String,
    #[serde(default)]
    overview: RawOverview,
    #[serde(default)]
    organic: Vec<RawOrganic>,
}

#[derive(Deserialize, Default)]
struct RawOverview {
    #[serde(default)]
    sentences: Vec<RawSentence>,
    #[serde(default)]
    references: Vec<String>,
}

#[derive(Deserialize)]
struct RawSentence {
    text: String,
    #[serde(default)]
    citations: Vec<String>,
}

#[derive(Deserialize)]
struct RawOrganic {
    rank: i64,
    #[serde(default)]
    title: String,
    url: String,
    #[serde(default)]
    snippet: String,
}

fn norm_nonempty(u: &str) -> Result<String, SchemaError> {
    let n = normalize_url(u);
    if n.is_empty() {
        Err(SchemaError::EmptyUrl)
    } else {
        Ok(n)
    }
}

fn dedup_preserving(urls: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    urls.into_iter().filter(|u| seen.insert(u.clone())).collect()
}

impl RawRecord {
    fn into_record(self) -> Result<QueryRecord, SchemaError> {
        let query_id = match self.query_id {
            Some(id) if !id.trim().is_empty() => id,
            _ => return Err(SchemaError::MissingQueryId),
        };
        let reference_urls =
            dedup_preserving(self.overview.references.iter().map(|u| norm_nonempty(u)).collect::<Result<_, _>>()?);
        let refs: HashSet<&str> = reference_urls.iter().map(String::as_str).collect();
        let mut overview_sentences = Vec::with_capacity(self.overview.sentences.len());
        for s in self.overview.sentences {
            let cited = dedup_preserving(s.citations.iter().map(|u| norm_nonempty(u)).collect::<Result<_, _>>()?);
            if let Some(missing) = cited.iter().find(|u| !refs.contains(u.as_str())) {
                return Err(SchemaError::CitationNotReferenced(missing.clone()));
            }
            overview_sentences.push(OverviewSentence { text: s.text, cited_urls: cited });
        }
        let mut organic = Vec::with_capacity(self.organic.len());
        for o in self.organic {
            if o.rank < 1 {
                return Err(SchemaError::NonPositiveRank(o.rank));
            }
            let rank = u32::try_from(o.rank).map_err(|_| SchemaError::NonPositiveRank(o.rank))?;
            organic.push(OrganicResult { rank, title: o.title, url: norm_nonempty(&o.url)?, snippet: o.snippet });
        }
        organic.sort_by_key(|o| o.rank);
        if let Some(w) = organic.windows(2).find(|w| w[0].rank == w[1].rank) {
            return Err(SchemaError::DuplicateRank(w[0].rank));
        }
        Ok(QueryRecord { query_id, query_text: self.query_text, overview_sentences, reference_urls, organic })
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path).map(BufReader::new).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

/// Parse query records from JSON-lines input. Every malformed line is
/// collected; any malformed line fails the whole load.
pub fn parse_query_records<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<QueryRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen_ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                errors.push(LineError { line: line_no, message: format!("unreadable: {e}") });
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        match QueryRecord::from_json_line(&line) {
            Ok(r) => {
                if !seen_ids.insert(r.query_id.clone()) {
                    errors.push(LineError { line: line_no, message: format!("duplicate query_id {}", r.query_id) });
                } else {
                    records.push(r);
                }
            }
            Err(message) => errors.push(LineError { line: line_no, message }),
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(CorpusError::Malformed { source_name: source_name.to_string(), errors })
    }
}

pub fn load_query_records(path: &Path) -> Result<Vec<QueryRecord>, CorpusError> {
    parse_query_records(open(path)?, &path.display().to_string())
}

/// Markup-free website text keyed by normalized URL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub url: String,
    pub text: String,
}

/// Deduplicated document collection.
#[derive(Debug, Clone, Default)]
pub struct DocumentStore {
    docs: BTreeMap<String, Document>,
}

/// Non-fatal document ingestion events.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DocumentReport {
    /// (line, url) of later duplicates; the first occurrence is kept.
    pub duplicates: Vec<(usize, String)>,
    /// (line, url) of documents whose text was empty after stripping.
    pub empty: Vec<(usize, String)>,
}

#[derive(Deserialize)]
struct RawDocument {
    url: Option<String>,
    text: Option<String>,
    raw: Option<String>,
}

impl DocumentStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a document; returns false (and keeps the existing one) when the
    /// normalized URL is already present or the text is blank.
    pub fn insert(&mut self, url: &str, text: &str) -> bool {
        let url = normalize_url(url);
        let text = collapse_whitespace(text);
        if text.is_empty() || self.docs.contains_key(&url) {
            return false;
        }
        self.docs.insert(url.clone(), Document { url, text });
        true
    }

    pub fn get(&self, url: &str) -> Option<&Document> {
        self.docs.get(url)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }
}

impl FromIterator<(String, String)> for DocumentStore {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        let mut store = DocumentStore::new();
        for (u, t) in iter {
            store.insert(&u, &t);
        }
        store
    }
}

pub fn parse_documents<R: BufRead>(
    reader: R,
    source_name: &str,
) -> Result<(DocumentStore, DocumentReport), CorpusError> {
    let mut store = DocumentStore::new();
    let mut report = DocumentReport::default();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                errors.push(LineError { line: line_no, message: format!("unreadable: {e}") });
                continue;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(LineError { line: line_no, message: format!("invalid JSON: {e}") });
                continue;
            }
        };
        let Some(url) = raw.url.filter(|u| !normalize_url(u).is_empty()) else {
            errors.push(LineError { line: line_no, message: "document missing url".into() });
            continue;
        };
        let text = match (raw.text, raw.raw) {
            (Some(t), _) => collapse_whitespace(&t),
            (None, Some(r)) => strip_markup(&r),
            (None, None) => {
                errors.push(LineError { line: line_no, message: "document has neither text nor raw".into() });
                continue;
            }
        };
        let norm = normalize_url(&url);
        if text.is_empty() {
            report.empty.push((line_no, norm));
        } else if !store.insert(&norm, &text) {
            report.duplicates.push((line_no, norm));
        }
    }
    if errors.is_empty() {
        Ok((store, report))
    } else {
        Err(CorpusError::Malformed { source_name: source_name.to_string(), errors })
    }
}

pub fn load_documents(path: &Path) -> Result<(DocumentStore, DocumentReport), CorpusError> {
    parse_documents(open(path)?, &path.display().to_string())
}

/// How a website relates to a query's AI overview.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CitationCategory {
    /// Cited by at least one specific overview sentence.
    SentenceCited,
    /// In the overview reference list but not cited by any sentence.
    ListedOnly,
    /// Appears only among the organic results.
    OrganicOnly,
}

impl CitationCategory {
    pub fn chat_cite(self) -> u8 {
        match self {
            CitationCategory::SentenceCited | CitationCategory::ListedOnly => 1,
            CitationCategory::OrganicOnly => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CitationCategory::SentenceCited => "sentence_cited",
            CitationCategory::ListedOnly => "listed_only",
            CitationCategory::OrganicOnly => "organic_only",
        }
    }
}

impl std::str::FromStr for CitationCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sentence_cited" => Ok(CitationCategory::SentenceCited),
            "listed_only" => Ok(CitationCategory::ListedOnly),
            "organic_only" => Ok(CitationCategory::OrganicOnly),
            other => Err(format!("unknown citation category {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CitationLabel {
    pub url: String,
    pub category: CitationCategory,
    pub chat_cite: u8,
}

/// Labels for the websites of one query that have documents, plus the URLs
/// that could not be resolved.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Labeling {
    pub labels: Vec<CitationLabel>,
    pub missing: Vec<String>,
}

/// Assign each related website one category, by precedence
/// `SentenceCited > ListedOnly > OrganicOnly`.
///
/// Websites are listed in order of first appearance (sentence citations,
/// then references, then organic results). Websites without a document are
/// reported in `missing` instead of labelled.
pub fn label_citations<'a>(record: &'a QueryRecord, docs: &DocumentStore) -> Result<Labeling, CorpusError> {
    if record.is_empty() {
        return Err(CorpusError::EmptyRecord(record.query_id.clone()));
    }
    let mut order: Vec<(&'a str, CitationCategory)> = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |url: &'a str, cat| {
        if seen.insert(url) {
            order.push((url, cat));
        }
    };
    let sentence_cited: Vec<&str> =
        record.overview_sentences.iter().flat_map(|s| s.cited_urls.iter().map(String::as_str)).collect();
    for u in &sentence_cited {
        push(u, CitationCategory::SentenceCited);
    }
    for u in &record.reference_urls {
        push(u, CitationCategory::ListedOnly);
    }
    for o in &record.organic {
        push(&o.url, CitationCategory::OrganicOnly);
    }

    let mut out = Labeling::default();
    for (url, category) in order {
        if docs.get(url).is_some() {
            out.labels.push(CitationLabel { url: url.to_string(), category, chat_cite: category.chat_cite() });
        } else {
            out.missing.push(url.to_string());
        }
    }
    Ok(out)
}

/// Counts written to the ingestion manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub records: usize,
    pub documents: usize,
    pub end_only_queries: usize,
    pub empty_records: Vec<String>,
    /// (query_id, url) pairs whose website has no document.
    pub missing_documents: Vec<(String, String)>,
    pub duplicate_documents: usize,
    pub empty_documents: usize,
}

pub fn summarize(records: &[QueryRecord], docs: &DocumentStore, report: &DocumentReport) -> IngestSummary {
    let mut missing = Vec::new();
    let mut empty_records = Vec::new();
    for r in records {
        match label_citations(r, docs) {
            Ok(l) => missing.extend(l.missing.into_iter().map(|u| (r.query_id.clone(), u))),
            Err(_) => empty_records.push(r.query_id.clone()),
        }
    }
    IngestSummary {
        records: records.len(),
        documents: docs.len(),
        end_only_queries: records
            .iter()
            .filter(|r| !r.reference_urls.is_empty() && !r.has_sentence_citations())
            .count(),
        empty_records,
        missing_documents: missing,
        duplicate_documents: report.duplicates.len(),
        empty_documents: report.empty.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"query_id":"q1","query_text":"what is rust","overview":{"sentences":[{"text":"Rust is a language.","citations":["https://A.com/x/"]}],"references":["https://a.com/x","https://b.com"]},"organic":[{"rank":2,"title":"C","url":"https://c.com","snippet":"c snip"},{"rank":1,"title":"B","url":"https://b.com/","snippet":"b snip"}]}"#;

    fn store(urls: &[&str]) -> DocumentStore {
        urls.iter().map(|u| (u.to_string(), format!("text of {u}"))).collect()
    }

    #[test]
    fn loads_well_formed_record() {
        let recs = parse_query_records(GOOD.as_bytes(), "mem").unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.overview_sentences[0].cited_urls, vec!["https://a.com/x"]);
        assert_eq!(r.organic[0].rank, 1);
        assert_eq!(r.organic[0].url, "https://b.com");
    }

    #[test]
    fn rejects_unreferenced_citation() {
        let line =
            r#"{"query_id":"q","overview":{"sentences":[{"text":"S.","citations":["http://z.org"]}],"references":[]}}"#;
        let err = parse_query_records(line.as_bytes(), "mem").unwrap_err();
        let CorpusError::Malformed { errors, .. } = err else { panic!() };
        assert_eq!(errors[0].line, 1);
        assert!(errors[0].message.contains("http://z.org"), "{}", errors[0].message);
    }

    #[test]
    fn rejects_duplicate_and_nonpositive_rank() {
        let dup = r#"{"query_id":"q","organic":[{"rank":3,"url":"http://a"},{"rank":3,"url":"http://b"}]}"#;
        let zero = r#"{"query_id":"q","organic":[{"rank":0,"url":"http://a"}]}"#;
        let missing = r#"{"query_text":"x"}"#;
        let input = format!("{GOOD}\n{dup}\n\n{zero}\n{missing}\nnot json\n");
        let CorpusError::Malformed { errors, .. } = parse_query_records(input.as_bytes(), "mem").unwrap_err() else {
            panic!()
        };
        let lines: Vec<usize> = errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 4, 5, 6]);
        assert!(errors[0].message.contains("duplicate organic rank 3"));
        assert!(errors[1].message.contains("not positive"));
        assert!(errors[2].message.contains("query_id"));
    }

    #[test]
    fn document_ingestion_strips_and_dedups() {
        let input = "{\"url\":\"http://A.com/\",\"raw\":\"<p>x &amp; y</p>\"}\n{\"url\":\"http://a.com\",\"text\":\"dup\"}\n{\"url\":\"http://e.com\",\"raw\":\"<br>\"}\n";
        let (docs, report) = parse_documents(input.as_bytes(), "mem").unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs.get("http://a.com").unwrap().text, "x & y");
        assert_eq!(report.duplicates, vec![(2, "http://a.com".to_string())]);
        assert_eq!(report.empty, vec![(3, "http://e.com".to_string())]);
    }

    #[test]
    fn labels_follow_precedence() {
        let r = &parse_query_records(GOOD.as_bytes(), "mem").unwrap()[0];
        let docs = store(&["https://a.com/x", "https://b.com", "https://c.com"]);
        let l = label_citations(r, &docs).unwrap();
        let got: Vec<(&str, CitationCategory, u8)> =
            l.labels.iter().map(|x| (x.url.as_str(), x.category, x.chat_cite)).collect();
        assert_eq!(
            got,
            vec![
                ("https://a.com/x", CitationCategory::SentenceCited, 1),
                ("https://b.com", CitationCategory::ListedOnly, 1),
                ("https://c.com", CitationCategory::OrganicOnly, 0),
            ]
        );
    }

    #[test]
    fn toy_corpus_chat_cite_mean_is_half() {
        // 4 rows: one sentence-cited, one listed (also organic), two organic-only.
        let line = r#"{"query_id":"q","overview":{"sentences":[{"text":"A.","citations":["http://s"]}],"references":["http://s","http://l"]},"organic":[{"rank":1,"url":"http://l"},{"rank":2,"url":"http://o1"},{"rank":3,"url":"http://o2"}]}"#;
        let r = QueryRecord::from_json_line(line).unwrap();
        let docs = store(&["http://s", "http://l", "http://o1", "http://o2"]);
        let l = label_citations(&r, &docs).unwrap();
        assert_eq!(l.labels.len(), 4);
        assert_eq!(l.labels[1].category, CitationCategory::ListedOnly);
        let mean = l.labels.iter().map(|x| f64::from(x.chat_cite)).sum::<f64>() / 4.0;
        assert_eq!(mean, 0.5);
    }

    #[test]
    fn missing_documents_are_reported_not_fatal() {
        let r = &parse_query_records(GOOD.as_bytes(), "mem").unwrap()[0];
        let docs = store(&["https://b.com"]);
        let l = label_citations(r, &docs).unwrap();
        assert_eq!(l.labels.len(), 1);
        assert_eq!(l.missing, vec!["https://a.com/x", "https://c.com"]);
    }

    #[test]
    fn empty_record_is_an_error() {
        let r = QueryRecord::from_json_line(r#"{"query_id":"e"}"#).unwrap();
        assert!(matches!(label_citations(&r, &DocumentStore::new()), Err(CorpusError::EmptyRecord(_))));
    }

    #[test]
    fn label_partition_property() {
        let r = &parse_query_records(GOOD.as_bytes(), "mem").unwrap()[0];
        let docs = store(&["https://a.com/x", "https://b.com", "https://c.com"]);
        let l = label_citations(r, &docs).unwrap();
        let urls: HashSet<_> = l.labels.iter().map(|x| &x.url).collect();
        assert_eq!(urls.len(), l.labels.len());
        assert!(l.labels.iter().all(|x| x.chat_cite == x.category.chat_cite()));
    }
}
