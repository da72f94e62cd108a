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

use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{DesignMatrix, EconError};
use crate::seeds;

/// One chunk with its citation label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationObs {
    pub query_id: String,
    pub unit: String,
    pub cited: bool,
    pub ppl: f64,
    /// Position in the source document, when the label came from a RAG run.
    pub pos: Option<f64>,
}

/// One within-query pair of chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairObs {
    pub query_id: String,
    pub unit_a: String,
    pub unit_b: String,
    pub similarity: f64,
    pub cite_a: bool,
    pub cite_b: bool,
    pub ppl_a: Option<f64>,
    pub ppl_b: Option<f64>,
    /// Experiment condition (0 original, 1 polished, 2 objective).
    pub condition: Option<u8>,
}

impl PairObs {
    pub fn both_cite(&self) -> bool {
        self.cite_a && self.cite_b
    }

    pub fn mixed(&self) -> bool {
        self.cite_a != self.cite_b
    }
}

/// Per (query, condition) outcome of a RAG run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeObs {
    pub query_id: String,
    pub condition: u8,
    pub num_cite: f64,
    pub output_ppl: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleVariant {
    Full,
    /// Drop rows above the nearest-rank 99th percentile of PPL.
    TrimTopPpl,
    /// Per query, sample `min(cited, non-cited)` units from each side.
    BalancedPerQuery {
        seed: u64,
    },
    /// Keep only pairs whose chunks are both cited.
    CitedOnly,
    /// Whether the comparison group includes pairs with one cited chunk.
    CrossCategory {
        include: bool,
    },
}

impl SampleVariant {
    pub fn name(&self) -> String {
        match self {
            SampleVariant::Full => "full".into(),
            SampleVariant::TrimTopPpl => "trim_top_ppl".into(),
            SampleVariant::BalancedPerQuery { seed } => format!("balanced_per_query(seed={seed})"),
            SampleVariant::CitedOnly => "cited_only".into(),
            SampleVariant::CrossCategory { include } => format!("cross_category={include}"),
        }
    }

    fn inapplicable(&self, reason: &str) -> EconError {
        EconError::InapplicableVariant { variant: self.name(), reason: reason.to_string() }
    }
}

/// Nearest-rank percentile `q` (in (0, 1]) of `values`.
pub(crate) fn nearest_rank(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

/// Rows whose PPL does not exceed the nearest-rank 99th percentile.
pub fn trim_top_ppl<T: Clone>(rows: &[T], ppl: impl Fn(&T) -> f64) -> Vec<T> {
    let values: Vec<f64> = rows.iter().map(&ppl).collect();
    match nearest_rank(&values, 0.99) {
        Some(cut) => rows.iter().filter(|r| ppl(r) <= cut).cloned().collect(),
        None => Vec::new(),
    }
}

/// Per query, keep `min(n_true, n_false)` rows from each side of `side`,
/// drawn without replacement with a generator seeded by `(seed, query)`.
/// Original row order is preserved.
pub fn balanced_per_query<T: Clone>(
    rows: &[T],
    query: impl Fn(&T) -> &str,
    side: impl Fn(&T) -> bool,
    seed: u64,
) -> Vec<T> {
    let mut by_query: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let e = by_query.entry(query(r)).or_default();
        if side(r) {
            e.0.push(i);
        } else {
            e.1.push(i);
        }
    }
    let mut keep = vec![false; rows.len()];
    for (q, (yes, no)) in by_query {
        let m = yes.len().min(no.len());
        let mut rng = seeds::rng(seeds::derive(seed, q));
        for side in [&yes, &no] {
            for j in index::sample(&mut rng, side.len(), m) {
                keep[side[j]] = true;
            }
        }
    }
    rows.iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r.clone()).collect()
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Citation outcome on PPL (and position when every row carries one),
/// with query fixed effects. Applicable variants: full, trim, balanced.
pub fn citation_design(
    rows: &[CitationObs],
    outcome_name: &str,
    variants: &[SampleVariant],
) -> Result<DesignMatrix, EconError> {
    let mut rows = rows.to_vec();
    for v in variants {
        rows = match v {
            SampleVariant::Full => rows,
            SampleVariant::TrimTopPpl => trim_top_ppl(&rows, |r| r.ppl),
            SampleVariant::BalancedPerQuery { seed } => {
                balanced_per_query(&rows, |r| r.query_id.as_str(), |r| r.cited, *seed)
            }
            SampleVariant::CitedOnly | SampleVariant::CrossCategory { .. } => {
                return Err(v.inapplicable("citation rows are single chunks, not pairs"))
            }
        };
    }
    if rows.is_empty() {
        return Err(EconError::EmptySample);
    }
    let mut d = DesignMatrix::new(outcome_name, rows.iter().map(|r| indicator(r.cited)).collect())
        .column("PPL", rows.iter().map(|r| r.ppl).collect());
    if rows.iter().all(|r| r.pos.is_some()) {
        d = d.column("Pos", rows.iter().map(|r| r.pos.unwrap_or_default()).collect());
    }
    Ok(d.groups(rows.iter().map(|r| r.query_id.clone()).collect()))
}

/// Units appearing in `pairs`, with their label and PPL.
fn pair_units(pairs: &[PairObs]) -> Vec<(String, String, bool, Option<f64>)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for p in pairs {
        for (u, c, ppl) in [(&p.unit_a, p.cite_a, p.ppl_a), (&p.unit_b, p.cite_b, p.ppl_b)] {
            if seen.insert((p.query_id.clone(), u.clone())) {
                out.push((p.query_id.clone(), u.clone(), c, ppl));
            }
        }
    }
    out
}

fn retain_units(pairs: Vec<PairObs>, units: &[(String, String, bool, Option<f64>)]) -> Vec<PairObs> {
    let keep: HashSet<(&str, &str)> = units.iter().map(|u| (u.0.as_str(), u.1.as_str())).collect();
    pairs
        .into_iter()
        .filter(|p| {
            keep.contains(&(p.query_id.as_str(), p.unit_a.as_str()))
                && keep.contains(&(p.query_id.as_str(), p.unit_b.as_str()))
        })
        .collect()
}

fn apply_pair_variant(pairs: Vec<PairObs>, v: &SampleVariant) -> Result<Vec<PairObs>, EconError> {
    Ok(match v {
        SampleVariant::Full | SampleVariant::CrossCategory { include: true } => pairs,
        SampleVariant::CrossCategory { include: false } => pairs.into_iter().filter(|p| !p.mixed()).collect(),
        SampleVariant::CitedOnly => pairs.into_iter().filter(PairObs::both_cite).collect(),
        SampleVariant::TrimTopPpl => {
            let units = pair_units(&pairs);
            if units.iter().any(|u| u.3.is_none()) {
                return Err(v.inapplicable("pairs lack chunk perplexity"));
            }
            let kept = trim_top_ppl(&units, |u| u.3.unwrap_or_default());
            retain_units(pairs, &kept)
        }
        SampleVariant::BalancedPerQuery { seed } => {
            let units = pair_units(&pairs);
            let kept = balanced_per_query(&units, |u| u.0.as_str(), |u| u.2, *seed);
            retain_units(pairs, &kept)
        }
    })
}

/// Similarity on the both-cited indicator with query fixed effects.
/// Without any `CrossCategory` variant the comparison group includes
/// mixed pairs.
pub fn pair_design(pairs: &[PairObs], regressor: &str, variants: &[SampleVariant]) -> Result<DesignMatrix, EconError> {
    let first = pairs.first().map(|p| p.condition);
    if pairs.iter().any(|p| Some(p.condition) != first) {
        return Err(EconError::InapplicableVariant {
            variant: "pair_design".into(),
            reason: "pairs span several conditions; use condition_pair_design".into(),
        });
    }
    let mut rows = pairs.to_vec();
    for v in variants {
        rows = apply_pair_variant(rows, v)?;
    }
    if rows.is_empty() {
        return Err(EconError::EmptySample);
    }
    Ok(DesignMatrix::new("Similarity", rows.iter().map(|p| p.similarity).collect())
        .column(regressor, rows.iter().map(|p| indicator(p.both_cite())).collect())
        .groups(rows.iter().map(|p| p.query_id.clone()).collect()))
}

/// Condition indicator columns for the non-zero conditions present.
fn condition_columns(conds: &[u8]) -> Vec<(String, Vec<f64>)> {
    let present: std::collections::BTreeSet<u8> = conds.iter().copied().filter(|&c| c != 0).collect();
    present.into_iter().map(|t| (format!("1(T={t})"), conds.iter().map(|&c| indicator(c == t)).collect())).collect()
}

/// Similarity on condition indicators with query fixed effects. Applicable
/// variants: full, cited_only, trim, balanced.
pub fn condition_pair_design(pairs: &[PairObs], variants: &[SampleVariant]) -> Result<DesignMatrix, EconError> {
    if pairs.iter().any(|p| p.condition.is_none()) {
        return Err(EconError::InapplicableVariant {
            variant: "condition_pair_design".into(),
            reason: "pairs without a condition".into(),
        });
    }
    let mut by_cond: BTreeMap<u8, Vec<PairObs>> = BTreeMap::new();
    for p in pairs {
        by_cond.entry(p.condition.unwrap_or_default()).or_default().push(p.clone());
    }
    let mut rows = Vec::new();
    for (_, mut set) in by_cond {
        for v in variants {
            if matches!(v, SampleVariant::CrossCategory { .. }) {
                return Err(v.inapplicable("condition comparisons do not split by citation"));
            }
            set = apply_pair_variant(set, v)?;
        }
        rows.extend(set);
    }
    if rows.is_empty() {
        return Err(EconError::EmptySample);
    }
    let conds: Vec<u8> = rows.iter().map(|p| p.condition.unwrap_or_default()).collect();
    let mut d = DesignMatrix::new("Similarity", rows.iter().map(|p| p.similarity).collect());
    for (name, col) in condition_columns(&conds) {
        d = d.column(name, col);
    }
    Ok(d.groups(rows.iter().map(|p| p.query_id.clone()).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeVar {
    NumCite,
    OutputPpl,
}

/// Per (query, condition) outcome on condition indicators, no fixed
/// effects. Rows without an output perplexity are dropped for `OutputPpl`.
pub fn outcome_design(rows: &[OutcomeObs], var: OutcomeVar) -> Result<DesignMatrix, EconError> {
    let picked: Vec<(&OutcomeObs, f64)> = rows
        .iter()
        .filter_map(|r| match var {
            OutcomeVar::NumCite => Some((r, r.num_cite)),
            OutcomeVar::OutputPpl => r.output_ppl.map(|v| (r, v)),
        })
        .collect();
    if picked.is_empty() {
        return Err(EconError::EmptySample);
    }
    let name = match var {
        OutcomeVar::NumCite => "NumCite",
        OutcomeVar::OutputPpl => "OutputPPL",
    };
    let conds: Vec<u8> = picked.iter().map(|(r, _)| r.condition).collect();
    let mut d = DesignMatrix::new(name, picked.iter().map(|(_, v)| *v).collect());
    for (n, col) in condition_columns(&conds) {
        d = d.column(n, col);
    }
    Ok(d.groups(picked.iter().map(|(r, _)| r.query_id.clone()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(q: &str, u: usize, cited: bool, ppl: f64) -> CitationObs {
        CitationObs { query_id: q.into(), unit: format!("u{u}"), cited, ppl, pos: None }
    }

    #[test]
    fn trim_hundred_rows() {
        let rows: Vec<CitationObs> = (0..100).map(|i| obs("q", i, i % 2 == 0, (i * 7 % 100) as f64)).collect();
        let cut = nearest_rank(&rows.iter().map(|r| r.ppl).collect::<Vec<_>>(), 0.99).unwrap();
        let kept = trim_top_ppl(&rows, |r| r.ppl);
        assert_eq!(kept.len(), 99);
        assert!(kept.iter().all(|r| r.ppl <= cut));
    }

    #[test]
    fn balanced_counts_per_query() {
        let mut rows = Vec::new();
        for (q, cited, non) in [("a", 3, 7), ("b", 5, 2), ("c", 0, 4)] {
            for i in 0..cited {
                rows.push(obs(q, i, true, 1.0));
            }
            for i in 0..non {
                rows.push(obs(q, 100 + i, false, 1.0));
            }
        }
        let kept = balanced_per_query(&rows, |r| r.query_id.as_str(), |r| r.cited, 11);
        for (q, m) in [("a", 3), ("b", 2), ("c", 0)] {
            let yes = kept.iter().filter(|r| r.query_id == q && r.cited).count();
            let no = kept.iter().filter(|r| r.query_id == q && !r.cited).count();
            assert_eq!((yes, no), (m, m), "{q}");
        }
        assert_eq!(kept, balanced_per_query(&rows, |r| r.query_id.as_str(), |r| r.cited, 11));
    }

    fn pair(q: &str, a: &str, b: &str, ca: bool, cb: bool, cond: Option<u8>) -> PairObs {
        PairObs {
            query_id: q.into(),
            unit_a: a.into(),
            unit_b: b.into(),
            similarity: 0.5,
            cite_a: ca,
            cite_b: cb,
            ppl_a: Some(1.0),
            ppl_b: Some(2.0),
            condition: cond,
        }
    }

    #[test]
    fn cited_only_keeps_both_cited_per_condition() {
        let mut pairs = Vec::new();
        for t in 0..3u8 {
            pairs.push(pair("q", "a", "b", true, true, Some(t)));
            pairs.push(pair("q", "a", "c", true, false, Some(t)));
            pairs.push(pair("q", "b", "c", t == 2, t == 2, Some(t)));
        }
        let d = condition_pair_design(&pairs, &[SampleVariant::CitedOnly]).unwrap();
        assert_eq!(d.n(), 4);
        assert_eq!(d.names, vec!["1(T=1)", "1(T=2)"]);
    }

    #[test]
    fn cross_category_filter() {
        let pairs = vec![
            pair("q", "a", "b", true, true, None),
            pair("q", "a", "c", true, false, None),
            pair("q", "c", "d", false, false, None),
        ];
        assert_eq!(pair_design(&pairs, "BothCite", &[]).unwrap().n(), 3);
        assert_eq!(pair_design(&pairs, "BothCite", &[SampleVariant::CrossCategory { include: false }]).unwrap().n(), 2);
    }

    #[test]
    fn inapplicable_variant() {
        let rows = vec![obs("q", 0, true, 1.0)];
        assert!(matches!(
            citation_design(&rows, "ChatCite", &[SampleVariant::CitedOnly]),
            Err(EconError::InapplicableVariant { .. })
        ));
    }

    #[test]
    fn outcome_design_drops_missing_ppl() {
        let rows = vec![
            OutcomeObs { query_id: "q".into(), condition: 0, num_cite: 2.0, output_ppl: Some(3.0) },
            OutcomeObs { query_id: "q".into(), condition: 1, num_cite: 4.0, output_ppl: None },
        ];
        assert_eq!(outcome_design(&rows, OutcomeVar::NumCite).unwrap().n(), 2);
        assert_eq!(outcome_design(&rows, OutcomeVar::OutputPpl).unwrap().n(), 1);
    }
}
