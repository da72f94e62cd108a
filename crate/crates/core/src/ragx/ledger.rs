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

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Condition, ConditionResult};
use crate::citeparse::{map_citations, CitationMap, CiteError, RagAnswer, SourceDoc};

/// One completed (query, condition) run. The raw answer is kept so the
/// citations can be re-parsed later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub query_id: String,
    pub condition: Condition,
    pub seed: u64,
    pub order: Vec<usize>,
    pub raw_answer: String,
    pub num_cite: usize,
    pub output_ppl: Option<f64>,
    pub attempts: u32,
}

impl From<&ConditionResult> for LedgerEntry {
    fn from(r: &ConditionResult) -> Self {
        LedgerEntry {
            query_id: r.query_id.clone(),
            condition: r.condition,
            seed: r.seed,
            order: r.order.clone(),
            raw_answer: r.answer.raw_text.clone(),
            num_cite: r.num_cite,
            output_ppl: r.output_ppl,
            attempts: r.attempts,
        }
    }
}

impl LedgerEntry {
    /// Parse the stored answer again and map it onto the stored order.
    pub fn reparse(&self) -> Result<(RagAnswer, CitationMap), CiteError> {
        let answer = RagAnswer::parse(&self.raw_answer)?;
        let doc = SourceDoc { rendered_text: String::new(), order: self.order.clone(), seed: self.seed };
        let map = map_citations(&answer, &doc);
        Ok((answer, map))
    }

    /// Rebuild the in-memory result from the stored answer.
    pub fn to_result(&self) -> Result<ConditionResult, CiteError> {
        let (answer, map) = self.reparse()?;
        Ok(ConditionResult {
            query_id: self.query_id.clone(),
            condition: self.condition,
            seed: self.seed,
            order: self.order.clone(),
            outcomes: map.outcomes,
            num_cite: map.num_cite,
            output_ppl: self.output_ppl,
            answer,
            lints: map.lints,
            attempts: self.attempts,
        })
    }
}

/// One JSON object per line.
pub fn write_ledger<W: Write>(mut w: W, results: &[ConditionResult]) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, &LedgerEntry::from(r))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_ledger<R: BufRead>(r: R) -> std::io::Result<Vec<LedgerEntry>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("ledger line {}: {e}", i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::Chunk;
    use crate::metrics::reference::ConstantProbability;
    use crate::ragx::doubles::FixedCiteClient;
    use crate::ragx::{RagRunner, RetryPolicy};

    #[test]
    fn ledger_round_trip_and_reparse() {
        let chunks: Vec<Chunk> = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, t)| Chunk { url: format!("u{i}"), start: 0, end: 1, index: 0, text: t.to_string() })
            .collect();
        let r = RagRunner::new(FixedCiteClient::new(vec![2, 3]), ConstantProbability::new(0.5))
            .with_retry(RetryPolicy::immediate());
        let res = r.run_rag_query("q", "x", &chunks, Condition::Original, 8).unwrap();
        let mut buf = Vec::new();
        write_ledger(&mut buf, std::slice::from_ref(&res)).unwrap();
        let back = read_ledger(&buf[..]).unwrap();
        assert_eq!(back.len(), 1);
        let (_, map) = back[0].reparse().unwrap();
        assert_eq!(map.outcomes, res.outcomes);
        assert_eq!(map.num_cite, 2);
        assert_eq!(back[0].to_result().unwrap(), res);
    }
}
