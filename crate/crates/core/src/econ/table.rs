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

use std::io::Write;

use super::{FitResult, FitStat};

/// One column of a results table.
#[derive(Debug, Clone)]
pub struct Column {
    /// Short identifier used in CSV output, e.g. `lpm_chatcite`.
    pub id: String,
    pub fit: FitResult,
    /// Extra footer rows such as ("Cross-Category", "Yes").
    pub notes: Vec<(String, String)>,
}

impl Column {
    pub fn new(id: impl Into<String>, fit: FitResult) -> Self {
        Column { id: id.into(), fit, notes: Vec::new() }
    }

    pub fn note(mut self, label: impl Into<String>, value: impl Into<String>) -> Self {
        self.notes.push((label.into(), value.into()));
        self
    }
}

fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn fit_cell(f: &FitStat) -> String {
    match f {
        FitStat::WithinRSquared(r) | FitStat::RSquared(r) => format!("{r:.2}"),
        FitStat::ChiSquare { stat, .. } => format!("{stat:.2}"),
    }
}

/// Plain-text regression table: estimates with significance stars
/// (`*` p < 0.1, `**` p < 0.05, `***` p < 0.01), standard errors in
/// parentheses below, and a footer with fixed effects, observation count,
/// fit statistic and any column notes.
pub fn render_table(title: &str, columns: &[Column]) -> String {
    let mut terms: Vec<String> = Vec::new();
    for c in columns {
        for t in &c.fit.terms {
            if !terms.contains(&t.name) {
                terms.push(t.name.clone());
            }
        }
    }
    let mut note_labels: Vec<String> = Vec::new();
    for c in columns {
        for (l, _) in &c.notes {
            if !note_labels.contains(l) {
                note_labels.push(l.clone());
            }
        }
    }

    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    rows.push((String::new(), columns.iter().map(|c| c.fit.outcome.clone()).collect()));
    rows.push((String::new(), columns.iter().map(|c| c.fit.model.label().to_string()).collect()));
    rows.push((String::new(), (1..=columns.len()).map(|i| format!("({i})")).collect()));
    let header_rows = rows.len();
    for name in &terms {
        let mut est = Vec::new();
        let mut se = Vec::new();
        for c in columns {
            match c.fit.term(name) {
                Some(t) => {
                    est.push(format!("{:.4}{}", t.estimate, stars(t.p)));
                    se.push(format!("({:.4})", t.se));
                }
                None => {
                    est.push(String::new());
                    se.push(String::new());
                }
            }
        }
        rows.push((name.clone(), est));
        rows.push((String::new(), se));
    }
    let body_rows = rows.len();
    for label in &note_labels {
        let cells = columns
            .iter()
            .map(|c| c.notes.iter().find(|(l, _)| l == label).map(|(_, v)| v.clone()).unwrap_or_default())
            .collect();
        rows.push((label.clone(), cells));
    }
    rows.push((
        "Query FE".into(),
        columns.iter().map(|c| if c.fit.has_fixed_effects() { "Yes" } else { "No" }.to_string()).collect(),
    ));
    rows.push(("Observations".into(), columns.iter().map(|c| thousands(c.fit.n_obs)).collect()));
    let fit_label =
        if columns.iter().any(|c| matches!(c.fit.fit, FitStat::ChiSquare { .. })) { "R² or Chi²" } else { "R²" };
    rows.push((fit_label.into(), columns.iter().map(|c| fit_cell(&c.fit.fit)).collect()));

    let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(title.chars().count().min(24));
    let cell_w = rows.iter().flat_map(|(_, c)| c.iter().map(|s| s.chars().count())).max().unwrap_or(0) + 2;
    let total = label_w + cell_w * columns.len();
    let rule = |ch: char| ch.to_string().repeat(total);

    let mut out = String::new();
    out.push_str(title);
    out.push('\n');
    out.push_str(&rule('='));
    out.push('\n');
    for (i, (label, cells)) in rows.iter().enumerate() {
        if i == header_rows || i == body_rows {
            out.push_str(&rule('-'));
            out.push('\n');
        }
        out.push_str(&format!("{label:<label_w$}"));
        for c in cells {
            out.push_str(&format!("{c:>cell_w$}"));
        }
        out.push('\n');
    }
    out.push_str(&rule('='));
    out.push('\n');
    out.push_str("*** p < 0.01, ** p < 0.05, * p < 0.1\n");
    out
}

/// Machine-readable results, one row per (column, term).
pub fn write_results_csv<W: Write>(w: W, columns: &[Column]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["spec", "model", "outcome", "term", "estimate", "se", "stat", "p", "n_obs"])?;
    for c in columns {
        for t in &c.fit.terms {
            wr.write_record([
                c.id.as_str(),
                c.fit.model.label(),
                c.fit.outcome.as_str(),
                t.name.as_str(),
                &t.estimate.to_string(),
                &t.se.to_string(),
                &t.stat.to_string(),
                &t.p.to_string(),
                &c.fit.n_obs.to_string(),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econ::{lpm_fe, DesignMatrix};

    #[test]
    fn table_layout() {
        let x = vec![1.0, 2.0, 4.0, 0.0, 5.0, 7.0, 1.0, 3.0];
        let y = vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let g: Vec<String> = ["a", "a", "a", "b", "b", "b", "c", "c"].iter().map(|s| s.to_string()).collect();
        let fit = lpm_fe(&DesignMatrix::new("ChatCite", y).column("PPL", x).groups(g)).unwrap();
        let t = render_table("Perplexity", &[Column::new("lpm", fit).note("Cross-Category", "No")]);
        assert!(t.contains("ChatCite"));
        assert!(t.contains("Cross-Category"));
        assert!(t.contains("Observations"));
        assert!(t.lines().any(|l| l.trim_start().starts_with('(') && l.trim_end().ends_with(')')));
        assert_eq!(thousands(98477), "98,477");
        assert_eq!(thousands(12), "12");
        assert_eq!(stars(0.005), "***");
        assert_eq!(stars(0.07), "*");
    }
}
