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

use approx::assert_relative_eq;
use proptest::prelude::*;

use geoscope_core::econ::{
    citation_design, lpm_fe, ols_robust, CitationObs, CovKind, DesignMatrix, EconError, SampleVariant,
};

fn design(y: Vec<f64>, x: Vec<f64>, groups: &[usize]) -> DesignMatrix {
    DesignMatrix::new("y", y).column("x", x).groups(groups.iter().map(|g| format!("g{g}")).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Group constants are absorbed by the fixed effects.
    #[test]
    fn lpm_slope_ignores_group_shifts(
        rows in prop::collection::vec((0usize..5, -10.0f64..10.0, -10.0f64..10.0), 12..60),
        shifts in prop::collection::vec(-50.0f64..50.0, 5),
    ) {
        let groups: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let x: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let shifted: Vec<f64> = y.iter().zip(&groups).map(|(v, g)| v + shifts[*g]).collect();
        match (lpm_fe(&design(y, x.clone(), &groups)), lpm_fe(&design(shifted, x, &groups))) {
            (Ok(a), Ok(b)) => {
                assert_relative_eq!(a.terms[0].estimate, b.terms[0].estimate, epsilon = 1e-8, max_relative = 1e-8);
                assert_relative_eq!(a.terms[0].se, b.terms[0].se, epsilon = 1e-8, max_relative = 1e-6);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    // Rescaling the regressor rescales the slope and its standard error.
    #[test]
    fn ols_is_scale_equivariant(
        xy in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 8..40),
        scale in 0.1f64..20.0,
    ) {
        let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let a = ols_robust(&DesignMatrix::new("y", y.clone()).column("x", x), false);
        let b = ols_robust(&DesignMatrix::new("y", y).column("x", scaled), false);
        if let (Ok(a), Ok(b)) = (a, b) {
            assert_relative_eq!(a.terms[1].estimate, b.terms[1].estimate * scale, epsilon = 1e-9, max_relative = 1e-7);
            assert_relative_eq!(a.terms[1].se, b.terms[1].se * scale, epsilon = 1e-9, max_relative = 1e-6);
            assert_relative_eq!(a.terms[0].estimate, b.terms[0].estimate, epsilon = 1e-9, max_relative = 1e-7);
        }
    }
}

#[test]
fn exact_line_is_recovered() {
    let x: Vec<f64> = (0..10).map(f64::from).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.5 - 0.75 * v).collect();
    let groups: Vec<String> = (0..10).map(|i| format!("c{}", i % 3)).collect();
    let fit = ols_robust(&DesignMatrix::new("y", y).column("x", x).clusters(groups), true).unwrap();
    assert_eq!(fit.cov_kind, CovKind::Cluster);
    assert_eq!(fit.n_clusters, 3);
    assert_relative_eq!(fit.term("Intercept").unwrap().estimate, 2.5, epsilon = 1e-10);
    assert_relative_eq!(fit.term("x").unwrap().estimate, -0.75, epsilon = 1e-10);
}

fn obs(q: &str, unit: usize, cited: bool, ppl: f64) -> CitationObs {
    CitationObs { query_id: q.into(), unit: format!("u{unit}"), cited, ppl, pos: None }
}

#[test]
fn citation_variants_shrink_the_sample() {
    let rows: Vec<CitationObs> =
        (0..200).map(|i| obs(&format!("q{}", i % 10), i, i % 4 == 0, 1.0 + i as f64)).collect();
    let full = citation_design(&rows, "Cite", &[SampleVariant::Full]).unwrap();
    let trim = citation_design(&rows, "Cite", &[SampleVariant::TrimTopPpl]).unwrap();
    let bal = citation_design(&rows, "Cite", &[SampleVariant::BalancedPerQuery { seed: 4 }]).unwrap();
    assert_eq!(full.n(), 200);
    assert_eq!(trim.n(), 198);
    assert_eq!(bal.n(), 100);
    assert_eq!(bal.y.iter().sum::<f64>(), 50.0);
    assert_eq!(full.k(), 1, "no position column without positions");
    assert!(matches!(
        citation_design(&rows, "Cite", &[SampleVariant::CitedOnly]),
        Err(EconError::InapplicableVariant { .. })
    ));
}
