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

//! Estimators and tests: fixed-effects LPM and logit, robust OLS,
//! paired t and two-sample KS, plus sample construction and table output.

mod hypothesis;
mod linear;
mod logit;
mod samples;
mod table;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hypothesis::{ks_test, paired_ttest, KsTest, PairedTTest};
pub use linear::{lpm_fe, ols_robust};
pub use logit::{logit_fe, LogitOptions};
pub use samples::{
    balanced_per_query, citation_design, condition_pair_design, outcome_design, pair_design, trim_top_ppl, CitationObs,
    OutcomeObs, OutcomeVar, PairObs, SampleVariant,
};
pub use table::{render_table, write_results_csv, Column};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EconError {
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: String, expected: usize, got: usize },
    #[error("non-finite value in {column} at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("need at least {need} observations, have {n}")]
    TooFewObservations { n: usize, need: usize },
    #[error("no within-group variation in {column}")]
    NoWithinVariation { column: String },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("fixed-effects model requires group ids")]
    MissingGroups,
    #[error("outcome is not binary at row {row}")]
    NotBinary { row: usize },
    #[error("no group has variation in the outcome")]
    NoOutcomeVariation,
    #[error("perfect separation: coefficient on {regressor} diverged")]
    Separation { regressor: String },
    #[error("paired differences have zero variance")]
    ZeroVariance,
    #[error("empty sample")]
    EmptySample,
    #[error("variant {variant} does not apply: {reason}")]
    InapplicableVariant { variant: String, reason: String },
}

/// Outcome, named regressors and optional group / cluster keys.
///
/// Regressors are stored column-wise. The intercept is never stored: FE
/// models absorb it and [`ols_robust`] adds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub outcome_name: String,
    pub y: Vec<f64>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub groups: Option<Vec<String>>,
    pub clusters: Option<Vec<String>>,
}

impl DesignMatrix {
    pub fn new(outcome_name: impl Into<String>, y: Vec<f64>) -> Self {
        DesignMatrix {
            outcome_name: outcome_name.into(),
            y,
            names: Vec::new(),
            columns: Vec::new(),
            groups: None,
            clusters: None,
        }
    }

    pub fn column(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.names.push(name.into());
        self.columns.push(values);
        self
    }

    pub fn groups(mut self, ids: Vec<String>) -> Self {
        self.groups = Some(ids);
        self
    }

    pub fn clusters(mut self, ids: Vec<String>) -> Self {
        self.clusters = Some(ids);
        self
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.columns.len()
    }

    pub fn validate(&self) -> Result<(), EconError> {
        let n = self.n();
        let check_len = |what: &str, got: usize| {
            if got != n {
                Err(EconError::LengthMismatch { what: what.to_string(), expected: n, got })
            } else {
                Ok(())
            }
        };
        if self.names.len() != self.columns.len() {
            return Err(EconError::LengthMismatch {
                what: "regressor names".into(),
                expected: self.columns.len(),
                got: self.names.len(),
            });
        }
        for (name, col) in self.names.iter().zip(&self.columns) {
            check_len(name, col.len())?;
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(EconError::NonFinite { column: name.clone(), row });
            }
        }
        if let Some(row) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(EconError::NonFinite { column: self.outcome_name.clone(), row });
        }
        if let Some(g) = &self.groups {
            check_len("group ids", g.len())?;
        }
        if let Some(c) = &self.clusters {
            check_len("cluster ids", c.len())?;
        }
        Ok(())
    }

    /// Keep only the rows where `keep` is true.
    pub fn filter_rows(&self, keep: &[bool]) -> DesignMatrix {
        let pick = |v: &[f64]| v.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| *x).collect::<Vec<_>>();
        let pick_s = |v: &[String]| v.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| x.clone()).collect::<Vec<_>>();
        DesignMatrix {
            outcome_name: self.outcome_name.clone(),
            y: pick(&self.y),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| pick(c)).collect(),
            groups: self.groups.as_deref().map(pick_s),
            clusters: self.clusters.as_deref().map(pick_s),
        }
    }

    fn x_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.k(), |i, j| self.columns[j][i])
    }
}

/// Map opaque keys to dense indices in first-appearance order.
pub(crate) fn index_keys(keys: &[String]) -> (Vec<usize>, usize) {
    let mut map: HashMap<&str, usize> = HashMap::new();
    let idx = keys
        .iter()
        .map(|k| {
            let next = map.len();
            *map.entry(k.as_str()).or_insert(next)
        })
        .collect();
    (idx, map.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    LpmFe,
    LogitFe,
    Ols,
}

impl Model {
    pub fn label(self) -> &'static str {
        match self {
            Model::LpmFe => "LPM",
            Model::LogitFe => "Logit",
            Model::Ols => "OLS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovKind {
    /// HC1, unclustered.
    Hc1,
    /// Cluster-robust.
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatKind {
    T { df: f64 },
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitStat {
    /// R² of the demeaned model.
    WithinRSquared(f64),
    RSquared(f64),
    ChiSquare {
        stat: f64,
        df: usize,
        p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub stat: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: Model,
    pub outcome: String,
    pub terms: Vec<Term>,
    pub stat_kind: StatKind,
    pub cov_kind: CovKind,
    /// Covariance of the reported coefficients, row-major.
    pub covariance: Vec<Vec<f64>>,
    pub fit: FitStat,
    pub n_obs: usize,
    pub n_groups: usize,
    pub n_clusters: usize,
    /// Groups without outcome variation dropped by the logit.
    pub dropped_groups: usize,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: Option<f64>,
}

impl FitResult {
    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn has_fixed_effects(&self) -> bool {
        matches!(self.model, Model::LpmFe | Model::LogitFe)
    }
}

/// Solve the symmetric positive definite system `a x = b`, rejecting
/// numerically singular `a`.
pub(crate) fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>, EconError> {
    let k = a.nrows();
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let d: Vec<f64> = (0..k).map(|i| a[(i, i)]).collect();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(EconError::RankDeficient);
    }
    let scale = DVector::from_iterator(k, d.iter().map(|v| 1.0 / v.sqrt()));
    let scaled = DMatrix::from_fn(k, k, |i, j| a[(i, j)] * scale[i] * scale[j]);
    let eig = SymmetricEigen::new(scaled.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 1e-12 * max) {
        return Err(EconError::RankDeficient);
    }
    let inv_scaled = scaled.cholesky().ok_or(EconError::RankDeficient)?.inverse();
    Ok(DMatrix::from_fn(k, k, |i, j| inv_scaled[(i, j)] * scale[i] * scale[j]))
}

/// `bread * (sum_c u_c u_c') * bread`, where `u_c` sums the rows of
/// `scores` sharing a cluster index.
pub(crate) fn sandwich(
    bread: &DMatrix<f64>,
    scores: &DMatrix<f64>,
    cluster: &[usize],
    n_clusters: usize,
) -> DMatrix<f64> {
    let k = scores.ncols();
    let mut sums = DMatrix::<f64>::zeros(n_clusters, k);
    for (i, &c) in cluster.iter().enumerate() {
        for j in 0..k {
            sums[(c, j)] += scores[(i, j)];
        }
    }
    let meat = sums.transpose() * &sums;
    bread * meat * bread
}

pub(crate) fn student_p(stat: f64, df: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    if stat.is_nan() || !(df > 0.0) {
        return f64::NAN;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    (2.0 * dist.sf(stat.abs())).clamp(0.0, 1.0)
}

pub(crate) fn normal_p(stat: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    if stat.is_nan() {
        return f64::NAN;
    }
    (2.0 * Normal::standard().sf(stat.abs())).clamp(0.0, 1.0)
}

/// Build terms from estimates and covariance. A zero standard error gives
/// `stat = 0, p = 1` when the estimate is zero and `p = 0` otherwise.
pub(crate) fn make_terms(names: &[String], beta: &DVector<f64>, cov: &DMatrix<f64>, kind: StatKind) -> Vec<Term> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let estimate = beta[j];
            let se = cov[(j, j)].max(0.0).sqrt();
            let (stat, p) = if se > 0.0 {
                let stat = estimate / se;
                let p = match kind {
                    StatKind::T { df } => student_p(stat, df),
                    StatKind::Z => normal_p(stat),
                };
                (stat, p)
            } else if estimate == 0.0 {
                (0.0, 1.0)
            } else {
                (estimate.signum() * f64::INFINITY, 0.0)
            };
            Term { name: name.clone(), estimate, se, stat, p }
        })
        .collect()
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}
