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

use nalgebra::{DMatrix, DVector};

use super::{
    index_keys, make_terms, sandwich, spd_inverse, to_rows, CovKind, DesignMatrix, EconError, FitResult, FitStat,
    Model, StatKind,
};

fn demean(values: &[f64], group: &[usize], n_groups: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n_groups];
    let mut count = vec![0usize; n_groups];
    for (&v, &g) in values.iter().zip(group) {
        sum[g] += v;
        count[g] += 1;
    }
    values.iter().zip(group).map(|(&v, &g)| v - sum[g] / count[g] as f64).collect()
}

struct Ols {
    beta: DVector<f64>,
    resid: DVector<f64>,
    bread: DMatrix<f64>,
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Ols, EconError> {
    let bread = spd_inverse(&(x.transpose() * x))?;
    let beta = &bread * (x.transpose() * y);
    let resid = y - x * &beta;
    Ok(Ols { beta, resid, bread })
}

fn score_matrix(x: &DMatrix<f64>, resid: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * resid[i])
}

/// Fixed-effects linear probability model (any outcome works).
///
/// Outcome and regressors are demeaned within groups and fitted by OLS,
/// which reproduces dummy-variable OLS slopes exactly. Standard errors are
/// clustered (on `clusters`, or on `groups` if absent) with the CR1 factor
/// `G/(G-1) * (N-1)/(N-K)`, `K` the number of slopes, and p-values use a
/// t distribution with `G - 1` degrees of freedom. With a single cluster the
/// errors fall back to HC1. The fit statistic is the within R².
pub fn lpm_fe(design: &DesignMatrix) -> Result<FitResult, EconError> {
    design.validate()?;
    let groups = design.groups.as_ref().ok_or(EconError::MissingGroups)?;
    let n = design.n();
    let k = design.k();
    if n < 2 || n <= k {
        return Err(EconError::TooFewObservations { n, need: (k + 1).max(2) });
    }
    let (g_idx, n_groups) = index_keys(groups);

    let yt = DVector::from_vec(demean(&design.y, &g_idx, n_groups));
    let mut cols = Vec::with_capacity(k);
    for (name, col) in design.names.iter().zip(&design.columns) {
        let d = demean(col, &g_idx, n_groups);
        let scale = col.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if d.iter().all(|v| v.abs() <= 1e-12 * scale) {
            return Err(EconError::NoWithinVariation { column: name.clone() });
        }
        cols.push(d);
    }
    let xt = DMatrix::from_fn(n, k, |i, j| cols[j][i]);
    let fit = ols(&xt, &yt)?;

    let (c_idx, n_clusters) = index_keys(design.clusters.as_ref().unwrap_or(groups));
    let scores = score_matrix(&xt, &fit.resid);
    let (nf, kf) = (n as f64, k as f64);
    // A single cluster cannot support a cluster-robust estimate; fall back to HC1.
    let (cov, stat_kind, cov_kind, n_clusters) = if n_clusters >= 2 {
        let g = n_clusters as f64;
        let factor = g / (g - 1.0) * (nf - 1.0) / (nf - kf);
        (
            sandwich(&fit.bread, &scores, &c_idx, n_clusters) * factor,
            StatKind::T { df: g - 1.0 },
            CovKind::Cluster,
            n_clusters,
        )
    } else {
        let own: Vec<usize> = (0..n).collect();
        (sandwich(&fit.bread, &scores, &own, n) * (nf / (nf - kf)), StatKind::T { df: nf - kf }, CovKind::Hc1, n)
    };

    let sst = yt.norm_squared();
    let ssr = fit.resid.norm_squared();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };
    Ok(FitResult {
        model: Model::LpmFe,
        outcome: design.outcome_name.clone(),
        terms: make_terms(&design.names, &fit.beta, &cov, stat_kind),
        stat_kind,
        cov_kind,
        covariance: to_rows(&cov),
        fit: FitStat::WithinRSquared(r2),
        n_obs: n,
        n_groups,
        n_clusters,
        dropped_groups: 0,
        iterations: 1,
        converged: true,
        log_likelihood: None,
    })
}

/// OLS with an added intercept named `Intercept`.
///
/// Unclustered errors are HC1 (`N/(N-K)`, t with `N - K` df). Clustered
/// errors use `clusters`, falling back to `groups`, with the CR1 factor and
/// t with `G - 1` df.
pub fn ols_robust(design: &DesignMatrix, cluster: bool) -> Result<FitResult, EconError> {
    design.validate()?;
    let n = design.n();
    let k = design.k() + 1;
    if n < k + 1 {
        return Err(EconError::TooFewObservations { n, need: k + 1 });
    }
    let x = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { design.columns[j - 1][i] });
    let y = DVector::from_column_slice(&design.y);
    let fit = ols(&x, &y)?;
    let scores = score_matrix(&x, &fit.resid);
    let nf = n as f64;
    let kf = k as f64;

    let (cov, stat_kind, cov_kind, n_clusters) = if cluster {
        let keys = design.clusters.as_ref().or(design.groups.as_ref()).ok_or(EconError::MissingGroups)?;
        let (c_idx, g) = index_keys(keys);
        if g < 2 {
            return Err(EconError::TooFewObservations { n: g, need: 2 });
        }
        let gf = g as f64;
        let factor = gf / (gf - 1.0) * (nf - 1.0) / (nf - kf);
        (sandwich(&fit.bread, &scores, &c_idx, g) * factor, StatKind::T { df: gf - 1.0 }, CovKind::Cluster, g)
    } else {
        let own: Vec<usize> = (0..n).collect();
        (sandwich(&fit.bread, &scores, &own, n) * (nf / (nf - kf)), StatKind::T { df: nf - kf }, CovKind::Hc1, n)
    };

    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ssr = fit.resid.norm_squared();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };
    let mut names = vec!["Intercept".to_string()];
    names.extend(design.names.iter().cloned());
    let n_groups = design.groups.as_ref().map_or(0, |g| index_keys(g).1);
    Ok(FitResult {
        model: Model::Ols,
        outcome: design.outcome_name.clone(),
        terms: make_terms(&names, &fit.beta, &cov, stat_kind),
        stat_kind,
        cov_kind,
        covariance: to_rows(&cov),
        fit: FitStat::RSquared(r2),
        n_obs: n,
        n_groups,
        n_clusters,
        dropped_groups: 0,
        iterations: 1,
        converged: true,
        log_likelihood: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn exact_within_slope() {
        // y = 2x + 10 in group a, 2x - 3 in group b
        let x = vec![1.0, 2.0, 4.0, 0.0, 5.0, 7.0];
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 2.0 * v + if i < 3 { 10.0 } else { -3.0 }).collect();
        let d = DesignMatrix::new("y", y).column("x", x).groups(s(&["a", "a", "a", "b", "b", "b"]));
        let r = lpm_fe(&d).unwrap();
        assert!((r.terms[0].estimate - 2.0).abs() < 1e-12);
        assert!(matches!(r.fit, FitStat::WithinRSquared(v) if (v - 1.0).abs() < 1e-12));
        assert_eq!(r.n_groups, 2);
    }

    #[test]
    fn constant_within_group_is_rejected() {
        let d = DesignMatrix::new("y", vec![1.0, 0.0, 1.0, 0.0])
            .column("x", vec![3.0, 3.0, 5.0, 5.0])
            .groups(s(&["a", "a", "b", "b"]));
        assert_eq!(lpm_fe(&d).unwrap_err(), EconError::NoWithinVariation { column: "x".into() });
    }

    #[test]
    fn intercept_only_constant_outcome() {
        let d = DesignMatrix::new("y", vec![3.0; 5]);
        let r = ols_robust(&d, false).unwrap();
        assert!((r.terms[0].estimate - 3.0).abs() < 1e-12);
        assert!(r.terms[0].se.abs() < 1e-12);
    }

    #[test]
    fn dummy_coefficient_is_difference_in_means() {
        let y = vec![1.0, 2.0, 3.0, 5.5, 6.5, 7.5, 9.0];
        let t = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let r = ols_robust(&DesignMatrix::new("y", y).column("T", t), false).unwrap();
        assert!((r.terms[0].estimate - 2.0).abs() < 1e-12);
        assert!((r.terms[1].estimate - (7.125 - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn singleton_clusters_equal_hc1() {
        let y = vec![0.3, 1.7, 2.2, 2.9, 4.4, 5.1];
        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.5];
        let ids: Vec<String> = (0..6).map(|i| i.to_string()).collect();
        let d = DesignMatrix::new("y", y).column("x", x).clusters(ids);
        let hc = ols_robust(&d, false).unwrap();
        let cr = ols_robust(&d, true).unwrap();
        for j in 0..2 {
            assert!((hc.covariance[j][j] / cr.covariance[j][j] - 1.0).abs() < 1e-12);
        }
    }
}
