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
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{
    index_keys, make_terms, sandwich, spd_inverse, to_rows, CovKind, DesignMatrix, EconError, FitResult, FitStat,
    Model, StatKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitOptions {
    pub max_iter: usize,
    /// Convergence when every gradient component is below this.
    pub tol: f64,
    /// Slopes beyond this magnitude are treated as separation.
    pub separation_bound: f64,
}

impl Default for LogitOptions {
    fn default() -> Self {
        LogitOptions { max_iter: 100, tol: 1e-8, separation_bound: 30.0 }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Problem {
    y: Vec<f64>,
    x: DMatrix<f64>,
    group: Vec<usize>,
    n_groups: usize,
}

struct State {
    beta: DVector<f64>,
    alpha: DVector<f64>,
}

/// Likelihood pieces at one parameter value.
struct Eval {
    ll: f64,
    p: Vec<f64>,
    grad_beta: DVector<f64>,
    grad_alpha: DVector<f64>,
    /// sum of w x x' over all observations
    h_bb: DMatrix<f64>,
    /// per group: sum of w x
    h_ba: DMatrix<f64>,
    /// per group: sum of w
    h_aa: DVector<f64>,
}

impl Problem {
    fn eval(&self, s: &State) -> Eval {
        let n = self.y.len();
        let k = self.x.ncols();
        let eta = &self.x * &s.beta;
        let mut ev = Eval {
            ll: 0.0,
            p: Vec::with_capacity(n),
            grad_beta: DVector::zeros(k),
            grad_alpha: DVector::zeros(self.n_groups),
            h_bb: DMatrix::zeros(k, k),
            h_ba: DMatrix::zeros(k, self.n_groups),
            h_aa: DVector::zeros(self.n_groups),
        };
        for i in 0..n {
            let g = self.group[i];
            let e = eta[i] + s.alpha[g];
            let p = sigmoid(e);
            let y = self.y[i];
            ev.ll += y * e - softplus(e);
            let r = y - p;
            let w = p * (1.0 - p);
            ev.grad_alpha[g] += r;
            ev.h_aa[g] += w;
            for a in 0..k {
                let xa = self.x[(i, a)];
                ev.grad_beta[a] += r * xa;
                ev.h_ba[(a, g)] += w * xa;
                for b in 0..=a {
                    ev.h_bb[(a, b)] += w * xa * self.x[(i, b)];
                }
            }
            ev.p.push(p);
        }
        for a in 0..k {
            for b in 0..a {
                ev.h_bb[(b, a)] = ev.h_bb[(a, b)];
            }
        }
        ev
    }

    /// Information for the slopes with the group intercepts profiled out.
    fn schur(&self, ev: &Eval) -> DMatrix<f64> {
        let mut s = ev.h_bb.clone();
        for g in 0..self.n_groups {
            let h = ev.h_ba.column(g);
            s -= (h * h.transpose()) / ev.h_aa[g];
        }
        s
    }
}

fn max_abs_grad(ev: &Eval) -> f64 {
    ev.grad_beta.iter().chain(ev.grad_alpha.iter()).fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Fixed-effects logit by dummy absorption.
///
/// Groups whose outcome is all 0 or all 1 are dropped and counted. The full
/// likelihood (slopes plus one intercept per retained group) is maximized by
/// Newton's method, solving the block system through the Schur complement
/// of the intercept block, with step halving so the log-likelihood never
/// decreases. Standard errors are cluster-robust on the slopes with factor
/// `G/(G-1)` and z statistics. The fit statistic is `2 (LL - LL0)` where
/// `LL0` has only the group intercepts.
pub fn logit_fe(design: &DesignMatrix, opts: LogitOptions) -> Result<FitResult, EconError> {
    design.validate()?;
    let groups = design.groups.as_ref().ok_or(EconError::MissingGroups)?;
    if let Some(row) = design.y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(EconError::NotBinary { row });
    }
    let k = design.k();
    if k == 0 {
        return Err(EconError::RankDeficient);
    }

    let (g_all, n_all) = index_keys(groups);
    let mut sum = vec![0.0; n_all];
    let mut count = vec![0.0; n_all];
    for (&y, &g) in design.y.iter().zip(&g_all) {
        sum[g] += y;
        count[g] += 1.0;
    }
    let varies: Vec<bool> = (0..n_all).map(|g| sum[g] > 0.0 && sum[g] < count[g]).collect();
    let dropped_groups = varies.iter().filter(|v| !**v).count();
    let keep: Vec<bool> = g_all.iter().map(|&g| varies[g]).collect();
    let d = design.filter_rows(&keep);
    if d.n() == 0 {
        return Err(EconError::NoOutcomeVariation);
    }
    let (group, n_groups) = index_keys(d.groups.as_ref().expect("groups kept"));
    let n = d.n();

    // Name the offending column before the solver hits a singular system.
    for (name, col) in d.names.iter().zip(&d.columns) {
        let mut first: Vec<Option<f64>> = vec![None; n_groups];
        let mut varied = false;
        for (&v, &g) in col.iter().zip(&group) {
            match first[g] {
                None => first[g] = Some(v),
                Some(f) if f != v => varied = true,
                _ => {}
            }
        }
        if !varied {
            return Err(EconError::NoWithinVariation { column: name.clone() });
        }
    }

    let prob = Problem { y: d.y.clone(), x: d.x_matrix(), group: group.clone(), n_groups };
    let mut gsum = vec![0.0; n_groups];
    let mut gcount = vec![0.0; n_groups];
    for (&y, &g) in prob.y.iter().zip(&group) {
        gsum[g] += y;
        gcount[g] += 1.0;
    }
    let ll0: f64 = (0..n_groups)
        .map(|g| {
            let m = gsum[g] / gcount[g];
            gcount[g] * (m * m.ln() + (1.0 - m) * (1.0 - m).ln())
        })
        .sum();

    let mut state = State {
        beta: DVector::zeros(k),
        alpha: DVector::from_iterator(
            n_groups,
            (0..n_groups).map(|g| {
                let m = gsum[g] / gcount[g];
                (m / (1.0 - m)).ln()
            }),
        ),
    };
    let mut ev = prob.eval(&state);
    let mut iterations = 0;
    let mut converged = max_abs_grad(&ev) < opts.tol;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let s_inv = spd_inverse(&prob.schur(&ev))?;
        let mut rhs = ev.grad_beta.clone();
        for g in 0..n_groups {
            rhs -= ev.h_ba.column(g) * (ev.grad_alpha[g] / ev.h_aa[g]);
        }
        let d_beta = &s_inv * rhs;
        let d_alpha = DVector::from_iterator(
            n_groups,
            (0..n_groups).map(|g| (ev.grad_alpha[g] - ev.h_ba.column(g).dot(&d_beta)) / ev.h_aa[g]),
        );

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = State { beta: &state.beta + &d_beta * step, alpha: &state.alpha + &d_alpha * step };
            let cev = prob.eval(&cand);
            if cev.ll >= ev.ll - 1e-12 * ev.ll.abs().max(1.0) {
                accepted = Some((cand, cev));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cev)) = accepted else { break };
        state = cand;
        ev = cev;
        if let Some(j) = state.beta.iter().position(|b| b.abs() > opts.separation_bound) {
            return Err(EconError::Separation { regressor: d.names[j].clone() });
        }
        converged = max_abs_grad(&ev) < opts.tol;
    }
    // Complete separation can meet the gradient tolerance while the slopes
    // are still finite; every fitted probability then matches its outcome.
    if prob.y.iter().zip(&ev.p).all(|(y, p)| (y - p).abs() < 1e-6) {
        let j = state.beta.iamax();
        return Err(EconError::Separation { regressor: d.names[j].clone() });
    }

    let bread = spd_inverse(&prob.schur(&ev))?;
    let scores = DMatrix::from_fn(n, k, |i, j| {
        let g = group[i];
        (prob.y[i] - ev.p[i]) * (prob.x[(i, j)] - ev.h_ba[(j, g)] / ev.h_aa[g])
    });
    let (c_idx, n_clusters) = index_keys(d.clusters.as_ref().unwrap_or(d.groups.as_ref().expect("groups kept")));
    // A single cluster cannot support a cluster-robust estimate; fall back to
    // observation-level clusters.
    let (cov, cov_kind, n_clusters) = if n_clusters >= 2 {
        let g = n_clusters as f64;
        (sandwich(&bread, &scores, &c_idx, n_clusters) * (g / (g - 1.0)), CovKind::Cluster, n_clusters)
    } else {
        let own: Vec<usize> = (0..n).collect();
        let nf = n as f64;
        (sandwich(&bread, &scores, &own, n) * (nf / (nf - 1.0)), CovKind::Hc1, n)
    };

    let stat = (2.0 * (ev.ll - ll0)).max(0.0);
    let p = ChiSquared::new(k as f64).map(|c| c.sf(stat)).unwrap_or(f64::NAN);
    Ok(FitResult {
        model: Model::LogitFe,
        outcome: d.outcome_name.clone(),
        terms: make_terms(&d.names, &state.beta, &cov, StatKind::Z),
        stat_kind: StatKind::Z,
        cov_kind,
        covariance: to_rows(&cov),
        fit: FitStat::ChiSquare { stat, df: k, p },
        n_obs: n,
        n_groups,
        n_clusters,
        dropped_groups,
        iterations,
        converged,
        log_likelihood: Some(ev.ll),
    })
}
