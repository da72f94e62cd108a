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

use serde::{Deserialize, Serialize};

use super::{student_p, EconError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub mean_diff: f64,
}

/// Paired t test of `a - b` with `n - 1` degrees of freedom, two-sided.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<PairedTTest, EconError> {
    if a.len() != b.len() {
        return Err(EconError::LengthMismatch { what: "second sample".into(), expected: a.len(), got: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(EconError::TooFewObservations { n, need: 2 });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return Err(EconError::ZeroVariance);
    }
    let t = mean / (var / nf).sqrt();
    let df = nf - 1.0;
    Ok(PairedTTest { t, df, p: student_p(t, df), mean_diff: mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub d: f64,
    pub p: f64,
}

/// Asymptotic Kolmogorov distribution tail `Q(lambda)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test. `D` is exact over the merged
/// sample; `p` uses the asymptotic distribution at
/// `sqrt(n m / (n + m)) * D`.
pub fn ks_test(a: &[f64], b: &[f64]) -> Result<KsTest, EconError> {
    if a.is_empty() || b.is_empty() {
        return Err(EconError::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= v {
            i += 1;
        }
        while j < m && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    let lambda = (nf * mf / (nf + mf)).sqrt() * d;
    Ok(KsTest { d, p: kolmogorov_q(lambda) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_differences() {
        let r = paired_ttest(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4]).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_t() {
        // d = (2, 1, 3, 2, 2): mean 2, sd sqrt(0.5), t = 2 / (sqrt(0.5)/sqrt(5))
        let a = [12.0, 11.0, 15.0, 9.0, 10.0];
        let b = [10.0, 10.0, 12.0, 7.0, 8.0];
        let r = paired_ttest(&a, &b).unwrap();
        assert!((r.t - 2.0 / (0.5f64.sqrt() / 5f64.sqrt())).abs() < 1e-6);
        assert_eq!(r.df, 4.0);
    }

    #[test]
    fn ttest_errors() {
        assert_eq!(paired_ttest(&[1.0, 2.0], &[1.0, 2.0]), Err(EconError::ZeroVariance));
        assert!(paired_ttest(&[1.0], &[1.0]).is_err());
        assert!(paired_ttest(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn ks_cases() {
        assert_eq!(ks_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().d, 0.0);
        let r = ks_test(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.d, 1.0);
        assert!(ks_test(&[], &[1.0]).is_err());
    }

    #[test]
    fn ks_invariant_under_monotone_transform() {
        let a = [0.1, 0.5, 0.7, 2.0, 3.5];
        let b = [0.3, 0.4, 1.5, 1.6];
        let f = |v: &[f64]| v.iter().map(|x| x.exp() * 3.0 + 1.0).collect::<Vec<_>>();
        assert_eq!(ks_test(&a, &b).unwrap().d, ks_test(&f(&a), &f(&b)).unwrap().d);
    }
}
