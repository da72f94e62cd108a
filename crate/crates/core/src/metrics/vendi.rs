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

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{MetricError, UnitVector};

/// Similarity kernel for the Vendi score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// Dot product of unit vectors.
    #[default]
    Cosine,
    /// `exp(-gamma * ||a - b||^2)`.
    Rbf { gamma: f64 },
}

impl KernelSpec {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Cosine => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VendiReport {
    pub score: f64,
    pub entropy: f64,
    /// Eigenvalues of the normalized kernel, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    pub n: usize,
}

/// Eigenvalues in (-EIG_CLAMP, 0) are treated as rounding and set to zero.
pub const EIG_CLAMP: f64 = 1e-8;

/// Effective number of distinct items: `exp(H)` where `H` is the Shannon
/// entropy of the eigenvalues of the unit-diagonal kernel divided by `n`.
pub fn vendi_score(embeddings: &[UnitVector], kernel: KernelSpec) -> Result<VendiReport, MetricError> {
    let n = embeddings.len();
    if n == 0 {
        return Err(MetricError::EmptyInput);
    }
    if let KernelSpec::Rbf { gamma } = kernel {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(MetricError::InvalidGamma(gamma));
        }
    }
    let dim = embeddings[0].dim();
    if let Some(bad) = embeddings.iter().find(|e| e.dim() != dim) {
        return Err(MetricError::DimensionMismatch(dim, bad.dim()));
    }

    let mut k = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(embeddings[i].as_slice(), embeddings[j].as_slice());
            if !v.is_finite() {
                return Err(MetricError::NonFiniteKernel);
            }
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let inv_sqrt_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = k[(i, i)];
            if d > 0.0 && d.is_finite() {
                Ok(1.0 / d.sqrt())
            } else {
                Err(MetricError::NonFiniteKernel)
            }
        })
        .collect::<Result<_, _>>()?;
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] *= inv_sqrt_diag[i] * inv_sqrt_diag[j] / n as f64;
        }
    }

    let eig = SymmetricEigen::new(k);
    let mut eigenvalues = Vec::with_capacity(n);
    for &l in eig.eigenvalues.iter() {
        if l < -EIG_CLAMP {
            return Err(MetricError::NegativeEigenvalue(l));
        }
        eigenvalues.push(l.max(0.0));
    }
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let entropy: f64 = -eigenvalues.iter().filter(|&&l| l > 0.0).map(|&l| l * l.ln()).sum::<f64>();
    let entropy = entropy.max(0.0);
    let score = entropy.exp().clamp(1.0, n as f64);
    Ok(VendiReport { score, entropy, eigenvalues, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn basis(dim: usize, i: usize) -> UnitVector {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        UnitVector::new(v).unwrap()
    }

    #[test]
    fn identical_items_score_one() {
        let e = basis(4, 1);
        let r = vendi_score(&[e.clone(), e.clone(), e], KernelSpec::Cosine).unwrap();
        assert!((r.score - 1.0).abs() < 1e-9);
        assert!(r.entropy.abs() < 1e-9);
    }

    #[test]
    fn orthonormal_items_score_n() {
        let r = vendi_score(&[basis(3, 0), basis(3, 1), basis(3, 2)], KernelSpec::Cosine).unwrap();
        assert!((r.score - 3.0).abs() < 1e-9);
        let sum: f64 = r.eigenvalues.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_plus_orthogonal_hand_case() {
        let r = vendi_score(&[basis(2, 0), basis(2, 0), basis(2, 1)], KernelSpec::Cosine).unwrap();
        let expected = (3f64.ln() - (2.0 / 3.0) * 2f64.ln()).exp();
        assert!((expected - 1.8898815).abs() < 1e-6);
        assert!((r.score - expected).abs() < 1e-6, "{}", r.score);
        assert!((r.eigenvalues[0] - 2.0 / 3.0).abs() < 1e-9);
        assert!((r.eigenvalues[1] - 1.0 / 3.0).abs() < 1e-9);
        assert!(r.eigenvalues[2].abs() < 1e-9);
    }

    #[test]
    fn rbf_kernel_and_errors() {
        let r = vendi_score(&[basis(2, 0), basis(2, 1)], KernelSpec::Rbf { gamma: 50.0 }).unwrap();
        assert!((r.score - 2.0).abs() < 1e-6);
        assert_eq!(vendi_score(&[], KernelSpec::Cosine), Err(MetricError::EmptyInput));
        assert_eq!(vendi_score(&[basis(2, 0)], KernelSpec::Rbf { gamma: 0.0 }), Err(MetricError::InvalidGamma(0.0)));
        assert!(matches!(
            vendi_score(&[basis(2, 0), basis(3, 0)], KernelSpec::Cosine),
            Err(MetricError::DimensionMismatch(2, 3))
        ));
    }

    fn rotate(v: &[f64], theta: f64) -> Vec<f64> {
        let (s, c) = theta.sin_cos();
        let mut out = v.to_vec();
        out[0] = c * v[0] - s * v[1];
        out[1] = s * v[0] + c * v[1];
        out
    }

    proptest! {
        #[test]
        fn bounded_permutation_and_rotation_invariant(
            raw in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 1..7),
            theta in 0.0f64..std::f64::consts::TAU,
            shift in 0usize..7,
        ) {
            prop_assume!(raw.iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3));
            let embs: Vec<UnitVector> = raw.iter().map(|v| UnitVector::new(v.clone()).unwrap()).collect();
            let n = embs.len();
            let base = vendi_score(&embs, KernelSpec::Cosine).unwrap();
            prop_assert!(base.score >= 1.0 && base.score <= n as f64);

            let mut permuted = embs.clone();
            permuted.rotate_left(shift % n);
            let p = vendi_score(&permuted, KernelSpec::Cosine).unwrap();
            prop_assert!((p.score - base.score).abs() < 1e-8);

            let rotated: Vec<UnitVector> = raw.iter().map(|v| UnitVector::new(rotate(v, theta)).unwrap()).collect();
            let r = vendi_score(&rotated, KernelSpec::Cosine).unwrap();
            prop_assert!((r.score - base.score).abs() < 1e-8);
        }
    }
}
