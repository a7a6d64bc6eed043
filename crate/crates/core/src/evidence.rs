//! Dirichlet evidence built from similarity vectors, and its subjective-logic
//! reading: belief masses, vacuity, dissonance and expected probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SaeError};
use crate::numerics::{softmax_slice, DenseVector};
use crate::scalar::Scalar;

/// Concentration parameters `α` of a Dirichlet over `K` classes.
///
/// Every `α_k ≥ 1`: the construction adds the unit prior to non-negative
/// evidence, and nothing downstream clamps or renormalizes `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletEvidence<T> {
    alpha: DenseVector<T>,
}

impl<T: Scalar> DirichletEvidence<T> {
    pub fn new(alpha: DenseVector<T>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(SaeError::invalid("Dirichlet needs at least 2 classes"));
        }
        if let Some(k) = alpha.iter().position(|&a| a < T::one()) {
            return Err(SaeError::invalid(format!(
                "alpha[{k}] = {} is below the unit prior",
                alpha[k]
            )));
        }
        Ok(Self { alpha })
    }

    pub fn from_f64(alpha: &[f64]) -> Result<Self> {
        Self::new(DenseVector::from_f64(alpha)?)
    }

    pub fn alpha(&self) -> &DenseVector<T> {
        &self.alpha
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    /// Total strength `S = Σ α_k`.
    pub fn strength(&self) -> T {
        self.alpha.sum()
    }

    /// Evidence `e_k = α_k − 1`.
    pub fn evidence(&self) -> Vec<T> {
        self.alpha.iter().map(|&a| a - T::one()).collect()
    }
}

/// `α_k = λ · softmax(s/τ)_k + 1`: the similarity distribution fixes how the
/// evidence is shared out, `λ` fixes how much evidence there is in total.
pub fn evidence_from_similarity<T: Scalar>(
    s: &DenseVector<T>,
    lambda: T,
    tau: T,
) -> Result<DirichletEvidence<T>> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(SaeError::invalid(format!(
            "evidence strength must be positive and finite, got {lambda}"
        )));
    }
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(SaeError::invalid(format!(
            "temperature must be positive and finite, got {tau}"
        )));
    }
    if s.len() < 2 {
        return Err(SaeError::invalid("similarity vector needs at least 2 classes"));
    }
    let alpha = softmax_slice(s, tau)
        .into_iter()
        .map(|p| lambda * p + T::one())
        .collect();
    Ok(DirichletEvidence {
        alpha: DenseVector::from_vec_unchecked(alpha),
    })
}

/// `K / S`: uncertainty from missing evidence.
pub fn vacuity<T: Scalar>(ev: &DirichletEvidence<T>) -> T {
    T::from_count(ev.k()) / ev.strength()
}

/// `b_k = (α_k − 1) / S`, so that `Σ b_k + vacuity = 1`.
pub fn belief_masses<T: Scalar>(ev: &DirichletEvidence<T>) -> DenseVector<T> {
    let s = ev.strength();
    DenseVector::from_vec_unchecked(ev.alpha.iter().map(|&a| (a - T::one()) / s).collect())
}

/// Expected class probabilities `α_k / S`.
pub fn expected_probability<T: Scalar>(ev: &DirichletEvidence<T>) -> DenseVector<T> {
    let s = ev.strength();
    DenseVector::from_vec_unchecked(ev.alpha.iter().map(|&a| a / s).collect())
}

/// Balance-weighted conflict between belief masses.
///
/// A class whose competitors carry no belief contributes nothing, and so does
/// any pair with zero combined belief.
pub fn dissonance<T: Scalar>(ev: &DirichletEvidence<T>) -> T {
    dissonance_from_beliefs(&belief_masses(ev))
}

pub(crate) fn dissonance_from_beliefs<T: Scalar>(b: &[T]) -> T {
    let total: T = b.iter().copied().sum();
    let two = T::of(2.0);
    let mut dis = T::zero();
    for (i, &bi) in b.iter().enumerate() {
        let others = total - bi;
        if bi <= T::zero() || others <= T::zero() {
            continue;
        }
        // b_j · Bal(b_i, b_j) = 2 b_j min(b_i, b_j) / (b_i + b_j)
        let mut weighted = T::zero();
        for (j, &bj) in b.iter().enumerate() {
            if j != i && bj > T::zero() {
                weighted = weighted + two * bj * bi.min(bj) / (bi + bj);
            }
        }
        dis = dis + bi * weighted / others;
    }
    dis.max(T::zero()).min(T::one())
}

/// All uncertainty quantities of one Dirichlet, computed from the same `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyDecomposition<T> {
    pub vacuity: T,
    pub dissonance: T,
    pub belief: DenseVector<T>,
    pub expected_prob: DenseVector<T>,
}

pub fn decompose<T: Scalar>(ev: &DirichletEvidence<T>) -> UncertaintyDecomposition<T> {
    let belief = belief_masses(ev);
    UncertaintyDecomposition {
        vacuity: vacuity(ev),
        dissonance: dissonance_from_beliefs(&belief),
        belief,
        expected_prob: expected_probability(ev),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ev(alpha: &[f64]) -> DirichletEvidence<f64> {
        DirichletEvidence::from_f64(alpha).unwrap()
    }

    #[test]
    fn evidence_examples() {
        let s = DenseVector::from_f64(&[0.0, 0.0]).unwrap();
        let e = evidence_from_similarity(&s, 2.0, 1.0).unwrap();
        assert_eq!(e.alpha().as_slice(), &[2.0, 2.0]);

        let e = evidence_from_similarity(&s, 1e-12, 1.0).unwrap();
        for &a in e.alpha().iter() {
            assert_abs_diff_eq!(a, 1.0, epsilon = 1e-12);
        }

        // p = (0.5, 0.3, 0.2) from s = ln p at τ = 1.
        let s = DenseVector::from_f64(&[0.5f64.ln(), 0.3f64.ln(), 0.2f64.ln()]).unwrap();
        let e = evidence_from_similarity(&s, 10.0, 1.0).unwrap();
        for (a, want) in e.alpha().iter().zip([6.0, 4.0, 3.0]) {
            assert_abs_diff_eq!(*a, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn evidence_rejects_bad_parameters() {
        let s = DenseVector::from_f64(&[0.1, 0.2]).unwrap();
        assert!(evidence_from_similarity(&s, 0.0, 1.0).is_err());
        assert!(evidence_from_similarity(&s, -1.0, 1.0).is_err());
        assert!(evidence_from_similarity(&s, 1.0, 0.0).is_err());
        assert!(evidence_from_similarity(&DenseVector::from_f64(&[1.0]).unwrap(), 1.0, 1.0).is_err());
        assert!(DirichletEvidence::<f64>::from_f64(&[0.5, 2.0]).is_err());
    }

    #[test]
    fn vacuity_examples() {
        assert_eq!(vacuity(&ev(&[1.0; 4])), 1.0);
        assert_eq!(vacuity(&ev(&[2.0, 2.0])), 0.5);
        assert_abs_diff_eq!(vacuity(&ev(&[6.0, 4.0, 3.0])), 3.0 / 13.0, epsilon = 1e-15);
    }

    #[test]
    fn belief_examples() {
        assert_eq!(belief_masses(&ev(&[2.0, 2.0])).as_slice(), &[0.25, 0.25]);
        assert_eq!(belief_masses(&ev(&[1.0, 1.0, 1.0])).as_slice(), &[0.0; 3]);
        let b = belief_masses(&ev(&[5.0, 1.0, 1.0]));
        assert_abs_diff_eq!(b[0], 4.0 / 7.0, epsilon = 1e-15);
        assert_eq!(&b[1..], &[0.0, 0.0]);
    }

    #[test]
    fn dissonance_examples() {
        assert_abs_diff_eq!(dissonance(&ev(&[2.0, 2.0])), 0.5, epsilon = 1e-15);
        assert_eq!(dissonance(&ev(&[5.0, 1.0, 1.0])), 0.0);
        assert_abs_diff_eq!(dissonance(&ev(&[3.0, 3.0, 1.0])), 4.0 / 7.0, epsilon = 1e-15);
        assert_eq!(dissonance(&ev(&[1.0, 1.0, 1.0])), 0.0);
    }

    #[test]
    fn expected_probability_examples() {
        assert_eq!(expected_probability(&ev(&[1.0, 1.0])).as_slice(), &[0.5, 0.5]);
        let p = expected_probability(&ev(&[6.0, 4.0, 3.0]));
        assert_abs_diff_eq!(p[0], 6.0 / 13.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 4.0 / 13.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 3.0 / 13.0, epsilon = 1e-15);
        assert_eq!(expected_probability(&ev(&[2.0; 4])).as_slice(), &[0.25; 4]);
    }

    #[test]
    fn decompose_examples() {
        let d = decompose(&ev(&[1.0; 4]));
        assert_eq!(d.vacuity, 1.0);
        assert_eq!(d.dissonance, 0.0);
        assert_eq!(d.belief.as_slice(), &[0.0; 4]);
        assert_eq!(d.expected_prob.as_slice(), &[0.25; 4]);

        let d = decompose(&ev(&[2.0, 2.0]));
        assert_eq!((d.vacuity, d.belief.as_slice()), (0.5, &[0.25, 0.25][..]));
        assert_abs_diff_eq!(d.dissonance, 0.5, epsilon = 1e-15);

        let d = decompose(&ev(&[5.0, 1.0, 1.0]));
        assert_abs_diff_eq!(d.vacuity, 3.0 / 7.0, epsilon = 1e-15);
        assert_eq!(d.dissonance, 0.0);
    }

    #[test]
    fn single_precision_matches_double() {
        let a32 = DirichletEvidence::<f32>::from_f64(&[3.0, 3.0, 1.0]).unwrap();
        assert!((dissonance(&a32) - 4.0 / 7.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn permutation_equivariance(
            s in prop::collection::vec(-1.0f64..1.0, 2..8),
            lambda in 0.01f64..100.0,
            rot in 0usize..8,
        ) {
            let k = s.len();
            let perm: Vec<usize> = (0..k).map(|i| (i + rot) % k).collect();
            let sp: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
            let e1 = evidence_from_similarity(&DenseVector::from_f64(&s).unwrap(), lambda, 0.1).unwrap();
            let e2 = evidence_from_similarity(&DenseVector::from_f64(&sp).unwrap(), lambda, 0.1).unwrap();
            let d1 = decompose(&e1);
            let d2 = decompose(&e2);
            for (j, &i) in perm.iter().enumerate() {
                prop_assert!((e1.alpha()[i] - e2.alpha()[j]).abs() < 1e-12);
                prop_assert!((d1.belief[i] - d2.belief[j]).abs() < 1e-12);
                prop_assert!((d1.expected_prob[i] - d2.expected_prob[j]).abs() < 1e-12);
            }
            prop_assert!((d1.vacuity - d2.vacuity).abs() < 1e-12);
            prop_assert!((d1.dissonance - d2.dissonance).abs() < 1e-12);
        }

        #[test]
        fn vacuity_strictly_decreases_with_strength(
            s in prop::collection::vec(-1.0f64..1.0, 2..8),
            l1 in 0.01f64..100.0,
            dl in 0.01f64..100.0,
        ) {
            let s = DenseVector::from_f64(&s).unwrap();
            let a = vacuity(&evidence_from_similarity(&s, l1, 0.5).unwrap());
            let b = vacuity(&evidence_from_similarity(&s, l1 + dl, 0.5).unwrap());
            prop_assert!(b < a);
        }
    }
}
