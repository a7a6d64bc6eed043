//! Scalar and vector primitives shared by every module.

mod matrix;
mod rng;
mod vector;

pub use matrix::{dot, DenseMatrix};
pub(crate) use matrix::{gemm_nn, gemm_nt, gemm_tn};
pub use rng::SeededRng;
pub use vector::{argmax, DenseVector};

use crate::error::{Result, SaeError};
use crate::scalar::Scalar;

/// Temperature-scaled softmax `exp(s_k/τ) / Σ_j exp(s_j/τ)`, evaluated with
/// the maximum subtracted first.
pub fn softmax_temp<T: Scalar>(s: &DenseVector<T>, tau: T) -> Result<DenseVector<T>> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(SaeError::invalid(format!(
            "temperature must be positive and finite, got {tau}"
        )));
    }
    Ok(DenseVector::from_vec_unchecked(softmax_slice(s, tau)))
}

/// Softmax over a slice the caller guarantees is finite and non-empty.
pub(crate) fn softmax_slice<T: Scalar>(s: &[T], tau: T) -> Vec<T> {
    let max = s.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = s.iter().map(|&v| ((v - max) / tau).exp()).collect();
    let z: T = out.iter().copied().sum();
    for v in &mut out {
        *v = *v / z;
    }
    out
}

/// `log Σ exp(v_k)`.
pub(crate) fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = v.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Checks that `p` is a probability vector (non-negative, sums to 1 within 1e-9).
pub fn check_probability<T: Scalar>(p: &[T]) -> Result<()> {
    if p.is_empty() {
        return Err(SaeError::invalid("empty probability vector"));
    }
    if p.iter().any(|&v| !v.is_finite() || v < T::zero()) {
        return Err(SaeError::invalid("probability entries must be finite and >= 0"));
    }
    let total: f64 = p.iter().map(|v| v.to_f64_lossless()).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(SaeError::invalid(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Shannon entropy in nats, with `0 · ln 0 = 0`.
pub fn entropy<T: Scalar>(p: &DenseVector<T>) -> Result<T> {
    check_probability(p)?;
    Ok(entropy_unchecked(p))
}

pub(crate) fn entropy_unchecked<T: Scalar>(p: &[T]) -> T {
    let h: T = p
        .iter()
        .filter(|&&v| v > T::zero())
        .map(|&v| -v * v.ln())
        .sum();
    h.max(T::zero())
}

/// `log(1 + e^u)` without overflow for large `u` or underflow loss for very negative `u`.
pub fn softplus<T: Scalar>(u: T) -> T {
    if u <= T::zero() {
        u.exp().ln_1p()
    } else {
        u + (-u).exp().ln_1p()
    }
}

/// Logistic function, the derivative of [`softplus`].
pub fn sigmoid<T: Scalar>(u: T) -> T {
    if u >= T::zero() {
        T::one() / (T::one() + (-u).exp())
    } else {
        let e = u.exp();
        e / (T::one() + e)
    }
}

/// Affine map onto `[0, 1]`. A constant input maps to all zeros.
pub fn min_max_normalize<T: Scalar>(v: &DenseVector<T>) -> DenseVector<T> {
    DenseVector::from_vec_unchecked(min_max_slice(v))
}

pub(crate) fn min_max_slice<T: Scalar>(v: &[T]) -> Vec<T> {
    let lo = v.iter().copied().fold(T::infinity(), T::min);
    let hi = v.iter().copied().fold(T::neg_infinity(), T::max);
    let range = hi - lo;
    if !(range > T::zero()) {
        return vec![T::zero(); v.len()];
    }
    v.iter().map(|&x| ((x - lo) / range).min(T::one())).collect()
}
