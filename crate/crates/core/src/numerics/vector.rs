use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SaeError};
use crate::scalar::Scalar;

/// Non-empty vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector<T>(Vec<T>);

impl<T: Scalar> DenseVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(SaeError::invalid("vector must be non-empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SaeError::invalid(format!(
                "vector entry {i} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| T::of(v)).collect())
    }

    /// Wraps values the caller has already checked.
    pub(crate) fn from_vec_unchecked(values: Vec<T>) -> Self {
        debug_assert!(!values.is_empty());
        Self(values)
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![T::zero(); len])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn sum(&self) -> T {
        self.0.iter().copied().sum()
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate() {
            if v < self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> T {
        self.0[self.argmax()]
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.to_f64_lossless()).collect()
    }
}

impl<T> Deref for DenseVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Index of the largest entry of a non-empty slice, lowest index on ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
