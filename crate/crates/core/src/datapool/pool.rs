use crate::error::{Result, SaeError};
use crate::numerics::{argmax, dot, DenseMatrix, DenseVector};
use crate::scalar::Scalar;

/// Tolerance on embedding row norms accepted at construction and load.
pub const UNIT_NORM_TOL: f64 = 1e-5;
/// Slack allowed beyond `[-1, 1]` for stored similarities.
pub const SIMILARITY_SLACK: f64 = 1e-6;

/// Frozen image embeddings, their class similarities and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPool {
    pub class_names: Vec<String>,
    /// `n × d`, unit-norm rows.
    pub embeddings: DenseMatrix<f64>,
    /// `n × k`.
    pub similarities: DenseMatrix<f64>,
    pub labels: Vec<usize>,
    /// `k × d` class prototypes, when known.
    pub prototypes: Option<DenseMatrix<f64>>,
}

/// Which invariant a pool violates and where; the loader turns this into a
/// file-and-offset error.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum PoolViolation {
    Shape(String),
    NotUnitNorm { row: usize, norm: f64 },
    SimilarityRange { row: usize, col: usize, value: f64 },
    LabelRange { row: usize, label: usize },
}

impl EmbeddingPool {
    pub fn new(
        class_names: Vec<String>,
        embeddings: DenseMatrix<f64>,
        similarities: DenseMatrix<f64>,
        labels: Vec<usize>,
        prototypes: Option<DenseMatrix<f64>>,
    ) -> Result<Self> {
        let pool = Self {
            class_names,
            embeddings,
            similarities,
            labels,
            prototypes,
        };
        if let Some(v) = pool.violation() {
            return Err(SaeError::invalid(v.describe()));
        }
        Ok(pool)
    }

    pub(crate) fn violation(&self) -> Option<PoolViolation> {
        let (n, d, k) = (self.n(), self.d(), self.k());
        if k < 2 {
            return Some(PoolViolation::Shape(format!("pool needs at least 2 classes, got {k}")));
        }
        if self.class_names.len() != k {
            return Some(PoolViolation::Shape(format!(
                "{} class names for {k} classes",
                self.class_names.len()
            )));
        }
        if self.similarities.rows() != n || self.labels.len() != n {
            return Some(PoolViolation::Shape(format!(
                "{n} embeddings, {} similarity rows, {} labels",
                self.similarities.rows(),
                self.labels.len()
            )));
        }
        if let Some(p) = &self.prototypes {
            if p.rows() != k || p.cols() != d {
                return Some(PoolViolation::Shape(format!(
                    "prototypes are {}x{}, expected {k}x{d}",
                    p.rows(),
                    p.cols()
                )));
            }
        }
        for (row, x) in self.embeddings.row_iter().enumerate() {
            let norm = dot(x, x).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Some(PoolViolation::NotUnitNorm { row, norm });
            }
        }
        for (row, s) in self.similarities.row_iter().enumerate() {
            if let Some(col) = s.iter().position(|v| v.abs() > 1.0 + SIMILARITY_SLACK) {
                return Some(PoolViolation::SimilarityRange {
                    row,
                    col,
                    value: s[col],
                });
            }
        }
        if let Some(row) = self.labels.iter().position(|&y| y >= k) {
            return Some(PoolViolation::LabelRange {
                row,
                label: self.labels[row],
            });
        }
        None
    }

    pub fn n(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn d(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn k(&self) -> usize {
        self.similarities.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Accuracy of predicting the most similar class.
    pub fn zero_shot_accuracy(&self) -> f64 {
        let hits = self
            .similarities
            .row_iter()
            .zip(&self.labels)
            .filter(|(s, &y)| argmax(s) == y)
            .count();
        hits as f64 / self.n() as f64
    }

    /// Sub-pool of the listed rows, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            class_names: self.class_names.clone(),
            embeddings: self.embeddings.select_rows(indices)?,
            similarities: self.similarities.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            prototypes: self.prototypes.clone(),
        })
    }
}

impl PoolViolation {
    pub(crate) fn describe(&self) -> String {
        match self {
            PoolViolation::Shape(m) => m.clone(),
            PoolViolation::NotUnitNorm { row, norm } => {
                format!("embedding row {row} has norm {norm}, expected 1 within {UNIT_NORM_TOL}")
            }
            PoolViolation::SimilarityRange { row, col, value } => {
                format!("similarity ({row}, {col}) = {value} outside [-1, 1]")
            }
            PoolViolation::LabelRange { row, label } => {
                format!("label out of range: row {row} has label {label}")
            }
        }
    }
}

/// Class prototype: the mean of the L2-normalized description embeddings.
/// The mean itself is left unnormalized.
pub fn prototype_from_descriptions<T: Scalar>(descriptions: &[DenseVector<T>]) -> Result<DenseVector<T>> {
    let first = descriptions
        .first()
        .ok_or_else(|| SaeError::invalid("prototype needs at least one description"))?;
    let d = first.len();
    let mut mean = vec![T::zero(); d];
    for (i, e) in descriptions.iter().enumerate() {
        if e.len() != d {
            return Err(SaeError::invalid(format!(
                "description {i} has dimension {}, expected {d}",
                e.len()
            )));
        }
        let norm = dot(e, e).sqrt();
        if norm == T::zero() {
            return Err(SaeError::invalid(format!("description {i} embedding is zero")));
        }
        for (m, &v) in mean.iter_mut().zip(e.iter()) {
            *m = *m + v / norm;
        }
    }
    let count = T::from_count(descriptions.len());
    mean.iter_mut().for_each(|m| *m = *m / count);
    if dot(&mean, &mean).sqrt() < T::of(1e-8) {
        log::warn!("degenerate prototype: descriptions cancel to a near-zero mean");
    }
    DenseVector::new(mean)
}

/// `s_ik = ⟨x_i, proto_k⟩`.
pub fn compute_similarities<T: Scalar>(
    embeddings: &DenseMatrix<T>,
    prototypes: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    if embeddings.cols() != prototypes.cols() {
        return Err(SaeError::invalid(format!(
            "embeddings are {}-d, prototypes are {}-d",
            embeddings.cols(),
            prototypes.cols()
        )));
    }
    let (n, k) = (embeddings.rows(), prototypes.rows());
    let mut values = Vec::with_capacity(n * k);
    for x in embeddings.row_iter() {
        values.extend(prototypes.row_iter().map(|p| dot(x, p)));
    }
    Ok(DenseMatrix::from_parts_unchecked(n, k, values))
}

/// `v / ‖v‖₂`.
pub(crate) fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = dot(v, v).sqrt();
    v.iter().map(|x| x / norm).collect()
}
