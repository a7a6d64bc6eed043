//! Evidential active learning over frozen vision-language embedding pools.
//!
//! Similarity vectors between image embeddings and class text prototypes are
//! read as Dirichlet evidence: a small dual-branch network (the similarity
//! evidence head) predicts how much evidence a sample carries, the
//! similarity softmax decides how that evidence is shared among classes, and
//! the resulting vacuity and dissonance drive a two-phase acquisition
//! schedule.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what experiments use.

pub mod acquisition;
pub mod checkpoint;
pub mod datapool;
pub mod error;
pub mod evidence;
pub mod experiment;
pub mod io_util;
pub mod metrics;
pub mod numerics;
pub mod probe;
pub mod scalar;
pub mod seh;
pub mod training;

pub use error::{Result, SaeError};
pub use scalar::Scalar;

pub type Vector = numerics::DenseVector<f64>;
pub type Matrix = numerics::DenseMatrix<f64>;
pub type Evidence = evidence::DirichletEvidence<f64>;
pub type Uncertainty = evidence::UncertaintyDecomposition<f64>;
pub type Model = seh::SehModel<f64>;
pub type Calibration = metrics::CalibrationReport<f64>;
