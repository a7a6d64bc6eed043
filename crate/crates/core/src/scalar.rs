//! Floating-point abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the engine can compute in: `f32` or `f64`.
///
/// Experiments run in `f64`; `f32` is supported for inference-only use
/// and for checking that formulas do not depend on the precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal or intermediate into this scalar.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to any Float")
    }

    /// Widens to `f64`.
    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self.to_f64().expect("Float converts to f64")
    }

    /// Converts a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::of(n as f64)
    }

    /// `c += a · b` for an `m×k` by `k×n` product, with row and column strides
    /// given per operand. Callers guarantee every addressed element is in
    /// bounds; see [`crate::numerics`] for the checked entry points.
    fn gemm_acc(dims: (usize, usize, usize), a: (&[Self], isize, isize), b: (&[Self], isize, isize), c: (&mut [Self], isize));
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm_acc(
                (m, k, n): (usize, usize, usize),
                (a, rsa, csa): (&[Self], isize, isize),
                (b, rsb, csb): (&[Self], isize, isize),
                (c, rsc): (&mut [Self], isize),
            ) {
                // SAFETY: the checked wrappers in numerics::matrix assert that
                // the largest addressed offset of each operand is in bounds.
                unsafe {
                    $gemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, 1.0, c.as_mut_ptr(), rsc, 1);
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);
