//! Floating-point abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::DMatrix;
use num_traits::{Float, FloatConst};
use realfft::FftNum;

/// Real scalar the solver is generic over.
///
/// The arithmetic comes from `num-traits`; the dense symmetric eigensolver is
/// delegated to `nalgebra` for each concrete width, since the generic
/// `RealField` bound would clash with `Float` method resolution everywhere.
pub trait Real: Float + FloatConst + FftNum + Default + Display + LowerExp + Debug {
    /// Eigen-decomposition of a symmetric `n x n` matrix given in row-major
    /// order. Returns eigenvalues and the eigenvectors as the columns of a
    /// row-major `n x n` matrix, both in the solver's native order.
    fn symmetric_eigen(row_major: &[Self], n: usize) -> (Vec<Self>, Vec<Self>);

    /// Unit roundoff of the type.
    fn unit_roundoff() -> Self {
        Self::epsilon()
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn symmetric_eigen(row_major: &[Self], n: usize) -> (Vec<Self>, Vec<Self>) {
                assert_eq!(row_major.len(), n * n, "matrix storage does not match n");
                // symmetric, so row-major and column-major storage coincide
                let eig = DMatrix::<$t>::from_column_slice(n, n, row_major).symmetric_eigen();
                let values = eig.eigenvalues.iter().copied().collect();
                let mut vectors = vec![0.0 as $t; n * n];
                for (col, v) in eig.eigenvectors.column_iter().enumerate() {
                    for (row, &x) in v.iter().enumerate() {
                        vectors[row * n + col] = x;
                    }
                }
                (values, vectors)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in the working precision")
}

/// Converts a count or index into the working scalar.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in the working precision")
}
