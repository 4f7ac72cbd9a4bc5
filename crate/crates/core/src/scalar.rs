use std::fmt::{Debug, Display};

use nalgebra::{DMatrix, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the estimators are generic over (`f32` or `f64`).
///
/// Tolerances and other configuration values are carried as `f64` and cast
/// into the working precision at the point of use.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every supported scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_f64_lossy(v as f64)
    }

    /// Not-a-number sentinel used for unobserved cells.
    fn missing() -> Self {
        Self::from_f64_lossy(f64::NAN)
    }

    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }

    /// Thin SVD `(U, sigma, V)` with `min(rows, cols)` components, or `None`
    /// if the backend fails.
    fn svd_factors(a: &DMatrix<Self>) -> Option<(DMatrix<Self>, Vec<Self>, DMatrix<Self>)>;
}

fn faer_svd<T>(a: &DMatrix<T>) -> Option<(DMatrix<T>, Vec<T>, DMatrix<T>)>
where
    T: faer::traits::RealField + nalgebra::Scalar + Copy,
{
    let (m, n) = a.shape();
    let mat = faer::Mat::<T>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = mat.thin_svd().ok()?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = m.min(n);
    Some((
        DMatrix::from_fn(m, k, |i, j| u[(i, j)]),
        (0..k).map(|i| s[i]).collect(),
        DMatrix::from_fn(n, k, |i, j| v[(i, j)]),
    ))
}

impl Scalar for f32 {
    fn svd_factors(a: &DMatrix<Self>) -> Option<(DMatrix<Self>, Vec<Self>, DMatrix<Self>)> {
        faer_svd(a)
    }
}

impl Scalar for f64 {
    fn svd_factors(a: &DMatrix<Self>) -> Option<(DMatrix<Self>, Vec<Self>, DMatrix<Self>)> {
        faer_svd(a)
    }
}

#[inline]
pub(crate) fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64_lossy(v)
}
