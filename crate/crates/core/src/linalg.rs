//! Dense factorizations and the rank-truncation operator.
//!
//! Everything here is a pure function of its inputs. The SVD comes from faer
//! (nalgebra's routine loses accuracy on exactly rank-deficient input);
//! results are re-sorted and given a canonical sign so that downstream
//! comparisons are reproducible.

use nalgebra::{DMatrix, DVector};

use crate::error::{PeerError, Result};
use crate::scalar::{lit, Scalar};

/// `left * diag(singular_values) * right^T`, with singular values sorted
/// in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriplet<T: Scalar> {
    pub left: DMatrix<T>,
    pub singular_values: DVector<T>,
    pub right: DMatrix<T>,
}

impl<T: Scalar> SvdTriplet<T> {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        let mut scaled = self.left.clone();
        for (k, &s) in self.singular_values.iter().enumerate() {
            scaled.column_mut(k).scale_mut(s);
        }
        &scaled * self.right.transpose()
    }

    /// Keeps the leading `k` components.
    pub fn truncated(&self, k: usize) -> SvdTriplet<T> {
        let k = k.min(self.rank());
        SvdTriplet {
            left: self.left.columns(0, k).into_owned(),
            singular_values: self.singular_values.rows(0, k).into_owned(),
            right: self.right.columns(0, k).into_owned(),
        }
    }
}

pub(crate) fn ensure_finite<T: Scalar>(a: &DMatrix<T>, what: &str) -> Result<()> {
    if let Some(pos) = a.iter().position(|v| !v.is_finite_value()) {
        let (i, j) = (pos % a.nrows(), pos / a.nrows());
        return Err(PeerError::invalid(format!(
            "{what} has a non-finite entry at ({i}, {j})"
        )));
    }
    Ok(())
}

/// Full thin SVD with `min(rows, cols)` components.
pub fn full_svd<T: Scalar>(a: &DMatrix<T>) -> Result<SvdTriplet<T>> {
    if a.is_empty() {
        return Err(PeerError::invalid("cannot factor an empty matrix"));
    }
    ensure_finite(a, "matrix")?;
    let (u, s, v) = T::svd_factors(a).ok_or_else(|| PeerError::Numeric {
        message: "SVD did not converge".into(),
        iterations: 0,
    })?;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));

    let k = order.len();
    let mut left = DMatrix::<T>::zeros(a.nrows(), k);
    let mut right = DMatrix::<T>::zeros(a.ncols(), k);
    let mut values = DVector::<T>::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v.column(src));
        values[dst] = s[src].max(T::zero());
    }
    canonicalize_signs(&mut left, &mut right);
    Ok(SvdTriplet {
        left,
        singular_values: values,
        right,
    })
}

/// Flips each `(left_k, right_k)` pair so that the largest-magnitude entry of
/// `right_k` is positive. The first entry wins magnitude ties.
fn canonicalize_signs<T: Scalar>(left: &mut DMatrix<T>, right: &mut DMatrix<T>) {
    for k in 0..right.ncols() {
        let col = right.column(k);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < T::zero() {
            right.column_mut(k).neg_mut();
            left.column_mut(k).neg_mut();
        }
    }
}

/// Leading `k` singular triplets of `a`.
pub fn thin_svd<T: Scalar>(a: &DMatrix<T>, k: usize) -> Result<SvdTriplet<T>> {
    let max_k = a.nrows().min(a.ncols());
    if k == 0 || k > max_k {
        return Err(PeerError::invalid(format!(
            "requested {k} singular triplets from a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(full_svd(a)?.truncated(k))
}

/// Best rank-`r` approximation: keeps the `r` largest singular values and
/// zeroes the rest. Returns `a` unchanged when `r >= min(rows, cols)`.
pub fn truncate_rank<T: Scalar>(a: &DMatrix<T>, r: usize) -> Result<DMatrix<T>> {
    if r == 0 {
        return Err(PeerError::invalid("truncation rank must be at least 1"));
    }
    ensure_finite(a, "matrix")?;
    if r >= a.nrows().min(a.ncols()) {
        return Ok(a.clone());
    }
    Ok(full_svd(a)?.truncated(r).reconstruct())
}

/// Orthonormal basis for the column span of `b`, oriented so that the
/// triangular factor has a positive diagonal.
pub fn qr_orthonormalize<T: Scalar>(b: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (rows, cols) = b.shape();
    if cols == 0 || cols > rows {
        return Err(PeerError::Degenerate(format!(
            "cannot orthonormalize {cols} columns in dimension {rows}"
        )));
    }
    ensure_finite(b, "matrix")?;
    let qr = b.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    let scale = r.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    for k in 0..cols {
        let pivot = r[(k, k)];
        if scale == T::zero() || pivot.abs() <= lit::<T>(1e-12) * scale {
            return Err(PeerError::Degenerate(format!(
                "column {k} is linearly dependent on the preceding columns"
            )));
        }
        if pivot < T::zero() {
            q.column_mut(k).neg_mut();
        }
    }
    Ok(q)
}

/// Square orthogonal matrix whose leading columns span the same space as the
/// orthonormal columns of `u`; the trailing columns span the orthogonal
/// complement.
pub fn complete_orthonormal_basis<T: Scalar>(u: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (p, r) = u.shape();
    if r > p {
        return Err(PeerError::Degenerate(format!(
            "{r} columns cannot be orthonormal in dimension {p}"
        )));
    }
    // Householder QR of [U, I] yields a full orthogonal Q regardless of the
    // rank of the identity block; its first r columns span span(U).
    let mut stacked = DMatrix::<T>::zeros(p, r + p);
    stacked.columns_mut(0, r).copy_from(u);
    stacked.columns_mut(r, p).fill_with_identity();
    let qr = stacked.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for k in 0..r {
        if rr[(k, k)].abs() <= lit::<T>(1e-10) {
            return Err(PeerError::Degenerate(
                "input columns are rank deficient".into(),
            ));
        }
        if rr[(k, k)] < T::zero() {
            q.column_mut(k).neg_mut();
        }
    }
    Ok(q)
}

/// Lower-triangular `L` with `L L^T = s`.
///
/// Positive semidefinite input whose pivots dip at most `1e-8` below zero is
/// retried once with `1e-10 * I` added to the diagonal.
pub fn cholesky_psd<T: Scalar>(s: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = s.nrows();
    if n != s.ncols() {
        return Err(PeerError::invalid(format!(
            "cholesky needs a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    ensure_finite(s, "matrix")?;
    let scale = s
        .iter()
        .fold(T::zero(), |m, v| m.max(v.abs()))
        .max(T::one());
    for i in 0..n {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > lit::<T>(1e-8) * scale {
                return Err(PeerError::invalid(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    match cholesky_lower(s) {
        Ok(l) => Ok(l),
        Err(pivot) if pivot >= lit::<T>(-1e-8) * scale => {
            let mut jittered = s.clone();
            for i in 0..n {
                jittered[(i, i)] += lit::<T>(1e-10);
            }
            cholesky_lower(&jittered).map_err(|p| PeerError::Numeric {
                message: format!("matrix is not positive semidefinite (pivot {p})"),
                iterations: 1,
            })
        }
        Err(pivot) => Err(PeerError::Numeric {
            message: format!("matrix is indefinite (pivot {pivot})"),
            iterations: 0,
        }),
    }
}

/// Returns the first non-positive pivot on failure.
fn cholesky_lower<T: Scalar>(s: &DMatrix<T>) -> std::result::Result<DMatrix<T>, T> {
    let n = s.nrows();
    let mut l = DMatrix::<T>::zeros(n, n);
    for j in 0..n {
        let mut diag = s[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag <= T::zero() {
            return Err(diag);
        }
        let d = diag.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut acc = s[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / d;
        }
    }
    Ok(l)
}

/// `Gamma_ij = rho^|i-j|`.
pub fn ar1_covariance<T: Scalar>(size: usize, rho: f64) -> DMatrix<T> {
    DMatrix::from_fn(size, size, |i, j| lit::<T>(rho.powi(i.abs_diff(j) as i32)))
}
