//! Observed-entry bookkeeping for a partially observed response matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{PeerError, Result};
use crate::linalg::ensure_finite;
use crate::scalar::Scalar;

/// Observation mask; `true` marks an observed cell.
pub type Mask = DMatrix<bool>;

/// Response matrix together with the set of observed cells.
///
/// Unobserved cells hold a NaN placeholder. No operation in this crate reads
/// them: every access goes through the mask first.
#[derive(Debug, Clone)]
pub struct ObservedMatrix<T: Scalar> {
    values: DMatrix<T>,
    mask: Mask,
    observed: usize,
}

impl<T: Scalar> ObservedMatrix<T> {
    pub fn new(values: DMatrix<T>, mask: Mask) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(PeerError::invalid(format!(
                "values are {:?} but mask is {:?}",
                values.shape(),
                mask.shape()
            )));
        }
        let mut values = values;
        let mut observed = 0;
        for (v, &m) in values.iter_mut().zip(mask.iter()) {
            if m {
                if !v.is_finite_value() {
                    return Err(PeerError::invalid("observed response value is not finite"));
                }
                observed += 1;
            } else {
                *v = T::missing();
            }
        }
        Ok(ObservedMatrix {
            values,
            mask,
            observed,
        })
    }

    pub fn fully_observed(values: DMatrix<T>) -> Result<Self> {
        ensure_finite(&values, "response matrix")?;
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        let observed = values.len();
        Ok(ObservedMatrix {
            values,
            mask,
            observed,
        })
    }

    /// Builds from row-major cells, `None` meaning missing.
    pub fn from_row_cells(rows: usize, cols: usize, cells: &[Option<T>]) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(PeerError::invalid(format!(
                "expected {} cells, got {}",
                rows * cols,
                cells.len()
            )));
        }
        let values = DMatrix::from_fn(rows, cols, |i, j| {
            cells[i * cols + j].unwrap_or_else(T::missing)
        });
        let mask = DMatrix::from_fn(rows, cols, |i, j| cells[i * cols + j].is_some());
        Self::new(values, mask)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    /// Number of observed cells.
    pub fn observed_count(&self) -> usize {
        self.observed
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed == self.values.len()
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// Raw storage, including NaN placeholders in unobserved cells.
    pub fn raw_values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        self.mask[(i, j)].then(|| self.values[(i, j)])
    }

    /// Observed values with zeros in the unobserved cells.
    pub fn zero_filled(&self) -> DMatrix<T> {
        self.values
            .zip_map(&self.mask, |v, m| if m { v } else { T::zero() })
    }

    /// Mean of the observed entries in each column; 0 for an empty column.
    pub fn observed_column_means(&self) -> DVector<T> {
        DVector::from_fn(self.ncols(), |j, _| {
            let (sum, count) = self
                .values
                .column(j)
                .iter()
                .zip(self.mask.column(j).iter())
                .filter(|(_, &m)| m)
                .fold((T::zero(), 0usize), |(s, c), (&v, _)| (s + v, c + 1));
            if count == 0 {
                T::zero()
            } else {
                sum / T::from_usize_lossy(count)
            }
        })
    }

    /// Subtracts `offsets[j]` from every observed entry of column `j`.
    pub fn shifted(&self, offsets: &DVector<T>) -> Result<Self> {
        if offsets.len() != self.ncols() {
            return Err(PeerError::invalid(
                "offset length does not match column count",
            ));
        }
        let mut values = self.values.clone();
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                if self.mask[(i, j)] {
                    values[(i, j)] -= offsets[j];
                }
            }
        }
        Ok(ObservedMatrix {
            values,
            mask: self.mask.clone(),
            observed: self.observed,
        })
    }
}

impl<T: Scalar> PartialEq for ObservedMatrix<T> {
    /// Equal masks and equal observed values; placeholders are ignored.
    fn eq(&self, other: &Self) -> bool {
        self.mask == other.mask
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .zip(self.mask.iter())
                .all(|((a, b), &m)| !m || a == b)
    }
}

/// Keeps `a` on observed cells and zeroes everything else.
pub fn project_observed<T: Scalar>(a: &DMatrix<T>, mask: &Mask) -> Result<DMatrix<T>> {
    if a.shape() != mask.shape() {
        return Err(PeerError::invalid(format!(
            "matrix is {:?} but mask is {:?}",
            a.shape(),
            mask.shape()
        )));
    }
    Ok(a.zip_map(mask, |v, m| if m { v } else { T::zero() }))
}

/// Observed cells from `obs`, unobserved cells from `fill`.
pub fn combine<T: Scalar>(obs: &ObservedMatrix<T>, fill: &DMatrix<T>) -> Result<DMatrix<T>> {
    if fill.shape() != obs.shape() {
        return Err(PeerError::invalid(format!(
            "fill is {:?} but observations are {:?}",
            fill.shape(),
            obs.shape()
        )));
    }
    let mut out = fill.clone();
    combine_into(obs, &mut out);
    Ok(out)
}

/// In-place variant of [`combine`]: overwrites the observed cells of `work`.
pub(crate) fn combine_into<T: Scalar>(obs: &ObservedMatrix<T>, work: &mut DMatrix<T>) {
    for ((w, &v), &m) in work.iter_mut().zip(obs.values.iter()).zip(obs.mask.iter()) {
        if m {
            *w = v;
        }
    }
}

/// Fills each unobserved cell with the mean of the observed entries of its
/// column. A column with no observations is filled with zeros.
pub fn column_mean_impute<T: Scalar>(obs: &ObservedMatrix<T>) -> DMatrix<T> {
    let means = obs.observed_column_means();
    let mut out = obs.values.clone();
    for j in 0..obs.ncols() {
        if obs.mask.column(j).iter().all(|&m| !m) {
            log::warn!("response column {j} is fully unobserved; filling it with 0");
        }
        for i in 0..obs.nrows() {
            if !obs.mask[(i, j)] {
                out[(i, j)] = means[j];
            }
        }
    }
    out
}

/// Fraction of unobserved cells, `1 - m / (n q)`.
pub fn missing_rate<T: Scalar>(obs: &ObservedMatrix<T>) -> f64 {
    let total = obs.values.len();
    if total == 0 {
        return 0.0;
    }
    1.0 - obs.observed as f64 / total as f64
}
