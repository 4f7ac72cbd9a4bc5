//! Low-rank initialization of a partially observed response matrix by
//! iterative singular value thresholding (hard impute).
//!
//! Starting from a column-mean imputation, the working matrix is repeatedly
//! replaced by its best rank-`r` approximation on the unobserved cells while
//! the observed cells are held fixed. The returned triplet `(Z, D, V)` is the
//! SVD of the final rank-`r` iterate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PeerError, Result};
use crate::linalg::{full_svd, SvdTriplet};
use crate::masked::{column_mean_impute, combine_into, ObservedMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvtConfig {
    pub rank: usize,
    /// Relative Frobenius change at which the iteration stops.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SvtConfig {
    pub fn new(rank: usize) -> Self {
        SvtConfig {
            rank,
            tolerance: 1e-4,
            max_iterations: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(PeerError::invalid("initial rank must be at least 1"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(PeerError::invalid("SVT tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(PeerError::invalid("SVT needs at least one iteration"));
        }
        Ok(())
    }
}

/// Output of the initialization step.
#[derive(Debug, Clone, PartialEq)]
pub struct InitEstimate<T: Scalar> {
    /// `Z` (n x r), `diag(d_1..d_r)`, `V` (q x r).
    pub svd: SvdTriplet<T>,
    /// The `(r+1)`-th singular value of the completed working matrix whose
    /// truncation produced `svd`; 0 when `r = min(n, q)`.
    pub trailing_singular_value: T,
    pub iterations_used: usize,
    pub converged: bool,
    pub final_relative_change: f64,
    /// `m^-1 ||P_M(Y) - P_M(A)||_F^2` after each iteration.
    pub objective_history: Vec<f64>,
}

impl<T: Scalar> InitEstimate<T> {
    pub fn rank(&self) -> usize {
        self.svd.rank()
    }

    pub fn singular_values(&self) -> &[T] {
        self.svd.singular_values.as_slice()
    }
}

fn check_rank(rank: usize, n: usize, q: usize) -> Result<()> {
    if rank == 0 || rank > n.min(q) {
        return Err(PeerError::invalid(format!(
            "rank {rank} must lie in 1..={} for a {n}x{q} response",
            n.min(q)
        )));
    }
    Ok(())
}

fn split_at_rank<T: Scalar>(full: SvdTriplet<T>, rank: usize) -> (SvdTriplet<T>, T) {
    let tail = full
        .singular_values
        .get(rank)
        .copied()
        .unwrap_or_else(T::zero);
    (full.truncated(rank), tail)
}

/// Initialization for a fully observed response: the leading `r` singular
/// triplets of `y`, with no iteration.
pub fn full_data_init<T: Scalar>(y: &DMatrix<T>, rank: usize) -> Result<InitEstimate<T>> {
    check_rank(rank, y.nrows(), y.ncols())?;
    let (svd, tail) = split_at_rank(full_svd(y)?, rank);
    Ok(InitEstimate {
        svd,
        trailing_singular_value: tail,
        iterations_used: 0,
        converged: true,
        final_relative_change: 0.0,
        objective_history: Vec::new(),
    })
}

fn observed_objective<T: Scalar>(obs: &ObservedMatrix<T>, a: &DMatrix<T>) -> f64 {
    let mut acc = 0.0;
    for ((&v, &m), &x) in obs.raw_values().iter().zip(obs.mask().iter()).zip(a.iter()) {
        if m {
            let d = (v - x).as_f64();
            acc += d * d;
        }
    }
    acc / obs.observed_count().max(1) as f64
}

/// Iterative singular value thresholding on the observed cells.
///
/// Hitting `max_iterations` is not an error: the last iterate is returned with
/// `converged = false`.
pub fn svt_initialize<T: Scalar>(
    obs: &ObservedMatrix<T>,
    cfg: &SvtConfig,
) -> Result<InitEstimate<T>> {
    cfg.validate()?;
    let (n, q) = obs.shape();
    check_rank(cfg.rank, n, q)?;
    if obs.observed_count() == 0 {
        return Err(PeerError::invalid(
            "response matrix has no observed entries",
        ));
    }
    let eps = cfg.tolerance;
    let floor = eps * 1e-3;

    let mut work = column_mean_impute(obs);
    let mut a_old = work.clone();
    let mut history = Vec::new();
    let mut relative_change = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut last = None;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let (svd, tail) = split_at_rank(full_svd(&work)?, cfg.rank);
        let a_new = svd.reconstruct();

        // Y <- P_M(Y) + P_Mc(A_new)
        work.copy_from(&a_new);
        combine_into(obs, &mut work);

        let old_norm = a_old.norm().as_f64();
        let change = (&a_new - &a_old).norm().as_f64();
        relative_change = if old_norm == 0.0 {
            0.0
        } else {
            change / old_norm
        };

        let objective = observed_objective(obs, &a_new);
        if let Some(&prev) = history.last() {
            debug_assert!(
                objective <= prev * (1.0 + 1e-8) + 1e-12,
                "SVT objective increased from {prev} to {objective}"
            );
        }
        history.push(objective);
        last = Some((svd, tail));
        a_old = a_new;

        if relative_change <= eps || change < floor {
            converged = true;
            break;
        }
    }

    let (svd, tail) = last.expect("at least one iteration runs");
    if !converged {
        log::warn!(
            "SVT stopped after {iterations} iterations with relative change {relative_change:.3e}"
        );
    }
    Ok(InitEstimate {
        svd,
        trailing_singular_value: tail,
        iterations_used: iterations,
        converged,
        final_relative_change: relative_change,
        objective_history: history,
    })
}

/// Dispatches to [`full_data_init`] when nothing is missing.
pub fn initialize<T: Scalar>(obs: &ObservedMatrix<T>, cfg: &SvtConfig) -> Result<InitEstimate<T>> {
    if obs.is_fully_observed() {
        cfg.validate()?;
        full_data_init(obs.raw_values(), cfg.rank)
    } else {
        svt_initialize(obs, cfg)
    }
}
