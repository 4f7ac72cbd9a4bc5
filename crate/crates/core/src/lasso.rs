//! Univariate-response Lasso by cyclic coordinate descent.
//!
//! Solves `min_u n^-1 ||y - X u||_2^2 + lambda ||u||_1` for an arbitrary design
//! (no implicit standardization; see [`crate::peer::StandardizedDesign`] for the
//! column scaling used by the estimator). Tuning over a lambda grid uses a
//! GIC-type criterion
//! `log(n^-1 RSS) + n^-1 df (log p)(log log n)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PeerError, Result};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct LassoOptions<T: Scalar> {
    /// Stop sweeping once the largest coefficient change in a full sweep
    /// drops below this value (and the KKT check passes).
    pub coord_tolerance: f64,
    /// Largest admissible KKT residual at termination.
    pub kkt_tolerance: f64,
    pub max_sweeps: usize,
    pub warm_start: Option<DVector<T>>,
    /// Path tuning stops after the first fit whose share of `||y||^2`
    /// explained reaches this value. `1.0` evaluates the whole grid unless a
    /// fit is exact.
    pub path_max_explained: f64,
}

impl<T: Scalar> Default for LassoOptions<T> {
    fn default() -> Self {
        LassoOptions {
            coord_tolerance: 1e-7,
            kkt_tolerance: 1e-7,
            max_sweeps: 100_000,
            warm_start: None,
            path_max_explained: 0.999,
        }
    }
}

impl<T: Scalar> LassoOptions<T> {
    pub fn with_warm_start(mut self, u: DVector<T>) -> Self {
        self.warm_start = Some(u);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.coord_tolerance > 0.0 && self.kkt_tolerance > 0.0) {
            return Err(PeerError::invalid("lasso tolerances must be positive"));
        }
        if self.max_sweeps == 0 {
            return Err(PeerError::invalid("lasso needs at least one sweep"));
        }
        if !(self.path_max_explained > 0.0 && self.path_max_explained <= 1.0) {
            return Err(PeerError::invalid("path_max_explained must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit<T: Scalar> {
    pub coefficients: DVector<T>,
    pub lambda: T,
    /// Indices with a nonzero coefficient, ascending.
    pub support: Vec<usize>,
    pub residual_sum_squares: T,
    /// `n^-1 RSS + lambda ||u||_1`.
    pub objective_value: T,
    pub kkt_violation: T,
    pub sweeps: usize,
    pub converged: bool,
}

impl<T: Scalar> LassoFit<T> {
    pub fn df(&self) -> usize {
        self.support.len()
    }
}

/// Sweeps of plain coordinate descent before exact support steps are mixed in.
const EXACT_STEP_AFTER: usize = 200;

#[inline]
fn soft_threshold<T: Scalar>(z: T, t: T) -> T {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        T::zero()
    }
}

/// Reusable solver state for one `(X, y)` pair; caches column norms so a
/// lambda path pays for them once.
pub(crate) struct CoordinateDescent<'a, T: Scalar> {
    x: &'a DMatrix<T>,
    y: &'a DVector<T>,
    /// `||x_j||^2 / n`
    curvature: Vec<T>,
    inv_n: T,
}

impl<'a, T: Scalar> CoordinateDescent<'a, T> {
    pub(crate) fn new(x: &'a DMatrix<T>, y: &'a DVector<T>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(PeerError::invalid("design matrix is empty"));
        }
        if y.len() != n {
            return Err(PeerError::invalid(format!(
                "response has {} rows but design has {n}",
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite_value()) {
            return Err(PeerError::invalid("lasso inputs contain non-finite values"));
        }
        let inv_n = T::one() / T::from_usize_lossy(n);
        let mut curvature = Vec::with_capacity(p);
        for j in 0..p {
            let sq = x.column(j).norm_squared();
            if sq == T::zero() {
                return Err(PeerError::invalid(format!(
                    "design column {j} has zero norm"
                )));
            }
            curvature.push(sq * inv_n);
        }
        Ok(CoordinateDescent {
            x,
            y,
            curvature,
            inv_n,
        })
    }

    fn residual(&self, u: &DVector<T>) -> DVector<T> {
        self.y - self.x * u
    }

    /// `max_j |2 n^-1 x_j^T y|`, the smallest lambda whose solution is zero.
    pub(crate) fn lambda_max(&self) -> T {
        let two = lit::<T>(2.0);
        (0..self.x.ncols())
            .map(|j| (two * self.inv_n * self.x.column(j).dot(self.y)).abs())
            .fold(T::zero(), |m, v| m.max(v))
    }

    fn kkt(&self, u: &DVector<T>, r: &DVector<T>, lambda: T) -> T {
        let two = lit::<T>(2.0);
        let mut worst = T::zero();
        for j in 0..u.len() {
            let g = two * self.inv_n * self.x.column(j).dot(r);
            let v = if u[j] > T::zero() {
                (g - lambda).abs()
            } else if u[j] < T::zero() {
                (g + lambda).abs()
            } else {
                (g.abs() - lambda).max(T::zero())
            };
            worst = worst.max(v);
        }
        worst
    }

    #[inline]
    fn update(&self, j: usize, u: &mut DVector<T>, r: &mut DVector<T>, half_lambda: T) -> T {
        let col = self.x.column(j);
        let h = self.curvature[j];
        let z = col.dot(r) * self.inv_n + h * u[j];
        let new = soft_threshold(z, half_lambda) / h;
        let delta = new - u[j];
        if delta != T::zero() {
            r.axpy(-delta, &col, T::one());
            u[j] = new;
        }
        delta.abs()
    }

    /// One active-set step on the signed support of `u`, where the objective
    /// is a smooth quadratic. If its gradient has a component in the null
    /// space of `X_S`, the step follows that component. Otherwise it is the
    /// Newton step. Either way it stops at the first coordinate that would
    /// change sign and zeroes that coordinate. Returns the new point and
    /// whether it is the unconstrained minimizer on the support.
    fn support_step(
        &self,
        u: &DVector<T>,
        r: &DVector<T>,
        lambda: T,
    ) -> Option<(DVector<T>, bool)> {
        let (n, p) = self.x.shape();
        let cols: Vec<usize> = (0..p).filter(|&j| u[j] != T::zero()).collect();
        if cols.is_empty() {
            return None;
        }
        let xs = self.x.select_columns(&cols);
        let two_over_n = lit::<T>(2.0) * self.inv_n;
        let g = DVector::from_iterator(
            cols.len(),
            cols.iter()
                .map(|&j| -two_over_n * self.x.column(j).dot(r) + lambda * u[j].signum()),
        );
        let svd = crate::linalg::full_svd(&xs).ok()?;
        let top = svd.singular_values[0];
        let cutoff = top * T::from_usize_lossy(n.max(cols.len())) * T::default_epsilon();
        let k = svd
            .singular_values
            .iter()
            .take_while(|&&v| v > cutoff)
            .count();
        let v = svd.right.columns(0, k);
        let coeffs = v.tr_mul(&g);
        let null_part = &g - v * &coeffs;

        let (d, newton) = if null_part.norm() > lit::<T>(1e-10) * g.norm().max(T::one()) {
            (-null_part, false)
        } else {
            let scaled = DVector::from_iterator(
                k,
                coeffs
                    .iter()
                    .zip(svd.singular_values.iter())
                    .map(|(&c, &sv)| c / (two_over_n * sv * sv)),
            );
            (-(v * scaled), true)
        };

        let mut step = if newton {
            T::one()
        } else {
            T::max_value().unwrap_or_else(T::one)
        };
        let mut blocker = None;
        for (i, &j) in cols.iter().enumerate() {
            if d[i] != T::zero() && (d[i] > T::zero()) != (u[j] > T::zero()) {
                let t = -u[j] / d[i];
                if t < step {
                    step = t;
                    blocker = Some(j);
                }
            }
        }
        if blocker.is_none() && !newton {
            return None;
        }
        let mut out = u.clone();
        for (i, &j) in cols.iter().enumerate() {
            out[j] += step * d[i];
        }
        if let Some(j) = blocker {
            out[j] = T::zero();
        }
        Some((out, blocker.is_none()))
    }

    pub(crate) fn solve(&self, lambda: T, opts: &LassoOptions<T>) -> Result<LassoFit<T>> {
        opts.validate()?;
        if !lambda.is_finite_value() || lambda < T::zero() {
            return Err(PeerError::invalid(
                "lambda must be a nonnegative finite value",
            ));
        }
        let p = self.x.ncols();
        let mut u = match &opts.warm_start {
            Some(w) if w.len() == p => w.clone(),
            Some(w) => {
                return Err(PeerError::invalid(format!(
                    "warm start has length {} but design has {p} columns",
                    w.len()
                )))
            }
            None => DVector::zeros(p),
        };
        let mut r = self.residual(&u);
        let half_lambda = lambda * lit(0.5);
        let tol = lit::<T>(opts.coord_tolerance);
        let kkt_tol = lit::<T>(opts.kkt_tolerance);

        let mut sweeps = 0;
        let mut converged = false;
        let mut active: Vec<usize> = Vec::with_capacity(p);
        while sweeps < opts.max_sweeps {
            let mut max_delta = T::zero();
            for j in 0..p {
                max_delta = max_delta.max(self.update(j, &mut u, &mut r, half_lambda));
            }
            sweeps += 1;
            if max_delta < tol {
                // residual drifts under incremental updates; refresh it for the check
                r = self.residual(&u);
                if self.kkt(&u, &r, lambda) <= kkt_tol {
                    converged = true;
                    break;
                }
            }
            active.clear();
            active.extend((0..p).filter(|&j| u[j] != T::zero()));
            let mut inner = 0;
            while sweeps < opts.max_sweeps && !active.is_empty() {
                if sweeps >= EXACT_STEP_AFTER && inner >= EXACT_STEP_AFTER {
                    break;
                }
                inner += 1;
                let mut d = T::zero();
                for &j in &active {
                    d = d.max(self.update(j, &mut u, &mut r, half_lambda));
                }
                sweeps += 1;
                if d < tol {
                    break;
                }
            }

            // coordinate descent crawls near degenerate solutions; take an
            // exact step on the current support instead
            if sweeps >= EXACT_STEP_AFTER {
                r = self.residual(&u);
                if let Some((next, at_minimum)) = self.support_step(&u, &r, lambda) {
                    u = next;
                    r = self.residual(&u);
                    if at_minimum && self.kkt(&u, &r, lambda) <= kkt_tol {
                        converged = true;
                        break;
                    }
                }
            }
        }

        let r = self.residual(&u);
        let rss = r.norm_squared();
        let kkt_violation = self.kkt(&u, &r, lambda);
        let support: Vec<usize> = (0..p).filter(|&j| u[j] != T::zero()).collect();
        let l1 = u.iter().fold(T::zero(), |s, v| s + v.abs());
        if !converged {
            log::debug!("lasso hit {sweeps} sweeps at lambda {lambda} (kkt {kkt_violation})");
        }
        Ok(LassoFit {
            coefficients: u,
            lambda,
            support,
            residual_sum_squares: rss,
            objective_value: rss * self.inv_n + lambda * l1,
            kkt_violation,
            sweeps,
            converged,
        })
    }
}

/// Lasso fit at a single `lambda`.
pub fn lasso_cd<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    lambda: T,
    opts: &LassoOptions<T>,
) -> Result<LassoFit<T>> {
    CoordinateDescent::new(x, y)?.solve(lambda, opts)
}

/// `max_j |2 n^-1 x_j^T y|`.
pub fn lambda_max<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>) -> Result<T> {
    Ok(CoordinateDescent::new(x, y)?.lambda_max())
}

/// Log-spaced descending grid from `lambda_max` down to `ratio * lambda_max`.
/// A zero response gives the single-element grid `{0}`.
pub fn lambda_path<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    grid_size: usize,
    ratio: f64,
) -> Result<Vec<T>> {
    if grid_size < 2 {
        return Err(PeerError::invalid("lambda grid needs at least two points"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PeerError::invalid("lambda ratio must lie in (0, 1)"));
    }
    let top = lambda_max(x, y)?;
    if top == T::zero() {
        return Ok(vec![T::zero()]);
    }
    let top = top.as_f64();
    let step = ratio.ln() / (grid_size - 1) as f64;
    Ok((0..grid_size)
        .map(|i| {
            if i == 0 {
                lit(top)
            } else if i == grid_size - 1 {
                lit(top * ratio)
            } else {
                lit(top * (step * i as f64).exp())
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GicPoint {
    pub lambda: f64,
    pub df: usize,
    pub rss: f64,
    /// `-inf` when the residual vanishes.
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GicSelection<T: Scalar> {
    pub lambda: T,
    pub fit: LassoFit<T>,
    /// Criterion values in descending-lambda order.
    pub path: Vec<GicPoint>,
}

/// `log(n^-1 rss) + n^-1 df (log p)(log log n)`; `-inf` for a vanishing residual.
pub fn gic_value(rss: f64, df: usize, n: usize, p: usize) -> f64 {
    let n_f = n as f64;
    if rss <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (rss / n_f).ln() + df as f64 / n_f * (p as f64).ln() * n_f.ln().ln()
}

/// Fits the grid with warm starts (largest lambda first) and returns the
/// minimizer of the GIC criterion over the evaluated points. Ties go to the
/// larger lambda; among fits with a vanishing residual the sparsest wins.
///
/// The path ends early at the first fit explaining at least
/// `opts.path_max_explained` of `||y||^2`. Past that point the fits approach
/// interpolation when `p >= n`, and `log(rss)` diverges faster than the
/// degrees-of-freedom penalty grows.
pub fn gic_select<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    lambdas: &[T],
    opts: &LassoOptions<T>,
) -> Result<GicSelection<T>> {
    let (n, p) = x.shape();
    if n < 3 {
        return Err(PeerError::invalid("GIC needs at least 3 observations"));
    }
    if lambdas.is_empty() {
        return Err(PeerError::invalid("lambda grid is empty"));
    }
    let mut grid = lambdas.to_vec();
    grid.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));

    let solver = CoordinateDescent::new(x, y)?;
    // rss at machine precision relative to ||y||^2 counts as zero
    let eps = f64::EPSILON;
    let tss = y.norm_squared().as_f64();
    let zero_rss = eps * eps * tss.max(f64::MIN_POSITIVE);

    let mut local = opts.clone();
    let mut best: Option<(usize, f64, LassoFit<T>)> = None;
    let mut path = Vec::with_capacity(grid.len());
    for (idx, &lambda) in grid.iter().enumerate() {
        let fit = solver.solve(lambda, &local)?;
        let rss = fit.residual_sum_squares.as_f64();
        let criterion = if rss <= zero_rss {
            f64::NEG_INFINITY
        } else {
            gic_value(rss, fit.df(), n, p)
        };
        path.push(GicPoint {
            lambda: lambda.as_f64(),
            df: fit.df(),
            rss,
            criterion,
        });
        let better = match &best {
            None => true,
            Some((_, c, f)) => {
                if criterion == f64::NEG_INFINITY && *c == f64::NEG_INFINITY {
                    fit.df() < f.df()
                } else {
                    criterion < *c
                }
            }
        };
        let saturated = rss <= (1.0 - opts.path_max_explained) * tss;
        local.warm_start = Some(fit.coefficients.clone());
        if better {
            best = Some((idx, criterion, fit));
        }
        if saturated {
            break;
        }
    }
    let (idx, _, fit) = best.expect("grid is nonempty");
    Ok(GicSelection {
        lambda: grid[idx],
        fit,
        path,
    })
}
