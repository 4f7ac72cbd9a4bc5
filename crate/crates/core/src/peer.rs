//! The two-step estimator.
//!
//! Step one factors the (completed) response as `Z D V^T`. Step two runs one
//! independent Lasso regression per layer `k`, regressing `sqrt(n) z_k` on the
//! design, and sets `d_k = n^-1/2 d~_k`, `v_k = v~_k`. The rank is chosen by a
//! singular-value gap rule and the coefficient matrix is assembled from the
//! retained layers.
//!
//! Layers never share mutable state, so they can be fitted on any number of
//! worker threads; results are joined by layer index and are bit-identical to
//! a sequential run.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PeerError, Result};
use crate::lasso::{gic_select, lambda_path, LassoOptions};
use crate::masked::ObservedMatrix;
use crate::scalar::Scalar;
use crate::svt::{initialize, InitEstimate, SvtConfig};

/// Lasso settings shared by every layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerLassoConfig {
    pub grid_size: usize,
    pub grid_ratio: f64,
    pub coord_tolerance: f64,
    pub kkt_tolerance: f64,
    pub max_sweeps: usize,
    /// See [`LassoOptions::path_max_explained`].
    pub path_max_explained: f64,
}

impl Default for LayerLassoConfig {
    fn default() -> Self {
        LayerLassoConfig {
            grid_size: 100,
            grid_ratio: 1e-3,
            coord_tolerance: 1e-7,
            kkt_tolerance: 1e-7,
            max_sweeps: 100_000,
            path_max_explained: 0.999,
        }
    }
}

impl LayerLassoConfig {
    fn options<T: Scalar>(&self) -> LassoOptions<T> {
        LassoOptions {
            coord_tolerance: self.coord_tolerance,
            kkt_tolerance: self.kkt_tolerance,
            max_sweeps: self.max_sweeps,
            warm_start: None,
            path_max_explained: self.path_max_explained,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerConfig {
    /// Initial rank `r`, an upper bound on the estimated rank.
    pub rank: usize,
    pub svt_tolerance: f64,
    pub svt_max_iterations: usize,
    pub lasso: LayerLassoConfig,
    /// Center the design columns and the observed response columns, and carry
    /// an intercept.
    pub center: bool,
    /// Fit layers on the current rayon pool instead of sequentially.
    pub parallel_layers: bool,
}

impl PeerConfig {
    pub fn new(rank: usize) -> Self {
        PeerConfig {
            rank,
            svt_tolerance: 1e-4,
            svt_max_iterations: 500,
            lasso: LayerLassoConfig::default(),
            center: true,
            parallel_layers: true,
        }
    }

    pub fn svt(&self) -> SvtConfig {
        SvtConfig {
            rank: self.rank,
            tolerance: self.svt_tolerance,
            max_iterations: self.svt_max_iterations,
        }
    }
}

/// Design matrix with (optionally) centered columns rescaled to
/// `||x_j||_2 = sqrt(n)`.
#[derive(Debug, Clone)]
pub struct StandardizedDesign<T: Scalar> {
    pub matrix: DMatrix<T>,
    pub means: DVector<T>,
    /// `||x_j - mean_j||_2 / sqrt(n)`; standardized column = centered / scale.
    pub scales: DVector<T>,
}

impl<T: Scalar> StandardizedDesign<T> {
    pub fn new(x: &DMatrix<T>, center: bool) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(PeerError::invalid("design matrix is empty"));
        }
        crate::linalg::ensure_finite(x, "design matrix")?;
        let means = if center {
            DVector::from_fn(p, |j, _| x.column(j).mean())
        } else {
            DVector::zeros(p)
        };
        let sqrt_n = T::from_usize_lossy(n).sqrt();
        let mut matrix = x.clone();
        let mut scales = DVector::zeros(p);
        for j in 0..p {
            let mut col = matrix.column_mut(j);
            col.add_scalar_mut(-means[j]);
            let norm = col.norm();
            if norm == T::zero() {
                return Err(PeerError::invalid(format!(
                    "design column {j} is constant; drop it before fitting"
                )));
            }
            let scale = norm / sqrt_n;
            col.unscale_mut(scale);
            scales[j] = scale;
        }
        Ok(StandardizedDesign {
            matrix,
            means,
            scales,
        })
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// One unit-rank layer `d u v^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEstimate<T: Scalar> {
    /// 1-based layer index.
    pub index: usize,
    pub d_hat: T,
    /// Coefficients on the original design scale.
    pub u_hat: DVector<T>,
    pub v_hat: DVector<T>,
    pub lambda: T,
    pub support: Vec<usize>,
    pub lasso_converged: bool,
}

impl<T: Scalar> LayerEstimate<T> {
    pub fn component(&self) -> DMatrix<T> {
        (&self.u_hat * self.v_hat.transpose()) * self.d_hat
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTimings {
    pub init_seconds: f64,
    pub layers_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct PeerModel<T: Scalar> {
    pub config: PeerConfig,
    pub layers: Vec<LayerEstimate<T>>,
    pub estimated_rank: usize,
    /// `C = sum_{k <= r_hat} d_k u_k v_k^T`, p x q.
    pub coefficients: DMatrix<T>,
    /// Per-response offset added by [`predict`]; zero when not centering.
    pub intercept: DVector<T>,
    pub init: InitEstimate<T>,
    pub timings: FitTimings,
}

impl<T: Scalar> PeerModel<T> {
    pub fn n_predictors(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn n_responses(&self) -> usize {
        self.coefficients.ncols()
    }

    /// Supports of the retained layers (those with `k <= r_hat`).
    pub fn retained_supports(&self) -> Vec<Vec<usize>> {
        self.layers[..self.estimated_rank]
            .iter()
            .map(|l| l.support.clone())
            .collect()
    }
}

/// `tau_n = log(log n) / log n`.
pub fn rank_threshold(n: usize) -> f64 {
    let ln = (n as f64).ln();
    ln.ln() / ln
}

/// Largest `k` with `(nq)^-1/2 (d_k - d_{k+1}) > threshold`, where the value
/// after the last entry of `d_tilde` is `trailing`. Returns 0 when no gap
/// clears the threshold.
pub fn estimate_rank_with_threshold<T: Scalar>(
    d_tilde: &[T],
    trailing: T,
    n: usize,
    q: usize,
    threshold: f64,
) -> usize {
    let scale = ((n * q) as f64).sqrt();
    (0..d_tilde.len())
        .rev()
        .find(|&k| {
            let next = d_tilde.get(k + 1).copied().unwrap_or(trailing);
            (d_tilde[k] - next).as_f64() / scale > threshold
        })
        .map_or(0, |k| k + 1)
}

/// Gap rule with `tau_n = log(log n) / log n`.
pub fn estimate_rank<T: Scalar>(d_tilde: &[T], trailing: T, n: usize, q: usize) -> Result<usize> {
    if n < 3 {
        return Err(PeerError::invalid("rank rule needs n >= 3"));
    }
    if d_tilde.windows(2).any(|w| w[0] < w[1]) {
        return Err(PeerError::invalid(
            "singular values must be in descending order",
        ));
    }
    Ok(estimate_rank_with_threshold(
        d_tilde,
        trailing,
        n,
        q,
        rank_threshold(n),
    ))
}

/// Fits layer `k` (0-based) from a shared initialization.
pub fn fit_layer<T: Scalar>(
    k: usize,
    design: &StandardizedDesign<T>,
    init: &InitEstimate<T>,
    cfg: &LayerLassoConfig,
) -> Result<LayerEstimate<T>> {
    let wrap = |e: PeerError| PeerError::Layer {
        layer: k + 1,
        source: Box::new(e),
    };
    if k >= init.rank() {
        return Err(wrap(PeerError::invalid("layer index exceeds initial rank")));
    }
    let n = design.nrows();
    let sqrt_n = T::from_usize_lossy(n).sqrt();
    let response: DVector<T> = init.svd.left.column(k) * sqrt_n;

    let opts = cfg.options::<T>();
    let grid =
        lambda_path(&design.matrix, &response, cfg.grid_size, cfg.grid_ratio).map_err(wrap)?;
    let selection = gic_select(&design.matrix, &response, &grid, &opts).map_err(wrap)?;
    if !selection.fit.converged {
        log::warn!(
            "layer {}: lasso did not converge at the selected lambda",
            k + 1
        );
    }

    let mut u_hat = selection.fit.coefficients.clone();
    u_hat.component_div_assign(&design.scales);
    Ok(LayerEstimate {
        index: k + 1,
        d_hat: init.svd.singular_values[k] / sqrt_n,
        u_hat,
        v_hat: init.svd.right.column(k).into_owned(),
        lambda: selection.lambda,
        support: selection.fit.support.clone(),
        lasso_converged: selection.fit.converged,
    })
}

/// Sum of the first `rank` layer components.
pub fn assemble_coefficients<T: Scalar>(
    layers: &[LayerEstimate<T>],
    rank: usize,
    p: usize,
    q: usize,
) -> DMatrix<T> {
    let mut c = DMatrix::zeros(p, q);
    for layer in &layers[..rank] {
        c.ger(layer.d_hat, &layer.u_hat, &layer.v_hat, T::one());
    }
    c
}

pub fn fit_peer<T: Scalar>(
    obs: &ObservedMatrix<T>,
    x: &DMatrix<T>,
    cfg: &PeerConfig,
) -> Result<PeerModel<T>> {
    let start = Instant::now();
    let (n, q) = obs.shape();
    let p = x.ncols();
    if x.nrows() != n {
        return Err(PeerError::invalid(format!(
            "design has {} rows but response has {n}",
            x.nrows()
        )));
    }
    if n < 3 {
        return Err(PeerError::invalid("need at least 3 observations"));
    }
    if cfg.rank == 0 || cfg.rank > p.min(q).min(n) {
        return Err(PeerError::invalid(format!(
            "initial rank {} must lie in 1..={}",
            cfg.rank,
            p.min(q).min(n)
        )));
    }

    let design = StandardizedDesign::new(x, cfg.center)?;
    let (response, y_means) = if cfg.center {
        let means = obs.observed_column_means();
        (obs.shifted(&means)?, means)
    } else {
        (obs.clone(), DVector::zeros(q))
    };

    let init = initialize(&response, &cfg.svt())?;
    let init_seconds = start.elapsed().as_secs_f64();

    let layer_start = Instant::now();
    let layers: Vec<LayerEstimate<T>> = if cfg.parallel_layers {
        (0..cfg.rank)
            .into_par_iter()
            .map(|k| fit_layer(k, &design, &init, &cfg.lasso))
            .collect::<Result<_>>()?
    } else {
        (0..cfg.rank)
            .map(|k| fit_layer(k, &design, &init, &cfg.lasso))
            .collect::<Result<_>>()?
    };
    let layers_seconds = layer_start.elapsed().as_secs_f64();

    let estimated_rank = estimate_rank(init.singular_values(), init.trailing_singular_value, n, q)?;
    if estimated_rank == 0 {
        log::warn!(
            "no singular value gap exceeds the rank threshold; returning a zero coefficient matrix"
        );
    }
    let coefficients = assemble_coefficients(&layers, estimated_rank, p, q);
    let intercept = &y_means - coefficients.tr_mul(&design.means);

    Ok(PeerModel {
        config: *cfg,
        layers,
        estimated_rank,
        coefficients,
        intercept,
        init,
        timings: FitTimings {
            init_seconds,
            layers_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// `X_new C + 1 intercept^T`.
pub fn predict<T: Scalar>(model: &PeerModel<T>, x_new: &DMatrix<T>) -> Result<DMatrix<T>> {
    if x_new.ncols() != model.n_predictors() {
        return Err(PeerError::invalid(format!(
            "new design has {} columns, model expects {}",
            x_new.ncols(),
            model.n_predictors()
        )));
    }
    let mut out = x_new * &model.coefficients;
    for mut row in out.row_iter_mut() {
        row += model.intercept.transpose();
    }
    Ok(out)
}

/// `sqrt(n) z_k`, the response regressed on the design for layer `k` (0-based).
pub fn layer_response<T: Scalar>(init: &InitEstimate<T>, k: usize) -> DVector<T> {
    init.svd.left.column(k) * T::from_usize_lossy(init.svd.left.nrows()).sqrt()
}
