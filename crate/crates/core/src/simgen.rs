//! Synthetic data for the two simulation studies.
//!
//! Study 1 draws block-sparse left factors and dense, QR-orthonormalized right
//! factors; study 2 makes the right factors block-sparse as well. The design is AR(1)-correlated predictors rotated so
//! that the latent factors `X u_k` are i.i.d. standard normal, and the noise
//! level is calibrated against the weakest layer's signal.
//!
//! Every draw comes from a ChaCha substream keyed by
//! `(seed, replicate_id, purpose)`, so replicates can be generated in any
//! order or in parallel and still replay bit-identically.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{PeerError, Result};
use crate::linalg::{ar1_covariance, cholesky_psd, complete_orthonormal_basis, qr_orthonormalize};
use crate::masked::ObservedMatrix;
use crate::scalar::{lit, Scalar};

fn default_s() -> usize {
    4
}
fn default_s_v() -> usize {
    5
}
fn default_q_u() -> Vec<f64> {
    vec![1.0, -1.0]
}
fn default_q_v() -> Vec<[f64; 2]> {
    vec![[-1.0, -0.3], [0.3, 1.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    /// 1 (dense right factors) or 2 (sparse right factors).
    pub study: u8,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub r_star: usize,
    /// Nonzeros per left factor in study 1.
    #[serde(default = "default_s")]
    pub s: usize,
    /// Nonzeros per left factor in study 2.
    #[serde(default = "default_s")]
    pub s_u: usize,
    /// Nonzeros per right factor in study 2.
    #[serde(default = "default_s_v")]
    pub s_v: usize,
    /// Finite value set for left-factor entries.
    #[serde(default = "default_q_u")]
    pub q_u: Vec<f64>,
    /// Union of closed intervals for right-factor entries.
    #[serde(default = "default_q_v")]
    pub q_v: Vec<[f64; 2]>,
    pub snr: f64,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replicate_id: u64,
    /// Scale the study-2 right factors to unit length. With `false` the raw
    /// draws are used as `v*_k`, so `V*` is orthogonal but not orthonormal.
    #[serde(default = "default_true")]
    pub unit_right_factors: bool,
}

fn default_true() -> bool {
    true
}

impl SimScenario {
    /// Study 1 with `r* = 3`, `s = 4`, `q = 100`.
    pub fn study1(n: usize, p: usize, snr: f64, missing_rate: f64, seed: u64) -> Self {
        SimScenario {
            study: 1,
            n,
            p,
            q: 100,
            r_star: 3,
            s: 4,
            s_u: 4,
            s_v: 5,
            q_u: default_q_u(),
            q_v: default_q_v(),
            snr,
            missing_rate,
            seed,
            replicate_id: 0,
            unit_right_factors: true,
        }
    }

    /// Study 2 with `s_u = 4`, `s_v = 5`, other settings as study 1.
    pub fn study2(n: usize, p: usize, snr: f64, missing_rate: f64, seed: u64) -> Self {
        SimScenario {
            study: 2,
            ..Self::study1(n, p, snr, missing_rate, seed)
        }
    }

    pub fn with_replicate(mut self, replicate_id: u64) -> Self {
        self.replicate_id = replicate_id;
        self
    }

    /// Nonzeros per left factor for this study.
    pub fn left_sparsity(&self) -> usize {
        if self.study == 2 {
            self.s_u
        } else {
            self.s
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PeerError::InvalidInput(m));
        if self.study != 1 && self.study != 2 {
            return bad(format!("study must be 1 or 2, got {}", self.study));
        }
        if self.n == 0 || self.p == 0 || self.q == 0 || self.r_star == 0 {
            return bad("n, p, q and r_star must be positive".into());
        }
        let s = self.left_sparsity();
        if s == 0 {
            return bad("left sparsity must be positive".into());
        }
        if self.r_star * s > self.p {
            return bad(format!(
                "r_star * s = {} exceeds p = {}",
                self.r_star * s,
                self.p
            ));
        }
        if self.study == 2 {
            if self.s_v == 0 || self.r_star * self.s_v > self.q {
                return bad(format!(
                    "r_star * s_v = {} must lie in 1..={}",
                    self.r_star * self.s_v,
                    self.q
                ));
            }
        } else if self.r_star > self.q {
            return bad(format!("r_star = {} exceeds q = {}", self.r_star, self.q));
        }
        if self.q_u.is_empty() || self.q_u.iter().any(|v| !v.is_finite() || *v == 0.0) {
            return bad("q_u must be a nonempty set of finite nonzero values".into());
        }
        if self.q_v.is_empty()
            || self
                .q_v
                .iter()
                .any(|[a, b]| !(a.is_finite() && b.is_finite() && a <= b))
        {
            return bad("q_v must be a nonempty union of intervals [lo, hi]".into());
        }
        if self.q_v.iter().all(|[a, b]| a == b && *a == 0.0) {
            return bad("q_v must contain a nonzero value".into());
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return bad("snr must be positive".into());
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad("missing_rate must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Independent random streams used by [`generate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    Truth = 0,
    Design = 1,
    Noise = 2,
    Mask = 3,
}

/// ChaCha stream for `(seed, replicate_id, purpose)`.
pub fn substream(seed: u64, replicate_id: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate_id.wrapping_mul(4).wrapping_add(purpose as u64));
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T: Scalar> {
    pub u_star: DMatrix<T>,
    pub v_star: DMatrix<T>,
    pub d_star: DVector<T>,
    pub c_star: DMatrix<T>,
    /// 0-based support of each left factor.
    pub supports: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct SimDataset<T: Scalar> {
    pub x: DMatrix<T>,
    pub y_full: DMatrix<T>,
    pub obs: ObservedMatrix<T>,
    pub truth: GroundTruth<T>,
    pub sigma: T,
}

fn draw_from_set<R: Rng>(rng: &mut R, set: &[f64]) -> f64 {
    set[rng.random_range(0..set.len())]
}

fn draw_from_intervals<R: Rng>(rng: &mut R, intervals: &[[f64; 2]]) -> f64 {
    let total: f64 = intervals.iter().map(|[a, b]| b - a).sum();
    if total == 0.0 {
        return intervals[rng.random_range(0..intervals.len())][0];
    }
    let mut t = rng.random::<f64>() * total;
    for &[a, b] in intervals {
        let len = b - a;
        if t < len {
            return a + t;
        }
        t -= len;
    }
    intervals[intervals.len() - 1][1]
}

fn standard_normal<T: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<T> {
    // row-major draw order
    let draws: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DMatrix::from_fn(rows, cols, |i, j| lit(draws[i * cols + j]))
}

/// `d*_k = 5 + 5 (r* - k + 1)` for `k = 1..r*`.
pub fn true_singular_values<T: Scalar>(r_star: usize) -> DVector<T> {
    DVector::from_fn(r_star, |k, _| lit(5.0 + 5.0 * (r_star - k) as f64))
}

pub fn gen_truth<T: Scalar, R: Rng>(scn: &SimScenario, rng: &mut R) -> Result<GroundTruth<T>> {
    scn.validate()?;
    let (p, q, r) = (scn.p, scn.q, scn.r_star);
    let s = scn.left_sparsity();

    let mut u_star = DMatrix::<T>::zeros(p, r);
    let mut supports = Vec::with_capacity(r);
    for k in 0..r {
        let block: Vec<usize> = (k * s..(k + 1) * s).collect();
        let values: Vec<f64> = block.iter().map(|_| draw_from_set(rng, &scn.q_u)).collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (&i, v) in block.iter().zip(&values) {
            u_star[(i, k)] = lit(v / norm);
        }
        supports.push(block);
    }

    let v_star = if scn.study == 1 {
        let mut v_bar = DMatrix::<T>::zeros(q, r);
        for k in 0..r {
            for i in 0..q {
                v_bar[(i, k)] = lit(draw_from_intervals(rng, &scn.q_v));
            }
        }
        qr_orthonormalize(&v_bar)?
    } else {
        let mut v = DMatrix::<T>::zeros(q, r);
        for k in 0..r {
            for i in k * scn.s_v..(k + 1) * scn.s_v {
                v[(i, k)] = lit(draw_from_intervals(rng, &scn.q_v));
            }
            if scn.unit_right_factors {
                let norm = v.column(k).norm();
                v.column_mut(k).unscale_mut(norm);
            }
        }
        v
    };

    let d_star = true_singular_values::<T>(r);
    let c_star = &u_star * DMatrix::from_diagonal(&d_star) * v_star.transpose();
    Ok(GroundTruth {
        u_star,
        v_star,
        d_star,
        c_star,
        supports,
    })
}

/// Design whose rotated block `X U*` has i.i.d. `N(0, 1)` entries and whose
/// complement block is drawn from the conditional law of an AR(1) (rho = 0.5)
/// Gaussian vector given that block.
pub fn gen_design<T: Scalar, R: Rng>(
    truth: &GroundTruth<T>,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<T>> {
    let (p, r) = truth.u_star.shape();
    let rotation = complete_orthonormal_basis(&truth.u_star)?;
    let x1 = standard_normal::<T, R>(rng, n, r);
    if p == r {
        return Ok(x1 * rotation.transpose());
    }

    let gamma = ar1_covariance::<T>(p, 0.5);
    let sigma = rotation.transpose() * &gamma * &rotation;
    let s11 = sigma.view((0, 0), (r, r)).into_owned();
    let s12 = sigma.view((0, r), (r, p - r)).into_owned();
    let s22 = sigma.view((r, r), (p - r, p - r)).into_owned();

    let chol = s11.cholesky().ok_or_else(|| PeerError::Numeric {
        message: "latent block covariance is singular".into(),
        iterations: 0,
    })?;
    // B = S11^-1 S12, conditional mean of x2 is B^T x1
    let b = chol.solve(&s12);
    let mut cond = s22 - s12.transpose() * &b;
    cond = (&cond + cond.transpose()) * lit::<T>(0.5);
    let l = cholesky_psd(&cond)?;

    let z = standard_normal::<T, R>(rng, n, p - r);
    let x2 = &x1 * &b + z * l.transpose();

    let mut stacked = DMatrix::<T>::zeros(n, p);
    stacked.columns_mut(0, r).copy_from(&x1);
    stacked.columns_mut(r, p - r).copy_from(&x2);
    Ok(stacked * rotation.transpose())
}

/// `Y = X C* + sigma E0`, with `sigma` chosen so that
/// `||d*_r X u*_r v*_r^T||_F / ||sigma E0||_F = snr`.
pub fn gen_response<T: Scalar, R: Rng>(
    x: &DMatrix<T>,
    truth: &GroundTruth<T>,
    snr: f64,
    rng: &mut R,
) -> Result<(DMatrix<T>, T)> {
    if snr.is_nan() || snr <= 0.0 {
        return Err(PeerError::invalid("snr must be positive"));
    }
    let r = truth.d_star.len();
    let q = truth.v_star.nrows();
    let e0 = standard_normal::<T, R>(rng, x.nrows(), q);
    let last = r - 1;
    let signal = truth.d_star[last].abs()
        * (x * truth.u_star.column(last)).norm()
        * truth.v_star.column(last).norm();
    if signal == T::zero() {
        return Err(PeerError::invalid("weakest layer carries no signal"));
    }
    let sigma = signal / (lit::<T>(snr) * e0.norm());
    let y = x * &truth.c_star + e0 * sigma;
    Ok((y, sigma))
}

/// Hides exactly `round(rate n q)` cells chosen uniformly without replacement.
pub fn apply_missingness<T: Scalar, R: Rng>(
    y_full: &DMatrix<T>,
    rate: f64,
    rng: &mut R,
) -> Result<ObservedMatrix<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(PeerError::invalid("missing rate must lie in [0, 1)"));
    }
    let (n, q) = y_full.shape();
    let count = (rate * (n * q) as f64).round() as usize;
    let mut mask = DMatrix::from_element(n, q, true);
    for idx in rand::seq::index::sample(rng, n * q, count) {
        mask[(idx / q, idx % q)] = false;
    }
    ObservedMatrix::new(y_full.clone(), mask)
}

/// One full draw for `scn`, using the substreams of `(scn.seed, scn.replicate_id)`.
pub fn generate<T: Scalar>(scn: &SimScenario) -> Result<SimDataset<T>> {
    scn.validate()?;
    let stream = |p| substream(scn.seed, scn.replicate_id, p);
    let truth = gen_truth::<T, _>(scn, &mut stream(StreamPurpose::Truth))?;
    let x = gen_design(&truth, scn.n, &mut stream(StreamPurpose::Design))?;
    let (y_full, sigma) = gen_response(&x, &truth, scn.snr, &mut stream(StreamPurpose::Noise))?;
    let obs = apply_missingness(&y_full, scn.missing_rate, &mut stream(StreamPurpose::Mask))?;
    Ok(SimDataset {
        x,
        y_full,
        obs,
        truth,
        sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_values_follow_schedule() {
        let d = true_singular_values::<f64>(3);
        assert_eq!(d.as_slice(), &[20.0, 15.0, 10.0]);
    }

    #[test]
    fn study1_left_blocks() {
        let scn = SimScenario::study1(50, 40, 0.5, 0.0, 7);
        let truth = gen_truth::<f64, _>(&scn, &mut substream(7, 0, StreamPurpose::Truth)).unwrap();
        assert_eq!(truth.supports[1], vec![4, 5, 6, 7]);
        for i in 0..40 {
            let v = truth.u_star[(i, 1)];
            if (4..8).contains(&i) {
                assert!((v.abs() - 0.5).abs() < 1e-15);
            } else {
                assert_eq!(v, 0.0);
            }
        }
        let vtv = truth.v_star.transpose() * &truth.v_star;
        assert!((vtv - DMatrix::identity(3, 3)).amax() < 1e-10);
        let utu = truth.u_star.transpose() * &truth.u_star;
        assert!((utu - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn study2_right_blocks() {
        let raw = SimScenario {
            unit_right_factors: false,
            ..SimScenario::study2(50, 40, 1.0, 0.0, 3)
        };
        let truth = gen_truth::<f64, _>(&raw, &mut substream(3, 0, StreamPurpose::Truth)).unwrap();
        for k in 0..3 {
            for i in 0..100 {
                let v = truth.v_star[(i, k)];
                if (k * 5..(k + 1) * 5).contains(&i) {
                    assert!((0.3..=1.0).contains(&v.abs()));
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }

        let unit = gen_truth::<f64, _>(
            &SimScenario {
                unit_right_factors: true,
                ..raw
            },
            &mut substream(3, 0, StreamPurpose::Truth),
        )
        .unwrap();
        let vtv = unit.v_star.transpose() * &unit.v_star;
        assert!((vtv - DMatrix::identity(3, 3)).amax() < 1e-12);
        for k in 0..3 {
            let scale = truth.v_star.column(k).norm();
            assert!((unit.v_star.column(k) * scale - truth.v_star.column(k)).amax() < 1e-12);
        }
    }

    #[test]
    fn interval_draws_stay_in_union() {
        let mut rng = substream(1, 0, StreamPurpose::Truth);
        for _ in 0..2000 {
            let v = draw_from_intervals(&mut rng, &default_q_v());
            assert!((0.3..=1.0).contains(&v.abs()), "{v}");
        }
    }

    #[test]
    fn scenario_validation() {
        let mut scn = SimScenario::study1(50, 10, 0.5, 0.0, 1);
        assert!(scn.validate().is_err()); // 3 * 4 > 10
        scn.p = 12;
        assert!(scn.validate().is_ok());
        scn.missing_rate = 1.0;
        assert!(scn.validate().is_err());
        scn.missing_rate = 0.1;
        scn.study = 3;
        assert!(scn.validate().is_err());
    }

    #[test]
    fn design_without_complement() {
        let mut scn = SimScenario::study1(20, 3, 0.5, 0.0, 1);
        scn.s = 1;
        let truth = gen_truth::<f64, _>(&scn, &mut substream(1, 0, StreamPurpose::Truth)).unwrap();
        let x = gen_design(&truth, 20, &mut substream(1, 0, StreamPurpose::Design)).unwrap();
        assert_eq!(x.shape(), (20, 3));
        // X U* is the raw standard-normal block
        let x1 = standard_normal::<f64, _>(&mut substream(1, 0, StreamPurpose::Design), 20, 3);
        assert!((&x * &truth.u_star - x1).amax() < 1e-12);
    }

    #[test]
    fn snr_calibration_is_exact() {
        let scn = SimScenario::study1(40, 30, 0.5, 0.0, 11);
        let data = generate::<f64>(&scn).unwrap();
        let t = &data.truth;
        let last = (&data.x * t.u_star.column(2)) * t.v_star.column(2).transpose() * t.d_star[2];
        let noise = &data.y_full - &data.x * &t.c_star;
        assert!((last.norm() / noise.norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn doubling_snr_halves_sigma() {
        let scn = SimScenario::study1(40, 30, 0.5, 0.0, 11);
        let a = generate::<f64>(&scn).unwrap();
        let b = generate::<f64>(&SimScenario { snr: 1.0, ..scn }).unwrap();
        assert!((a.sigma / b.sigma - 2.0).abs() < 1e-12);
    }

    #[test]
    fn missingness_counts_and_replays() {
        let y = DMatrix::<f64>::zeros(100, 100);
        let obs = apply_missingness(&y, 0.1, &mut substream(5, 2, StreamPurpose::Mask)).unwrap();
        assert_eq!(obs.observed_count(), 9000);
        let again = apply_missingness(&y, 0.1, &mut substream(5, 2, StreamPurpose::Mask)).unwrap();
        assert_eq!(obs.mask(), again.mask());
        let full = apply_missingness(&y, 0.0, &mut substream(5, 2, StreamPurpose::Mask)).unwrap();
        assert!(full.is_fully_observed());
    }

    #[test]
    fn generation_is_replayable() {
        let scn = SimScenario::study1(30, 20, 0.5, 0.1, 99).with_replicate(4);
        let a = generate::<f64>(&scn).unwrap();
        let b = generate::<f64>(&scn).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y_full, b.y_full);
        assert_eq!(a.obs, b.obs);
        let c = generate::<f64>(&scn.clone().with_replicate(5)).unwrap();
        assert_ne!(a.x, c.x);
    }
}
