//! Estimation, prediction and selection accuracy of a fitted model, and
//! replicate aggregation.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PeerError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitScore {
    /// `||C - C*||_F^2 / (p q)`
    pub er_c: f64,
    /// `||X (C - C*)||_F^2 / (n q)`
    pub er_xc: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub runtime_seconds: f64,
}

fn same_shape<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(PeerError::invalid(format!(
            "coefficient shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn estimation_error<T: Scalar>(c_hat: &DMatrix<T>, c_star: &DMatrix<T>) -> Result<f64> {
    same_shape(c_hat, c_star)?;
    let (p, q) = c_star.shape();
    Ok((c_hat - c_star).norm_squared().as_f64() / (p * q) as f64)
}

pub fn prediction_error<T: Scalar>(
    x: &DMatrix<T>,
    c_hat: &DMatrix<T>,
    c_star: &DMatrix<T>,
) -> Result<f64> {
    same_shape(c_hat, c_star)?;
    if x.ncols() != c_star.nrows() {
        return Err(PeerError::invalid(format!(
            "design has {} columns, coefficients have {} rows",
            x.ncols(),
            c_star.nrows()
        )));
    }
    let n = x.nrows();
    let q = c_star.ncols();
    Ok((x * (c_hat - c_star)).norm_squared().as_f64() / (n * q) as f64)
}

/// Pooled false positive and false negative rates over all `r* p` positions.
///
/// `estimated` may be shorter than `truth` (missing layers count as empty);
/// layers beyond `truth.len()` are ignored. A zero denominator yields 0.
pub fn selection_rates(
    estimated: &[Vec<usize>],
    truth: &[Vec<usize>],
    p: usize,
) -> Result<(f64, f64)> {
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    let empty = Vec::new();
    for (k, true_set) in truth.iter().enumerate() {
        let est = estimated.get(k).unwrap_or(&empty);
        if let Some(&j) = est.iter().chain(true_set.iter()).find(|&&j| j >= p) {
            return Err(PeerError::invalid(format!(
                "support index {j} out of range for p = {p}"
            )));
        }
        let est: HashSet<usize> = est.iter().copied().collect();
        let tru: HashSet<usize> = true_set.iter().copied().collect();
        let hits = est.intersection(&tru).count();
        tp += hits;
        fp += est.len() - hits;
        fneg += tru.len() - hits;
        tn += p - est.union(&tru).count();
    }
    let rate = |a: usize, b: usize| {
        if a + b == 0 {
            0.0
        } else {
            a as f64 / (a + b) as f64
        }
    };
    Ok((rate(fp, tn), rate(fneg, tp)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean: FitScore,
    /// Sample standard deviation (n - 1 denominator); 0 for one score.
    pub sd: FitScore,
    pub count: usize,
}

fn fields(s: &FitScore) -> [f64; 5] {
    [s.er_c, s.er_xc, s.fpr, s.fnr, s.runtime_seconds]
}

fn from_fields(f: [f64; 5]) -> FitScore {
    FitScore {
        er_c: f[0],
        er_xc: f[1],
        fpr: f[2],
        fnr: f[3],
        runtime_seconds: f[4],
    }
}

/// Per-field sample mean and standard deviation. Values are summed in sorted
/// order, so the result does not depend on the order of `scores`.
pub fn summarize(scores: &[FitScore]) -> Result<ScoreSummary> {
    if scores.is_empty() {
        return Err(PeerError::invalid("cannot summarize an empty score list"));
    }
    let n = scores.len() as f64;
    let mut mean = [0.0; 5];
    let mut sd = [0.0; 5];
    for f in 0..5 {
        let mut column: Vec<f64> = scores.iter().map(|s| fields(s)[f]).collect();
        column.sort_by(f64::total_cmp);
        let m = column.iter().sum::<f64>() / n;
        mean[f] = m;
        if scores.len() > 1 {
            let mut dev: Vec<f64> = column.iter().map(|v| (v - m) * (v - m)).collect();
            dev.sort_by(f64::total_cmp);
            sd[f] = (dev.iter().sum::<f64>() / (n - 1.0)).sqrt();
        }
    }
    Ok(ScoreSummary {
        mean: from_fields(mean),
        sd: from_fields(sd),
        count: scores.len(),
    })
}
