//! Reference implementations used as oracles. They share no code with the
//! library beyond the matrix type.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

/// One-sided Jacobi SVD. Returns `(sigma, U, V)` with `sigma` descending and
/// `min(m, n)` columns in `U` and `V`.
pub fn jacobi_svd(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    if a.nrows() < a.ncols() {
        let (s, u, v) = jacobi_svd(&a.transpose());
        return (s, v, u);
    }
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha: f64 = w.column(i).norm_squared();
                let beta: f64 = w.column(j).norm_squared();
                let gamma: f64 = w.column(i).dot(&w.column(j));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let (wi, wj) = (w[(k, i)], w[(k, j)]);
                    w[(k, i)] = c * wi - s * wj;
                    w[(k, j)] = s * wi + c * wj;
                }
                for k in 0..n {
                    let (vi, vj) = (v[(k, i)], v[(k, j)]);
                    v[(k, i)] = c * vi - s * vj;
                    v[(k, j)] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap());
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = DMatrix::from_fn(m, n, |r, c| {
        let j = order[c];
        if norms[j] > 0.0 {
            w[(r, j)] / norms[j]
        } else {
            0.0
        }
    });
    let v_sorted = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (sigma, u, v_sorted)
}

/// Best rank-`k` approximation from the Jacobi oracle.
pub fn oracle_truncation(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (s, u, v) = jacobi_svd(a);
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, &sigma) in s.iter().enumerate().take(k) {
        out += u.column(i) * v.column(i).transpose() * sigma;
    }
    out
}

/// Gaussian elimination with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap())
            .unwrap();
        m.swap_rows(col, pivot);
        rhs.swap_rows(col, pivot);
        for row in col + 1..n {
            let f = m[(row, col)] / m[(col, col)];
            for k in col..n {
                m[(row, k)] -= f * m[(col, k)];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = DVector::zeros(n);
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[(row, k)] * x[k];
        }
        x[row] = acc / m[(row, row)];
    }
    x
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Largest violation of the subgradient conditions of
/// `n^-1 ||y - X u||^2 + lambda ||u||_1`.
pub fn kkt_residual(x: &DMatrix<f64>, y: &DVector<f64>, u: &DVector<f64>, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let grad = x.transpose() * (y - x * u) * (2.0 / n);
    (0..u.len())
        .map(|j| {
            if u[j] != 0.0 {
                (grad[j] - lambda * u[j].signum()).abs()
            } else {
                (grad[j].abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn gic(rss: f64, df: usize, n: usize, p: usize) -> f64 {
    let n = n as f64;
    (rss / n).ln() + df as f64 * (p as f64).ln() * n.ln().ln() / n
}

/// Noiseless rank-one instance: n = 50, p = 10, q = 8, `u*` supported on three
/// predictors, `d* = 8`, `Y = X C*` fully observed.
pub struct RankOne {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub c_star: DMatrix<f64>,
    pub support: Vec<usize>,
}

pub fn rank_one_instance(seed: u64) -> RankOne {
    let mut r = rng(seed);
    let (n, p, q) = (50, 10, 8);
    let x = gaussian(&mut r, n, p);
    let support = vec![1, 4, 7];
    let mut u = DVector::zeros(p);
    for (k, &j) in support.iter().enumerate() {
        u[j] = [1.0, -1.0, 0.8][k];
    }
    u /= u.norm();
    let mut v = gaussian_vec(&mut r, q);
    v /= v.norm();
    let c_star = &u * v.transpose() * 8.0;
    let y = &x * &c_star;
    RankOne {
        x,
        y,
        c_star,
        support,
    }
}
