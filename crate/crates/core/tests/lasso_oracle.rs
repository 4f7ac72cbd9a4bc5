mod common;

use common::{gaussian, gaussian_vec, gic, kkt_residual, rng, soft_threshold, solve};
use nalgebra::{DMatrix, DVector};
use peer_core::lasso::{gic_select, gic_value, lambda_max, lambda_path, lasso_cd, LassoOptions};
use proptest::prelude::*;

fn tight() -> LassoOptions<f64> {
    LassoOptions {
        coord_tolerance: 1e-13,
        kkt_tolerance: 1e-12,
        max_sweeps: 100_000,
        ..LassoOptions::default()
    }
}

fn objective(x: &DMatrix<f64>, y: &DVector<f64>, u: &DVector<f64>, lambda: f64) -> f64 {
    (y - x * u).norm_squared() / x.nrows() as f64 + lambda * u.lp_norm(1)
}

/// `sqrt(n) Q` with orthonormal `Q`, so `X^T X = n I`.
fn orthogonal_design(seed: u64, n: usize, p: usize) -> DMatrix<f64> {
    let q = gaussian(&mut rng(seed), n, p).qr().q();
    q * (n as f64).sqrt()
}

fn sparse_truth(p: usize, support: &[usize]) -> DVector<f64> {
    let mut u = DVector::zeros(p);
    for (k, &j) in support.iter().enumerate() {
        u[j] = if k % 2 == 0 { 1.5 } else { -1.0 };
    }
    u
}

#[test]
fn orthogonal_design_closed_form() {
    for seed in 0..20 {
        let (n, p) = (30, 12);
        let x = orthogonal_design(seed, n, p);
        let y = gaussian_vec(&mut rng(seed + 500), n) * 2.0;
        let lmax = lambda_max(&x, &y).unwrap();
        for frac in [0.9, 0.5, 0.1, 0.01] {
            let lambda = frac * lmax;
            let fit = lasso_cd(&x, &y, lambda, &LassoOptions::default()).unwrap();
            let z = x.transpose() * &y / n as f64;
            for j in 0..p {
                let expected = soft_threshold(z[j], lambda / 2.0);
                assert!(
                    (fit.coefficients[j] - expected).abs() < 1e-8,
                    "seed {seed} frac {frac} j {j}"
                );
            }
        }
    }
}

#[test]
fn zero_lambda_is_least_squares() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let x = gaussian(&mut r, 40, 6);
        let y = gaussian_vec(&mut r, 40);
        let fit = lasso_cd(&x, &y, 0.0, &tight()).unwrap();
        let ols = solve(&(x.transpose() * &x), &(x.transpose() * &y));
        assert!((fit.coefficients - ols).amax() < 1e-8, "seed {seed}");
    }
}

#[test]
fn warm_start_reaches_the_cold_solution() {
    let mut r = rng(3);
    let x = gaussian(&mut r, 50, 20);
    let y = &x * sparse_truth(20, &[2, 9, 15]) + gaussian_vec(&mut r, 50) * 0.5;
    let lambda = 0.2 * lambda_max(&x, &y).unwrap();
    let cold = lasso_cd(&x, &y, lambda, &tight()).unwrap();
    let start = gaussian_vec(&mut r, 20);
    let warm = lasso_cd(&x, &y, lambda, &tight().with_warm_start(start)).unwrap();
    assert!((cold.coefficients - warm.coefficients).amax() < 1e-8);
}

#[test]
fn null_model_at_and_above_lambda_max() {
    let mut r = rng(8);
    let x = gaussian(&mut r, 25, 10);
    let y = gaussian_vec(&mut r, 25);
    let lmax = lambda_max(&x, &y).unwrap();
    let oracle = (x.transpose() * &y * (2.0 / 25.0)).amax();
    assert!((lmax - oracle).abs() < 1e-12);
    for lambda in [lmax, 2.0 * lmax] {
        let fit = lasso_cd(&x, &y, lambda, &LassoOptions::default()).unwrap();
        assert!(fit.support.is_empty());
    }
    let below = lasso_cd(&x, &y, 0.99 * lmax, &LassoOptions::default()).unwrap();
    assert_eq!(below.df(), 1);
}

#[test]
fn lambda_path_examples() {
    let mut r = rng(4);
    let x = gaussian(&mut r, 20, 5);
    let y = gaussian_vec(&mut r, 20);
    let lmax = lambda_max(&x, &y).unwrap();
    let path = lambda_path(&x, &y, 100, 1e-3).unwrap();
    assert_eq!(path.len(), 100);
    assert_eq!(path[0], lmax);
    assert!((path[99] - 1e-3 * lmax).abs() < 1e-15 * lmax);
    let step = (path[1] / path[0]).ln();
    for w in path.windows(2) {
        assert!(w[1] < w[0]);
        assert!(((w[1] / w[0]).ln() - step).abs() < 1e-10);
    }
    let three = lambda_path(&x, &y, 3, 0.01).unwrap();
    assert!((three[1] - 0.1 * lmax).abs() < 1e-12 * lmax);

    assert_eq!(
        lambda_path(&x, &DVector::zeros(20), 100, 1e-3).unwrap(),
        vec![0.0]
    );
    assert!(lambda_path(&x, &y, 1, 1e-3).is_err());
    assert!(lambda_path(&x, &y, 10, 0.0).is_err());
    assert!(lambda_path(&x, &y, 10, 1.0).is_err());
}

#[test]
fn gic_formula_matches_oracle() {
    for &(rss, df, n, p) in &[(3.5, 2, 50, 10), (0.01, 0, 100, 200), (12.0, 7, 7, 3)] {
        assert!((gic_value(rss, df, n, p) - gic(rss, df, n, p)).abs() < 1e-14);
    }
    assert_eq!(gic_value(0.0, 3, 10, 5), f64::NEG_INFINITY);
}

#[test]
fn gic_selects_the_brute_force_minimum() {
    for seed in 0..8 {
        let mut r = rng(40 + seed);
        let (n, p) = (40, 15);
        let x = gaussian(&mut r, n, p);
        let y = &x * sparse_truth(p, &[0, 5, 11]) + gaussian_vec(&mut r, n);
        let grid = lambda_path(&x, &y, 30, 1e-3).unwrap();
        let opts = LassoOptions {
            path_max_explained: 1.0,
            ..tight()
        };
        let sel = gic_select(&x, &y, &grid, &opts).unwrap();
        assert_eq!(sel.path.len(), grid.len());

        let values: Vec<f64> = grid
            .iter()
            .map(|&l| {
                let fit = lasso_cd(&x, &y, l, &tight()).unwrap();
                gic((&y - &x * &fit.coefficients).norm_squared(), fit.df(), n, p)
            })
            .collect();
        let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let chosen = grid.iter().position(|&l| l == sel.lambda).unwrap();
        assert!(
            (values[chosen] - best).abs() < 1e-8,
            "seed {seed}: {} vs {best}",
            values[chosen]
        );
    }
}

#[test]
fn single_predictor_brute_force() {
    for seed in 0..10 {
        let mut r = rng(70 + seed);
        let n = 30;
        let x = gaussian(&mut r, n, 1);
        let y = x.column(0) * 0.7 + gaussian_vec(&mut r, n);
        let grid = lambda_path(&x, &y, 50, 1e-3).unwrap();
        let opts = LassoOptions {
            path_max_explained: 1.0,
            ..tight()
        };
        let sel = gic_select(&x, &y, &grid, &opts).unwrap();

        let xx = x.column(0).norm_squared() / n as f64;
        let xy = x.column(0).dot(&y) / n as f64;
        let mut best = (f64::INFINITY, f64::NAN, 0.0);
        for &l in &grid {
            let u = soft_threshold(xy, l / 2.0) / xx;
            let rss = (&y - x.column(0) * u).norm_squared();
            let value = gic(rss, usize::from(u != 0.0), n, 1);
            if value < best.0 {
                best = (value, l, u);
            }
        }
        assert_eq!(sel.lambda, best.1, "seed {seed}");
        assert!((sel.fit.coefficients[0] - best.2).abs() < 1e-9);
    }
}

#[test]
fn noiseless_fit_contains_the_support() {
    for seed in 0..10 {
        let mut r = rng(90 + seed);
        let (n, p) = (60, 30);
        let x = gaussian(&mut r, n, p);
        let support = [3, 10, 17, 25];
        let y = &x * sparse_truth(p, &support);
        let grid = lambda_path(&x, &y, 100, 1e-3).unwrap();
        let sel = gic_select(&x, &y, &grid, &LassoOptions::default()).unwrap();
        for j in support {
            assert!(
                sel.fit.support.contains(&j),
                "seed {seed}: {j} missing from {:?}",
                sel.fit.support
            );
        }
    }
}

#[test]
fn path_stops_at_the_first_saturated_fit() {
    let mut r = rng(12);
    let (n, p) = (60, 30);
    let x = gaussian(&mut r, n, p);
    let y = &x * sparse_truth(p, &[1, 2, 3]) + gaussian_vec(&mut r, n) * 0.01;
    let grid = lambda_path(&x, &y, 100, 1e-3).unwrap();
    let tss = y.norm_squared();
    let sel = gic_select(&x, &y, &grid, &LassoOptions::default()).unwrap();
    assert!(sel.path.len() < grid.len());
    let (last, earlier) = sel.path.split_last().unwrap();
    assert!(last.rss <= 1e-3 * tss);
    assert!(earlier.iter().all(|pt| pt.rss > 1e-3 * tss));
    assert!(sel.lambda >= last.lambda);

    let full = gic_select(
        &x,
        &y,
        &grid,
        &LassoOptions {
            path_max_explained: 1.0,
            ..LassoOptions::default()
        },
    )
    .unwrap();
    assert_eq!(full.path.len(), grid.len());
    assert_eq!(&full.path[..sel.path.len()], &sel.path[..]);
}

#[test]
fn underdetermined_small_lambda_converges() {
    // needs about 5200 sweeps
    let mut r = rng(7015495122322624899);
    let x = gaussian(&mut r, 5, 12);
    let y = gaussian_vec(&mut r, 5) * 3.0;
    let lambda = 0.0023243310489372403 * lambda_max(&x, &y).unwrap();
    let fit = lasso_cd(&x, &y, lambda, &LassoOptions::default()).unwrap();
    assert!(fit.converged);
    assert!(kkt_residual(&x, &y, &fit.coefficients, lambda) < 1e-6);
}

#[test]
fn wide_support_at_tiny_lambda_converges() {
    // plain coordinate descent needs about 160k sweeps here
    let mut r = rng(1858782761335653642);
    let x = gaussian(&mut r, 10, 18);
    let y = gaussian_vec(&mut r, 10) * 3.0;
    let lambda = 3.8698482003989884e-5 * lambda_max(&x, &y).unwrap();
    let fit = lasso_cd(&x, &y, lambda, &LassoOptions::default()).unwrap();
    assert!(fit.converged);
    assert!(fit.sweeps < 10_000);
    assert!(kkt_residual(&x, &y, &fit.coefficients, lambda) < 1e-6);
    assert!(fit.support.len() <= 10);
}

#[test]
fn rejects_bad_inputs() {
    let x = gaussian(&mut rng(1), 10, 3);
    let y = gaussian_vec(&mut rng(2), 9);
    assert!(lasso_cd(&x, &y, 0.1, &LassoOptions::default()).is_err());
    let y = gaussian_vec(&mut rng(2), 10);
    assert!(lasso_cd(&x, &y, -0.1, &LassoOptions::default()).is_err());
    assert!(gic_select(&x, &y, &[], &LassoOptions::default()).is_err());
    let bad = LassoOptions {
        path_max_explained: 0.0,
        ..LassoOptions::default()
    };
    assert!(lasso_cd(&x, &y, 0.1, &bad).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solutions_satisfy_kkt(
        seed in any::<u64>(),
        n in 5usize..40,
        p in 1usize..30,
        frac in 0.0f64..1.2,
    ) {
        let mut r = rng(seed);
        let x = gaussian(&mut r, n, p);
        let y = gaussian_vec(&mut r, n) * 3.0;
        let lambda = frac * lambda_max(&x, &y).unwrap();
        let fit = lasso_cd(&x, &y, lambda, &LassoOptions::default()).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(kkt_residual(&x, &y, &fit.coefficients, lambda) < 1e-6);
        let support: Vec<usize> = (0..p).filter(|&j| fit.coefficients[j] != 0.0).collect();
        prop_assert_eq!(&support, &fit.support);
        let obj = objective(&x, &y, &fit.coefficients, lambda);
        prop_assert!((obj - fit.objective_value).abs() <= 1e-9 * obj.max(1.0));
        // no coordinate move lowers the objective
        for j in 0..p {
            for delta in [1e-4, -1e-4] {
                let mut moved = fit.coefficients.clone();
                moved[j] += delta;
                prop_assert!(objective(&x, &y, &moved, lambda) >= obj - 1e-9);
            }
        }
    }
}
