use nalgebra::{DMatrix, DVector};
use nsvp::lasso::{soft_threshold, solve_lasso, LassoProblem};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Plain ISTA with the exact Lipschitz constant, run far past convergence.
fn ista_oracle(phi: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, nonneg: bool) -> DVector<f64> {
    let lip = 2.0 * phi.clone().singular_values().max().powi(2);
    let mut a = DVector::zeros(phi.ncols());
    for _ in 0..200_000 {
        let grad = 2.0 * phi.tr_mul(&(phi * &a - y));
        a = soft_threshold(&(&a - &grad / lip), lambda / lip, nonneg);
    }
    a
}

fn instance(seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let phi = DMatrix::from_fn(20, 8, |_, _| rng.random_range(-1.0..1.0));
    let truth = DVector::from_vec(vec![1.5, 0.0, -2.0, 0.0, 0.0, 0.7, 0.0, 0.0]);
    let noise = DVector::from_fn(20, |_, _| 0.05 * rng.random_range(-1.0..1.0));
    let y = &phi * truth + noise;
    (phi, y)
}

#[test]
fn matches_long_run_ista() {
    for seed in 0..3 {
        let (phi, y) = instance(seed);
        for (lambda, nonneg) in [(0.5, false), (2.0, false), (0.5, true)] {
            let p = LassoProblem::new(&phi, &y, lambda).nonneg(nonneg);
            let sol = solve_lasso(&p, 1e-12, 100_000).unwrap();
            let oracle = ista_oracle(&phi, &y, lambda, nonneg);
            let rel = (&sol.a_hat - &oracle).norm() / oracle.norm().max(1.0);
            assert!(rel <= 1e-8, "seed {seed} lambda {lambda}: {rel}");
            let fo = p.objective(&oracle);
            assert!((sol.objective - fo).abs() <= 1e-8 * fo);
        }
    }
}

#[test]
fn recovers_support_with_small_noise() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
    let phi = DMatrix::from_fn(200, 8, |_, _| rng.random_range(-1.0..1.0));
    let truth = DVector::from_vec(vec![1.5, 0.0, -2.0, 0.0, 0.0, 0.7, 0.0, 0.0]);
    let y = &phi * truth + DVector::from_fn(200, |_, _| 0.01 * rng.random_range(-1.0..1.0));
    let sol = solve_lasso(&LassoProblem::new(&phi, &y, 2.0), 1e-10, 100_000).unwrap();
    let support: Vec<usize> = (0..8).filter(|&j| sol.a_hat[j] != 0.0).collect();
    assert_eq!(support, vec![0, 2, 5]);
}

#[test]
fn ridge_makes_wide_problems_unique() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    let phi = DMatrix::from_fn(5, 12, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
    let p = LassoProblem::new(&phi, &y, 0.1).ridge(0.5);
    let a = solve_lasso(&p, 1e-11, 100_000).unwrap();
    let start = DVector::from_element(12, 3.0);
    let b = nsvp::lasso::solve_lasso_from(&p, &start, 1e-11, 100_000).unwrap();
    assert!((&a.a_hat - &b.a_hat).amax() <= 1e-9);
}

#[test]
fn kkt_certificate_at_solution() {
    let (phi, y) = instance(5);
    let lambda = 0.8;
    let p = LassoProblem::new(&phi, &y, lambda);
    let sol = solve_lasso(&p, 1e-11, 100_000).unwrap();
    let g = p.smooth_gradient(&sol.a_hat);
    for j in 0..8 {
        if sol.a_hat[j] != 0.0 {
            assert!((g[j] + lambda * sol.a_hat[j].signum()).abs() <= 1e-8);
        } else {
            assert!(g[j].abs() <= lambda + 1e-8);
        }
    }
    assert!(p.optimality_residual(&sol.a_hat) <= 1e-11);
}
