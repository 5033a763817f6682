use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use cppe::design::{
    g_value, information_matrix, least_squares, pseudo_inverse, solve_g_optimal, solve_g_optimal_detailed,
    ActionSet, Design,
};
use cppe::rng::rng_from_seed;

fn gaussian_rows(d: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..k)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn g_optimal_meets_the_kiefer_wolfowitz_certificate(d in 2usize..=8, extra in 1usize..=192, seed in any::<u64>()) {
        let k = (d + extra).min(200);
        let set = ActionSet::from_rows(gaussian_rows(d, k, seed)).unwrap();
        let tol = 0.01;
        let out = solve_g_optimal_detailed(&set, tol, 100_000).unwrap();
        prop_assert_eq!(out.rank, d);
        prop_assert!(out.g_value <= (1.0 + tol) * d as f64 + 1e-9);
        // g can never fall below the rank
        prop_assert!(out.g_value >= d as f64 - 1e-6);
        prop_assert!(out.design.support_size() <= d * (d + 1) / 2);
        let recomputed = g_value(&out.design, &set).unwrap();
        prop_assert!((recomputed - out.g_value).abs() < 1e-6 * d as f64);
    }

    #[test]
    fn solver_output_lies_on_the_simplex(d in 2usize..=5, extra in 1usize..=60, seed in any::<u64>()) {
        let set = ActionSet::from_rows(gaussian_rows(d, d + extra, seed)).unwrap();
        let design = solve_g_optimal(&set, 0.05, 100_000).unwrap();
        prop_assert!((design.total() - 1.0).abs() <= 1e-9);
        for (id, w) in design.iter() {
            prop_assert!(w >= 0.0 && w <= 1.0);
            prop_assert!(set.contains(id));
        }
    }

    #[test]
    fn information_matrix_is_symmetric_psd(d in 1usize..=6, k in 1usize..=30, seed in any::<u64>()) {
        let set = ActionSet::from_rows(gaussian_rows(d, k, seed)).unwrap();
        let mut rng = rng_from_seed(seed ^ 1);
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let weights = set.ids().iter().zip(&raw).map(|(&id, &w)| (id, w / total)).collect();
        let design = Design::new(weights).unwrap();
        let v = information_matrix(&design, &set).unwrap().into_inner();
        prop_assert!(max_abs(&(&v - v.transpose())) <= 1e-10);
        let eig = v.symmetric_eigen();
        prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-10));
    }

    #[test]
    fn pseudo_inverse_satisfies_moore_penrose(d in 1usize..=6, rank in 0usize..=6, seed in any::<u64>()) {
        let rank = rank.min(d);
        let mut rng = rng_from_seed(seed);
        let b: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        let q = b.qr().q();
        let eig: Vec<f64> = (0..d)
            .map(|i| if i < rank { rng.random_range(-5.0..5.0) } else { 0.0 })
            .collect();
        let m: DMatrix<f64> = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
        let m = (&m + m.transpose()) * 0.5;
        let p = pseudo_inverse(&m);
        prop_assert!(max_abs(&(&m * &p * &m - &m)) <= 1e-8);
        prop_assert!(max_abs(&(&p * &m * &p - &p)) <= 1e-8 * (1.0 + max_abs(&p)).powi(2));
        let mp = &m * &p;
        let pm = &p * &m;
        prop_assert!(max_abs(&(&mp - mp.transpose())) <= 1e-8);
        prop_assert!(max_abs(&(&pm - pm.transpose())) <= 1e-8);
    }

    #[test]
    fn least_squares_is_exact_on_the_row_space(d in 1usize..=6, r in 1usize..=6, rows in 1usize..=40, seed in any::<u64>()) {
        let r = r.min(d);
        let mut rng = rng_from_seed(seed);
        let a = DMatrix::from_fn(rows, r, |_, _| StandardNormal.sample(&mut rng));
        let b = DMatrix::from_fn(r, d, |_, _| StandardNormal.sample(&mut rng));
        let x = &a * &b;
        // theta in the row space of X (when rows >= r, that space is the row space of B)
        let c = DVector::from_fn(rows, |_, _| StandardNormal.sample(&mut rng));
        let theta = x.transpose() * c;
        let y = &x * &theta;
        let got = least_squares(&x, &y).unwrap();
        let scale = 1.0 + theta.amax();
        prop_assert!((got - &theta).amax() <= 1e-8 * scale, "theta {theta}");
    }
}

#[test]
fn noiseless_random_recovery_d3() {
    let mut rng = rng_from_seed(11);
    let x = DMatrix::from_fn(50, 3, |_, _| StandardNormal.sample(&mut rng));
    let theta = DVector::from_vec(vec![0.4, -1.3, 2.2]);
    let got = least_squares(&x, &(&x * &theta)).unwrap();
    assert!((got - theta).amax() < 1e-8);
}

#[test]
fn g_optimal_tolerance_limit_approaches_d() {
    let set = ActionSet::from_rows(gaussian_rows(4, 40, 5)).unwrap();
    let mut last = f64::INFINITY;
    for tol in [0.1, 0.01, 0.001, 0.0001] {
        let out = solve_g_optimal_detailed(&set, tol, 1_000_000).unwrap();
        assert!(out.g_value <= 4.0 * (1.0 + tol) + 1e-9);
        last = out.g_value;
    }
    assert!((last - 4.0).abs() < 4e-4 + 1e-9);
}
