mod common;

use common::{random_measure, rng, sup_diff};
use cube_localize::fourier::{g_identity_check, inverse_walsh, walsh_fourier, FourierTable};
use cube_localize::measure::{hamming_distance_to_set, DiscreteMeasure, HypercubePoint, MeasureSpec, TestFunction};
use proptest::prelude::*;
use rand::Rng;

fn random_function(n: usize, seed: u64) -> TestFunction {
    let mut r = rng(seed);
    TestFunction::new(n, (0..1 << n).map(|_| r.random_range(-3.0..3.0)).collect()).unwrap()
}

/// `E_{y ~ product(x)}[f(y)]`, which equals the multilinear extension.
fn product_average(f: &TestFunction, x: &[f64]) -> f64 {
    (0..f.values.len())
        .map(|y| {
            let p = HypercubePoint::new(f.n, y as u32);
            let w: f64 = (0..f.n).map(|i| (1.0 + x[i] * p.coord(i)) / 2.0).product();
            w * f.values[y]
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn weights_sum_to_one(n in 1usize..=8, seed in any::<u64>()) {
        let nu = random_measure(n, &mut rng(seed));
        let total: f64 = nu.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(nu.weights().iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn covariance_diagonal_is_one_minus_mean_squared(n in 1usize..=7, seed in any::<u64>()) {
        let nu = random_measure(n, &mut rng(seed));
        let a = nu.mean();
        let c = nu.covariance();
        for i in 0..n {
            prop_assert!((c[(i, i)] - (1.0 - a[i] * a[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn entropy_is_subadditive(n in 1usize..=6, seed in any::<u64>()) {
        let nu = random_measure(n, &mut rng(seed));
        prop_assert!(nu.entropy() <= nu.marginal_entropy_sum() + 1e-12);
        prop_assert!(nu.entropy() >= -1e-15);
    }

    #[test]
    fn adjacent_scan_agrees_with_all_pairs(n in 1usize..=7, seed in any::<u64>(), scale in 0.0f64..1.5) {
        let mut r = rng(seed);
        let dist = cube_localize::audits::random_lipschitz(n, &mut r);
        let f = TestFunction::new(n, dist.values.iter().map(|v| v * scale + r.random_range(-0.3..0.3)).collect()).unwrap();
        for l in [0.5, 1.0, 2.0] {
            prop_assert_eq!(f.is_lipschitz(l), f.is_lipschitz_all_pairs(l));
        }
    }

    #[test]
    fn transform_preserves_mass_and_entropy(n in 1usize..=6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let nu = random_measure(n, &mut r);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let flips: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
        let t = nu.transform(&perm, &flips).unwrap();
        prop_assert!((t.entropy() - nu.entropy()).abs() <= 1e-12);
        let mut a = nu.weights().to_vec();
        let mut b = t.weights().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert!(sup_diff(&a, &b) <= 1e-15);
    }

    #[test]
    fn parseval_and_round_trip(n in 0usize..=8, seed in any::<u64>()) {
        let f = random_function(n, seed);
        let t = walsh_fourier(&f);
        let mean_sq = f.values.iter().map(|v| v * v).sum::<f64>() / f.values.len() as f64;
        prop_assert!((t.energy() - mean_sq).abs() <= 1e-10 * (1.0 + mean_sq));
        prop_assert!(sup_diff(&inverse_walsh(&t).values, &f.values) <= 1e-10);
    }

    #[test]
    fn extension_matches_product_average(n in 1usize..=6, seed in any::<u64>()) {
        let f = random_function(n, seed);
        let t = walsh_fourier(&f);
        let mut r = rng(seed ^ 1);
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..=1.0)).collect();
            prop_assert!((t.eval(&x).unwrap() - product_average(&f, &x)).abs() <= 1e-10);
        }
    }

    #[test]
    fn extension_is_affine_in_each_coordinate(n in 1usize..=6, seed in any::<u64>(), lambda in 0.0f64..=1.0) {
        let f = random_function(n, seed);
        let t = walsh_fourier(&f);
        let mut r = rng(seed ^ 2);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..=1.0)).collect();
        let i = r.random_range(0..n);
        let (mut lo, mut hi, mut mid) = (x.clone(), x.clone(), x.clone());
        lo[i] = -1.0;
        hi[i] = 1.0;
        mid[i] = -1.0 + 2.0 * lambda;
        let lhs = t.eval(&mid).unwrap();
        let rhs = (1.0 - lambda) * t.eval(&lo).unwrap() + lambda * t.eval(&hi).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn density_log_gradient_bounds(n in 1usize..=6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let nu = random_measure(n, &mut r);
        let table = FourierTable::density_of(&nu);
        for _ in 0..10 {
            let x: Vec<f64> = (0..n).map(|_| r.random_range(-0.99..0.99)).collect();
            let rho = table.eval(&x).unwrap();
            prop_assert!(rho > 0.0);
            let g = table.gradient(&x).unwrap();
            for i in 0..n {
                let d = g[i] / rho;
                let tol = 1e-9 * (1.0 + d.abs());
                prop_assert!(1.0 / (x[i] - 1.0) <= d + tol && d <= 1.0 / (x[i] + 1.0) + tol);
            }
        }
    }

    #[test]
    fn g_identity_holds_on_random_tilts(n in 1usize..=6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let nu = random_measure(n, &mut r);
        let w: Vec<f64> = (0..n).map(|_| r.random_range(-4.0..4.0)).collect();
        prop_assert!(g_identity_check(&nu, &w).unwrap() <= 1e-8);
    }
}

#[test]
fn hadamard_rows_distance_variance_is_order_n_squared() {
    let n = 8;
    let nu = DiscreteMeasure::hadamard_rows(n).unwrap();
    let first_half: Vec<HypercubePoint> = (0..1u32 << n).map(|b| HypercubePoint::new(n, b)).filter(|p| nu.weight(*p) > 0.0).take(n / 2).collect();
    let phi = hamming_distance_to_set(n, &first_half).unwrap();
    assert!(phi.is_lipschitz_all_pairs(1.0));
    assert!(nu.variance(&phi) >= (n * n) as f64 / 16.0);
}

#[test]
fn spec_round_trips_through_json() {
    for spec in cube_localize::audits::corpus() {
        let text = serde_json::to_string(&spec).unwrap();
        let back = MeasureSpec::from_json(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.build().unwrap(), spec.build().unwrap());
    }
}
