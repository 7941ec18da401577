mod common;

use common::{random_full_support, random_vec, rng};
use cube_localize::audits::{
    entropy_horizon, entropy_identity_audit, entropy_theorem_check, exponent_fit_audit, h_drift_audit, hadamard_control_audit, main_theorem_audit,
    random_lipschitz, rayleigh_corollary_audit, slice_distance_family, smalltail_check, trace_a_dinv_a, variance_decomposition_audit, MainTheoremConfig,
};
use cube_localize::laplace::{tilt, tilt_cov, SearchConfig};
use cube_localize::localization::SdeConfig;
use cube_localize::measure::{DiscreteMeasure, HypercubePoint, TestFunction};
use cube_localize::report::canonical_json;
use proptest::prelude::*;

fn sde(seed: u64) -> SdeConfig {
    SdeConfig { seed, ..SdeConfig::default() }
}

fn ln_binomial(n: u64, k: u64) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

#[test]
fn variance_decomposition_on_uniform_and_sharp_two_point() {
    let u = DiscreteMeasure::uniform(3).unwrap();
    let rep = variance_decomposition_audit(&u, &TestFunction::coordinate_sum(3), 1.0, &sde(1), 2000).unwrap();
    assert!(rep.passed(), "{rep}");
    let two = DiscreteMeasure::two_point(4).unwrap();
    let phi = TestFunction::coordinate_sum(4);
    assert_eq!(two.variance(&phi), 16.0);
    for t in [0.5, 2.0] {
        let rep = variance_decomposition_audit(&two, &phi, t, &sde(2), 2000).unwrap();
        assert!(rep.passed(), "{rep}");
    }
}

#[test]
fn smalltail_holds_for_random_functions_and_tilts() {
    let mut r = rng(3);
    let nu = random_full_support(5, &mut r);
    let tilts: Vec<Vec<f64>> = (0..50).map(|_| random_vec(5, 3.0, &mut r)).collect();
    for _ in 0..100 {
        let phi = random_lipschitz(5, &mut r);
        let rep = smalltail_check(&nu, &phi, &tilts).unwrap();
        assert!(rep.passed(), "{rep}");
        for (w, a) in tilts.iter().zip(&rep.assertions) {
            let direct = tilt(&nu, w).unwrap().variance(&phi);
            assert!((a.lhs - direct).abs() <= 1e-10);
            assert!((a.rhs - 5.0 * tilt_cov(&nu, w).unwrap().trace()).abs() <= 1e-10);
        }
    }
}

#[test]
fn smalltail_rejects_non_lipschitz_functions() {
    let nu = DiscreteMeasure::uniform(3).unwrap();
    let steep = TestFunction::from_fn(3, |x| 3.0 * x.coord(0));
    assert!(smalltail_check(&nu, &steep, &[vec![0.0; 3]]).is_err());
}

#[test]
fn main_theorem_chain_on_dirac_and_uniform() {
    let cfg = MainTheoremConfig { paths: 50, directions: 16, exponent_ns: vec![], ..MainTheoremConfig::default() };
    let dirac = DiscreteMeasure::dirac(HypercubePoint::new(3, 0b110)).unwrap();
    let rep = main_theorem_audit(&dirac, 1.0, &[TestFunction::coordinate_sum(3)], &cfg).unwrap();
    assert!(rep.passed(), "{rep}");
    assert_eq!(rep.assertions[0].lhs, 0.0);

    let u = DiscreteMeasure::uniform(3).unwrap();
    let rep = main_theorem_audit(&u, 1.0, &[TestFunction::coordinate_sum(3)], &cfg).unwrap();
    assert!(rep.passed(), "{rep}");
    assert!((rep.assertions[0].lhs - 3.0).abs() <= 1e-12);
}

#[test]
fn exponent_fit_on_slices_stays_below_two() {
    let rep = exponent_fit_audit(&[4, 6, 8, 10], 32, 0).unwrap();
    assert!(rep.passed(), "{rep}");
    assert!(rep.diagnostics["fitted_exponent"] <= 1.95);
    for n in [4, 6, 8] {
        for phi in slice_distance_family(n, 8, 1).unwrap() {
            assert!(phi.is_lipschitz(1.0));
        }
    }
}

#[test]
fn hadamard_rows_keep_order_n_squared_variance() {
    let rep = hadamard_control_audit(&[4, 8, 16], 0.05).unwrap();
    assert!(rep.passed(), "{rep}");
}

#[test]
fn entropy_identity_on_small_measures() {
    let dirac = DiscreteMeasure::dirac(HypercubePoint::new(2, 0b01)).unwrap();
    let rep = entropy_identity_audit(&dirac, &sde(4), 100, entropy_horizon(2)).unwrap();
    assert!(rep.passed(), "{rep}");
    assert_eq!(rep.assertions[0].lhs, 0.0);
    for nu in [DiscreteMeasure::uniform(1).unwrap(), DiscreteMeasure::random_ising(3, 0.5, 1).unwrap()] {
        let rep = entropy_identity_audit(&nu, &sde(5), 2000, entropy_horizon(nu.n())).unwrap();
        assert!(rep.passed(), "{rep}");
    }
}

#[test]
fn entropy_theorem_on_products_and_slices() {
    for nu in [DiscreteMeasure::uniform(5).unwrap(), DiscreteMeasure::product(&[0.3, -0.8, 0.1]).unwrap()] {
        let rep = entropy_theorem_check(&nu, 1.0).unwrap();
        assert!(rep.passed(), "{rep}");
        assert!((rep.assertions[0].lhs - rep.assertions[0].rhs).abs() <= 1e-10);
    }
    for n in [4u64, 6, 8] {
        let nu = DiscreteMeasure::slice(n as usize, 0).unwrap();
        let rep = entropy_theorem_check(&nu, 2.0).unwrap();
        assert!(rep.passed(), "{rep}");
        assert!((rep.assertions[0].lhs - n as f64 * 2f64.ln()).abs() <= 1e-10);
        assert!((rep.assertions[0].rhs - 2.0 * ln_binomial(n, n / 2)).abs() <= 1e-10);
    }
    let rep = entropy_theorem_check(&DiscreteMeasure::slice(8, 0).unwrap(), 2.0).unwrap();
    assert!((rep.assertions[0].lhs - 5.545).abs() < 5e-4 && (rep.assertions[0].rhs - 8.497).abs() < 5e-4);
    assert!(!entropy_theorem_check(&DiscreteMeasure::two_point(4).unwrap(), 1.0).unwrap().passed());
}

#[test]
fn h_drift_on_rayleigh_slice() {
    let nu = DiscreteMeasure::slice(4, 0).unwrap();
    let rep = h_drift_audit(&nu, Some(2.0), &sde(6), 1000).unwrap();
    assert!(rep.passed(), "{rep}");
}

#[test]
fn rayleigh_corollary_entropy_part() {
    let off = MainTheoremConfig { paths: 0, exponent_ns: vec![], ..MainTheoremConfig::default() };
    let search = SearchConfig { grid: 3, starts: 4, ..SearchConfig::default() };
    for nu in [DiscreteMeasure::product(&[0.4, -0.2, 0.0]).unwrap(), DiscreteMeasure::slice(6, 0).unwrap(), DiscreteMeasure::slice(8, 0).unwrap()] {
        let rep = rayleigh_corollary_audit(&nu, &search, &[], &off).unwrap();
        assert!(rep.passed(), "{rep}");
    }
    assert!(rayleigh_corollary_audit(&DiscreteMeasure::two_point(3).unwrap(), &search, &[], &off).is_err());
}

#[test]
fn audits_are_deterministic() {
    let nu = DiscreteMeasure::slice(4, 0).unwrap();
    let run = || canonical_json(&h_drift_audit(&nu, Some(2.0), &sde(7), 50).unwrap()).unwrap();
    assert_eq!(run(), run());
    let run = || canonical_json(&entropy_identity_audit(&nu, &sde(8), 50, 20.0).unwrap()).unwrap();
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_form_equals_trace_for_products(seed in any::<u64>(), n in 1usize..=6) {
        let mut r = rng(seed);
        let means = random_vec(n, 0.95, &mut r);
        let nu = DiscreteMeasure::product(&means).unwrap();
        let w = random_vec(n, 2.0, &mut r);
        let cov = tilt_cov(&nu, &w).unwrap();
        prop_assert!((trace_a_dinv_a(&cov) - cov.trace()).abs() <= 1e-12);
    }

    #[test]
    fn entropy_theorem_never_fails_at_beta_n(seed in any::<u64>(), n in 1usize..=6) {
        let nu = common::random_measure(n, &mut rng(seed));
        prop_assert!(entropy_theorem_check(&nu, n as f64).unwrap().passed());
    }
}
