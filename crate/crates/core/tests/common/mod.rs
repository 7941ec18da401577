#![allow(dead_code)]

use cube_localize::measure::DiscreteMeasure;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random full-support or sparse measure on `{-1,1}^n`.
pub fn random_measure<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DiscreteMeasure {
    let sparse = rng.random_bool(0.3);
    let mut w: Vec<f64> = (0..1usize << n).map(|_| if sparse && rng.random_bool(0.5) { 0.0 } else { -rng.random::<f64>().max(1e-12).ln() }).collect();
    if w.iter().all(|&x| x == 0.0) {
        let k = rng.random_range(0..w.len());
        w[k] = 1.0;
    }
    DiscreteMeasure::from_weights(n, w).unwrap()
}

pub fn random_full_support<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DiscreteMeasure {
    let w: Vec<f64> = (0..1usize << n).map(|_| 0.05 + rng.random::<f64>()).collect();
    DiscreteMeasure::from_weights(n, w).unwrap()
}

pub fn random_vec<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// Strategy producing `(n, measure)` with `n` in the given range.
pub fn measure_strategy(ns: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = DiscreteMeasure> {
    (ns, any::<u64>()).prop_map(|(n, seed)| random_measure(n, &mut rng(seed)))
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
