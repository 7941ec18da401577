//! Probability measures on `{-1,1}^n` stored as dense weight tables.
//!
//! A point is encoded by an `n`-bit index: bit `i` set means coordinate `i`
//! is `+1`. Coordinate `0` is the first coordinate.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default dimension cap (`2^20` weights, 8 MiB).
pub const DEFAULT_DIM_CAP: usize = 20;
/// Hard dimension cap; no table larger than `2^24` is ever allocated.
pub const HARD_DIM_CAP: usize = 24;

/// Relative tolerance on the total mass of a normalized table.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HypercubePoint {
    pub n: usize,
    pub bits: u32,
}

impl HypercubePoint {
    pub fn new(n: usize, bits: u32) -> Self {
        debug_assert!(n <= HARD_DIM_CAP && (n == 32 || bits >> n == 0));
        Self { n, bits }
    }

    /// Encodes a sign vector. Entries must be `+1` or `-1`.
    pub fn from_signs(signs: &[f64]) -> Result<Self> {
        if signs.len() > HARD_DIM_CAP {
            return Err(Error::DimensionTooLarge { n: signs.len(), cap: HARD_DIM_CAP });
        }
        let mut bits = 0u32;
        for (i, &s) in signs.iter().enumerate() {
            if s == 1.0 {
                bits |= 1 << i;
            } else if s != -1.0 {
                return Err(Error::InvalidArgument(format!("coordinate {i} is {s}, not ±1")));
            }
        }
        Ok(Self { n: signs.len(), bits })
    }

    /// Coordinatewise sign of a vector; zeros map to `+1`.
    pub fn sign_of(v: &[f64]) -> Self {
        let mut bits = 0u32;
        for (i, &x) in v.iter().enumerate() {
            if x >= 0.0 {
                bits |= 1 << i;
            }
        }
        Self { n: v.len(), bits }
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        coord(self.bits, i)
    }

    pub fn signs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// `‖x − y‖₁`, i.e. twice the number of differing coordinates.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        2.0 * (self.bits ^ other.bits).count_ones() as f64
    }
}

#[inline]
pub(crate) fn coord(bits: u32, i: usize) -> f64 {
    if bits >> i & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// A normalized probability measure on `{-1,1}^n`.
///
/// Weights are normalized once at construction and the positive-mass support
/// is cached, so everything downstream may assume a probability vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    n: usize,
    weights: Vec<f64>,
    support: Vec<u32>,
}

impl DiscreteMeasure {
    /// Normalizes a nonnegative table of length `2^n`.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        Self::from_weights_with_cap(n, weights, HARD_DIM_CAP)
    }

    pub fn from_weights_with_cap(n: usize, mut weights: Vec<f64>, cap: usize) -> Result<Self> {
        let cap = cap.min(HARD_DIM_CAP);
        if n > cap {
            return Err(Error::DimensionTooLarge { n, cap });
        }
        if weights.len() != 1 << n {
            return Err(Error::DimensionMismatch { expected: 1 << n, got: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidSpec("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        weights.iter_mut().for_each(|w| *w /= total);
        let support = (0..weights.len() as u32).filter(|&x| weights[x as usize] > 0.0).collect();
        Ok(Self { n, weights, support })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, x: HypercubePoint) -> f64 {
        self.weights[x.bits as usize]
    }

    /// Indices with strictly positive mass, in increasing order.
    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn uniform(n: usize) -> Result<Self> {
        check_cap(n, DEFAULT_DIM_CAP)?;
        Self::from_weights(n, vec![1.0; 1 << n])
    }

    pub fn dirac(point: HypercubePoint) -> Result<Self> {
        check_cap(point.n, DEFAULT_DIM_CAP)?;
        let mut w = vec![0.0; 1 << point.n];
        w[point.bits as usize] = 1.0;
        Self::from_weights(point.n, w)
    }

    /// Product measure with coordinate means `m_i ∈ (-1,1)`.
    pub fn product(means: &[f64]) -> Result<Self> {
        let n = means.len();
        check_cap(n, DEFAULT_DIM_CAP)?;
        if means.iter().any(|m| !(m.abs() < 1.0)) {
            return Err(Error::InvalidSpec("product means must lie in (-1, 1)".into()));
        }
        let w = (0..1u32 << n).map(|x| (0..n).map(|i| 0.5 * (1.0 + means[i] * coord(x, i))).product()).collect();
        Self::from_weights(n, w)
    }

    /// Mass ½ on each of `(-1,…,-1)` and `(1,…,1)`.
    pub fn two_point(n: usize) -> Result<Self> {
        check_cap(n, DEFAULT_DIM_CAP)?;
        if n == 0 {
            return Err(Error::InvalidSpec("two_point needs n ≥ 1".into()));
        }
        let mut w = vec![0.0; 1 << n];
        w[0] = 0.5;
        w[(1 << n) - 1] = 0.5;
        Self::from_weights(n, w)
    }

    /// Weights proportional to `exp(xᵀJx/2 + ⟨h,x⟩)`.
    pub fn ising(coupling: &[Vec<f64>], field: &[f64]) -> Result<Self> {
        let n = field.len();
        check_cap(n, DEFAULT_DIM_CAP)?;
        if coupling.len() != n || coupling.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidSpec("coupling must be an n×n matrix".into()));
        }
        if coupling.iter().flatten().chain(field).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ising parameters"));
        }
        let energy: Vec<f64> = (0..1u32 << n)
            .map(|x| {
                let s: Vec<f64> = (0..n).map(|i| coord(x, i)).collect();
                let mut e = 0.0;
                for i in 0..n {
                    e += field[i] * s[i];
                    for j in 0..n {
                        e += 0.5 * coupling[i][j] * s[i] * s[j];
                    }
                }
                e
            })
            .collect();
        let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self::from_weights(n, energy.iter().map(|e| (e - max).exp()).collect())
    }

    /// Symmetric couplings with off-diagonal entries uniform in `[-scale, scale]`.
    pub fn random_ising(n: usize, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut j = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let v = rng.random_range(-scale..=scale);
                j[a][b] = v;
                j[b][a] = v;
            }
        }
        Self::ising(&j, &vec![0.0; n])
    }

    /// Uniform on `{x : Σ x_i = k}`.
    pub fn slice(n: usize, k: i64) -> Result<Self> {
        check_cap(n, DEFAULT_DIM_CAP)?;
        if k.unsigned_abs() as usize > n || (n as i64 - k) % 2 != 0 {
            return Err(Error::InvalidSpec(format!("slice level {k} is not reachable in dimension {n}")));
        }
        let plus = ((n as i64 + k) / 2) as u32;
        let w = (0..1u32 << n).map(|x| if x.count_ones() == plus { 1.0 } else { 0.0 }).collect();
        Self::from_weights(n, w)
    }

    /// Uniform over the rows of the `n×n` Sylvester–Hadamard matrix,
    /// `H[r][j] = (-1)^{popcount(r & j)}`.
    pub fn hadamard_rows(n: usize) -> Result<Self> {
        check_cap(n, DEFAULT_DIM_CAP)?;
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::InvalidSpec(format!("hadamard_rows needs a power of two, got {n}")));
        }
        let mut w = vec![0.0; 1 << n];
        for r in hadamard_row_points(n) {
            w[r.bits as usize] += 1.0;
        }
        Self::from_weights(n, w)
    }

    /// Probability of `{x_i = +1}`.
    pub fn marginal(&self, i: usize) -> f64 {
        self.support.iter().filter(|&&x| x >> i & 1 == 1).map(|&x| self.weights[x as usize]).sum()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.n);
        for &x in &self.support {
            let p = self.weights[x as usize];
            for i in 0..self.n {
                m[i] += p * coord(x, i);
            }
        }
        m
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut c = DMatrix::zeros(self.n, self.n);
        let mut d = vec![0.0; self.n];
        for &x in &self.support {
            let p = self.weights[x as usize];
            for i in 0..self.n {
                d[i] = coord(x, i) - m[i];
            }
            for i in 0..self.n {
                for j in 0..=i {
                    c[(i, j)] += p * d[i] * d[j];
                }
            }
        }
        for i in 0..self.n {
            for j in 0..i {
                c[(j, i)] = c[(i, j)];
            }
        }
        c
    }

    pub fn expectation(&self, f: &TestFunction) -> f64 {
        self.support.iter().map(|&x| self.weights[x as usize] * f.values[x as usize]).sum()
    }

    pub fn variance(&self, f: &TestFunction) -> f64 {
        let m = self.expectation(f);
        self.support
            .iter()
            .map(|&x| {
                let d = f.values[x as usize] - m;
                self.weights[x as usize] * d * d
            })
            .sum()
    }

    /// Mass of a set given as an indicator over point indices.
    pub fn mass_of(&self, indicator: &[bool]) -> f64 {
        self.support.iter().filter(|&&x| indicator[x as usize]).map(|&x| self.weights[x as usize]).sum()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.support.iter().map(|&x| entropy_term(self.weights[x as usize])).sum()
    }

    /// Sum of the entropies of the one-dimensional marginals.
    pub fn marginal_entropy_sum(&self) -> f64 {
        (0..self.n).map(|i| bernoulli_entropy(self.marginal(i))).sum()
    }

    /// Pushforward under a coordinate permutation and sign flips:
    /// `(σx)_{perm[i]} = flips[i] · x_i`.
    pub fn transform(&self, perm: &[usize], flips: &[bool]) -> Result<Self> {
        let mut w = vec![0.0; self.weights.len()];
        for &x in &self.support {
            let mut y = 0u32;
            for i in 0..self.n {
                let bit = (x >> i & 1) ^ flips[i] as u32;
                y |= bit << perm[i];
            }
            w[y as usize] = self.weights[x as usize];
        }
        Self::from_weights(self.n, w)
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::DimensionTooLarge { n, cap })
    } else {
        Ok(())
    }
}

fn entropy_term(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

/// Entropy of a `±1` coin with `P(+1) = p`.
pub fn bernoulli_entropy(p: f64) -> f64 {
    entropy_term(p) + entropy_term(1.0 - p)
}

/// Rows of the Sylvester–Hadamard matrix as cube points, in row order.
pub fn hadamard_row_points(n: usize) -> Vec<HypercubePoint> {
    (0..n as u32)
        .map(|r| {
            let mut bits = 0u32;
            for j in 0..n as u32 {
                if (r & j).count_ones() % 2 == 0 {
                    bits |= 1 << j;
                }
            }
            HypercubePoint::new(n, bits)
        })
        .collect()
}

/// A real function on the cube, tabulated by point index.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    pub n: usize,
    pub values: Vec<f64>,
    pub declared_lipschitz: Option<f64>,
}

impl TestFunction {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != 1 << n {
            return Err(Error::DimensionMismatch { expected: 1 << n, got: values.len() });
        }
        Ok(Self { n, values, declared_lipschitz: None })
    }

    pub fn from_fn(n: usize, f: impl Fn(&HypercubePoint) -> f64) -> Self {
        let values = (0..1u32 << n).map(|x| f(&HypercubePoint::new(n, x))).collect();
        Self { n, values, declared_lipschitz: None }
    }

    /// `φ(x) = Σ x_i`.
    pub fn coordinate_sum(n: usize) -> Self {
        let mut f = Self::from_fn(n, |x| x.signs().iter().sum());
        f.declared_lipschitz = Some(1.0);
        f
    }

    /// Declares a Lipschitz constant after verifying it.
    pub fn with_lipschitz(mut self, constant: f64) -> Result<Self> {
        if !self.is_lipschitz(constant) {
            return Err(Error::NotLipschitz(constant));
        }
        self.declared_lipschitz = Some(constant);
        Ok(self)
    }

    /// Adjacent-pair scan: every edge changes the value by at most `2L`.
    pub fn is_lipschitz(&self, constant: f64) -> bool {
        let bound = 2.0 * constant + 1e-12;
        for x in 0..self.values.len() {
            for i in 0..self.n {
                let y = x ^ (1 << i);
                if y > x && (self.values[x] - self.values[y]).abs() > bound {
                    return false;
                }
            }
        }
        true
    }

    /// Definition-level check over all pairs; quadratic in `2^n`.
    pub fn is_lipschitz_all_pairs(&self, constant: f64) -> bool {
        for x in 0..self.values.len() {
            for y in x + 1..self.values.len() {
                let d = 2.0 * ((x ^ y) as u32).count_ones() as f64;
                if (self.values[x] - self.values[y]).abs() > constant * d + 1e-12 {
                    return false;
                }
            }
        }
        true
    }
}

/// `φ(x) = min_{a ∈ A} ‖x − a‖₁`, by multi-source breadth-first search on
/// the cube graph.
pub fn hamming_distance_to_set(n: usize, set: &[HypercubePoint]) -> Result<TestFunction> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("distance to an empty set".into()));
    }
    check_cap(n, HARD_DIM_CAP)?;
    if let Some(p) = set.iter().find(|p| p.n != n) {
        return Err(Error::DimensionMismatch { expected: n, got: p.n });
    }
    let mut dist = vec![u32::MAX; 1 << n];
    let mut queue = VecDeque::new();
    for p in set {
        if dist[p.bits as usize] != 0 {
            dist[p.bits as usize] = 0;
            queue.push_back(p.bits);
        }
    }
    while let Some(x) = queue.pop_front() {
        let d = dist[x as usize];
        for i in 0..n {
            let y = (x ^ (1 << i)) as usize;
            if dist[y] == u32::MAX {
                dist[y] = d + 1;
                queue.push_back(y as u32);
            }
        }
    }
    Ok(TestFunction { n, values: dist.into_iter().map(|d| 2.0 * d as f64).collect(), declared_lipschitz: Some(1.0) })
}

/// Declarative description of a measure, as read from a JSON spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", try_from = "RawSpec")]
pub enum MeasureSpec {
    Uniform {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Dirac {
        n: usize,
        point: Vec<i8>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Product {
        n: usize,
        means: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    TwoPoint {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Either explicit `coupling`/`field`, or random couplings drawn from
    /// `seed` with entries in `[-coupling_scale, coupling_scale]`.
    Ising {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coupling: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        field: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coupling_scale: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Slice {
        n: usize,
        k: i64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    HadamardRows {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Explicit {
        n: usize,
        weights: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

pub const DEFAULT_ISING_SCALE: f64 = 0.5;

/// Flat parsing form of [`MeasureSpec`]; keeps field paths in errors.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    family: String,
    n: usize,
    k: Option<i64>,
    means: Option<Vec<f64>>,
    point: Option<Vec<i8>>,
    coupling: Option<Vec<Vec<f64>>>,
    field: Option<Vec<f64>>,
    coupling_scale: Option<f64>,
    weights: Option<Vec<f64>>,
    seed: Option<u64>,
}

impl TryFrom<RawSpec> for MeasureSpec {
    type Error = String;

    fn try_from(raw: RawSpec) -> std::result::Result<Self, String> {
        let family = raw.family.to_ascii_lowercase().replace('-', "_");
        let given = [
            ("k", raw.k.is_some()),
            ("means", raw.means.is_some()),
            ("point", raw.point.is_some()),
            ("coupling", raw.coupling.is_some()),
            ("field", raw.field.is_some()),
            ("coupling_scale", raw.coupling_scale.is_some()),
            ("weights", raw.weights.is_some()),
        ];
        let allowed: &[&str] = match family.as_str() {
            "slice" => &["k"],
            "product" => &["means"],
            "dirac" => &["point"],
            "ising" => &["coupling", "field", "coupling_scale"],
            "explicit" => &["weights"],
            _ => &[],
        };
        if let Some((name, _)) = given.iter().find(|(name, set)| *set && !allowed.contains(name)) {
            return Err(format!("field `{name}` does not apply to family `{family}`"));
        }
        let need = |name: &str| format!("family `{family}` requires field `{name}`");
        let (n, seed) = (raw.n, raw.seed);
        Ok(match family.as_str() {
            "uniform" => Self::Uniform { n, seed },
            "dirac" => Self::Dirac { n, point: raw.point.ok_or_else(|| need("point"))?, seed },
            "product" => Self::Product { n, means: raw.means.ok_or_else(|| need("means"))?, seed },
            "two_point" => Self::TwoPoint { n, seed },
            "ising" => Self::Ising { n, coupling: raw.coupling, field: raw.field, coupling_scale: raw.coupling_scale, seed },
            "slice" => Self::Slice { n, k: raw.k.ok_or_else(|| need("k"))?, seed },
            "hadamard_rows" | "hadamard" => Self::HadamardRows { n, seed },
            "explicit" => Self::Explicit { n, weights: raw.weights.ok_or_else(|| need("weights"))?, seed },
            other => return Err(format!("unknown family `{other}`")),
        })
    }
}

impl MeasureSpec {
    pub fn n(&self) -> usize {
        match self {
            Self::Uniform { n, .. }
            | Self::Dirac { n, .. }
            | Self::Product { n, .. }
            | Self::TwoPoint { n, .. }
            | Self::Ising { n, .. }
            | Self::Slice { n, .. }
            | Self::HadamardRows { n, .. }
            | Self::Explicit { n, .. } => *n,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Uniform { .. } => "uniform",
            Self::Dirac { .. } => "dirac",
            Self::Product { .. } => "product",
            Self::TwoPoint { .. } => "two_point",
            Self::Ising { .. } => "ising",
            Self::Slice { .. } => "slice",
            Self::HadamardRows { .. } => "hadamard_rows",
            Self::Explicit { .. } => "explicit",
        }
    }

    /// Short human-readable label, e.g. `slice(n=6,k=0)`.
    pub fn describe(&self) -> String {
        match self {
            Self::Slice { n, k, .. } => format!("slice(n={n},k={k})"),
            Self::Ising { n, seed, coupling, .. } if coupling.is_none() => {
                format!("ising(n={n},seed={})", seed.unwrap_or(0))
            }
            other => format!("{}(n={})", other.family(), other.n()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let raw: RawSpec = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                Error::InvalidSpec(inner.to_string())
            } else {
                Error::InvalidSpec(format!("field `{path}`: {inner}"))
            }
        })?;
        de.end().map_err(|e| Error::InvalidSpec(e.to_string()))?;
        Self::try_from(raw).map_err(Error::InvalidSpec)
    }

    pub fn build(&self) -> Result<DiscreteMeasure> {
        self.build_with_cap(DEFAULT_DIM_CAP)
    }

    pub fn build_with_cap(&self, cap: usize) -> Result<DiscreteMeasure> {
        let n = self.n();
        check_cap(n, cap.min(HARD_DIM_CAP))?;
        let measure = match self {
            Self::Uniform { .. } => DiscreteMeasure::from_weights(n, vec![1.0; 1 << n])?,
            Self::Dirac { point, .. } => {
                if point.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: point.len() });
                }
                let signs: Vec<f64> = point.iter().map(|&s| s as f64).collect();
                let p = HypercubePoint::from_signs(&signs)?;
                let mut w = vec![0.0; 1 << n];
                w[p.bits as usize] = 1.0;
                DiscreteMeasure::from_weights(n, w)?
            }
            Self::Product { means, .. } => {
                if means.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: means.len() });
                }
                DiscreteMeasure::product(means)?
            }
            Self::TwoPoint { .. } => DiscreteMeasure::two_point(n)?,
            Self::Ising { coupling, field, coupling_scale, seed, .. } => {
                let field = field.clone().unwrap_or_else(|| vec![0.0; n]);
                if field.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: field.len() });
                }
                let coupling = match coupling {
                    Some(j) => j.clone(),
                    None => {
                        let scale = coupling_scale.unwrap_or(DEFAULT_ISING_SCALE);
                        let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
                        let mut j = vec![vec![0.0; n]; n];
                        for a in 0..n {
                            for b in a + 1..n {
                                let v = rng.random_range(-scale..=scale);
                                j[a][b] = v;
                                j[b][a] = v;
                            }
                        }
                        j
                    }
                };
                DiscreteMeasure::ising(&coupling, &field)?
            }
            Self::Slice { k, .. } => DiscreteMeasure::slice(n, *k)?,
            Self::HadamardRows { .. } => DiscreteMeasure::hadamard_rows(n)?,
            Self::Explicit { weights, .. } => DiscreteMeasure::from_weights(n, weights.clone())?,
        };
        Ok(measure)
    }
}

/// Free-function form of [`MeasureSpec::build`].
pub fn build_measure(spec: &MeasureSpec) -> Result<DiscreteMeasure> {
    spec.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn point_encoding_round_trips() {
        let signs = [1.0, -1.0, -1.0, 1.0];
        let p = HypercubePoint::from_signs(&signs).unwrap();
        assert_eq!(p.bits, 0b1001);
        assert_eq!(p.signs(), signs);
        assert!(HypercubePoint::from_signs(&[0.5]).is_err());
    }

    #[test]
    fn uniform_two_has_quarter_weights() {
        let m = DiscreteMeasure::uniform(2).unwrap();
        assert_eq!(m.weights(), &[0.25; 4]);
    }

    #[test]
    fn two_point_places_half_at_the_corners() {
        let m = DiscreteMeasure::two_point(3).unwrap();
        assert_eq!(m.weights()[0], 0.5);
        assert_eq!(m.weights()[7], 0.5);
        assert_eq!(m.support(), &[0, 7]);
    }

    #[test]
    fn hadamard_four_rows_are_sylvester() {
        let rows: Vec<Vec<f64>> = hadamard_row_points(4).iter().map(|p| p.signs()).collect();
        assert_eq!(rows, vec![vec![1.0, 1.0, 1.0, 1.0], vec![1.0, -1.0, 1.0, -1.0], vec![1.0, 1.0, -1.0, -1.0], vec![1.0, -1.0, -1.0, 1.0],]);
        // hand enumeration: every pair of coordinates is uncorrelated
        let cov = DiscreteMeasure::hadamard_rows(4).unwrap().covariance();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(cov[(i, j)].abs() < EPS);
                }
            }
        }
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(DiscreteMeasure::uniform(21), Err(Error::DimensionTooLarge { .. })));
        assert!(DiscreteMeasure::slice(4, 1).is_err());
        assert!(DiscreteMeasure::slice(4, 6).is_err());
        assert!(DiscreteMeasure::hadamard_rows(6).is_err());
        assert!(matches!(DiscreteMeasure::from_weights(2, vec![0.0; 4]), Err(Error::ZeroMass)));
        let big = MeasureSpec::Uniform { n: 22, seed: None };
        assert!(big.build().is_err());
        assert!(big.build_with_cap(24).is_ok());
        assert!(MeasureSpec::Uniform { n: 25, seed: None }.build_with_cap(30).is_err());
    }

    #[test]
    fn covariance_of_uniform_is_identity() {
        let c = DiscreteMeasure::uniform(3).unwrap().covariance();
        assert!((c - DMatrix::identity(3, 3)).abs().max() < EPS);
    }

    #[test]
    fn two_point_sum_has_variance_n_squared() {
        for n in 1..8 {
            let m = DiscreteMeasure::two_point(n).unwrap();
            let v = m.variance(&TestFunction::coordinate_sum(n));
            assert!((v - (n * n) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_of_dirac_is_the_point() {
        let y = HypercubePoint::from_signs(&[1.0, -1.0, 1.0]).unwrap();
        let m = DiscreteMeasure::dirac(y).unwrap();
        assert_eq!(m.mean().as_slice(), &y.signs()[..]);
        assert_eq!(m.entropy(), 0.0);
        assert_eq!(m.marginal_entropy_sum(), 0.0);
    }

    #[test]
    fn entropies_of_reference_measures() {
        let ln2 = std::f64::consts::LN_2;
        let u = DiscreteMeasure::uniform(4).unwrap();
        assert!((u.entropy() - 4.0 * ln2).abs() < EPS);
        assert!((u.marginal_entropy_sum() - 4.0 * ln2).abs() < EPS);
        let t = DiscreteMeasure::two_point(5).unwrap();
        assert!((t.entropy() - ln2).abs() < EPS);
        assert!((t.marginal_entropy_sum() - 5.0 * ln2).abs() < EPS);
    }

    #[test]
    fn distance_to_set_reference_values() {
        let all: Vec<_> = (0..8).map(|b| HypercubePoint::new(3, b)).collect();
        let f = hamming_distance_to_set(3, &all).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        let ones = HypercubePoint::new(5, 0b11111);
        let f = hamming_distance_to_set(5, &[ones]).unwrap();
        assert_eq!(f.values[0], 10.0);
        assert!(f.is_lipschitz(1.0));
        assert!(hamming_distance_to_set(3, &[]).is_err());
    }

    #[test]
    fn hadamard_half_rows_variance_is_order_n_squared() {
        let n = 8;
        let m = DiscreteMeasure::hadamard_rows(n).unwrap();
        let rows = hadamard_row_points(n);
        let f = hamming_distance_to_set(n, &rows[..n / 2]).unwrap();
        let var = m.variance(&f);
        // brute force over the 8 support points
        let vals: Vec<f64> = rows.iter().map(|r| rows[..n / 2].iter().map(|a| r.l1_distance(a)).fold(f64::INFINITY, f64::min)).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let brute = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var - brute).abs() < 1e-9);
        assert!(var >= (n * n) as f64 / 16.0);
    }

    #[test]
    fn spec_json_parses_each_family() {
        let cases = [
            r#"{"family":"uniform","n":3}"#,
            r#"{"family":"dirac","n":2,"point":[1,-1]}"#,
            r#"{"family":"product","n":2,"means":[0.4,-0.2]}"#,
            r#"{"family":"two-point","n":3}"#,
            r#"{"family":"two_point","n":3,"seed":4}"#,
            r#"{"family":"ising","n":3,"seed":7}"#,
            r#"{"family":"ising","n":2,"coupling":[[0,0.3],[0.3,0]],"field":[0,0]}"#,
            r#"{"family":"slice","n":4,"k":0}"#,
            r#"{"family":"hadamard","n":4}"#,
            r#"{"family":"explicit","n":1,"weights":[1,3]}"#,
        ];
        for text in cases {
            let spec = MeasureSpec::from_json(text).unwrap();
            let m = spec.build().unwrap();
            assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < MASS_TOLERANCE);
        }
        assert!(MeasureSpec::from_json(r#"{"family":"slice","n":4}"#).is_err());
        assert!(MeasureSpec::from_json(r#"{"family":"nope","n":4}"#).is_err());
        let err = MeasureSpec::from_json("{\"family\":\"slice\",\n\"n\":4,\"k\":\"x\"}").unwrap_err().to_string();
        assert!(err.contains("field `k`") && err.contains("line 2"), "{err}");
        let err = MeasureSpec::from_json(r#"{"family":"uniform","n":4,"means":[0.1]}"#).unwrap_err().to_string();
        assert!(err.contains("`means`"), "{err}");
    }

    #[test]
    fn transform_permutes_and_flips() {
        let m = DiscreteMeasure::product(&[0.5, -0.2]).unwrap();
        let t = m.transform(&[1, 0], &[true, false]).unwrap();
        let mean = t.mean();
        assert!((mean[0] + 0.2).abs() < EPS);
        assert!((mean[1] + 0.5).abs() < EPS);
    }
}
