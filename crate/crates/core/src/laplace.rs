//! Log-Laplace transform, exponential tilts and their cumulants, and
//! search-based certification of curvature conditions on `∇²ℒ[ν]`.
//!
//! For `w ∈ ℝⁿ` the tilt `τ_w ν` reweights `ν` by `e^{⟨w,x⟩}`. Its mean
//! `a_ν(w)` and covariance `A_ν(w)` are the gradient and Hessian of
//! `ℒ[ν](w) = log Σ_x ν(x) e^{⟨w,x⟩}`; third derivatives are the third
//! cumulants of the tilt.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{coord, DiscreteMeasure};

/// An external field `w ∈ ℝⁿ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltVector(pub Vec<f64>);

impl TiltVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tilt vector"));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Reusable evaluator for tilted probabilities of one measure.
///
/// Holds scratch buffers so the hot loops in the simulators do not
/// allocate. Probabilities are stored in support order.
pub struct TiltKernel<'a> {
    measure: &'a DiscreteMeasure,
    dense: bool,
    probs: Vec<f64>,
    factors: Vec<f64>,
    /// Coordinate-major 0/1 table of support bits, for small supports.
    bits: Vec<f64>,
}

const BIT_TABLE_MAX: usize = 1 << 14;

/// Sum with four independent accumulators.
fn sum4(xs: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = xs.chunks_exact(4);
    let rest = chunks.remainder();
    for c in chunks {
        for k in 0..4 {
            acc[k] += c[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest.iter().sum::<f64>()
}

/// Dot product with four independent accumulators.
fn dot4(xs: &[f64], ys: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let cx = xs.chunks_exact(4);
    let cy = ys.chunks_exact(4);
    let rest: f64 = cx.remainder().iter().zip(cy.remainder()).map(|(x, y)| x * y).sum();
    for (a, b) in cx.zip(cy) {
        for k in 0..4 {
            acc[k] += a[k] * b[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest
}

impl<'a> TiltKernel<'a> {
    pub fn new(measure: &'a DiscreteMeasure) -> Self {
        let n = measure.n();
        let dense = n <= 16 && measure.support().len() * 4 > (1usize << n);
        let support = measure.support();
        let bits =
            if n * support.len() <= BIT_TABLE_MAX { (0..n).flat_map(|i| support.iter().map(move |&x| f64::from((x >> i) & 1))).collect() } else { Vec::new() };
        Self { measure, dense, probs: vec![0.0; support.len()], factors: if dense { vec![0.0; 1 << n] } else { Vec::new() }, bits }
    }

    pub fn measure(&self) -> &'a DiscreteMeasure {
        self.measure
    }

    /// Fills the tilted probabilities and returns `ℒ[ν](w)`.
    pub fn update(&mut self, w: &[f64]) -> f64 {
        debug_assert_eq!(w.len(), self.measure.n());
        if self.dense {
            if let Some((total, shift)) = self.update_dense(w) {
                return total.ln() + shift;
            }
        }
        self.update_lse(w)
    }

    /// Fills the tilted probabilities without computing `ℒ`.
    pub fn update_probs(&mut self, w: &[f64]) {
        if !(self.dense && self.update_dense(w).is_some()) {
            self.update_lse(w);
        }
    }

    /// Fills the tilted probabilities and writes the tilted mean into `a`.
    pub fn update_mean(&mut self, w: &[f64], a: &mut [f64]) {
        self.update_probs(w);
        self.mean_into(a);
    }

    /// Product-factor table `e^{⟨w,x⟩ − ‖w‖₁}`; returns the normalizer and
    /// the shift, or `None` on underflow.
    fn update_dense(&mut self, w: &[f64]) -> Option<(f64, f64)> {
        let n = w.len();
        let f = &mut self.factors;
        f[0] = 1.0;
        let mut shift = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            let a = wi.abs();
            shift += a;
            let small = (-2.0 * a).exp();
            let (lo, hi) = if wi >= 0.0 { (small, 1.0) } else { (1.0, small) };
            let half = 1usize << i;
            let (left, right) = f[..2 * half].split_at_mut(half);
            for (l, r) in left.iter_mut().zip(right.iter_mut()) {
                let v = *l;
                *l = v * lo;
                *r = v * hi;
            }
        }
        debug_assert_eq!(f.len(), 1 << n);
        let weights = self.measure.weights();
        let mut total = 0.0;
        if self.probs.len() == f.len() {
            for ((p, &wt), &fx) in self.probs.iter_mut().zip(weights).zip(f.iter()) {
                *p = wt * fx;
            }
            total = sum4(&self.probs);
        } else {
            for (p, &x) in self.probs.iter_mut().zip(self.measure.support()) {
                *p = weights[x as usize] * f[x as usize];
                total += *p;
            }
        }
        if !(total > 1e-250) {
            return None;
        }
        let inv = 1.0 / total;
        self.probs.iter_mut().for_each(|p| *p *= inv);
        Some((total, shift))
    }

    fn update_lse(&mut self, w: &[f64]) -> f64 {
        let weights = self.measure.weights();
        let support = self.measure.support();
        let sum_w: f64 = w.iter().sum();
        let mut max = f64::NEG_INFINITY;
        for (p, &x) in self.probs.iter_mut().zip(support) {
            let mut dot = 0.0;
            for (i, &wi) in w.iter().enumerate() {
                if x >> i & 1 == 1 {
                    dot += wi;
                }
            }
            // ⟨w,x⟩ = 2·Σ_{x_i=+1} w_i − Σ w_i
            let s = weights[x as usize].ln() + 2.0 * dot - sum_w;
            *p = s;
            max = max.max(s);
        }
        let mut total = 0.0;
        for p in self.probs.iter_mut() {
            *p = (*p - max).exp();
            total += *p;
        }
        let inv = 1.0 / total;
        self.probs.iter_mut().for_each(|p| *p *= inv);
        max + total.ln()
    }

    /// Tilted probabilities, aligned with `measure().support()`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Mean of the current tilt.
    pub fn mean_into(&self, a: &mut [f64]) {
        let n = self.measure.n();
        let m = self.probs.len();
        if !self.bits.is_empty() {
            for (i, ai) in a.iter_mut().enumerate().take(n) {
                let col = &self.bits[i * m..(i + 1) * m];
                let plus = dot4(&self.probs, col);
                *ai = 2.0 * plus - 1.0;
            }
            return;
        }
        let mut plus = [0.0f64; 32];
        for (&p, &x) in self.probs.iter().zip(self.measure.support()) {
            let mut bits = x;
            while bits != 0 {
                let i = bits.trailing_zeros() as usize;
                plus[i] += p;
                bits &= bits - 1;
            }
        }
        for i in 0..n {
            a[i] = 2.0 * plus[i] - 1.0;
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut a = DVector::zeros(self.measure.n());
        self.mean_into(a.as_mut_slice());
        a
    }

    pub fn covariance_given_mean(&self, a: &[f64]) -> DMatrix<f64> {
        let n = self.measure.n();
        let mut c = DMatrix::zeros(n, n);
        let mut d = [0.0f64; 32];
        for (&p, &x) in self.probs.iter().zip(self.measure.support()) {
            for i in 0..n {
                d[i] = coord(x, i) - a[i];
            }
            for i in 0..n {
                let pi = p * d[i];
                for j in 0..=i {
                    c[(i, j)] += pi * d[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                c[(j, i)] = c[(i, j)];
            }
        }
        c
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let a = self.mean();
        self.covariance_given_mean(a.as_slice())
    }

    /// `Tr A_ν(w) = Σ_i (1 − a_i²)`.
    pub fn trace_cov_given_mean(a: &[f64]) -> f64 {
        a.iter().map(|ai| 1.0 - ai * ai).sum()
    }

    /// Third cumulant tensor `κ[i][j][k]`, flattened as `i·n² + j·n + k`.
    pub fn third_cumulant(&self) -> Vec<f64> {
        let n = self.measure.n();
        let a = self.mean();
        let mut k3 = vec![0.0; n * n * n];
        let mut d = vec![0.0; n];
        for (&p, &x) in self.probs.iter().zip(self.measure.support()) {
            for i in 0..n {
                d[i] = coord(x, i) - a[i];
            }
            for i in 0..n {
                for j in 0..=i {
                    let pij = p * d[i] * d[j];
                    for k in 0..=j {
                        k3[(i * n + j) * n + k] += pij * d[k];
                    }
                }
            }
        }
        for i in 0..n {
            for j in 0..=i {
                for k in 0..=j {
                    let v = k3[(i * n + j) * n + k];
                    for (p, q, r) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                        k3[(p * n + q) * n + r] = v;
                    }
                }
            }
        }
        k3
    }

    /// Expectation of a tabulated function under the current tilt.
    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.probs.iter().zip(self.measure.support()).map(|(&p, &x)| p * values[x as usize]).sum()
    }

    /// Mean and variance of a tabulated function under the current tilt.
    pub fn mean_var(&self, values: &[f64]) -> (f64, f64) {
        let m = self.expectation(values);
        let v = self
            .probs
            .iter()
            .zip(self.measure.support())
            .map(|(&p, &x)| {
                let d = values[x as usize] - m;
                p * d * d
            })
            .sum();
        (m, v)
    }

    /// Mass of a set given as an indicator over point indices.
    pub fn mass_of(&self, indicator: &[bool]) -> f64 {
        self.probs.iter().zip(self.measure.support()).filter(|(_, &x)| indicator[x as usize]).map(|(&p, _)| p).sum()
    }
}

fn check_tilt(nu: &DiscreteMeasure, w: &[f64]) -> Result<()> {
    if w.len() != nu.n() {
        return Err(Error::DimensionMismatch { expected: nu.n(), got: w.len() });
    }
    if w.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("tilt contains NaN"));
    }
    if w.iter().any(|x| x.is_infinite()) {
        return Err(Error::NonFinite("tilt contains an infinite entry"));
    }
    Ok(())
}

/// Largest dimension handled by [`SmallTilt`].
pub const SMALL_TILT_MAX_N: usize = 4;

/// Fixed-size tilted-mean evaluator on a table of `M ≥ 2^n` entries.
///
/// Entries past `2^n` carry zero weight, so all loops have constant trip
/// counts and vectorize.
#[derive(Clone, Debug)]
pub struct SmallTilt<const M: usize> {
    n: usize,
    weights: [f64; M],
    bits: [[f64; M]; SMALL_TILT_MAX_N],
}

/// In-place tree reduction; returns `Σ xs`.
fn tree_sum<const M: usize>(mut xs: [f64; M]) -> f64 {
    let mut width = M / 2;
    while width > 0 {
        for k in 0..width {
            xs[k] += xs[k + width];
        }
        width /= 2;
    }
    xs[0]
}

impl<const M: usize> SmallTilt<M> {
    pub fn new(nu: &DiscreteMeasure) -> Option<Self> {
        let n = nu.n();
        if n > SMALL_TILT_MAX_N || 1 << n > M || !M.is_power_of_two() {
            return None;
        }
        let mut weights = [0.0; M];
        weights[..1 << n].copy_from_slice(nu.weights());
        let mut bits = [[0.0; M]; SMALL_TILT_MAX_N];
        for (i, row) in bits.iter_mut().enumerate() {
            for (x, b) in row.iter_mut().enumerate() {
                *b = f64::from((x >> i) as u32 & 1);
            }
        }
        Some(Self { n, weights, bits })
    }

    /// Writes `a_ν(w)` into `a`.
    pub fn mean(&self, w: &[f64], a: &mut [f64]) {
        let mut q = self.weights;
        for i in 0..self.n {
            let small = (-2.0 * w[i].abs()).exp();
            let (lo, hi) = if w[i] >= 0.0 { (small, 1.0) } else { (1.0, small) };
            let d = hi - lo;
            let row = &self.bits[i];
            for x in 0..M {
                q[x] *= lo + d * row[x];
            }
        }
        let mut total = tree_sum(q);
        if !(total > 1e-250) {
            // log-domain recomputation
            let mut max = f64::NEG_INFINITY;
            let mut logs = [f64::NEG_INFINITY; M];
            for (x, l) in logs.iter_mut().enumerate() {
                if self.weights[x] > 0.0 {
                    let dot: f64 = (0..self.n).map(|i| if x >> i & 1 == 1 { w[i] } else { -w[i] }).sum();
                    *l = self.weights[x].ln() + dot;
                    max = max.max(*l);
                }
            }
            for x in 0..M {
                q[x] = (logs[x] - max).exp();
            }
            total = tree_sum(q);
        }
        let inv = 2.0 / total;
        for i in 0..self.n {
            let row = &self.bits[i];
            let mut prod = [0.0; M];
            for x in 0..M {
                prod[x] = q[x] * row[x];
            }
            a[i] = tree_sum(prod) * inv - 1.0;
        }
    }
}

/// Tilted-mean evaluator that picks a fixed-size table when `n ≤ 4`.
#[allow(clippy::large_enum_variant)]
pub enum TiltMean<'a> {
    Eight(SmallTilt<8>),
    Sixteen(SmallTilt<16>),
    Kernel(TiltKernel<'a>),
}

impl<'a> TiltMean<'a> {
    pub fn new(nu: &'a DiscreteMeasure) -> Self {
        let small = match nu.n() {
            0..=3 => SmallTilt::new(nu).map(Self::Eight),
            4 => SmallTilt::new(nu).map(Self::Sixteen),
            _ => None,
        };
        small.unwrap_or_else(|| Self::Kernel(TiltKernel::new(nu)))
    }

    /// Writes `a_ν(w)` into `a`.
    pub fn mean(&mut self, w: &[f64], a: &mut [f64]) {
        match self {
            Self::Eight(k) => k.mean(w, a),
            Self::Sixteen(k) => k.mean(w, a),
            Self::Kernel(k) => k.update_mean(w, a),
        }
    }
}

/// `ℒ[ν](w) = log Σ_x ν(x) e^{⟨w,x⟩}`, max-shift stabilized.
pub fn log_laplace(nu: &DiscreteMeasure, w: &[f64]) -> Result<f64> {
    check_tilt(nu, w)?;
    Ok(TiltKernel::new(nu).update(w))
}

/// `Z_ν(w) = e^{ℒ[ν](w)}`; may overflow to infinity for huge fields.
pub fn partition(nu: &DiscreteMeasure, w: &[f64]) -> Result<f64> {
    Ok(log_laplace(nu, w)?.exp())
}

/// `τ_w ν`.
pub fn tilt(nu: &DiscreteMeasure, w: &[f64]) -> Result<DiscreteMeasure> {
    check_tilt(nu, w)?;
    let mut k = TiltKernel::new(nu);
    k.update(w);
    let mut weights = vec![0.0; nu.weights().len()];
    for (&p, &x) in k.probs().iter().zip(nu.support()) {
        weights[x as usize] = p;
    }
    DiscreteMeasure::from_weights(nu.n(), weights)
}

/// `a_ν(w) = ∇ℒ[ν](w)`.
pub fn tilt_mean(nu: &DiscreteMeasure, w: &[f64]) -> Result<DVector<f64>> {
    check_tilt(nu, w)?;
    let mut k = TiltKernel::new(nu);
    k.update(w);
    Ok(k.mean())
}

/// `A_ν(w) = ∇²ℒ[ν](w)`.
pub fn tilt_cov(nu: &DiscreteMeasure, w: &[f64]) -> Result<DMatrix<f64>> {
    check_tilt(nu, w)?;
    let mut k = TiltKernel::new(nu);
    k.update(w);
    Ok(k.covariance())
}

/// Largest eigenvalue of a symmetric matrix and a unit eigenvector for it.
pub fn lambda_max(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    if m.nrows() == 0 {
        return (0.0, DVector::zeros(0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let (idx, &val) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty spectrum");
    (val, eig.eigenvectors.column(idx).into_owned())
}

/// `D^{-1/2} A D^{-1/2}` restricted to coordinates with `D_ii > floor`.
///
/// Pinned coordinates have vanishing rows in `A`, so dropping them does not
/// change the spectrum of the pencil.
pub fn diag_normalized(cov: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, Vec<usize>) {
    let keep: Vec<usize> = (0..cov.nrows()).filter(|&i| cov[(i, i)] > floor).collect();
    let m = keep.len();
    let mut out = DMatrix::zeros(m, m);
    for (p, &i) in keep.iter().enumerate() {
        for (q, &j) in keep.iter().enumerate() {
            out[(p, q)] = cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
        }
    }
    (out, keep)
}

/// Diagonal entries below this are treated as pinned coordinates.
pub const PINNED_FLOOR: f64 = 1e-13;

/// Off-diagonal entries up to this value count as non-positive.
pub const RAYLEIGH_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Condition {
    /// `∇²ℒ ⪯ β Id`.
    SemiLc,
    /// `∇²ℒ ⪯ β diag(∇²ℒ)`.
    DiagDominated,
    /// Non-positive off-diagonal entries of `∇²ℒ` under every tilt.
    Rayleigh,
    /// `∇²ℒ ⪯ 2(diag(∇ℒ) + Id)`.
    Aov,
}

impl Condition {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "semi-lc" | "semilc" => Ok(Self::SemiLc),
            "diag-dominated" | "diag" | "semi-lc2" => Ok(Self::DiagDominated),
            "rayleigh" => Ok(Self::Rayleigh),
            "aov" => Ok(Self::Aov),
            other => Err(Error::InvalidArgument(format!("unknown condition '{other}'"))),
        }
    }

    /// Threshold used when the caller gives none.
    pub fn default_threshold(self, n: usize) -> f64 {
        match self {
            // λ_max(A) ≤ Tr A ≤ n always holds
            Self::SemiLc | Self::DiagDominated => n as f64,
            Self::Rayleigh | Self::Aov => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Half-width of the search box `[-R, R]^n`.
    pub radius: f64,
    /// Grid points per axis (reduced when the tensor grid would be too big).
    pub grid: usize,
    /// Number of gradient-ascent starts.
    pub starts: usize,
    /// Maximum ascent iterations per start.
    pub iters: usize,
    pub seed: u64,
    /// Cap on the tensor-grid size.
    pub max_grid_points: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { radius: 6.0, grid: 7, starts: 16, iters: 60, seed: 0, max_grid_points: 4096 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub condition: Condition,
    /// Largest criterion value seen: a lower bound on the supremum.
    pub certified_value: f64,
    pub witness: TiltVector,
    /// Number of criterion evaluations.
    pub search_budget: usize,
    pub threshold: f64,
    pub verdict: Verdict,
    /// A pass only says no violation was found inside the box; a fail comes
    /// with a witness and is a proof of violation.
    pub pass_is_evidence_only: bool,
    pub radius: f64,
}

/// The value being maximized for a condition.
pub fn criterion_value(cond: Condition, a: &[f64], cov: &DMatrix<f64>) -> f64 {
    criterion(cond, a, cov, None).0
}

fn criterion(cond: Condition, a: &[f64], cov: &DMatrix<f64>, k3: Option<&[f64]>) -> (f64, Option<Vec<f64>>) {
    let n = a.len();
    match cond {
        Condition::SemiLc => {
            let (val, v) = lambda_max(cov);
            let grad = k3.map(|k3| quad_grad(k3, n, v.as_slice(), &(0..n).collect::<Vec<_>>(), |_, _| 1.0));
            (val, grad)
        }
        Condition::DiagDominated => {
            let (m, keep) = diag_normalized(cov, PINNED_FLOOR);
            if keep.is_empty() {
                return (0.0, k3.map(|_| vec![0.0; n]));
            }
            let (val, v) = lambda_max(&m);
            let grad = k3.map(|k3| {
                let mut g = vec![0.0; n];
                for (k, gk) in g.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (p, &i) in keep.iter().enumerate() {
                        let di = cov[(i, i)];
                        for (q, &j) in keep.iter().enumerate() {
                            let dj = cov[(j, j)];
                            let dm =
                                k3[(i * n + j) * n + k] / (di * dj).sqrt() - 0.5 * m[(p, q)] * (k3[(i * n + i) * n + k] / di + k3[(j * n + j) * n + k] / dj);
                            s += v[p] * v[q] * dm;
                        }
                    }
                    *gk = s;
                }
                g
            });
            (val, grad)
        }
        Condition::Rayleigh => {
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for i in 0..n {
                for j in 0..i {
                    if cov[(i, j)] > best.0 {
                        best = (cov[(i, j)], i, j);
                    }
                }
            }
            if n < 2 {
                return (0.0, k3.map(|_| vec![0.0; n]));
            }
            let (val, i, j) = best;
            let grad = k3.map(|k3| (0..n).map(|k| k3[(i * n + j) * n + k]).collect());
            (val, grad)
        }
        Condition::Aov => {
            let mut b = cov.clone();
            for i in 0..n {
                b[(i, i)] -= 2.0 * a[i] + 2.0;
            }
            let (val, v) = lambda_max(&b);
            let grad = k3.map(|k3| {
                let mut g = quad_grad(k3, n, v.as_slice(), &(0..n).collect::<Vec<_>>(), |_, _| 1.0);
                for (k, gk) in g.iter_mut().enumerate() {
                    // ∂_k a_i = A_ik
                    *gk -= 2.0 * (0..n).map(|i| v[i] * v[i] * cov[(i, k)]).sum::<f64>();
                }
                g
            });
            (val, grad)
        }
    }
}

/// `∂_k (vᵀ A v) = Σ_ij v_i v_j κ_ijk` over the kept coordinates.
fn quad_grad(k3: &[f64], n: usize, v: &[f64], keep: &[usize], scale: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let mut s = 0.0;
            for (p, &i) in keep.iter().enumerate() {
                for (q, &j) in keep.iter().enumerate() {
                    s += v[p] * v[q] * k3[(i * n + j) * n + k] * scale(i, j);
                }
            }
            s
        })
        .collect()
}

/// Dimension above which third cumulants fall back to finite differences.
pub const EXACT_THIRD_CUMULANT_MAX_N: usize = 12;

struct Evaluator<'a> {
    kernel: TiltKernel<'a>,
    cond: Condition,
    evals: usize,
}

impl<'a> Evaluator<'a> {
    fn value(&mut self, w: &[f64], visit: &mut dyn FnMut(&[f64], &[f64], &DMatrix<f64>)) -> f64 {
        self.evals += 1;
        self.kernel.update(w);
        let a = self.kernel.mean();
        let cov = self.kernel.covariance_given_mean(a.as_slice());
        visit(w, a.as_slice(), &cov);
        criterion(self.cond, a.as_slice(), &cov, None).0
    }

    fn gradient(&mut self, w: &[f64]) -> Vec<f64> {
        let n = w.len();
        if n <= EXACT_THIRD_CUMULANT_MAX_N {
            self.kernel.update(w);
            let a = self.kernel.mean();
            let cov = self.kernel.covariance_given_mean(a.as_slice());
            let k3 = self.kernel.third_cumulant();
            criterion(self.cond, a.as_slice(), &cov, Some(&k3)).1.unwrap_or_else(|| vec![0.0; n])
        } else {
            let h = 1e-5;
            let mut g = vec![0.0; n];
            let mut x = w.to_vec();
            for k in 0..n {
                x[k] = w[k] + h;
                let fp = self.raw(&x);
                x[k] = w[k] - h;
                let fm = self.raw(&x);
                x[k] = w[k];
                g[k] = (fp - fm) / (2.0 * h);
            }
            g
        }
    }

    fn raw(&mut self, w: &[f64]) -> f64 {
        self.kernel.update(w);
        let a = self.kernel.mean();
        let cov = self.kernel.covariance_given_mean(a.as_slice());
        criterion(self.cond, a.as_slice(), &cov, None).0
    }
}

fn grid_points(n: usize, cfg: &SearchConfig) -> Vec<Vec<f64>> {
    let mut g = cfg.grid.max(1);
    while g > 1 && (g as f64).powi(n as i32) > cfg.max_grid_points as f64 {
        g -= 1;
    }
    let axis: Vec<f64> = if g == 1 { vec![0.0] } else { (0..g).map(|j| -cfg.radius + 2.0 * cfg.radius * j as f64 / (g - 1) as f64).collect() };
    let total = g.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|_| {
                    let v = axis[idx % g];
                    idx /= g;
                    v
                })
                .collect()
        })
        .collect()
}

fn better(a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1.iter().zip(&b.1).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Less))
}

/// Searches the box for the largest value of the condition's criterion.
pub fn certify(nu: &DiscreteMeasure, cond: Condition, cfg: &SearchConfig, threshold: Option<f64>) -> Result<CertificationReport> {
    certify_with_visitor(nu, cond, cfg, threshold, &mut |_, _, _| {})
}

/// As [`certify`], calling `visit(w, a, A)` at every evaluated tilt.
pub fn certify_with_visitor(
    nu: &DiscreteMeasure,
    cond: Condition,
    cfg: &SearchConfig,
    threshold: Option<f64>,
    visit: &mut dyn FnMut(&[f64], &[f64], &DMatrix<f64>),
) -> Result<CertificationReport> {
    if !(cfg.radius > 0.0) {
        return Err(Error::InvalidArgument("search radius must be positive".into()));
    }
    if cfg.grid == 0 && cfg.starts == 0 {
        return Err(Error::InvalidArgument("search budget is zero".into()));
    }
    let n = nu.n();
    let mut ev = Evaluator { kernel: TiltKernel::new(nu), cond, evals: 0 };

    let grid = if cfg.grid > 0 { grid_points(n, cfg) } else { Vec::new() };
    let mut scored: Vec<(f64, Vec<f64>)> = grid.into_iter().map(|w| (ev.value(&w, visit), w)).collect();
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    for s in &scored {
        if better(s, &best) {
            best = s.clone();
        }
    }
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0).then_with(|| a.1.iter().zip(&b.1).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal))
    });

    // Start sequence alternates top grid points and random box points, so a
    // larger start budget always extends the same prefix.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut top = scored.into_iter();
    let starts: Vec<Vec<f64>> = (0..cfg.starts)
        .map(|s| {
            let from_grid = if s % 2 == 0 { top.next().map(|p| p.1) } else { None };
            let random: Vec<f64> = (0..n).map(|_| rng.random_range(-cfg.radius..=cfg.radius)).collect();
            from_grid.unwrap_or(random)
        })
        .collect();

    let runs: Vec<(f64, Vec<f64>, usize, Vec<(Vec<f64>, Vec<f64>, DMatrix<f64>)>)> = starts
        .into_par_iter()
        .map(|start| {
            let mut local = Evaluator { kernel: TiltKernel::new(nu), cond, evals: 0 };
            let mut seen = Vec::new();
            let mut record = |w: &[f64], a: &[f64], c: &DMatrix<f64>| seen.push((w.to_vec(), a.to_vec(), c.clone()));
            let (val, w) = ascend(&mut local, start, cfg, &mut record);
            (val, w, local.evals, seen)
        })
        .collect();

    for (val, w, evals, seen) in runs {
        ev.evals += evals;
        for (sw, sa, sc) in &seen {
            visit(sw, sa, sc);
        }
        let cand = (val, w);
        if better(&cand, &best) {
            best = cand;
        }
    }

    let threshold = threshold.unwrap_or_else(|| cond.default_threshold(n));
    let slack = match cond {
        Condition::Rayleigh | Condition::Aov => RAYLEIGH_SLACK,
        _ => 1e-12,
    };
    let verdict = if best.0 <= threshold + slack { Verdict::Pass } else { Verdict::Fail };
    Ok(CertificationReport {
        condition: cond,
        certified_value: best.0,
        witness: TiltVector(best.1),
        search_budget: ev.evals,
        threshold,
        verdict,
        pass_is_evidence_only: true,
        radius: cfg.radius,
    })
}

fn ascend(ev: &mut Evaluator<'_>, start: Vec<f64>, cfg: &SearchConfig, visit: &mut dyn FnMut(&[f64], &[f64], &DMatrix<f64>)) -> (f64, Vec<f64>) {
    let r = cfg.radius;
    let mut x = start;
    let mut val = ev.value(&x, visit);
    let mut step = 0.25 * r;
    let mut grad = ev.gradient(&x);
    for _ in 0..cfg.iters {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-14 || step < 1e-7 {
            break;
        }
        let cand: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| (xi + step * gi / norm).clamp(-r, r)).collect();
        let cv = ev.value(&cand, visit);
        if cv > val {
            x = cand;
            val = cv;
            step *= 1.5;
            grad = ev.gradient(&x);
        } else {
            step *= 0.5;
        }
    }
    (val, x)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Beta2Report {
    pub rayleigh: CertificationReport,
    pub points_checked: usize,
    /// Largest `λ_max(D^{-1/2} A D^{-1/2})` seen.
    pub max_diag_ratio: f64,
    /// Largest `λ_max(A)` seen.
    pub max_lambda: f64,
    /// Both curvature bounds hold with `β = 2` at every checked tilt.
    pub holds: bool,
}

/// Checks `A ⪯ 2 diag(A)` and `A ⪯ 2 Id` at every tilt visited by the
/// Rayleigh search plus `extra_points` uniform draws from the box.
pub fn rayleigh_implies_beta2_check(nu: &DiscreteMeasure, cfg: &SearchConfig, extra_points: usize) -> Result<Beta2Report> {
    let mut max_ratio = f64::NEG_INFINITY;
    let mut max_lambda = f64::NEG_INFINITY;
    let mut points = 0usize;
    let mut track = |_: &[f64], _: &[f64], cov: &DMatrix<f64>| {
        points += 1;
        let (m, _) = diag_normalized(cov, PINNED_FLOOR);
        max_ratio = max_ratio.max(lambda_max(&m).0);
        max_lambda = max_lambda.max(lambda_max(cov).0);
    };
    let rayleigh = certify_with_visitor(nu, Condition::Rayleigh, cfg, Some(0.0), &mut track)?;
    if rayleigh.verdict == Verdict::Fail {
        return Err(Error::CertificationFailed(format!("Rayleigh violated: off-diagonal {:.3e} at {:?}", rayleigh.certified_value, rayleigh.witness.0)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut kernel = TiltKernel::new(nu);
    for _ in 0..extra_points {
        let w: Vec<f64> = (0..nu.n()).map(|_| rng.random_range(-cfg.radius..=cfg.radius)).collect();
        kernel.update(&w);
        let cov = kernel.covariance();
        let off = (0..nu.n()).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| cov[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        if off > RAYLEIGH_SLACK {
            return Err(Error::CertificationFailed(format!("Rayleigh violated: off-diagonal {off:.3e} at {w:?}")));
        }
        track(&w, &[], &cov);
    }
    let tol = 1e-9;
    let holds = max_ratio <= 2.0 + tol && max_lambda <= 2.0 + tol;
    Ok(Beta2Report { rayleigh, points_checked: points, max_diag_ratio: max_ratio, max_lambda, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::HypercubePoint;

    fn log_cosh(x: f64) -> f64 {
        let a = x.abs();
        a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
    }

    #[test]
    fn log_laplace_reference_values() {
        let w = [0.3, -1.2, 2.5];
        let u = DiscreteMeasure::uniform(3).unwrap();
        let expect: f64 = w.iter().map(|&x| log_cosh(x)).sum();
        assert!((log_laplace(&u, &w).unwrap() - expect).abs() < 1e-12);

        let y = HypercubePoint::from_signs(&[1.0, 1.0, -1.0]).unwrap();
        let d = DiscreteMeasure::dirac(y).unwrap();
        assert!((log_laplace(&d, &w).unwrap() - (0.3 - 1.2 - 2.5)).abs() < 1e-12);

        let t = DiscreteMeasure::two_point(3).unwrap();
        let s: f64 = w.iter().sum();
        // direct two-atom sum
        let direct = (0.5 * (-s).exp() + 0.5 * s.exp()).ln();
        assert!((log_laplace(&t, &w).unwrap() - direct).abs() < 1e-12);
        assert!((direct - log_cosh(s)).abs() < 1e-12);
        assert_eq!(log_laplace(&u, &[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn nan_tilts_are_rejected() {
        let u = DiscreteMeasure::uniform(2).unwrap();
        assert!(log_laplace(&u, &[f64::NAN, 0.0]).is_err());
        assert!(log_laplace(&u, &[0.0]).is_err());
    }

    #[test]
    fn huge_fields_do_not_overflow() {
        let t = DiscreteMeasure::two_point(4).unwrap();
        let w = [400.0, -400.0, 300.0, 100.0];
        let l = log_laplace(&t, &w).unwrap();
        assert!((l - (400.0 - 0.5f64.ln().abs())).abs() < 1e-9);
        let m = tilt_mean(&t, &w).unwrap();
        assert!(m.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn uniform_tilt_moments() {
        let u = DiscreteMeasure::uniform(3).unwrap();
        let w = [0.5, -0.25, 1.5];
        let a = tilt_mean(&u, &w).unwrap();
        let c = tilt_cov(&u, &w).unwrap();
        for i in 0..3 {
            assert!((a[i] - w[i].tanh()).abs() < 1e-12);
            assert!((c[(i, i)] - (1.0 - w[i].tanh().powi(2))).abs() < 1e-12);
        }
        assert!((c[(0, 1)]).abs() < 1e-12);
    }

    #[test]
    fn two_point_covariance_is_rank_one() {
        let n = 4;
        let t = DiscreteMeasure::two_point(n).unwrap();
        let w = [0.2, -0.1, 0.4, 0.3];
        let s: f64 = w.iter().sum();
        let sech2 = 1.0 / s.cosh().powi(2);
        let c = tilt_cov(&t, &w).unwrap();
        assert!(c.iter().all(|v| (v - sech2).abs() < 1e-12));
        assert!((lambda_max(&c).0 - n as f64 * sech2).abs() < 1e-10);
    }

    #[test]
    fn tilts_compose_and_preserve_support() {
        let m = DiscreteMeasure::random_ising(4, 0.7, 3).unwrap();
        let w1 = [0.3, -0.5, 1.0, 0.0];
        let w2 = [-0.1, 0.2, -2.0, 0.7];
        let sum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
        let lhs = tilt(&tilt(&m, &w1).unwrap(), &w2).unwrap();
        let rhs = tilt(&m, &sum).unwrap();
        for (a, b) in lhs.weights().iter().zip(rhs.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
        let back = tilt(&tilt(&m, &w1).unwrap(), &w1.map(|x| -x)).unwrap();
        for (a, b) in back.weights().iter().zip(m.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
        let s = DiscreteMeasure::slice(4, 0).unwrap();
        let ts = tilt(&s, &[2.0, -1.0, 0.5, 3.0]).unwrap();
        assert_eq!(ts.support(), s.support());
        let u1 = tilt(&DiscreteMeasure::uniform(1).unwrap(), &[0.8]).unwrap();
        assert!((u1.mean()[0] - 0.8f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn third_cumulant_matches_fd_of_covariance() {
        let m = DiscreteMeasure::random_ising(3, 0.8, 11).unwrap();
        let w = [0.4, -0.3, 0.9];
        let mut k = TiltKernel::new(&m);
        k.update(&w);
        let k3 = k.third_cumulant();
        let h = 1e-5;
        for kk in 0..3 {
            let mut wp = w;
            wp[kk] += h;
            let mut wm = w;
            wm[kk] -= h;
            let cp = tilt_cov(&m, &wp).unwrap();
            let cm = tilt_cov(&m, &wm).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let fd = (cp[(i, j)] - cm[(i, j)]) / (2.0 * h);
                    assert!((fd - k3[(i * 3 + j) * 3 + kk]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn criterion_gradients_match_finite_differences() {
        let m = DiscreteMeasure::random_ising(4, 0.9, 5).unwrap();
        let w = [0.3, -0.6, 0.2, 0.8];
        for cond in [Condition::SemiLc, Condition::DiagDominated, Condition::Rayleigh, Condition::Aov] {
            let mut ev = Evaluator { kernel: TiltKernel::new(&m), cond, evals: 0 };
            let g = ev.gradient(&w);
            let h = 1e-6;
            for k in 0..4 {
                let mut wp = w;
                wp[k] += h;
                let mut wm = w;
                wm[k] -= h;
                let fd = (ev.raw(&wp) - ev.raw(&wm)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-5, "{cond:?} k={k}: fd {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn certify_uniform_gives_one() {
        let u = DiscreteMeasure::uniform(3).unwrap();
        let r = certify(&u, Condition::SemiLc, &SearchConfig::default(), Some(1.5)).unwrap();
        assert!((r.certified_value - 1.0).abs() < 1e-12);
        // λmax = 1 wherever some coordinate of the tilt vanishes
        assert!(r.witness.0.contains(&0.0));
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn certify_two_point_finds_n() {
        let t = DiscreteMeasure::two_point(3).unwrap();
        let r = certify(&t, Condition::SemiLc, &SearchConfig::default(), Some(2.0)).unwrap();
        assert!((r.certified_value - 3.0).abs() < 1e-9);
        assert!(r.witness.0.iter().sum::<f64>().abs() < 1e-4);
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn certify_rayleigh_on_products_and_slices() {
        let p = DiscreteMeasure::product(&[0.3, -0.5, 0.1, 0.7]).unwrap();
        let r = certify(&p, Condition::Rayleigh, &SearchConfig::default(), None).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.certified_value.abs() < 1e-12);

        let s = DiscreteMeasure::slice(4, 0).unwrap();
        let r = certify(&s, Condition::Rayleigh, &SearchConfig::default(), None).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.certified_value < 0.0);
    }

    #[test]
    fn witness_reproduces_value() {
        let m = DiscreteMeasure::random_ising(3, 1.0, 2).unwrap();
        for cond in [Condition::SemiLc, Condition::DiagDominated, Condition::Rayleigh, Condition::Aov] {
            let r = certify(&m, cond, &SearchConfig::default(), None).unwrap();
            let a = tilt_mean(&m, &r.witness.0).unwrap();
            let c = tilt_cov(&m, &r.witness.0).unwrap();
            assert!((criterion_value(cond, a.as_slice(), &c) - r.certified_value).abs() < 1e-9);
        }
    }

    #[test]
    fn certify_rejects_bad_config() {
        let u = DiscreteMeasure::uniform(2).unwrap();
        let bad = SearchConfig { radius: 0.0, ..SearchConfig::default() };
        assert!(certify(&u, Condition::SemiLc, &bad, None).is_err());
        let empty = SearchConfig { grid: 0, starts: 0, ..SearchConfig::default() };
        assert!(certify(&u, Condition::SemiLc, &empty, None).is_err());
    }

    #[test]
    fn beta2_for_products_and_slice() {
        let p = DiscreteMeasure::product(&[0.3, -0.5, 0.1]).unwrap();
        let r = rayleigh_implies_beta2_check(&p, &SearchConfig::default(), 200).unwrap();
        assert!(r.holds);
        assert!((r.max_diag_ratio - 1.0).abs() < 1e-9);

        let s = DiscreteMeasure::slice(4, 0).unwrap();
        let r = rayleigh_implies_beta2_check(&s, &SearchConfig::default(), 10_000).unwrap();
        assert!(r.holds);
        assert!(r.points_checked >= 10_000);
    }

    #[test]
    fn hadamard_rayleigh_report_is_consistent() {
        let h = DiscreteMeasure::hadamard_rows(4).unwrap();
        let r = certify(&h, Condition::Rayleigh, &SearchConfig::default(), None).unwrap();
        let c = tilt_cov(&h, &r.witness.0).unwrap();
        let a = tilt_mean(&h, &r.witness.0).unwrap();
        let recomputed = criterion_value(Condition::Rayleigh, a.as_slice(), &c);
        assert!((recomputed - r.certified_value).abs() < 1e-9);
        assert_eq!(r.verdict == Verdict::Fail, recomputed > RAYLEIGH_SLACK);
    }
}
