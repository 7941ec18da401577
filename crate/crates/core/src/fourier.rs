//! Walsh–Fourier transform and the multilinear (harmonic) extension of cube
//! functions into `[-1,1]^n`.
//!
//! Normalization: `f̂(A) = 2^{-n} Σ_x f(x) ∏_{i∈A} x_i`, so that
//! `f(x) = Σ_A f̂(A) ∏_{i∈A} x_i`. Subsets are bitmasks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::laplace::{self, Condition, SearchConfig};
use crate::measure::{DiscreteMeasure, TestFunction};
use crate::report::{Assertion, AuditReport};

#[derive(Clone, Debug, PartialEq)]
pub struct FourierTable {
    pub n: usize,
    pub coefficients: Vec<f64>,
}

/// In-place unnormalized Walsh–Hadamard butterfly, `O(n 2^n)`.
///
/// Slot `u` (bit `i` clear) receives `f(u) + f(v)` and slot `v` receives
/// `f(v) − f(u)`, matching `x_i = +1` on set bits.
fn butterfly(t: &mut [f64]) {
    let mut h = 1;
    while h < t.len() {
        for base in (0..t.len()).step_by(2 * h) {
            for u in base..base + h {
                let (a, b) = (t[u], t[u + h]);
                t[u] = a + b;
                t[u + h] = b - a;
            }
        }
        h *= 2;
    }
}

fn inverse_butterfly(t: &mut [f64]) {
    let mut h = 1;
    while h < t.len() {
        for base in (0..t.len()).step_by(2 * h) {
            for u in base..base + h {
                let (c0, c1) = (t[u], t[u + h]);
                t[u] = c0 - c1;
                t[u + h] = c0 + c1;
            }
        }
        h *= 2;
    }
}

pub fn walsh_fourier(f: &TestFunction) -> FourierTable {
    let mut c = f.values.clone();
    butterfly(&mut c);
    let scale = 1.0 / c.len() as f64;
    c.iter_mut().for_each(|v| *v *= scale);
    FourierTable { n: f.n, coefficients: c }
}

pub fn inverse_walsh(table: &FourierTable) -> TestFunction {
    let mut v = table.coefficients.clone();
    inverse_butterfly(&mut v);
    TestFunction { n: table.n, values: v, declared_lipschitz: None }
}

fn check_point(n: usize, x: &[f64]) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if x.iter().any(|v| !(v.abs() <= 1.0)) {
        return Err(Error::InvalidArgument("point lies outside [-1,1]^n".into()));
    }
    Ok(())
}

/// How coordinate `i` is contracted when reducing the coefficient table.
#[derive(Clone, Copy)]
enum Slot {
    Value,
    Derivative,
}

impl FourierTable {
    /// Coefficients of the density `dν/dμ = 2^n ν`.
    pub fn density_of(nu: &DiscreteMeasure) -> Self {
        let scale = (1u64 << nu.n()) as f64;
        let f = TestFunction { n: nu.n(), values: nu.weights().iter().map(|w| w * scale).collect(), declared_lipschitz: None };
        walsh_fourier(&f)
    }

    /// Contracts coordinates from the highest bit down; coordinate `i` is
    /// replaced by `x_i` (value) or removed by differentiation.
    fn reduce(&self, x: &[f64], slots: &[Slot]) -> f64 {
        let mut t = self.coefficients.clone();
        for i in (0..self.n).rev() {
            let half = 1usize << i;
            for a in 0..half {
                t[a] = match slots[i] {
                    Slot::Value => t[a] + x[i] * t[a + half],
                    Slot::Derivative => t[a + half],
                };
            }
            t.truncate(half);
        }
        t[0]
    }

    /// Value of the multilinear extension at `x ∈ [-1,1]^n`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_point(self.n, x)?;
        Ok(self.reduce(x, &vec![Slot::Value; self.n]))
    }

    pub fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_point(self.n, x)?;
        let mut slots = vec![Slot::Value; self.n];
        Ok(DVector::from_iterator(
            self.n,
            (0..self.n).map(|i| {
                slots[i] = Slot::Derivative;
                let v = self.reduce(x, &slots);
                slots[i] = Slot::Value;
                v
            }),
        ))
    }

    /// Hessian; the diagonal vanishes by multilinearity.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_point(self.n, x)?;
        let mut h = DMatrix::zeros(self.n, self.n);
        let mut slots = vec![Slot::Value; self.n];
        for i in 0..self.n {
            for j in 0..i {
                slots[i] = Slot::Derivative;
                slots[j] = Slot::Derivative;
                let v = self.reduce(x, &slots);
                slots[i] = Slot::Value;
                slots[j] = Slot::Value;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }

    /// `Σ_A f̂(A)²`.
    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum()
    }
}

/// Multilinear extension evaluated from a Fourier table.
pub fn multilinear_eval(table: &FourierTable, x: &[f64]) -> Result<f64> {
    table.eval(x)
}

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `|log ρ(tanh w) + Σ log cosh w_i − ℒ[ν](w)|` with `ρ = dν/dμ`.
pub fn g_identity_check(nu: &DiscreteMeasure, w: &[f64]) -> Result<f64> {
    let table = FourierTable::density_of(nu);
    g_identity_residual(&table, nu, w)
}

pub(crate) fn g_identity_residual(table: &FourierTable, nu: &DiscreteMeasure, w: &[f64]) -> Result<f64> {
    let y: Vec<f64> = w.iter().map(|v| v.tanh()).collect();
    let rho = table.eval(&y)?;
    if !(rho > 0.0) {
        return Err(Error::NonPositiveDensity(rho));
    }
    let lc: f64 = w.iter().map(|&v| log_cosh(v)).sum();
    Ok((rho.ln() + lc - laplace::log_laplace(nu, w)?).abs())
}

/// `∇² log ρ = ∇²ρ/ρ − ∇ρ∇ρᵀ/ρ²` at an interior point.
pub fn log_density_hessian(nu: &DiscreteMeasure, x: &[f64]) -> Result<DMatrix<f64>> {
    let table = FourierTable::density_of(nu);
    log_density_derivatives(&table, x).map(|(_, _, h)| h)
}

/// `(ρ, ∇ log ρ, ∇² log ρ)` at `x`.
pub fn log_density_derivatives(table: &FourierTable, x: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let rho = table.eval(x)?;
    if !(rho > 0.0) {
        return Err(Error::NonPositiveDensity(rho));
    }
    let g = table.gradient(x)?;
    let h = table.hessian(x)?;
    let glog = &g / rho;
    let hlog = h / rho - &glog * glog.transpose();
    Ok((rho, glog, hlog))
}

#[derive(Clone, Debug)]
pub struct HarmonicGrid {
    /// Grid half-width in w-space; points are `tanh` of the w-grid.
    pub radius: f64,
    /// Points per axis for the tensor grid (used when `n ≤ tensor_max_n`).
    pub per_axis: usize,
    pub tensor_max_n: usize,
    /// Interior points for larger `n`.
    pub random_points: usize,
    pub seed: u64,
}

impl Default for HarmonicGrid {
    fn default() -> Self {
        Self { radius: 3.0, per_axis: 7, tensor_max_n: 4, random_points: 2000, seed: 0 }
    }
}

impl HarmonicGrid {
    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        if n <= self.tensor_max_n {
            let g = self.per_axis.max(2);
            let axis: Vec<f64> = (0..g).map(|j| (-self.radius + 2.0 * self.radius * j as f64 / (g - 1) as f64).tanh()).collect();
            (0..g.pow(n as u32))
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
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            (0..self.random_points).map(|_| (0..n).map(|_| rng.random_range(-self.radius..=self.radius).tanh()).collect()).collect()
        }
    }
}

/// Grid audit of the harmonic-extension curvature condition.
///
/// `β_grid` is the largest `λ_max(∇² log ρ)` on the grid (a lower bound on
/// the supremum over the open cube). The audit checks that the certified
/// semi-log-concavity constant does not exceed `β_grid + 3`, that the
/// gradient bounds `1/(x_i − 1) ≤ ∂_i log ρ ≤ 1/(x_i + 1)` hold, and records
/// how many Hessians have a positive eigenvalue.
pub fn fact_harmonic_audit(nu: &DiscreteMeasure, grid: &HarmonicGrid, search: &SearchConfig) -> Result<AuditReport> {
    let table = FourierTable::density_of(nu);
    let mut beta_grid = f64::NEG_INFINITY;
    let mut skipped = 0usize;
    let mut evaluated = 0usize;
    let mut grad_violations = 0usize;
    let mut positive_counts = vec![0usize; nu.n() + 1];
    for x in grid.points(nu.n()) {
        let (_, glog, hlog) = match log_density_derivatives(&table, &x) {
            Ok(v) => v,
            Err(Error::NonPositiveDensity(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        evaluated += 1;
        for i in 0..nu.n() {
            let lo = 1.0 / (x[i] - 1.0);
            let hi = 1.0 / (x[i] + 1.0);
            let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
            if glog[i] < lo - tol || glog[i] > hi + tol {
                grad_violations += 1;
            }
        }
        let eig = SymmetricEigen::new(hlog).eigenvalues;
        let positives = eig.iter().filter(|&&l| l > 1e-12).count();
        positive_counts[positives] += 1;
        beta_grid = beta_grid.max(eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    let cert = laplace::certify(nu, Condition::SemiLc, search, None)?;
    let mut report = AuditReport::new("fact-harmonic", format!("n={}", nu.n()));
    report.param("grid_radius", grid.radius).param("per_axis", grid.per_axis).param("search", search);
    report.diag("beta_grid", beta_grid).diag("beta_cert", cert.certified_value);
    report.diag("grid_points_evaluated", evaluated as f64).diag("grid_points_skipped", skipped as f64);
    for (k, c) in positive_counts.iter().enumerate() {
        report.diag(&format!("hessians_with_{k}_positive_eigenvalues"), *c as f64);
    }
    report.assert(Assertion::le("gradient bound violations", grad_violations as f64, 0.0, 0.0));
    if evaluated > 0 {
        report.assert(Assertion::le("beta_cert <= beta_grid + 3", cert.certified_value, beta_grid + 3.0, 1e-9));
    }
    Ok(report)
}
