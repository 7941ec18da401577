//! End-to-end audits of the variance and entropy inequalities.
//!
//! Exact quantities (variances, entropies, W1 for small `n`) come from
//! enumeration and carry only floating-point tolerances. Monte-Carlo sides
//! carry `4·SE` tolerances, and every SE is reported as a diagnostic.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::{self, Condition, SearchConfig, Verdict, PINNED_FLOOR};
use crate::localization::{run_paths, Localizer, SdeConfig};
use crate::measure::{hadamard_row_points, hamming_distance_to_set, DiscreteMeasure, HypercubePoint, MeasureSpec, TestFunction};
use crate::report::{Assertion, AuditReport};
use crate::rng::{path_rng, random_unit_vector};
use crate::stats::{ols_slope, MeanEstimate};
use crate::transport::{w1_exact, W1_MAX_N};

/// Stream index reserved for audit-level randomness (directions, families),
/// disjoint from path indices.
const AUX_STREAM: u64 = u64::MAX;

/// The fixed set of small measures the audits run on.
pub fn corpus() -> Vec<MeasureSpec> {
    vec![
        MeasureSpec::Uniform { n: 3, seed: None },
        MeasureSpec::Product { n: 3, means: vec![0.3, -0.5, 0.8], seed: None },
        MeasureSpec::TwoPoint { n: 3, seed: None },
        MeasureSpec::Slice { n: 4, k: 0, seed: None },
        MeasureSpec::Ising { n: 3, coupling: None, field: None, coupling_scale: None, seed: Some(1) },
        MeasureSpec::HadamardRows { n: 4, seed: None },
        MeasureSpec::Dirac { n: 3, point: vec![1, -1, 1], seed: None },
        MeasureSpec::Slice { n: 6, k: 0, seed: None },
        MeasureSpec::Ising { n: 5, coupling: None, field: None, coupling_scale: None, seed: Some(2) },
    ]
}

/// A random 1-Lipschitz function: the largest 1-Lipschitz minorant of
/// random values placed on a random subset of the cube.
pub fn random_lipschitz<R: Rng + ?Sized>(n: usize, rng: &mut R) -> TestFunction {
    let size = 1usize << n;
    let anchors = rng.random_range(1..=size);
    let mut v = vec![f64::INFINITY; size];
    for x in sample(rng, size, anchors) {
        v[x] = rng.random_range(0.0..2.0 * n as f64);
    }
    // the ℓ1 metric is a sum over coordinates, so one sweep per axis is exact
    for i in 0..n {
        for x in 0..size {
            let y = x ^ (1 << i);
            if v[y] + 2.0 < v[x] {
                v[x] = v[y] + 2.0;
            }
        }
    }
    TestFunction { n, values: v, declared_lipschitz: Some(1.0) }
}

fn require_lipschitz(phi: &TestFunction) -> Result<()> {
    if phi.is_lipschitz(1.0) {
        Ok(())
    } else {
        Err(Error::NotLipschitz(1.0))
    }
}

fn check_dims(nu: &DiscreteMeasure, phi: &TestFunction) -> Result<()> {
    if phi.n != nu.n() {
        return Err(Error::DimensionMismatch { expected: nu.n(), got: phi.n });
    }
    Ok(())
}

/// Per-path `([M]_t, Var_{ν_t}[φ])` with `M_s = E_{ν_s}[φ]`.
fn quadratic_variation_paths(nu: &DiscreteMeasure, phi: &TestFunction, t: f64, cfg: &SdeConfig, num_paths: usize) -> Result<Vec<(f64, f64)>> {
    let n = nu.n();
    let steps = (t / cfg.dt).round() as u64;
    run_paths(num_paths, |i| {
        let mut loc = Localizer::new(nu, &vec![0.0; n], cfg, i);
        let (mut m, mut var) = loc.mean_var(&phi.values);
        let mut qv = 0.0;
        while loc.steps() < steps && !loc.collapsed() {
            loc.step()?;
            let (m2, v2) = loc.mean_var(&phi.values);
            qv += (m2 - m) * (m2 - m);
            m = m2;
            var = v2;
        }
        Ok((qv, var))
    })
}

fn decomposition_estimate(per_path: &[(f64, f64)]) -> (MeanEstimate, MeanEstimate, MeanEstimate) {
    let qv: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let var: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    let total: Vec<f64> = per_path.iter().map(|p| p.0 + p.1).collect();
    (MeanEstimate::from_samples(&total), MeanEstimate::from_samples(&qv), MeanEstimate::from_samples(&var))
}

/// Checks `Var_ν[φ] = E[M]_t + E Var_{ν_t}[φ]`.
///
/// The right side is estimated at `cfg.dt` and again at `cfg.dt / 2`; the gap
/// between the two estimates is added to the tolerance.
pub fn variance_decomposition_audit(nu: &DiscreteMeasure, phi: &TestFunction, t: f64, cfg: &SdeConfig, num_paths: usize) -> Result<AuditReport> {
    cfg.validate()?;
    check_dims(nu, phi)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument("t must be non-negative".into()));
    }
    let exact = nu.variance(phi);
    let coarse = quadratic_variation_paths(nu, phi, t, cfg, num_paths)?;
    let half = SdeConfig { dt: cfg.dt / 2.0, ..cfg.clone() };
    let fine = quadratic_variation_paths(nu, phi, t, &half, num_paths)?;
    let (total, qv, var) = decomposition_estimate(&coarse);
    let (total_fine, _, _) = decomposition_estimate(&fine);
    let allowance = (total.mean - total_fine.mean).abs();
    let mut report = AuditReport::new("variance-decomposition", format!("n={}", nu.n()));
    report.param("t", t).param("paths", num_paths).param("sde", cfg);
    report.assert(Assertion::eq(format!("Var[phi] = E[M]_t + E Var_t[phi] at t={t}"), total.mean, exact, 4.0 * total.se + allowance + 1e-12));
    report.diag("exact_variance", exact);
    report.diag("qv_mean", qv.mean).diag("qv_se", qv.se);
    report.diag("residual_variance_mean", var.mean).diag("residual_variance_se", var.se);
    report.diag("se", total.se).diag("dt_halving_gap", allowance);
    Ok(report)
}

/// Checks `Var_{τ_w ν}[φ] ≤ n·Tr A_ν(w)` exactly at each tilt.
pub fn smalltail_check(nu: &DiscreteMeasure, phi: &TestFunction, tilts: &[Vec<f64>]) -> Result<AuditReport> {
    check_dims(nu, phi)?;
    require_lipschitz(phi)?;
    let n = nu.n() as f64;
    let mut report = AuditReport::new("smalltail", format!("n={}", nu.n()));
    report.param("tilts", tilts.len());
    let mut worst_ratio = 0.0f64;
    for (k, w) in tilts.iter().enumerate() {
        let tilted = laplace::tilt(nu, w)?;
        let lhs = tilted.variance(phi);
        let rhs = n * tilted.covariance().trace();
        if rhs > 0.0 {
            worst_ratio = worst_ratio.max(lhs / rhs);
        }
        report.assert(Assertion::le(format!("Var_w[phi] <= n Tr A(w) for tilt {k}"), lhs, rhs, 1e-10 * (1.0 + rhs)));
    }
    report.diag("max_ratio", worst_ratio);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainTheoremConfig {
    pub sde: SdeConfig,
    pub paths: usize,
    /// Horizon `T`; `None` means `16 log n`.
    pub horizon: Option<f64>,
    /// Spacing of the time quadrature for `∫ sup-term dt`.
    pub quad_step: f64,
    /// Difference-quotient step for the W1 derivative.
    pub eps: f64,
    /// Random directions added to the `n` coordinate directions.
    pub directions: usize,
    /// Dimensions for the exponent fit on `slice(n, 0)`; empty skips it.
    pub exponent_ns: Vec<usize>,
    /// Distance functions per dimension in the exponent fit.
    pub family_size: usize,
    pub seed: u64,
}

impl Default for MainTheoremConfig {
    fn default() -> Self {
        Self {
            sde: SdeConfig::default(),
            paths: 200,
            horizon: None,
            quad_step: 0.1,
            eps: 1e-3,
            directions: 64,
            exponent_ns: vec![4, 6, 8, 10],
            family_size: 32,
            seed: 0,
        }
    }
}

/// `max_θ W1(τ_w ν, τ_{w+εθ} ν)/ε` over `dirs`, with the quotient at `ε/2`
/// for the maximizing direction.
fn w1_quotient_sup(nu: &DiscreteMeasure, w: &[f64], dirs: &[Vec<f64>], eps: f64) -> Result<(f64, f64)> {
    let base = laplace::tilt(nu, w)?;
    let quotient = |theta: &[f64], e: f64| -> Result<f64> {
        let shifted: Vec<f64> = w.iter().zip(theta).map(|(a, b)| a + e * b).collect();
        Ok(w1_exact(&base, &laplace::tilt(nu, &shifted)?)? / e)
    };
    let mut best = (0.0, 0usize);
    for (k, theta) in dirs.iter().enumerate() {
        let q = quotient(theta, eps)?;
        if q > best.0 {
            best = (q, k);
        }
    }
    let half = if best.0 > 0.0 { quotient(&dirs[best.1], eps / 2.0)? } else { 0.0 };
    Ok((best.0, half))
}

/// Coordinate directions followed by `extra` uniform directions.
pub fn probe_directions(n: usize, extra: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();
    let mut rng = path_rng(seed, AUX_STREAM);
    dirs.extend((0..extra).map(|_| random_unit_vector(&mut rng, n)));
    dirs
}

/// Checks `Var_ν[φ] ≤ E ∫_0^T S_t² dt + n² e^{−T/8}` for every `φ`, where
/// `S_t` is the largest W1 difference quotient at `w_t` over the probe
/// directions. Optionally appends the exponent fit on slices.
pub fn main_theorem_audit(nu: &DiscreteMeasure, beta: f64, phis: &[TestFunction], cfg: &MainTheoremConfig) -> Result<AuditReport> {
    cfg.sde.validate()?;
    let n = nu.n();
    if n > W1_MAX_N {
        return Err(Error::DimensionTooLarge { n, cap: W1_MAX_N });
    }
    for phi in phis {
        check_dims(nu, phi)?;
        require_lipschitz(phi)?;
    }
    let horizon = cfg.horizon.unwrap_or(16.0 * (n.max(2) as f64).ln());
    let dirs = probe_directions(n, cfg.directions, cfg.seed);
    let nodes = (horizon / cfg.quad_step).round() as usize;
    let sde = SdeConfig { seed: cfg.seed, ..cfg.sde.clone() };
    // per path: (∫ S_t² dt, worst Richardson gap)
    let per_path = run_paths(cfg.paths, |i| {
        let mut loc = Localizer::new(nu, &vec![0.0; n], &sde, i);
        let mut values = Vec::with_capacity(nodes + 1);
        let mut gap = 0.0f64;
        let mut cached: Option<f64> = None;
        for k in 0..=nodes {
            loc.run_until(k as f64 * cfg.quad_step)?;
            let s = match cached {
                Some(s) => s,
                None => {
                    let (q, q_half) = w1_quotient_sup(nu, loc.w(), &dirs, cfg.eps)?;
                    gap = gap.max((q - q_half).abs());
                    if loc.collapsed() {
                        cached = Some(q);
                    }
                    q
                }
            };
            values.push(s * s);
        }
        let integral = (0..nodes).map(|k| 0.5 * (values[k] + values[k + 1]) * cfg.quad_step).sum::<f64>();
        Ok((integral, gap))
    })?;
    let integrals: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let est = MeanEstimate::from_samples(&integrals);
    let tail = (n * n) as f64 * (-horizon / 8.0).exp();
    let mut report = AuditReport::new("main-theorem", format!("n={n}"));
    report.param("beta", beta).param("config", cfg).param("horizon", horizon).param("functions", phis.len());
    let mut worst = 0.0f64;
    for (k, phi) in phis.iter().enumerate() {
        let var = nu.variance(phi);
        worst = worst.max(var);
        report.assert(Assertion::le(format!("Var[phi_{k}] <= E int S_t^2 dt + n^2 e^(-T/8)"), var, est.mean + tail, 4.0 * est.se));
    }
    report.diag("integral_mean", est.mean).diag("integral_se", est.se).diag("tail", tail);
    report.diag("max_variance", worst);
    report.diag("richardson_gap_max", per_path.iter().map(|p| p.1).fold(0.0, f64::max));
    if !cfg.exponent_ns.is_empty() {
        report.absorb("exponent-fit", exponent_fit_audit(&cfg.exponent_ns, cfg.family_size, cfg.seed)?);
    }
    Ok(report)
}

/// Distance functions used for the exponent fit at dimension `n`: distance
/// to every point `(1,…,1,−1,…,−1)`, to every prefix half-space
/// `{x : x_1 + … + x_j ≥ r}`, plus random halves of the slice and random
/// subsets of the cube.
pub fn slice_distance_family(n: usize, random: usize, seed: u64) -> Result<Vec<TestFunction>> {
    let mut family = Vec::with_capacity(n * n + random);
    for j in 0..=n {
        family.push(hamming_distance_to_set(n, &[HypercubePoint::new(n, (1u32 << j) - 1)])?);
    }
    for j in 1..=n {
        for r in (0..=j).map(|m| j as i64 - 2 * m as i64).filter(|&r| r >= 0) {
            let set: Vec<HypercubePoint> =
                (0..1u32 << n).map(|x| HypercubePoint::new(n, x)).filter(|x| (0..j).map(|i| x.coord(i)).sum::<f64>() >= r as f64).collect();
            family.push(hamming_distance_to_set(n, &set)?);
        }
    }
    let slice = DiscreteMeasure::slice(n, 0)?;
    let support = slice.support().to_vec();
    let mut rng = path_rng(seed, AUX_STREAM - n as u64);
    for k in 0..random {
        let set: Vec<HypercubePoint> = if k % 2 == 0 {
            sample(&mut rng, support.len(), support.len() / 2).into_iter().map(|i| HypercubePoint::new(n, support[i])).collect()
        } else {
            let density = rng.random_range(0.01..0.5);
            let mut s: Vec<HypercubePoint> = (0..1u32 << n).filter(|_| rng.random::<f64>() < density).map(|x| HypercubePoint::new(n, x)).collect();
            if s.is_empty() {
                s.push(HypercubePoint::new(n, 0));
            }
            s
        };
        family.push(hamming_distance_to_set(n, &set)?);
    }
    Ok(family)
}

/// Fits the exponent of `max_φ Var_{slice(n,0)}[φ]` against `n` and asserts
/// it is below 2.
pub fn exponent_fit_audit(ns: &[usize], family_size: usize, seed: u64) -> Result<AuditReport> {
    if ns.len() < 2 {
        return Err(Error::InvalidArgument("exponent fit needs at least two dimensions".into()));
    }
    let mut report = AuditReport::new("exponent-fit", "slice(n,0)");
    report.param("ns", ns).param("family_size", family_size).param("seed", seed);
    let mut xs = Vec::with_capacity(ns.len());
    let mut ys = Vec::with_capacity(ns.len());
    for &n in ns {
        let nu = DiscreteMeasure::slice(n, 0)?;
        let best = slice_distance_family(n, family_size, seed)?.iter().map(|phi| nu.variance(phi)).fold(0.0, f64::max);
        report.diag(&format!("max_variance_n{n}"), best);
        xs.push((n as f64).ln());
        ys.push(best.ln());
    }
    let slope = ols_slope(&xs, &ys);
    report.diag("fitted_exponent", slope);
    report.assert(Assertion::le("fitted exponent of max Var vs n", slope, 2.0, 0.0));
    Ok(report)
}

/// Negative control: on `hadamard_rows(n)` with `φ` the distance to the
/// first half of the rows, `Var/n²` stays bounded below.
pub fn hadamard_control_audit(ns: &[usize], floor: f64) -> Result<AuditReport> {
    let mut report = AuditReport::new("hadamard-control", "hadamard_rows");
    report.param("ns", ns).param("floor", floor);
    for &n in ns {
        let nu = DiscreteMeasure::hadamard_rows(n)?;
        let rows = hadamard_row_points(n);
        let phi = hamming_distance_to_set(n, &rows[..n / 2])?;
        let ratio = nu.variance(&phi) / (n * n) as f64;
        report.assert(Assertion::ge(format!("Var/n^2 at n={n}"), ratio, floor, 0.0));
    }
    Ok(report)
}

/// Per-path `½ ∫_0^{t_max} Tr A_t dt` (left Riemann sum, stopped at collapse).
fn trace_integrals(nu: &DiscreteMeasure, cfg: &SdeConfig, t_max: f64, num_paths: usize) -> Result<Vec<f64>> {
    let n = nu.n();
    let steps = (t_max / cfg.dt).round() as u64;
    run_paths(num_paths, |i| {
        let mut loc = Localizer::new(nu, &vec![0.0; n], cfg, i);
        let mut acc = 0.0;
        while loc.steps() < steps && !loc.collapsed() {
            acc += loc.trace_cov();
            loc.step()?;
        }
        Ok(0.5 * acc * cfg.dt)
    })
}

/// Default truncation time `16 log n + 40`.
pub fn entropy_horizon(n: usize) -> f64 {
    16.0 * (n.max(1) as f64).ln() + 40.0
}

/// Checks `ℋ(ν) = ½ E ∫_0^∞ Tr A_t dt`.
///
/// Tolerance: `4·SE`, the tail bound `8n e^{−t_max/8}`, the mass left at
/// collapse `n·collapse_tol·t_max/2`, and the gap between runs at `dt` and
/// `dt/2`.
pub fn entropy_identity_audit(nu: &DiscreteMeasure, cfg: &SdeConfig, num_paths: usize, t_max: f64) -> Result<AuditReport> {
    cfg.validate()?;
    let n = nu.n() as f64;
    let exact = nu.entropy();
    let coarse = MeanEstimate::from_samples(&trace_integrals(nu, cfg, t_max, num_paths)?);
    let half = SdeConfig { dt: cfg.dt / 2.0, ..cfg.clone() };
    let fine = MeanEstimate::from_samples(&trace_integrals(nu, &half, t_max, num_paths)?);
    let tail = 8.0 * n * (-t_max / 8.0).exp();
    let residual = n * cfg.collapse_tol * t_max / 2.0;
    let allowance = (coarse.mean - fine.mean).abs();
    let mut report = AuditReport::new("entropy-identity", format!("n={}", nu.n()));
    report.param("paths", num_paths).param("t_max", t_max).param("sde", cfg);
    report.assert(Assertion::eq("H(nu) = 1/2 E int Tr A_t dt", coarse.mean, exact, 4.0 * coarse.se + tail + residual + allowance + 1e-12));
    report.diag("exact_entropy", exact).diag("se", coarse.se).diag("tail_bound", tail);
    report.diag("collapse_residual", residual).diag("dt_halving_gap", allowance);
    Ok(report)
}

/// Checks `Σ_i ℋ(ν_i) ≤ β ℋ(ν)` exactly.
pub fn entropy_theorem_check(nu: &DiscreteMeasure, beta: f64) -> Result<AuditReport> {
    let joint = nu.entropy();
    let marginal = nu.marginal_entropy_sum();
    if joint <= 1e-15 && marginal > 1e-10 {
        return Err(Error::CertificationFailed(format!("joint entropy vanishes but marginal entropy sum is {marginal}")));
    }
    let mut report = AuditReport::new("entropy-theorem", format!("n={}", nu.n()));
    report.param("beta", beta);
    report.assert(Assertion::le("sum of marginal entropies <= beta H(nu)", marginal, beta * joint, 1e-10));
    report.diag("joint_entropy", joint).diag("marginal_entropy_sum", marginal);
    if joint > 0.0 {
        report.diag("ratio", marginal / joint);
    }
    Ok(report)
}

/// `h(a) = Σ_i H((1 + a_i)/2)`, the entropy of the product measure with mean `a`.
pub fn h_of_mean(a: &[f64]) -> f64 {
    a.iter().map(|&ai| crate::measure::bernoulli_entropy((1.0 + ai) / 2.0)).sum()
}

/// `Tr(A D⁻¹ A)` with `D = diag(A)`, skipping pinned coordinates.
pub fn trace_a_dinv_a(cov: &nalgebra::DMatrix<f64>) -> f64 {
    let n = cov.nrows();
    let mut total = 0.0;
    for k in 0..n {
        let d = cov[(k, k)];
        if d <= PINNED_FLOOR {
            continue;
        }
        let row: f64 = (0..n).map(|i| cov[(i, k)] * cov[(i, k)]).sum();
        total += row / d;
    }
    total
}

/// Windows `[s, e)` over which the drift of `h(a_t)` is measured.
pub const H_DRIFT_WINDOWS: [(f64, f64); 3] = [(0.0, 0.5), (0.5, 1.0), (1.0, 2.0)];

/// Per path and window: (`h(a_e) − h(a_s)`, `−½ ∫_s^e Tr(A D⁻¹ A) dt`),
/// plus the largest `Tr(A D⁻¹ A) − β Tr A` seen.
fn h_drift_paths(nu: &DiscreteMeasure, cfg: &SdeConfig, num_paths: usize, beta: f64) -> Result<Vec<(Vec<(f64, f64)>, f64)>> {
    let n = nu.n();
    run_paths(num_paths, |i| {
        let mut loc = Localizer::new(nu, &vec![0.0; n], cfg, i);
        let mut out = Vec::with_capacity(H_DRIFT_WINDOWS.len());
        let mut excess = f64::NEG_INFINITY;
        for &(s, e) in &H_DRIFT_WINDOWS {
            loc.run_until(s)?;
            let h0 = h_of_mean(loc.a());
            let end = (e / cfg.dt).round() as u64;
            let mut drift = 0.0;
            while loc.steps() < end && !loc.collapsed() {
                let cov = loc.covariance();
                let q = trace_a_dinv_a(&cov);
                excess = excess.max(q - beta * cov.trace());
                drift -= 0.5 * q * cfg.dt;
                loc.step()?;
            }
            out.push((h_of_mean(loc.a()) - h0, drift));
        }
        Ok((out, excess))
    })
}

/// Audits `h(a_t)`: the identity `h(mean ν) = Σ_i ℋ(ν_i)`, the Itô drift
/// `d h(a_t) = −½ Tr(A_t D_t⁻¹ A_t) dt + martingale`, and, when `beta` is
/// given, the pathwise bound `Tr(A D⁻¹ A) ≤ β Tr A`.
pub fn h_drift_audit(nu: &DiscreteMeasure, beta: Option<f64>, cfg: &SdeConfig, num_paths: usize) -> Result<AuditReport> {
    cfg.validate()?;
    let mean: Vec<f64> = nu.mean().iter().copied().collect();
    let mut report = AuditReport::new("h-drift", format!("n={}", nu.n()));
    report.param("paths", num_paths).param("sde", cfg).param("beta", beta);
    report.assert(Assertion::eq("h(mean) = sum of marginal entropies", h_of_mean(&mean), nu.marginal_entropy_sum(), 1e-10));
    let b = beta.unwrap_or(f64::INFINITY);
    let coarse = h_drift_paths(nu, cfg, num_paths, b)?;
    let half = SdeConfig { dt: cfg.dt / 2.0, ..cfg.clone() };
    let fine = h_drift_paths(nu, &half, num_paths, b)?;
    for (k, &(s, e)) in H_DRIFT_WINDOWS.iter().enumerate() {
        let resid = |paths: &[(Vec<(f64, f64)>, f64)]| {
            let r: Vec<f64> = paths.iter().map(|p| p.0[k].0 - p.0[k].1).collect();
            MeanEstimate::from_samples(&r)
        };
        let est = resid(&coarse);
        let est_fine = resid(&fine);
        let allowance = (est.mean - est_fine.mean).abs();
        let drift = MeanEstimate::from_samples(&coarse.iter().map(|p| p.0[k].1).collect::<Vec<_>>());
        report.assert(Assertion::eq(format!("E[h(a_e) - h(a_s)] = -1/2 E int Tr(A D^-1 A) on [{s},{e})"), est.mean, 0.0, 4.0 * est.se + allowance + 1e-12));
        report.diag(&format!("drift_window_{k}"), drift.mean);
        report.diag(&format!("residual_se_window_{k}"), est.se);
    }
    if beta.is_some() {
        let excess = coarse.iter().chain(&fine).map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let excess = if excess.is_finite() { excess } else { 0.0 };
        report.assert(Assertion::le("pathwise Tr(A D^-1 A) - beta Tr A", excess, 0.0, 1e-9));
    }
    Ok(report)
}

/// Both parts of the Rayleigh corollary: part 2 (`Σ_i ℋ(ν_i) ≤ 2ℋ(ν)`)
/// exactly, and part 1 in the property form of [`main_theorem_audit`] with
/// `β = 2` when `chain.paths > 0`.
pub fn rayleigh_corollary_audit(nu: &DiscreteMeasure, search: &SearchConfig, phis: &[TestFunction], chain: &MainTheoremConfig) -> Result<AuditReport> {
    let cert = laplace::certify(nu, Condition::Rayleigh, search, None)?;
    if cert.verdict == Verdict::Fail {
        return Err(Error::CertificationFailed(format!("positive tilted covariance {} at w = {:?}", cert.certified_value, cert.witness.0)));
    }
    let mut report = AuditReport::new("rayleigh-corollary", format!("n={}", nu.n()));
    report.param("search", search);
    report.diag("rayleigh_certified_value", cert.certified_value);
    report.absorb("part 2", entropy_theorem_check(nu, 2.0)?);
    if chain.paths > 0 {
        report.absorb("part 1", main_theorem_audit(nu, 2.0, phis, chain)?);
    }
    Ok(report)
}
