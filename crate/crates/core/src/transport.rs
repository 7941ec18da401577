//! Wasserstein-1 distances and the reflection coupling of two tilt paths.
//!
//! `W1` is taken with ground cost `‖x − y‖₁`. Since that cost is twice the
//! graph distance on the cube, the transport problem is solved as an
//! uncapacitated transshipment on the cube graph with edge cost 2. A
//! separate linear program over Lipschitz functions gives the dual value
//! for cross-checks at small `n`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::laplace::{self, TiltMean};
use crate::localization::run_paths;
use crate::measure::DiscreteMeasure;
use crate::report::{Assertion, AuditReport};
use crate::rng::{fill_standard_normal, path_rng};
use crate::stats::MeanEstimate;

/// Largest dimension accepted by [`w1_exact`].
pub const W1_MAX_N: usize = 10;
/// Largest dimension accepted by [`w1_dual`].
pub const W1_DUAL_MAX_N: usize = 5;

const FLOW_EPS: f64 = 1e-15;

fn check_pair(a: &DiscreteMeasure, b: &DiscreteMeasure, cap: usize) -> Result<usize> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch { expected: a.n(), got: b.n() });
    }
    if a.n() > cap {
        return Err(Error::DimensionTooLarge { n: a.n(), cap });
    }
    Ok(a.n())
}

/// Exact `W1(a, b)` by min-cost flow.
pub fn w1_exact(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    let n = check_pair(a, b, W1_MAX_N)?;
    w1_tables(n, a.weights(), b.weights())
}

/// Exact `W1` between two weight tables over `{-1,1}^n`.
pub fn w1_tables(n: usize, p: &[f64], q: &[f64]) -> Result<f64> {
    let size = 1usize << n;
    if p.len() != size || q.len() != size {
        return Err(Error::DimensionMismatch { expected: size, got: p.len().min(q.len()) });
    }
    let mut excess: Vec<f64> = p.iter().zip(q).map(|(x, y)| x - y).collect();
    // flow[x * n + i]: mass moved from x to x ^ (1 << i)
    let mut flow = vec![0.0f64; size * n];
    let mut pot = vec![0i64; size];
    let mut dist = vec![i64::MAX; size];
    let mut pred: Vec<Option<(usize, usize, bool)>> = vec![None; size];
    let mut origin = vec![usize::MAX; size];
    let mut heap = BinaryHeap::new();
    let mut iterations = 0usize;
    loop {
        if !excess.iter().any(|&e| e > FLOW_EPS) || !excess.iter().any(|&e| e < -FLOW_EPS) {
            break;
        }
        iterations += 1;
        if iterations > 64 * size * (n + 1) {
            return Err(Error::Solver("min-cost flow did not converge".into()));
        }
        dist.iter_mut().for_each(|d| *d = i64::MAX);
        pred.iter_mut().for_each(|p| *p = None);
        heap.clear();
        for x in 0..size {
            if excess[x] > FLOW_EPS {
                dist[x] = 0;
                origin[x] = x;
                heap.push(Reverse((0i64, x)));
            }
        }
        let mut target = None;
        while let Some(Reverse((d, x))) = heap.pop() {
            if d > dist[x] {
                continue;
            }
            if excess[x] < -FLOW_EPS {
                target = Some(x);
                break;
            }
            for i in 0..n {
                let y = x ^ (1 << i);
                // forward arc x -> y, cost 2
                let rc = 2 + pot[x] - pot[y];
                if d + rc < dist[y] {
                    dist[y] = d + rc;
                    pred[y] = Some((x, i, true));
                    origin[y] = origin[x];
                    heap.push(Reverse((dist[y], y)));
                }
                // undo flow on y -> x, cost -2
                if flow[y * n + i] > FLOW_EPS {
                    let rc = -2 + pot[x] - pot[y];
                    if d + rc < dist[y] {
                        dist[y] = d + rc;
                        pred[y] = Some((x, i, false));
                        origin[y] = origin[x];
                        heap.push(Reverse((dist[y], y)));
                    }
                }
            }
        }
        let t = target.ok_or_else(|| Error::Solver("no augmenting path".into()))?;
        let dt = dist[t];
        for x in 0..size {
            pot[x] += dist[x].min(dt);
        }
        let s = origin[t];
        let mut amount = excess[s].min(-excess[t]);
        let mut v = t;
        while let Some((u, i, fwd)) = pred[v] {
            if !fwd {
                amount = amount.min(flow[v * n + i]);
            }
            v = u;
        }
        let mut v = t;
        while let Some((u, i, fwd)) = pred[v] {
            if fwd {
                flow[u * n + i] += amount;
            } else {
                flow[v * n + i] -= amount;
                if flow[v * n + i] < FLOW_EPS {
                    flow[v * n + i] = 0.0;
                }
            }
            v = u;
        }
        excess[s] -= amount;
        excess[t] += amount;
    }
    Ok(2.0 * flow.iter().sum::<f64>())
}

/// `W1(a, b)` as `max Σ ψ(x)(a(x) − b(x))` over `ψ` with `|ψ(x) − ψ(y)| ≤ 2`
/// on cube edges, solved by a dense simplex with Bland's rule.
pub fn w1_dual(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    let n = check_pair(a, b, W1_DUAL_MAX_N)?;
    let size = 1usize << n;
    let mut c: Vec<f64> = a.weights().iter().zip(b.weights()).map(|(x, y)| x - y).collect();
    let drift: f64 = c.iter().sum::<f64>() / size as f64;
    c.iter_mut().for_each(|v| *v -= drift);
    // rows: ψ_x − ψ_y ≤ 2 for every ordered adjacent pair
    let mut rows = Vec::with_capacity(size * n);
    for x in 0..size {
        for i in 0..n {
            rows.push((x, x ^ (1 << i)));
        }
    }
    let m = rows.len();
    let cols = size + m;
    // tableau rows 0..m are constraints, row m is the objective
    let width = cols + 1;
    let mut tab = vec![0.0f64; (m + 1) * width];
    for (r, &(x, y)) in rows.iter().enumerate() {
        tab[r * width + x] = 1.0;
        tab[r * width + y] = -1.0;
        tab[r * width + size + r] = 1.0;
        tab[r * width + cols] = 2.0;
    }
    for x in 0..size {
        tab[m * width + x] = -c[x];
    }
    let mut basis: Vec<usize> = (size..cols).collect();
    let tol = 1e-12;
    for _ in 0..100_000 {
        let Some(enter) = (0..cols).find(|&j| tab[m * width + j] < -tol) else {
            let value = tab[m * width + cols];
            return Ok(value);
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let coef = tab[r * width + enter];
            if coef > tol {
                let ratio = tab[r * width + cols] / coef;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => ratio < lratio - tol || ((ratio - lratio).abs() <= tol && basis[r] < basis[lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        let (pr, _) = leave.ok_or_else(|| Error::Solver("dual program is unbounded".into()))?;
        let piv = tab[pr * width + enter];
        for j in 0..width {
            tab[pr * width + j] /= piv;
        }
        for r in 0..=m {
            if r == pr {
                continue;
            }
            let f = tab[r * width + enter];
            if f != 0.0 {
                for j in 0..width {
                    tab[r * width + j] -= f * tab[pr * width + j];
                }
            }
        }
        basis[pr] = enter;
    }
    Err(Error::Solver("simplex iteration limit reached".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub dt: f64,
    /// Simulation horizon; runs stop earlier once coupled.
    pub horizon: f64,
    /// Coupling is declared when `|u − w|` drops to this; `None` means
    /// `1e-8·√n`.
    pub coupling_tol: Option<f64>,
    /// Times at which `Y_t` and `|a(w_t) − a(u_t)|` are recorded.
    pub checkpoints: Vec<f64>,
    /// Keep every `record_stride`-th state in the path fields; 0 keeps none.
    pub record_stride: usize,
    pub seed: u64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { dt: 1e-3, horizon: 1.0, coupling_tol: None, checkpoints: vec![0.25, 0.5, 0.75, 1.0], record_stride: 0, seed: 0 }
    }
}

impl CouplingConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt < 1.0) {
            return Err(Error::InvalidArgument(format!("dt must lie in (0,1), got {}", self.dt)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if self.checkpoints.iter().any(|&t| !(0.0..=self.horizon + 1e-12).contains(&t)) {
            return Err(Error::InvalidArgument("checkpoints must lie in [0, horizon]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CouplingRun {
    pub times: Vec<f64>,
    pub w_path: Vec<Vec<f64>>,
    pub u_path: Vec<Vec<f64>>,
    /// `Y_t = |u_t − w_t|` at the recorded times.
    pub y: Vec<f64>,
    pub tau: Option<f64>,
    /// `τ ≤ 1`.
    pub event_e: bool,
    pub reflections_applied: usize,
    /// `Y_{t∧τ}` at each checkpoint.
    pub y_at: Vec<f64>,
    /// `|a_ν(w_t) − a_ν(u_t)|` at each checkpoint.
    pub drift_gap_at: Vec<f64>,
    /// `max_t |a_ν(u_t) − a_ν(w_t)| / |u_t − w_t|` before coupling.
    pub max_drift_ratio: f64,
    /// `Σ (ΔY)²` over pre-coupling steps.
    pub qv_sum: f64,
    pub qv_steps: usize,
    pub terminal_w: Vec<f64>,
    pub terminal_u: Vec<f64>,
}

impl CouplingRun {
    /// CSV with header `t,Y,coupled`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,Y,coupled")?;
        for (t, y) in self.times.iter().zip(&self.y) {
            let coupled = self.tau.is_some_and(|tau| *t >= tau);
            writeln!(out, "{t},{y},{}", u8::from(coupled))?;
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Runs `w` from `v` and `u` from `v + εθ`, driven by the same Brownian
/// motion with `u`'s increments reflected across the axis of `w − u` until
/// the two meet.
pub fn reflection_coupling(nu: &DiscreteMeasure, v: &[f64], eps: f64, theta: &[f64], cfg: &CouplingConfig, path_index: u64) -> Result<CouplingRun> {
    cfg.validate()?;
    let n = nu.n();
    if v.len() != n || theta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len().min(theta.len()) });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    if (norm(theta) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("theta must have unit norm, got {}", norm(theta))));
    }
    let tol = cfg.coupling_tol.unwrap_or(1e-8 * (n as f64).sqrt());
    let mut mean_w = TiltMean::new(nu);
    let mut mean_u = TiltMean::new(nu);
    let mut rng = path_rng(cfg.seed, path_index);
    let mut w = v.to_vec();
    let mut u: Vec<f64> = v.iter().zip(theta).map(|(vi, ti)| vi + eps * ti).collect();
    let mut aw = vec![0.0; n];
    let mut au = vec![0.0; n];
    mean_w.mean(&w, &mut aw);
    mean_u.mean(&u, &mut au);
    let mut z = vec![0.0; n];
    let mut axis = vec![0.0; n];
    let sd = cfg.dt.sqrt();
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let cp_steps: Vec<usize> = cfg.checkpoints.iter().map(|t| (t / cfg.dt).round() as usize).collect();

    let mut run = CouplingRun::default();
    let mut y = gap(&u, &w);
    let mut coupled = y <= tol;
    if coupled {
        run.tau = Some(0.0);
        u.copy_from_slice(&w);
        au.copy_from_slice(&aw);
        y = 0.0;
    }
    let record = |run: &mut CouplingRun, t: f64, w: &[f64], u: &[f64], y: f64| {
        run.times.push(t);
        run.w_path.push(w.to_vec());
        run.u_path.push(u.to_vec());
        run.y.push(y);
    };
    let checkpoint = |run: &mut CouplingRun, step: usize, y: f64, aw: &[f64], au: &[f64]| {
        for &c in &cp_steps {
            if c == step {
                run.y_at.push(y);
                run.drift_gap_at.push(gap(aw, au));
            }
        }
    };
    if cfg.record_stride > 0 {
        record(&mut run, 0.0, &w, &u, y);
    }
    checkpoint(&mut run, 0, y, &aw, &au);
    if !coupled {
        run.max_drift_ratio = gap(&au, &aw) / y;
    }

    for step in 1..=steps {
        let t = step as f64 * cfg.dt;
        fill_standard_normal(&mut rng, &mut z);
        if coupled {
            for i in 0..n {
                w[i] += sd * z[i] + aw[i] * cfg.dt;
            }
            mean_w.mean(&w, &mut aw);
            u.copy_from_slice(&w);
            au.copy_from_slice(&aw);
        } else {
            for i in 0..n {
                axis[i] = (u[i] - w[i]) / y;
            }
            let proj: f64 = axis.iter().zip(&z).map(|(e, zi)| e * zi).sum();
            for i in 0..n {
                w[i] += sd * z[i] + aw[i] * cfg.dt;
                u[i] += sd * (z[i] - 2.0 * axis[i] * proj) + au[i] * cfg.dt;
            }
            run.reflections_applied += 1;
            let along: f64 = (0..n).map(|i| axis[i] * (u[i] - w[i])).sum();
            let y_new = gap(&u, &w);
            run.qv_sum += (y_new - y).powi(2);
            run.qv_steps += 1;
            // Y moves like 2·(Brownian motion) along the axis
            let bridge_hit = along > 0.0 && rng.random::<f64>() < (-(y * along) / (2.0 * cfg.dt)).exp();
            if along <= 0.0 || y_new <= tol || bridge_hit {
                coupled = true;
                run.tau = Some(t);
                u.copy_from_slice(&w);
                mean_w.mean(&w, &mut aw);
                au.copy_from_slice(&aw);
                y = 0.0;
            } else {
                y = y_new;
                mean_w.mean(&w, &mut aw);
                mean_u.mean(&u, &mut au);
                run.max_drift_ratio = run.max_drift_ratio.max(gap(&au, &aw) / y);
            }
        }
        if cfg.record_stride > 0 && step % cfg.record_stride == 0 {
            record(&mut run, t, &w, &u, y);
        }
        checkpoint(&mut run, step, y, &aw, &au);
        if coupled && step >= cp_steps.iter().copied().max().unwrap_or(0) && cfg.record_stride == 0 {
            // the remaining checkpoints would all read zero
            break;
        }
    }
    while run.y_at.len() < cp_steps.len() {
        run.y_at.push(0.0);
        run.drift_gap_at.push(0.0);
    }
    run.event_e = run.tau.is_some_and(|tau| tau <= 1.0);
    run.terminal_w = w;
    run.terminal_u = u;
    Ok(run)
}

/// Independent coupling runs, one per path index.
pub fn coupling_batch(nu: &DiscreteMeasure, v: &[f64], eps: f64, theta: &[f64], cfg: &CouplingConfig, num_paths: usize) -> Result<Vec<CouplingRun>> {
    run_paths(num_paths, |i| reflection_coupling(nu, v, eps, theta, cfg, i))
}

/// `P(τ ≥ s)` for `τ` the hitting time of zero by `ε + W_t`.
pub fn driftless_survival_exact(eps: f64, s: f64) -> f64 {
    let normal = Normal::standard();
    2.0 * normal.cdf(eps / s.sqrt()) - 1.0
}

/// Hitting time of zero by `ε + σW_t` on `[0, horizon]`, simulated on a grid
/// with Brownian-bridge crossing detection between grid points.
pub fn driftless_hitting_time(eps: f64, sigma: f64, dt: f64, horizon: f64, seed: u64, path_index: u64) -> Option<f64> {
    let mut rng = path_rng(seed, path_index);
    let steps = (horizon / dt).round() as usize;
    let sd = sigma * dt.sqrt();
    let mut x = eps;
    let mut z = [0.0];
    for step in 1..=steps {
        fill_standard_normal(&mut rng, &mut z);
        let next = x + sd * z[0];
        if next <= 0.0 || rng.random::<f64>() < (-2.0 * x * next / (sigma * sigma * dt)).exp() {
            return Some(step as f64 * dt);
        }
        x = next;
    }
    None
}

/// Survival times for the hitting-lemma audit.
pub const HITTING_TIMES: [f64; 3] = [0.25, 1.0, 4.0];

/// Checks `P(τ ≥ s) ≤ ε/√s` for the driftless walk `ε + W_t` and compares
/// with the reflection-principle value `2Φ(ε/√s) − 1`.
pub fn hitting_lemma_audit(eps: f64, num_paths: usize, dt: f64, seed: u64) -> Result<AuditReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let horizon = HITTING_TIMES[HITTING_TIMES.len() - 1];
    let taus = run_paths(num_paths, |i| Ok(driftless_hitting_time(eps, 1.0, dt, horizon, seed, i)))?;
    let mut report = AuditReport::new("hitting-lemma", "eps + W_t");
    report.param("eps", eps).param("paths", num_paths).param("dt", dt).param("seed", seed);
    for &s in &HITTING_TIMES {
        let alive: Vec<f64> = taus.iter().map(|t| f64::from(u8::from(t.is_none_or(|t| t >= s)))).collect();
        let est = MeanEstimate::from_samples(&alive);
        let exact = driftless_survival_exact(eps, s);
        report.assert(Assertion::le(format!("P(tau >= {s}) <= eps/sqrt(s)"), est.mean, eps / s.sqrt(), 4.0 * est.se));
        report.assert(Assertion::eq(format!("P(tau >= {s}) = 2 Phi(eps/sqrt(s)) - 1"), est.mean, exact, 4.0 * est.se));
        report.diag(&format!("se_s{s}"), est.se);
    }
    Ok(report)
}

/// Checks the drift contraction and the supermartingale property of
/// `e^{−βt} Y_{t∧τ}` on a batch of coupling runs.
pub fn supermartingale_audit(beta: f64, eps: f64, cfg: &CouplingConfig, runs: &[CouplingRun], label: &str) -> Result<AuditReport> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("no coupling runs".into()));
    }
    let mut report = AuditReport::new("supermartingale", label);
    report.param("beta", beta).param("eps", eps).param("paths", runs.len()).param("coupling", cfg);
    let ratio = runs.iter().map(|r| r.max_drift_ratio).fold(0.0, f64::max);
    report.assert(Assertion::le("pathwise |a(u) - a(w)| / |u - w| <= beta", ratio, beta, 1e-9));
    let mut prev: Option<MeanEstimate> = None;
    for (k, &t) in cfg.checkpoints.iter().enumerate() {
        let discounted: Vec<f64> = runs.iter().map(|r| (-beta * t).exp() * r.y_at[k]).collect();
        let plain: Vec<f64> = runs.iter().map(|r| r.y_at[k]).collect();
        let d = MeanEstimate::from_samples(&discounted);
        let p = MeanEstimate::from_samples(&plain);
        if let Some(prev) = prev {
            let se = (prev.se.powi(2) + d.se.powi(2)).sqrt();
            report.assert(Assertion::le(format!("E e^(-beta t) Y non-increasing at t={t}"), d.mean, prev.mean, 4.0 * se));
        }
        report.assert(Assertion::le(format!("E Y_(t^tau) <= e^(beta t) eps at t={t}"), p.mean, (beta * t).exp() * eps, 4.0 * p.se));
        prev = Some(d);
    }
    let (qv, steps) = runs.iter().fold((0.0, 0usize), |(q, s), r| (q + r.qv_sum, s + r.qv_steps));
    if steps > 0 {
        report.diag("qv_per_step_over_dt", qv / steps as f64 / cfg.dt);
    }
    Ok(report)
}

/// Right-hand side `4εβ n^{1 − 1/(32β)}` of the transport bound.
pub fn transport_rhs(eps: f64, beta: f64, n: usize) -> f64 {
    4.0 * eps * beta * (n as f64).powf(1.0 - 1.0 / (32.0 * beta))
}

/// Time used by the coupling diagnostic, `log(2n)/(2β + 1/8)`.
pub fn coupling_time(beta: f64, n: usize) -> f64 {
    (2.0 * n as f64).ln() / (2.0 * beta + 0.125)
}

/// Checks `W1(τ_v ν, τ_{v+εθ} ν) ≤ 4εβ n^{1−1/(32β)}` exactly and, when
/// `coupling_paths > 0`, reports the coupling estimate of the same quantity.
#[allow(clippy::too_many_arguments)]
pub fn transport_bound_audit(
    nu: &DiscreteMeasure,
    beta: f64,
    v: &[f64],
    theta: &[f64],
    eps: f64,
    coupling_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<AuditReport> {
    if !(eps > 0.0 && eps < 0.1) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 0.1), got {eps}")));
    }
    let n = nu.n();
    if n > W1_MAX_N {
        return Err(Error::DimensionTooLarge { n, cap: W1_MAX_N });
    }
    if v.len() != n || theta.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len().min(theta.len()) });
    }
    let shifted: Vec<f64> = v.iter().zip(theta).map(|(a, b)| a + eps * b).collect();
    let lhs = w1_exact(&laplace::tilt(nu, v)?, &laplace::tilt(nu, &shifted)?)?;
    let rhs = transport_rhs(eps, beta, n);
    let mut report = AuditReport::new("transport-bound", format!("n={n}"));
    report.param("beta", beta).param("eps", eps).param("v", v).param("theta", theta);
    report.assert(Assertion::le("W1(tau_v nu, tau_(v+eps theta) nu) <= 4 eps beta n^(1-1/(32 beta))", lhs, rhs, 1e-12));
    report.diag("ratio", lhs / rhs);
    if coupling_paths > 0 {
        let t_star = coupling_time(beta, n);
        let cfg = CouplingConfig { dt, horizon: t_star.max(1.0), checkpoints: vec![t_star.min(1.0), t_star], seed, ..CouplingConfig::default() };
        let runs = coupling_batch(nu, v, eps, theta, &cfg, coupling_paths)?;
        let gaps: Vec<f64> = runs.iter().map(|r| (n as f64).sqrt() * r.drift_gap_at[1]).collect();
        let est = MeanEstimate::from_samples(&gaps);
        let not_e: Vec<f64> = runs.iter().map(|r| f64::from(u8::from(!r.event_e))).collect();
        let pe = MeanEstimate::from_samples(&not_e);
        report.param("coupling_paths", coupling_paths).param("dt", dt).param("seed", seed);
        report.diag("coupling_time", t_star);
        report.diag("coupling_estimate", est.mean);
        report.diag("coupling_estimate_se", est.se);
        report.diag("p_not_e", pe.mean);
        report.diag("p_not_e_se", pe.se);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::HypercubePoint;

    fn dirac(signs: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::dirac(HypercubePoint::from_signs(signs).unwrap()).unwrap()
    }

    #[test]
    fn dirac_pairs_cost_l1_distance() {
        let a = dirac(&[1.0, -1.0, 1.0]);
        let b = dirac(&[-1.0, -1.0, -1.0]);
        assert_eq!(w1_exact(&a, &b).unwrap(), 4.0);
        assert_eq!(w1_exact(&a, &a).unwrap(), 0.0);
        assert!((w1_dual(&a, &b).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_tilt_costs_tanh() {
        let u = DiscreteMeasure::uniform(1).unwrap();
        let e = 0.3f64;
        let t = laplace::tilt(&u, &[e]).unwrap();
        assert!((w1_exact(&u, &t).unwrap() - e.tanh()).abs() < 1e-14);
        assert!((w1_dual(&u, &t).unwrap() - e.tanh()).abs() < 1e-12);
    }

    #[test]
    fn product_tilt_separates_over_coordinates() {
        let u = DiscreteMeasure::uniform(4).unwrap();
        let t = laplace::tilt(&u, &[0.05, 0.0, 0.0, 0.0]).unwrap();
        assert!((w1_exact(&u, &t).unwrap() - 0.05f64.tanh()).abs() < 1e-14);
    }

    #[test]
    fn guards_are_enforced() {
        let a = DiscreteMeasure::uniform(3).unwrap();
        let b = DiscreteMeasure::uniform(2).unwrap();
        assert!(matches!(w1_exact(&a, &b), Err(Error::DimensionMismatch { .. })));
        let big = DiscreteMeasure::uniform(6).unwrap();
        assert!(matches!(w1_dual(&big, &big), Err(Error::DimensionTooLarge { .. })));
        let huge = DiscreteMeasure::uniform(11).unwrap();
        assert!(matches!(w1_exact(&huge, &huge), Err(Error::DimensionTooLarge { .. })));
    }

    #[test]
    fn survival_oracle_values() {
        assert!((driftless_survival_exact(0.1, 1.0) - 0.079_655_674_554).abs() < 1e-9);
        assert!(driftless_survival_exact(0.1, 4.0) <= 0.05);
    }

    #[test]
    fn coupling_starts_at_eps_and_is_reproducible() {
        let u = DiscreteMeasure::uniform(3).unwrap();
        let theta = [1.0, 0.0, 0.0];
        let cfg = CouplingConfig { record_stride: 10, ..CouplingConfig::default() };
        let a = reflection_coupling(&u, &[0.0; 3], 0.05, &theta, &cfg, 3).unwrap();
        let b = reflection_coupling(&u, &[0.0; 3], 0.05, &theta, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert!((a.y[0] - 0.05).abs() < 1e-15);
        if let Some(tau) = a.tau {
            for (t, (w, u)) in a.times.iter().zip(a.w_path.iter().zip(&a.u_path)) {
                if *t >= tau {
                    assert_eq!(w, u);
                }
            }
        }
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("t,Y,coupled\n0,0.05,0\n"));
    }

    #[test]
    fn coupling_rejects_bad_theta() {
        let u = DiscreteMeasure::uniform(2).unwrap();
        assert!(reflection_coupling(&u, &[0.0, 0.0], 0.1, &[1.0, 1.0], &CouplingConfig::default(), 0).is_err());
    }

    #[test]
    fn transport_example_values() {
        let u = DiscreteMeasure::uniform(4).unwrap();
        let r = transport_bound_audit(&u, 1.0, &[0.0; 4], &[1.0, 0.0, 0.0, 0.0], 0.05, 0, 1e-3, 0).unwrap();
        assert!(r.passed());
        assert!((r.assertions[0].lhs - 0.049_958_374_957_880_05).abs() < 1e-12);
        assert!((r.assertions[0].rhs - 0.766_1).abs() < 1e-3);
    }
}
