//! Stochastic localization on the cube.
//!
//! Two discretizations of the same process are provided. The tilt form
//! integrates `dw_t = dB_t + a_ν(w_t) dt` and reads the measure off as
//! `ν_t = τ_{w_t} ν`; the measure form integrates
//! `dF_t(x) = F_t(x)⟨x − a_t, dB_t⟩` directly on the weight table. Both use
//! Euler–Maruyama with a fixed step.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplace::{TiltKernel, TiltMean, TiltVector};
use crate::measure::{coord, DiscreteMeasure, HypercubePoint};
use crate::report::{Assertion, AuditReport};
use crate::rng::{fill_standard_normal, path_rng, PathRng};
use crate::stats::{total_variation, MeanEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scheme {
    TiltEuler,
    MeasureEuler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Collapse when `max_i (1 − a_i²)` drops below this.
    pub collapse_tol: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Trajectories keep every `record_stride`-th step.
    pub record_stride: usize,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self { dt: 1e-3, t_max: 60.0, collapse_tol: 1e-6, seed: 0, scheme: Scheme::TiltEuler, record_stride: 10 }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt < 1.0) {
            return Err(Error::InvalidArgument(format!("dt must lie in (0,1), got {}", self.dt)));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::InvalidArgument("t_max must be positive".into()));
        }
        if !(self.collapse_tol > 0.0 && self.collapse_tol < 1.0) {
            return Err(Error::InvalidArgument("collapse_tol must lie in (0,1)".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidArgument("record_stride must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Paths whose clamped mass exceeds this are flagged.
pub const CLAMP_FLAG_THRESHOLD: f64 = 1e-3;

/// One Euler–Maruyama step of `dw = dB + a_ν(w) dt`.
pub fn step_tilt(nu: &DiscreteMeasure, w: &[f64], dt: f64, noise: &[f64]) -> Result<TiltVector> {
    if w.len() != nu.n() || noise.len() != nu.n() {
        return Err(Error::DimensionMismatch { expected: nu.n(), got: w.len().min(noise.len()) });
    }
    if w.iter().chain(noise).any(|v| !v.is_finite()) || !dt.is_finite() {
        return Err(Error::NonFinite("step_tilt input"));
    }
    let mut k = TiltKernel::new(nu);
    k.update(w);
    let a = k.mean();
    let sd = dt.sqrt();
    Ok(TiltVector((0..nu.n()).map(|i| w[i] + sd * noise[i] + a[i] * dt).collect()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StepDiagnostics {
    /// Negative mass removed by clamping.
    pub clamped_mass: f64,
    /// Total mass before renormalization.
    pub mass_before: f64,
}

/// One step of `dF(x) = F(x)⟨x − a, dB⟩` on a dense table of `ν_t`
/// weights, followed by clamping of negative entries and renormalization.
pub fn step_measure(probs: &[f64], n: usize, a: &[f64], dt: f64, noise: &[f64]) -> Result<(Vec<f64>, StepDiagnostics)> {
    if probs.len() != 1 << n {
        return Err(Error::DimensionMismatch { expected: 1 << n, got: probs.len() });
    }
    let sd = dt.sqrt();
    let mut out = vec![0.0; probs.len()];
    let mut diag = StepDiagnostics::default();
    for (x, (&p, o)) in probs.iter().zip(out.iter_mut()).enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for i in 0..n {
            inner += (coord(x as u32, i) - a[i]) * noise[i];
        }
        let v = p * (1.0 + sd * inner);
        if v < 0.0 {
            diag.clamped_mass -= v;
        } else {
            *o = v;
        }
        diag.mass_before += v;
    }
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(Error::MassCollapse);
    }
    out.iter_mut().for_each(|v| *v /= total);
    Ok((out, diag))
}

/// Mean of a dense weight table.
pub fn table_mean(probs: &[f64], n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n];
    for (x, &p) in probs.iter().enumerate() {
        if p != 0.0 {
            for (i, ai) in a.iter_mut().enumerate() {
                *ai += p * coord(x as u32, i);
            }
        }
    }
    a
}

/// State of a single localization path.
pub struct Localizer<'a> {
    kernel: TiltKernel<'a>,
    fast: TiltMean<'a>,
    /// Set when the kernel's probabilities lag behind `w`.
    stale: bool,
    scheme: Scheme,
    dt: f64,
    sqrt_dt: f64,
    collapse_tol: f64,
    rng: PathRng,
    noise: Vec<f64>,
    w: Vec<f64>,
    a: Vec<f64>,
    /// `ν_t` in support order (measure scheme only).
    probs: Vec<f64>,
    t: f64,
    steps: u64,
    collapsed: bool,
    clamped_mass: f64,
    clamp_events: usize,
}

impl<'a> Localizer<'a> {
    /// Starts at tilt `start` (so `ν_0 = τ_start ν`).
    pub fn new(nu: &'a DiscreteMeasure, start: &[f64], cfg: &SdeConfig, path_index: u64) -> Self {
        let mut kernel = TiltKernel::new(nu);
        kernel.update(start);
        let n = nu.n();
        let mut a = vec![0.0; n];
        kernel.mean_into(&mut a);
        let probs = if cfg.scheme == Scheme::MeasureEuler { kernel.probs().to_vec() } else { Vec::new() };
        let mut s = Self {
            kernel,
            fast: TiltMean::new(nu),
            stale: false,
            scheme: cfg.scheme,
            dt: cfg.dt,
            sqrt_dt: cfg.dt.sqrt(),
            collapse_tol: cfg.collapse_tol,
            rng: path_rng(cfg.seed, path_index),
            noise: vec![0.0; n],
            w: start.to_vec(),
            a,
            probs,
            t: 0.0,
            steps: 0,
            collapsed: false,
            clamped_mass: 0.0,
            clamp_events: 0,
        };
        s.check_collapse();
        s
    }

    fn check_collapse(&mut self) {
        self.collapsed = self.a.iter().all(|ai| 1.0 - ai * ai < self.collapse_tol);
    }

    /// Draws the next Brownian increment (standard normals) into the buffer.
    pub fn draw_noise(&mut self) {
        fill_standard_normal(&mut self.rng, &mut self.noise);
    }

    /// Advances one step with a freshly drawn increment. No-op once collapsed.
    pub fn step(&mut self) -> Result<()> {
        if self.collapsed {
            return Ok(());
        }
        self.draw_noise();
        self.step_with_current_noise()
    }

    /// Advances one step using the supplied standard normals.
    pub fn step_with_noise(&mut self, noise: &[f64]) -> Result<()> {
        if self.collapsed {
            return Ok(());
        }
        self.noise.copy_from_slice(noise);
        self.step_with_current_noise()
    }

    fn step_with_current_noise(&mut self) -> Result<()> {
        let n = self.w.len();
        match self.scheme {
            Scheme::TiltEuler => {
                for i in 0..n {
                    self.w[i] += self.sqrt_dt * self.noise[i] + self.a[i] * self.dt;
                }
                self.fast.mean(&self.w, &mut self.a);
                self.stale = true;
            }
            Scheme::MeasureEuler => {
                let support = self.kernel.measure().support();
                let mut total = 0.0;
                let mut clamped = 0.0;
                for (p, &x) in self.probs.iter_mut().zip(support) {
                    let mut inner = 0.0;
                    for i in 0..n {
                        inner += (coord(x, i) - self.a[i]) * self.noise[i];
                    }
                    let v = *p * (1.0 + self.sqrt_dt * inner);
                    if v < 0.0 {
                        clamped -= v;
                        *p = 0.0;
                    } else {
                        *p = v;
                        total += v;
                    }
                }
                if !(total > 0.0) {
                    return Err(Error::MassCollapse);
                }
                if clamped > 0.0 {
                    self.clamped_mass += clamped;
                    self.clamp_events += 1;
                }
                self.probs.iter_mut().for_each(|p| *p /= total);
                for i in 0..n {
                    self.w[i] += self.sqrt_dt * self.noise[i] + self.a[i] * self.dt;
                }
                self.a.iter_mut().for_each(|v| *v = 0.0);
                let mut plus = vec![0.0; n];
                for (&p, &x) in self.probs.iter().zip(support) {
                    for (i, pl) in plus.iter_mut().enumerate() {
                        if x >> i & 1 == 1 {
                            *pl += p;
                        }
                    }
                }
                for i in 0..n {
                    self.a[i] = 2.0 * plus[i] - 1.0;
                }
            }
        }
        self.t += self.dt;
        self.steps += 1;
        self.check_collapse();
        Ok(())
    }

    /// Steps until time `t` (to the nearest grid point) or collapse.
    pub fn run_until(&mut self, t: f64) -> Result<()> {
        let target = (t / self.dt).round() as u64;
        while self.steps < target && !self.collapsed {
            self.step()?;
        }
        Ok(())
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn collapsed(&self) -> bool {
        self.collapsed
    }

    pub fn clamped_mass(&self) -> f64 {
        self.clamped_mass
    }

    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    /// `Tr A_t = Σ_i (1 − a_i²)`.
    pub fn trace_cov(&self) -> f64 {
        TiltKernel::trace_cov_given_mean(&self.a)
    }

    fn refresh(&mut self) {
        if self.stale {
            self.kernel.update_probs(&self.w);
            self.stale = false;
        }
    }

    fn fresh_probs(&self) -> &[f64] {
        match self.scheme {
            Scheme::TiltEuler => self.kernel.probs(),
            Scheme::MeasureEuler => &self.probs,
        }
    }

    /// `ν_t` in support order.
    pub fn probs(&mut self) -> &[f64] {
        self.refresh();
        self.fresh_probs()
    }

    pub fn support(&self) -> &[u32] {
        self.kernel.measure().support()
    }

    pub fn covariance(&mut self) -> DMatrix<f64> {
        self.refresh();
        let n = self.a.len();
        let mut c = DMatrix::zeros(n, n);
        let mut d = vec![0.0; n];
        for (&p, &x) in self.fresh_probs().iter().zip(self.support()) {
            for i in 0..n {
                d[i] = coord(x, i) - self.a[i];
            }
            for i in 0..n {
                for j in 0..n {
                    c[(i, j)] += p * d[i] * d[j];
                }
            }
        }
        c
    }

    pub fn mean_var(&mut self, values: &[f64]) -> (f64, f64) {
        self.refresh();
        let probs = self.fresh_probs();
        let m: f64 = probs.iter().zip(self.support()).map(|(&p, &x)| p * values[x as usize]).sum();
        let v = probs
            .iter()
            .zip(self.support())
            .map(|(&p, &x)| {
                let d = values[x as usize] - m;
                p * d * d
            })
            .sum();
        (m, v)
    }

    pub fn mass_of(&mut self, indicator: &[bool]) -> f64 {
        self.refresh();
        self.fresh_probs().iter().zip(self.support()).filter(|(_, &x)| indicator[x as usize]).map(|(&p, _)| p).sum()
    }

    /// Coordinatewise sign of `a_t`.
    pub fn terminal(&self) -> HypercubePoint {
        HypercubePoint::sign_of(&self.a)
    }

    /// Upper bound `Σ_i (1 − |a_i|)/2` on the conditional probability that
    /// the limit point differs from [`Localizer::terminal`].
    pub fn snap_bias(&self) -> f64 {
        self.a.iter().map(|ai| (1.0 - ai.abs()) / 2.0).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LocalizationTrajectory {
    pub times: Vec<f64>,
    pub tilts: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub trace_cov: Vec<f64>,
    pub terminal_point: Option<HypercubePoint>,
    pub clamped_mass: f64,
    pub clamp_events: usize,
    /// Set when clamped mass exceeds [`CLAMP_FLAG_THRESHOLD`].
    pub flagged: bool,
}

impl LocalizationTrajectory {
    fn push(&mut self, loc: &Localizer<'_>) {
        self.times.push(loc.t());
        self.tilts.push(loc.w().to_vec());
        self.means.push(loc.a().to_vec());
        self.trace_cov.push(loc.trace_cov());
    }

    /// CSV with header `t,w_1..w_n,a_1..a_n,trace_cov`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.tilts.first().map_or(0, |w| w.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("w_{i}")));
        header.extend((1..=n).map(|i| format!("a_{i}")));
        header.push("trace_cov".into());
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.times.len() {
            let mut row = vec![format!("{}", self.times[k])];
            row.extend(self.tilts[k].iter().map(|v| format!("{v}")));
            row.extend(self.means[k].iter().map(|v| format!("{v}")));
            row.push(format!("{}", self.trace_cov[k]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Runs one localization path from `w_0 = 0`.
pub fn run_localization(nu: &DiscreteMeasure, cfg: &SdeConfig) -> Result<LocalizationTrajectory> {
    run_localization_path(nu, &vec![0.0; nu.n()], cfg, 0)
}

/// Runs one path from `w_0 = start` until collapse or `t_max`.
pub fn run_localization_path(nu: &DiscreteMeasure, start: &[f64], cfg: &SdeConfig, path_index: u64) -> Result<LocalizationTrajectory> {
    cfg.validate()?;
    if start.len() != nu.n() {
        return Err(Error::DimensionMismatch { expected: nu.n(), got: start.len() });
    }
    let mut loc = Localizer::new(nu, start, cfg, path_index);
    let mut traj = LocalizationTrajectory::default();
    traj.push(&loc);
    let max_steps = (cfg.t_max / cfg.dt).round() as u64;
    while !loc.collapsed() && loc.steps() < max_steps {
        loc.step()?;
        if loc.steps().is_multiple_of(cfg.record_stride as u64) || loc.collapsed() {
            traj.push(&loc);
        }
    }
    if traj.times.last() != Some(&loc.t()) {
        traj.push(&loc);
    }
    traj.terminal_point = loc.collapsed().then(|| loc.terminal());
    traj.clamped_mass = loc.clamped_mass();
    traj.clamp_events = loc.clamp_events();
    traj.flagged = loc.clamped_mass() > CLAMP_FLAG_THRESHOLD;
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub point: HypercubePoint,
    pub collapsed: bool,
    pub time: f64,
    /// See [`Localizer::snap_bias`].
    pub snap_bias: f64,
}

/// One draw from (approximately) `τ_v ν`: run `du = dB + a_ν(u) dt` from
/// `u_0 = v` and read off the terminal sign of `a_ν(u_t)`.
pub fn sample_tilted(nu: &DiscreteMeasure, v: &[f64], cfg: &SdeConfig, path_index: u64) -> Result<Sample> {
    cfg.validate()?;
    if v.len() != nu.n() {
        return Err(Error::DimensionMismatch { expected: nu.n(), got: v.len() });
    }
    let mut loc = Localizer::new(nu, v, cfg, path_index);
    loc.run_until(cfg.t_max)?;
    Ok(Sample { point: loc.terminal(), collapsed: loc.collapsed(), time: loc.t(), snap_bias: loc.snap_bias() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalLaw {
    pub n: usize,
    pub counts: Vec<u64>,
    /// Paths that hit `t_max` before collapsing (still counted by sign).
    pub truncated: usize,
    pub mean_collapse_time: f64,
    /// Mean of the per-sample snap bias; bounds the total-variation error
    /// introduced by snapping to the sign of `a_t`.
    pub snap_bias_bound: f64,
}

impl EmpiricalLaw {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    pub fn tv_to(&self, nu: &DiscreteMeasure) -> f64 {
        total_variation(&self.probabilities(), nu.weights())
    }

    pub fn mean(&self) -> Vec<f64> {
        table_mean(&self.probabilities(), self.n)
    }
}

/// Runs `f(path_index)` for every path and returns results in index order.
pub fn run_paths<T, F>(num_paths: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..num_paths as u64).into_par_iter().map(f).collect()
}

pub fn sample_tilted_batch(nu: &DiscreteMeasure, v: &[f64], cfg: &SdeConfig, num_samples: usize) -> Result<EmpiricalLaw> {
    let samples = run_paths(num_samples, |i| sample_tilted(nu, v, cfg, i))?;
    let mut counts = vec![0u64; 1 << nu.n()];
    let mut truncated = 0;
    let mut times = Vec::with_capacity(samples.len());
    let mut bias = Vec::with_capacity(samples.len());
    for s in &samples {
        counts[s.point.bits as usize] += 1;
        truncated += usize::from(!s.collapsed);
        times.push(s.time);
        bias.push(s.snap_bias);
    }
    Ok(EmpiricalLaw {
        n: nu.n(),
        counts,
        truncated,
        mean_collapse_time: MeanEstimate::from_samples(&times).mean,
        snap_bias_bound: MeanEstimate::from_samples(&bias).mean,
    })
}

/// Standard checkpoints for the martingale audit.
pub const MARTINGALE_CHECKPOINTS: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

/// Checks `E ν_t(A) = ν(A)` and `E a_t = mean(ν)` at the checkpoints.
pub fn martingale_audit(nu: &DiscreteMeasure, set: &[bool], cfg: &SdeConfig, num_paths: usize) -> Result<AuditReport> {
    cfg.validate()?;
    if set.len() != 1 << nu.n() {
        return Err(Error::DimensionMismatch { expected: 1 << nu.n(), got: set.len() });
    }
    let n = nu.n();
    let cps = MARTINGALE_CHECKPOINTS;
    // per path: for each checkpoint, (ν_t(A), a_t)
    let per_path = run_paths(num_paths, |i| {
        let mut loc = Localizer::new(nu, &vec![0.0; n], cfg, i);
        let mut out = Vec::with_capacity(cps.len());
        for &t in &cps {
            loc.run_until(t)?;
            out.push((loc.mass_of(set), loc.a().to_vec()));
        }
        Ok(out)
    })?;
    let target = nu.mass_of(set);
    let mean = nu.mean();
    let mut report = AuditReport::new("martingale", format!("n={n}"));
    report.param("paths", num_paths).param("sde", cfg).param("set_mass", target);
    for (c, &t) in cps.iter().enumerate() {
        let masses: Vec<f64> = per_path.iter().map(|p| p[c].0).collect();
        let est = MeanEstimate::from_samples(&masses);
        report.assert(Assertion::eq(format!("E nu_t(A) = nu(A) at t={t}"), est.mean, target, 4.0 * est.se + 1e-12));
        report.diag(&format!("se_mass_t{t}"), est.se);
        for i in 0..n {
            let coords: Vec<f64> = per_path.iter().map(|p| p[c].1[i]).collect();
            let est = MeanEstimate::from_samples(&coords);
            report.assert(Assertion::eq(format!("E a_t[{i}] = mean[{i}] at t={t}"), est.mean, mean[i], 4.0 * est.se + 1e-12));
        }
    }
    Ok(report)
}

/// Standard checkpoints for the trace-decay audit.
pub const TRACE_CHECKPOINTS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

/// Checks `E Tr A_t ≤ n e^{−t/8}` at `times` and the pathwise identity
/// `diag(A_t) = 1 − a_t²` at every checkpoint.
pub fn trace_decay_audit(nu: &DiscreteMeasure, cfg: &SdeConfig, num_paths: usize, times: &[f64]) -> Result<AuditReport> {
    cfg.validate()?;
    let n = nu.n();
    let per_path = run_paths(num_paths, |i| {
        let mut loc = Localizer::new(nu, &vec![0.0; n], cfg, i);
        let mut out = Vec::with_capacity(times.len());
        let mut worst_diag = 0.0f64;
        for &t in times {
            loc.run_until(t)?;
            let cov = loc.covariance();
            for k in 0..n {
                worst_diag = worst_diag.max((cov[(k, k)] - (1.0 - loc.a()[k].powi(2))).abs());
            }
            out.push(cov.trace());
        }
        Ok((out, worst_diag))
    })?;
    let mut report = AuditReport::new("trace-decay", format!("n={n}"));
    report.param("paths", num_paths).param("sde", cfg).param("times", times);
    let tr0 = nu.covariance().trace();
    report.assert(Assertion::le("Tr A_0 <= n", tr0, n as f64, 1e-12));
    for (c, &t) in times.iter().enumerate() {
        let vals: Vec<f64> = per_path.iter().map(|p| p.0[c]).collect();
        let est = MeanEstimate::from_samples(&vals);
        let bound = n as f64 * (-t / 8.0).exp();
        report.assert(Assertion::le(format!("E Tr A_t <= n e^(-t/8) at t={t}"), est.mean, bound, 4.0 * est.se));
        report.diag(&format!("se_t{t}"), est.se);
    }
    let worst = per_path.iter().map(|p| p.1).fold(0.0, f64::max);
    report.assert(Assertion::le("pathwise |diag(A_t) - (1 - a_t^2)|", worst, 0.0, 1e-9));
    Ok(report)
}

/// Maximum over time of `|a_t^{tilt} − a_t^{measure}|` on a path where both
/// schemes are driven by the same Brownian path, observed on the coarse grid.
///
/// The fine run uses step `dt / refine`; the coarse run sums the fine
/// increments so both schemes see the same Brownian motion.
pub fn scheme_gap(nu: &DiscreteMeasure, dt: f64, refine: usize, horizon: f64, seed: u64, path_index: u64) -> Result<f64> {
    let n = nu.n();
    let fine_dt = dt / refine as f64;
    let mk = |scheme| SdeConfig { dt: fine_dt, t_max: horizon, collapse_tol: 1e-12, seed, scheme, record_stride: 1 };
    let mut tilt = Localizer::new(nu, &vec![0.0; n], &mk(Scheme::TiltEuler), path_index);
    let mut meas = Localizer::new(nu, &vec![0.0; n], &mk(Scheme::MeasureEuler), path_index);
    let mut rng = path_rng(seed, path_index);
    let mut z = vec![0.0; n];
    let steps = (horizon / dt).round() as usize;
    let mut gap = 0.0f64;
    for _ in 0..steps {
        for _ in 0..refine {
            fill_standard_normal(&mut rng, &mut z);
            tilt.step_with_noise(&z)?;
            meas.step_with_noise(&z)?;
        }
        for i in 0..n {
            gap = gap.max((tilt.a()[i] - meas.a()[i]).abs());
        }
    }
    Ok(gap)
}

/// Same as [`scheme_gap`] but both schemes use step `dt` driven by sums of
/// `refine` standard normals per step, so runs at different `dt` share a
/// Brownian path.
pub fn scheme_gap_shared(nu: &DiscreteMeasure, dt: f64, sub: usize, horizon: f64, seed: u64, path_index: u64) -> Result<f64> {
    let n = nu.n();
    let mk = |scheme| SdeConfig { dt, t_max: horizon, collapse_tol: 1e-12, seed, scheme, record_stride: 1 };
    let mut tilt = Localizer::new(nu, &vec![0.0; n], &mk(Scheme::TiltEuler), path_index);
    let mut meas = Localizer::new(nu, &vec![0.0; n], &mk(Scheme::MeasureEuler), path_index);
    let mut rng = path_rng(seed, path_index);
    let mut z = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let steps = (horizon / dt).round() as usize;
    let norm = 1.0 / (sub as f64).sqrt();
    let mut gap = 0.0f64;
    for _ in 0..steps {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..sub {
            fill_standard_normal(&mut rng, &mut z);
            for i in 0..n {
                acc[i] += z[i] * norm;
            }
        }
        tilt.step_with_noise(&acc)?;
        meas.step_with_noise(&acc)?;
        for i in 0..n {
            gap = gap.max((tilt.a()[i] - meas.a()[i]).abs());
        }
    }
    Ok(gap)
}

/// Mean of `a_t` for a measure given as a dense table.
pub fn mean_of(nu: &DiscreteMeasure) -> DVector<f64> {
    nu.mean()
}
