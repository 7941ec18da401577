//! The `cube-localize` command line.
//!
//! Exit codes: 0 on success or pass, 2 when a certification or audit fails,
//! 1 on usage, input or guard errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::audits::{self, MainTheoremConfig};
use crate::error::{Error, Result};
use crate::fourier::{fact_harmonic_audit, HarmonicGrid};
use crate::laplace::{self, Condition, SearchConfig, Verdict};
use crate::localization::{self, run_localization_path, sample_tilted_batch, Scheme, SdeConfig};
use crate::measure::{DiscreteMeasure, MeasureSpec, TestFunction};
use crate::report::{canonical_json, AuditReport};
use crate::rng::path_rng;
use crate::transport::{self, CouplingConfig, W1_DUAL_MAX_N, W1_MAX_N};

pub const SEED_ENV: &str = "CUBE_LOCALIZE_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "cube-localize", version, about = "Measures on the discrete hypercube: certification, localization, transport and audits")]
pub struct Cli {
    /// Master seed; falls back to the environment, then to system entropy.
    #[arg(long, global = true, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for JSON and CSV artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print canonical JSON instead of a table.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
pub enum Command {
    /// Search for violations of a curvature or sign condition.
    Certify(CertifyArgs),
    /// Run localization trajectories and export them as CSV.
    Simulate(SimulateArgs),
    /// Sample a tilted measure by localization and compare with the exact law.
    Sample(SampleArgs),
    /// Exact Wasserstein-1 distance between two measures.
    W1(W1Args),
    /// Run one audit.
    Audit(AuditArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MeasureArgs {
    /// JSON measure specification file.
    #[arg(long, conflicts_with = "family")]
    pub spec: Option<PathBuf>,
    /// Measure family: uniform, dirac, product, two-point, ising, slice, hadamard-rows.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Slice level `Σ x_i`.
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<i64>,
    /// Product means, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub means: Option<Vec<f64>>,
    /// Dirac location as comma-separated signs.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub point: Option<Vec<i8>>,
    /// Seed for randomly generated families (Ising couplings).
    #[arg(long)]
    pub measure_seed: Option<u64>,
    /// Ising coupling scale.
    #[arg(long)]
    pub coupling_scale: Option<f64>,
}

impl MeasureArgs {
    fn is_given(&self) -> bool {
        self.spec.is_some() || self.family.is_some()
    }

    /// Resolves the flags (or spec file) into a measure specification.
    pub fn resolve(&self) -> Result<MeasureSpec> {
        if let Some(path) = &self.spec {
            return read_spec(path);
        }
        let family = self.family.as_deref().ok_or_else(|| Error::InvalidArgument("pass --spec or --family".into()))?;
        let mut obj = Map::new();
        obj.insert("family".into(), json!(family));
        obj.insert("n".into(), json!(self.n.ok_or_else(|| Error::InvalidArgument("--n is required with --family".into()))?));
        if let Some(k) = self.k {
            obj.insert("k".into(), json!(k));
        }
        if let Some(m) = &self.means {
            obj.insert("means".into(), json!(m));
        }
        if let Some(p) = &self.point {
            obj.insert("point".into(), json!(p));
        }
        if let Some(s) = self.measure_seed {
            obj.insert("seed".into(), json!(s));
        }
        if let Some(c) = self.coupling_scale {
            obj.insert("coupling_scale".into(), json!(c));
        }
        MeasureSpec::from_json(&Value::Object(obj).to_string())
    }
}

fn read_spec(path: &Path) -> Result<MeasureSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?;
    MeasureSpec::from_json(&text).map_err(|e| match e {
        Error::InvalidSpec(msg) => Error::InvalidSpec(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    TiltEuler,
    MeasureEuler,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SdeArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 60.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub collapse_tol: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::TiltEuler)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 10)]
    pub record_stride: usize,
}

impl SdeArgs {
    fn config(&self, seed: u64) -> SdeConfig {
        SdeConfig {
            dt: self.dt,
            t_max: self.t_max,
            collapse_tol: self.collapse_tol,
            seed,
            scheme: match self.scheme {
                SchemeArg::TiltEuler => Scheme::TiltEuler,
                SchemeArg::MeasureEuler => Scheme::MeasureEuler,
            },
            record_stride: self.record_stride,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 6.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 7)]
    pub grid: usize,
    #[arg(long, default_value_t = 16)]
    pub starts: usize,
    #[arg(long, default_value_t = 60)]
    pub iters: usize,
}

impl SearchArgs {
    fn config(&self, seed: u64) -> SearchConfig {
        SearchConfig { radius: self.radius, grid: self.grid, starts: self.starts, iters: self.iters, seed, ..SearchConfig::default() }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,
    /// semi-lc, diag-dominated, rayleigh or aov.
    #[arg(long)]
    pub condition: String,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[command(flatten)]
    pub sde: SdeArgs,
    /// Starting tilt, comma separated (default 0).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub tilt: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct SampleArgs {
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[command(flatten)]
    pub sde: SdeArgs,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub tilt: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct W1Args {
    #[arg(long)]
    pub spec_a: PathBuf,
    /// Defaults to the first measure.
    #[arg(long)]
    pub spec_b: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub tilt_a: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub tilt_b: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditName {
    VarianceDecomposition,
    Smalltail,
    MainTheorem,
    ExponentFit,
    HadamardControl,
    EntropyIdentity,
    EntropyTheorem,
    HDrift,
    RayleighCorollary,
    TraceDecay,
    Martingale,
    HittingLemma,
    Supermartingale,
    TransportBound,
    FactHarmonic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionKind {
    /// `φ = Σ x_i`.
    Sum,
    /// Random 1-Lipschitz functions.
    Random,
    /// Distances to points and prefix half-spaces.
    DistanceFamily,
}

#[derive(Args, Debug, Serialize)]
pub struct AuditArgs {
    #[arg(value_enum)]
    pub name: AuditName,
    #[command(flatten)]
    pub measure: MeasureArgs,
    #[command(flatten)]
    pub sde: SdeArgs,
    #[arg(long)]
    pub paths: Option<usize>,
    /// Semi-log-concavity constant; defaults to the analytic value where known.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Times for the variance decomposition.
    #[arg(long, value_delimiter = ',')]
    pub t: Option<Vec<f64>>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum)]
    pub function: Option<FunctionKind>,
    /// Number of random tilts or functions.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Dimensions for the exponent fit and the Hadamard control.
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    /// Base tilt `v`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub tilt: Option<Vec<f64>>,
    /// Direction `θ` (normalized; default `e_1`).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[command(flatten)]
    pub search: SearchArgs,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Value,
    pub measure: Option<MeasureSpec>,
    pub spec_path: Option<PathBuf>,
    pub seed: u64,
    /// `argument` when given by flag or environment, `entropy` otherwise.
    pub seed_source: String,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    manifest: &'a RunManifest,
    result: &'a T,
}

struct Context<'a> {
    manifest: RunManifest,
    out_dir: Option<PathBuf>,
    json: bool,
    started: Instant,
    stdout: &'a mut dyn Write,
}

impl Context<'_> {
    fn finish<T: Serialize>(&mut self, stem: &str, result: &T, table: &str) -> Result<()> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        let doc = Document { manifest: &self.manifest, result };
        let text = canonical_json(&doc)?;
        if let Some(dir) = &self.out_dir {
            fs::create_dir_all(dir)?;
            let full = serde_json::to_string_pretty(&doc)?;
            fs::write(dir.join(format!("{stem}.json")), full + "\n")?;
        }
        if self.json {
            writeln!(self.stdout, "{text}")?;
        } else {
            write!(self.stdout, "{table}")?;
        }
        Ok(())
    }

    fn write_csv(&self, name: &str, body: &[u8]) -> Result<()> {
        if let Some(dir) = &self.out_dir {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), body)?;
            let sidecar = serde_json::to_string_pretty(&self.manifest)?;
            fs::write(dir.join(format!("{name}.manifest.json")), sidecar + "\n")?;
        }
        Ok(())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{rendered}");
                    EXIT_ERROR
                }
            };
        }
    };
    match execute(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if let Some(hint) = guidance(&e) {
                let _ = writeln!(stderr, "hint: {hint}");
            }
            EXIT_ERROR
        }
    }
}

fn guidance(e: &Error) -> Option<String> {
    match e {
        Error::DimensionTooLarge { cap, .. } if *cap == W1_MAX_N => Some(format!("exact W1 and the transport audits enumerate the cube; use n <= {W1_MAX_N}")),
        Error::DimensionTooLarge { cap, .. } if *cap == W1_DUAL_MAX_N => Some(format!("the dual W1 program is limited to n <= {W1_DUAL_MAX_N}")),
        Error::InvalidSpec(_) => Some("see the measure specification format in the README".into()),
        _ => None,
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let (seed, seed_source) = match cli.seed {
        Some(s) => (s, "argument"),
        None => (rand::random::<u64>(), "entropy"),
    };
    let (name, measure_args) = match &cli.command {
        Command::Certify(a) => ("certify".to_string(), Some(&a.measure)),
        Command::Simulate(a) => ("simulate".to_string(), Some(&a.measure)),
        Command::Sample(a) => ("sample".to_string(), Some(&a.measure)),
        Command::W1(_) => ("w1".to_string(), None),
        Command::Audit(a) => (format!("audit {}", audit_slug(a.name)), Some(&a.measure)),
    };
    let measure = match measure_args {
        Some(m) if m.is_given() => Some(m.resolve()?),
        _ => None,
    };
    let arguments = match serde_json::to_value(&cli.command)? {
        Value::Object(mut map) => map.remove(map.keys().next().cloned().unwrap_or_default().as_str()).unwrap_or(Value::Null),
        other => other,
    };
    let manifest = RunManifest {
        command: name,
        arguments,
        spec_path: measure_args.and_then(|m| m.spec.clone()),
        measure: measure.clone(),
        seed,
        seed_source: seed_source.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_seconds: 0.0,
    };
    let mut ctx = Context { manifest, out_dir: cli.out.clone(), json: cli.json, started: Instant::now(), stdout };
    let need = || measure.clone().ok_or_else(|| Error::InvalidArgument("this command needs --spec or --family".into()));
    match &cli.command {
        Command::Certify(a) => cmd_certify(&mut ctx, &need()?, a, seed),
        Command::Simulate(a) => cmd_simulate(&mut ctx, &need()?, a, seed),
        Command::Sample(a) => cmd_sample(&mut ctx, &need()?, a, seed),
        Command::W1(a) => cmd_w1(&mut ctx, a),
        Command::Audit(a) => cmd_audit(&mut ctx, measure.as_ref(), a, seed),
    }
}

fn audit_slug(name: AuditName) -> String {
    name.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
}

fn cmd_certify(ctx: &mut Context, spec: &MeasureSpec, a: &CertifyArgs, seed: u64) -> Result<i32> {
    let nu = spec.build()?;
    let cond = Condition::parse(&a.condition)?;
    let report = laplace::certify(&nu, cond, &a.search.config(seed), a.threshold)?;
    let verdict = match report.verdict {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
    };
    let mut table = format!(
        "certify {:?} on {}: {verdict}\n  certified value {:.6}  threshold {:.6}  evaluations {}\n",
        report.condition,
        spec.describe(),
        report.certified_value,
        report.threshold,
        report.search_budget
    );
    if report.verdict == Verdict::Fail {
        table.push_str(&format!("  witness w = {:?}\n", report.witness.0));
    } else if report.pass_is_evidence_only {
        table.push_str(&format!("  no violation found in [-{r}, {r}]^n\n", r = report.radius));
    }
    ctx.finish("certify", &report, &table)?;
    Ok(if report.verdict == Verdict::Pass { EXIT_OK } else { EXIT_VIOLATION })
}

fn start_tilt(tilt: &Option<Vec<f64>>, n: usize) -> Result<Vec<f64>> {
    match tilt {
        Some(t) if t.len() != n => Err(Error::DimensionMismatch { expected: n, got: t.len() }),
        Some(t) => Ok(t.clone()),
        None => Ok(vec![0.0; n]),
    }
}

#[derive(Serialize)]
struct PathSummary {
    path: u64,
    steps: usize,
    final_time: f64,
    terminal_point: Option<Vec<f64>>,
    clamped_mass: f64,
    flagged: bool,
}

fn cmd_simulate(ctx: &mut Context, spec: &MeasureSpec, a: &SimulateArgs, seed: u64) -> Result<i32> {
    let nu = spec.build()?;
    let cfg = a.sde.config(seed);
    let start = start_tilt(&a.tilt, nu.n())?;
    let mut summaries = Vec::with_capacity(a.paths);
    let mut table = String::new();
    for i in 0..a.paths as u64 {
        let traj = run_localization_path(&nu, &start, &cfg, i)?;
        let mut csv = Vec::new();
        traj.write_csv(&mut csv)?;
        if ctx.out_dir.is_some() {
            ctx.write_csv(&format!("trajectory_{i}.csv"), &csv)?;
        } else if i == 0 && !ctx.json {
            table.push_str(&String::from_utf8_lossy(&csv));
        }
        let summary = PathSummary {
            path: i,
            steps: traj.times.len(),
            final_time: traj.times.last().copied().unwrap_or(0.0),
            terminal_point: traj.terminal_point.map(|p| p.signs()),
            clamped_mass: traj.clamped_mass,
            flagged: traj.flagged,
        };
        if ctx.out_dir.is_some() {
            table.push_str(&format!(
                "path {i}: t = {:.3}, terminal {:?}, clamped mass {:.2e}\n",
                summary.final_time, summary.terminal_point, summary.clamped_mass
            ));
        }
        summaries.push(summary);
    }
    ctx.finish("simulate", &summaries, &table)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SampleSummary {
    samples: u64,
    counts: Vec<u64>,
    empirical_mean: Vec<f64>,
    exact_mean: Vec<f64>,
    total_variation: f64,
    truncated: usize,
    mean_collapse_time: f64,
    snap_bias_bound: f64,
}

fn cmd_sample(ctx: &mut Context, spec: &MeasureSpec, a: &SampleArgs, seed: u64) -> Result<i32> {
    let nu = spec.build()?;
    let cfg = a.sde.config(seed);
    let v = start_tilt(&a.tilt, nu.n())?;
    let law = sample_tilted_batch(&nu, &v, &cfg, a.paths)?;
    let target = laplace::tilt(&nu, &v)?;
    let summary = SampleSummary {
        samples: law.total(),
        empirical_mean: law.mean(),
        exact_mean: target.mean().iter().copied().collect(),
        total_variation: law.tv_to(&target),
        counts: law.counts.clone(),
        truncated: law.truncated,
        mean_collapse_time: law.mean_collapse_time,
        snap_bias_bound: law.snap_bias_bound,
    };
    let table = format!(
        "sample {} at tilt {:?}: {} paths\n  empirical mean {:?}\n  exact mean     {:?}\n  TV to exact law {:.5}  (snap bias bound {:.2e}, truncated {})\n",
        spec.describe(),
        v,
        summary.samples,
        summary.empirical_mean,
        summary.exact_mean,
        summary.total_variation,
        summary.snap_bias_bound,
        summary.truncated
    );
    ctx.finish("sample", &summary, &table)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct W1Summary {
    w1: f64,
    w1_dual: Option<f64>,
}

fn tilted(spec: &MeasureSpec, tilt: &Option<Vec<f64>>) -> Result<DiscreteMeasure> {
    let nu = spec.build()?;
    match tilt {
        Some(t) => laplace::tilt(&nu, t),
        None => Ok(nu),
    }
}

fn cmd_w1(ctx: &mut Context, a: &W1Args) -> Result<i32> {
    let spec_a = read_spec(&a.spec_a)?;
    let spec_b = match &a.spec_b {
        Some(p) => read_spec(p)?,
        None => spec_a.clone(),
    };
    let mu = tilted(&spec_a, &a.tilt_a)?;
    let nu = tilted(&spec_b, &a.tilt_b)?;
    let w1 = transport::w1_exact(&mu, &nu)?;
    let w1_dual = if mu.n() <= W1_DUAL_MAX_N { Some(transport::w1_dual(&mu, &nu)?) } else { None };
    let mut table = format!("W1 = {w1:.12}\n");
    if let Some(d) = w1_dual {
        table.push_str(&format!("W1 (dual) = {d:.12}\n"));
    }
    ctx.finish("w1", &W1Summary { w1, w1_dual }, &table)?;
    Ok(EXIT_OK)
}

/// Analytic semi-log-concavity constants for families where one is known.
pub fn analytic_beta(spec: &MeasureSpec) -> Option<f64> {
    match spec {
        MeasureSpec::Uniform { .. } | MeasureSpec::Product { .. } | MeasureSpec::Dirac { .. } => Some(1.0),
        MeasureSpec::Slice { .. } => Some(2.0),
        MeasureSpec::TwoPoint { n, .. } => Some(*n as f64),
        _ => None,
    }
}

fn functions(kind: FunctionKind, n: usize, count: usize, seed: u64) -> Result<Vec<TestFunction>> {
    match kind {
        FunctionKind::Sum => Ok(vec![TestFunction::coordinate_sum(n)]),
        FunctionKind::Random => {
            let mut rng = path_rng(seed, u64::MAX - 1);
            Ok((0..count).map(|_| audits::random_lipschitz(n, &mut rng)).collect())
        }
        FunctionKind::DistanceFamily => audits::slice_distance_family(n, count, seed),
    }
}

fn unit_theta(theta: &Option<Vec<f64>>, n: usize) -> Result<Vec<f64>> {
    let mut t = match theta {
        Some(t) if t.len() != n => return Err(Error::DimensionMismatch { expected: n, got: t.len() }),
        Some(t) => t.clone(),
        None => {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        }
    };
    let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("--theta must be non-zero".into()));
    }
    t.iter_mut().for_each(|x| *x /= norm);
    Ok(t)
}

fn cmd_audit(ctx: &mut Context, spec: Option<&MeasureSpec>, a: &AuditArgs, seed: u64) -> Result<i32> {
    let cfg = a.sde.config(seed);
    let need = || spec.ok_or_else(|| Error::InvalidArgument("this audit needs --spec or --family".into()));
    let beta_for = |spec: &MeasureSpec| {
        a.beta.or_else(|| analytic_beta(spec)).ok_or_else(|| Error::InvalidArgument(format!("no analytic beta for {}; pass --beta", spec.describe())))
    };
    let paths = |default: usize| a.paths.unwrap_or(default);
    let mut report = match a.name {
        AuditName::VarianceDecomposition => {
            let spec = need()?;
            let nu = spec.build()?;
            let phi = functions(a.function.unwrap_or(FunctionKind::Sum), nu.n(), 1, seed)?.remove(0);
            let mut report = AuditReport::new("variance-decomposition", spec.describe());
            for &t in a.t.as_deref().unwrap_or(&[0.5, 2.0]) {
                report.absorb(&format!("t={t}"), audits::variance_decomposition_audit(&nu, &phi, t, &cfg, paths(4000))?);
            }
            report.param("sde", &cfg).param("paths", paths(4000));
            report
        }
        AuditName::Smalltail => {
            let spec = need()?;
            let nu = spec.build()?;
            let phis = functions(a.function.unwrap_or(FunctionKind::Random), nu.n(), a.count, seed)?;
            let mut rng = path_rng(seed, u64::MAX - 2);
            let tilts: Vec<Vec<f64>> = (0..a.count).map(|_| (0..nu.n()).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect()).collect();
            let mut report = AuditReport::new("smalltail", spec.describe());
            for (k, phi) in phis.iter().enumerate() {
                report.absorb(&format!("phi_{k}"), audits::smalltail_check(&nu, phi, &tilts)?);
            }
            report.param("functions", phis.len()).param("tilts", tilts.len()).param("seed", seed);
            report
        }
        AuditName::MainTheorem => {
            let spec = need()?;
            let nu = spec.build()?;
            let beta = beta_for(spec)?;
            let phis = functions(a.function.unwrap_or(FunctionKind::DistanceFamily), nu.n(), a.count, seed)?;
            let chain = MainTheoremConfig { sde: cfg.clone(), paths: paths(200), seed, ..MainTheoremConfig::default() };
            audits::main_theorem_audit(&nu, beta, &phis, &chain)?
        }
        AuditName::ExponentFit => audits::exponent_fit_audit(a.ns.as_deref().unwrap_or(&[4, 6, 8, 10]), a.count, seed)?,
        AuditName::HadamardControl => audits::hadamard_control_audit(a.ns.as_deref().unwrap_or(&[4, 8, 16]), 0.05)?,
        AuditName::EntropyIdentity => {
            let nu = need()?.build()?;
            let t_max = audits::entropy_horizon(nu.n());
            audits::entropy_identity_audit(&nu, &cfg, paths(4000), t_max)?
        }
        AuditName::EntropyTheorem => {
            let spec = need()?;
            audits::entropy_theorem_check(&spec.build()?, beta_for(spec)?)?
        }
        AuditName::HDrift => {
            let spec = need()?;
            let beta = a.beta.or_else(|| analytic_beta(spec));
            audits::h_drift_audit(&spec.build()?, beta, &cfg, paths(1000))?
        }
        AuditName::RayleighCorollary => {
            let nu = need()?.build()?;
            let phis = functions(a.function.unwrap_or(FunctionKind::DistanceFamily), nu.n(), a.count, seed)?;
            let chain = MainTheoremConfig { sde: cfg.clone(), paths: paths(200), exponent_ns: Vec::new(), seed, ..MainTheoremConfig::default() };
            audits::rayleigh_corollary_audit(&nu, &a.search.config(seed), &phis, &chain)?
        }
        AuditName::TraceDecay => localization::trace_decay_audit(&need()?.build()?, &cfg, paths(10_000), &localization::TRACE_CHECKPOINTS)?,
        AuditName::Martingale => {
            let nu = need()?.build()?;
            let set: Vec<bool> = (0..1u32 << nu.n()).map(|x| x & 1 == 1).collect();
            localization::martingale_audit(&nu, &set, &cfg, paths(4000))?
        }
        AuditName::HittingLemma => {
            let mut report = AuditReport::new("hitting-lemma", "eps + W_t");
            let eps_list = a.eps.map(|e| vec![e]).unwrap_or_else(|| vec![0.05, 0.1]);
            for eps in eps_list {
                report.absorb(&format!("eps={eps}"), transport::hitting_lemma_audit(eps, paths(100_000), cfg.dt, seed)?);
            }
            report.param("paths", paths(100_000)).param("dt", cfg.dt).param("seed", seed);
            report
        }
        AuditName::Supermartingale => {
            let spec = need()?;
            let nu = spec.build()?;
            let beta = beta_for(spec)?;
            let eps = a.eps.unwrap_or(0.05);
            let v = start_tilt(&a.tilt, nu.n())?;
            let theta = unit_theta(&a.theta, nu.n())?;
            let coupling = CouplingConfig { dt: cfg.dt, seed, ..CouplingConfig::default() };
            let runs = transport::coupling_batch(&nu, &v, eps, &theta, &coupling, paths(4000))?;
            transport::supermartingale_audit(beta, eps, &coupling, &runs, &spec.describe())?
        }
        AuditName::TransportBound => {
            let spec = need()?;
            let nu = spec.build()?;
            let beta = beta_for(spec)?;
            let v = start_tilt(&a.tilt, nu.n())?;
            let theta = unit_theta(&a.theta, nu.n())?;
            transport::transport_bound_audit(&nu, beta, &v, &theta, a.eps.unwrap_or(0.05), paths(0), cfg.dt, seed)?
        }
        AuditName::FactHarmonic => {
            let nu = need()?.build()?;
            fact_harmonic_audit(&nu, &HarmonicGrid { seed, ..HarmonicGrid::default() }, &a.search.config(seed))?
        }
    };
    if let Some(spec) = spec {
        report.measure = spec.describe();
    }
    let table = report.to_string();
    ctx.finish(&format!("audit-{}", audit_slug(a.name)), &report, &table)?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_VIOLATION })
}
