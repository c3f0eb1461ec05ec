//! Command-line dispatch for the `mvdelay` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use crate::bounds::{self, default_eps_grid, BoundReport, CoupledStats, MomentStats};
use crate::config::{parse_config, ModelConfig, RunConfig};
use crate::error::{Error, Result};
use crate::euler::{integrate_ensemble, integrate_sdde, FrozenLaw};
use crate::galerkin::{
    galerkin_integrate, mode_statistics, uniform_bound_sweep, GalerkinOptions, GalerkinRun, GelfandSpec, SpectralField,
    SpectralSegment,
};
use crate::io::{ensemble_csv, fmt_num, path_csv, push_row, read_ensemble_csv, OutputDir};
use crate::law::{w2_entropic, w2_exact, GroundMetric, LawFlow, Moment, DEFAULT_EXACT_CAP};
use crate::mckean::{particle_solve, picard_solve, FlowMetric, McKeanSolution, PicardOptions};
use crate::models::{
    probe_conditions, probe_psi_conditions, ModelCoefficients, LinearMeanField, LinearMeanFieldParams, PorousMediumParams, ProbeReport, ProbeSampler,
};
use crate::noise::NoisePlan;
use crate::ot::SinkhornOptions;
use crate::segment::{GridPath, Segment, TimeGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Largest explicit-step stiffness `dt·λ_n` accepted without `--force`.
pub const MAX_STIFFNESS: f64 = 0.5;

/// Grid used by `check-conditions`.
const PROBE_M: usize = 4;
const PROBE_DT: f64 = 0.25;
const PROBE_T_MAX: f64 = 3.0;

#[derive(Debug, Parser)]
#[command(name = "mvdelay", version, about = "Distribution-dependent stochastic delay equations")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Frozen-law paths with the law fixed at the initial segment.
    Simulate(RunArgs),
    /// Interacting particle system.
    Particles(RunArgs),
    /// Picard iteration on the law flow.
    Picard(RunArgs),
    /// Spectral Galerkin scheme for the porous-medium equation.
    Galerkin(GalerkinArgs),
    /// W2 distance between two ensemble CSV files.
    W2(W2Args),
    /// Randomized probes of the coercivity, monotonicity and growth conditions.
    CheckConditions(ProbeArgs),
    /// Bound evaluation from run output directories.
    CheckBounds(BoundsArgs),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (`simulate`: output CSV file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Refines the grid to `dt = r0 / 2^k`.
    #[arg(long)]
    dt_exponent: Option<u32>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    particles: Option<usize>,
}

#[derive(Debug, Args)]
struct GalerkinArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    modes_sweep: Option<Vec<usize>>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long = "L")]
    domain_length: Option<f64>,
    /// Replicas (defaults to `solver.particles`).
    #[arg(long)]
    particles: Option<usize>,
    /// Accept `dt·λ_n > 0.5`.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Sup,
    L2,
}

#[derive(Debug, Args)]
struct W2Args {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, value_enum, default_value = "sup")]
    metric: MetricArg,
    /// Delay length; the files carry only node indices.
    #[arg(long, default_value_t = 1.0)]
    r0: f64,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    /// Directories written by `particles` or `galerkin`.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Domain(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Io(_) | Error::Format(_) => Failure::Usage(e.to_string()),
            other => Failure::Domain(other.to_string()),
        }
    }
}

type CliResult = std::result::Result<i32, Failure>;

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match with_threads(cli.threads, || dispatch(cli.command)) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            EXIT_DOMAIN
        }
    }
}

#[cfg(feature = "parallel")]
fn with_threads(threads: Option<usize>, f: impl FnOnce() -> CliResult + Send) -> CliResult {
    match threads {
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Domain(e.to_string()))?;
            pool.install(f)
        }
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads(threads: Option<usize>, f: impl FnOnce() -> CliResult + Send) -> CliResult {
    if threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    f()
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Particles(a) => particles(a),
        Command::Picard(a) => picard(a),
        Command::Galerkin(a) => galerkin(a),
        Command::W2(a) => w2(a),
        Command::CheckConditions(a) => check_conditions(a),
        Command::CheckBounds(a) => check_bounds(a),
    }
}

fn load_config(path: &Path) -> std::result::Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Config with command-line overrides applied.
fn effective_config(c: &Common, particles: Option<usize>) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = load_config(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.solver.seed = seed;
    }
    if let Some(n) = particles {
        if n == 0 {
            return Err(Failure::Usage("--particles must be at least 1".into()));
        }
        cfg.solver.particles = n;
    }
    if let Some(k) = c.dt_exponent {
        if k > 30 {
            return Err(Failure::Usage("--dt-exponent must be <= 30".into()));
        }
        let r0 = cfg.r0();
        let m = 1usize << k;
        let dt = r0 / m as f64;
        let steps = cfg.grid.horizon / dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Failure::Usage(format!("T = {} is not a multiple of dt = r0/2^{k}", cfg.grid.horizon)));
        }
        cfg.grid.m = m;
        cfg.grid.dt = dt;
    }
    Ok(cfg)
}

/// `--out` wins over `output.directory`; kept out of the config so the
/// digest does not depend on where a run is written.
fn out_dir(c: &Common, cfg: &RunConfig) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory))
}

fn time_grid(cfg: &RunConfig) -> Result<TimeGrid> {
    TimeGrid::with_horizon(cfg.grid.m, cfg.grid.dt, cfg.grid.horizon)
}

fn linear_model(cfg: &RunConfig) -> std::result::Result<LinearMeanField, Failure> {
    match cfg.model {
        ModelConfig::LinearMeanField { a_self, b_delay, c_mean, e_mean_delay, sigma, dim } => {
            Ok(LinearMeanField::new(LinearMeanFieldParams::isotropic(a_self, b_delay, c_mean, e_mean_delay, sigma, dim))?)
        }
        ModelConfig::PorousMedium { .. } => {
            Err(Failure::Usage("this command needs model.kind = \"linear_meanfield\"".into()))
        }
    }
}

/// `ψ(θ) = value + slope·θ + offset` in every coordinate.
fn initial_segment(cfg: &RunConfig, grid: &TimeGrid, dim: usize, offset: f64) -> Result<Segment> {
    let (v, s) = (cfg.initial.value, cfg.initial.slope);
    Segment::from_fn(grid.meta(), dim, |th| vec![v + s * th + offset; dim])
}

fn stride(cfg: &RunConfig, grid: &TimeGrid) -> std::result::Result<usize, Failure> {
    let s = cfg.solver.macro_stride;
    if s > grid.n_future() {
        return Err(Failure::Usage(format!("solver.macro_stride must be <= {}", grid.n_future())));
    }
    Ok(s)
}

fn finish(out: OutputDir, cfg: &RunConfig, command: &str) -> CliResult {
    out.finish(&cfg.serialize(), cfg.solver.seed, command)?;
    Ok(EXIT_OK)
}

fn simulate(a: RunArgs) -> CliResult {
    let cfg = effective_config(&a.common, a.particles)?;
    let model = linear_model(&cfg)?;
    let grid = time_grid(&cfg)?;
    let psi = initial_segment(&cfg, &grid, cfg_dim(&cfg), 0.0)?;
    let law = FrozenLaw::new(&model, &LawFlow::dirac(GridPath::constant_extension(grid, &psi)?, 1)?, &grid)?;
    let plan = NoisePlan::particles(cfg.solver.seed, cfg_dim(&cfg), grid.dt());
    let n = cfg.solver.particles;
    let (name, text) = if n == 1 {
        let path = integrate_sdde(&model, &psi, &law, &grid, &plan, 0)?;
        ("path.csv", path_csv(&path))
    } else {
        let ens = integrate_ensemble(&model, &psi, &law, &grid, &plan, n, 1)?;
        let views: Vec<_> = ens.paths.iter().map(|p| p.segment_at_node(grid.n_steps())).collect();
        ("ensemble.csv", ensemble_csv(&views))
    };
    let (dir, file) = match &a.common.out {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => (
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
            p.file_name().expect("csv path has a file name").to_string_lossy().into_owned(),
        ),
        Some(p) => (p.clone(), name.to_string()),
        None => (PathBuf::from(&cfg.output.directory), name.to_string()),
    };
    let mut out = OutputDir::create(if dir.as_os_str().is_empty() { Path::new(".") } else { &dir })?;
    out.write(&file, &text)?;
    finish(out, &cfg, "simulate")
}

fn cfg_dim(cfg: &RunConfig) -> usize {
    match cfg.model {
        ModelConfig::LinearMeanField { dim, .. } => dim,
        ModelConfig::PorousMedium { .. } => 1,
    }
}

fn moments_csv(sol: &McKeanSolution, grid: &TimeGrid, p: f64) -> Result<String> {
    let d = sol.paths[0].dim();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=d).map(|j| format!("mean_{j}")));
    header.push("sup_sq_moment".into());
    header.push("lp_moment".into());
    let mut out = String::new();
    push_row(&mut out, &header);
    for s in 0..sol.flow.n_snapshots() {
        let step = sol.flow.snapshot_step(s);
        let views = sol.flow.snapshot_views(s);
        let n = views.len() as f64;
        let mut row = vec![fmt_num(step as f64 * grid.dt())];
        for j in 0..d {
            row.push(fmt_num(crate::numeric::compensated_sum(views.iter().map(|v| v.current()[j])) / n));
        }
        row.push(fmt_num(sol.flow.moment(s, Moment::SupSq)?));
        row.push(fmt_num(sol.flow.moment(s, Moment::LpP(p))?));
        push_row(&mut out, &row);
    }
    Ok(out)
}

fn key_value_csv(pairs: &[(&str, f64)]) -> String {
    let mut out = String::from("key,value\n");
    for (k, v) in pairs {
        let _ = writeln!(out, "{k},{}", fmt_num(*v));
    }
    out
}

fn particles(a: RunArgs) -> CliResult {
    let cfg = effective_config(&a.common, a.particles)?;
    let model = linear_model(&cfg)?;
    let grid = time_grid(&cfg)?;
    let d = cfg_dim(&cfg);
    let stride = stride(&cfg, &grid)?;
    let psi = initial_segment(&cfg, &grid, d, 0.0)?;
    let sol = particle_solve(&model, &psi, &grid, cfg.solver.seed, cfg.solver.particles, stride)?;
    let mut out = OutputDir::create(out_dir(&a.common, &cfg))?;
    out.write("moments.csv", &moments_csv(&sol, &grid, 2.0)?)?;
    if cfg.output.snapshots {
        for s in 0..sol.flow.n_snapshots() {
            out.write(&format!("snapshot_{s:05}.csv"), &ensemble_csv(&sol.flow.snapshot_views(s)))?;
        }
    }

    // Synchronously coupled run from the shifted initial segment.
    let shifted = initial_segment(&cfg, &grid, d, cfg.initial.shift)?;
    let sol2 = particle_solve(&model, &shifted, &grid, cfg.solver.seed, cfg.solver.particles, stride)?;
    let (lhs, lhs_se) = bounds::coupled_sup_sq(&sol.paths, &sol2.paths)?;
    let diff = psi.sub(&shifted)?;
    let (g, g_se) = bounds::moment_functional(&sol.paths, 2.0);
    let (init_sup_sq, init_lp) = bounds::initial_moments(&[psi.view()], 2.0);
    let c = model.constants();
    let pairs = [
        ("kind", 0.0),
        ("alpha", c.alpha),
        ("beta", c.beta),
        ("gamma", c.gamma),
        ("T", grid.horizon()),
        ("r0", grid.r0()),
        ("init_sup_sq", init_sup_sq),
        ("init_lp", init_lp),
        ("g", g),
        ("g_stderr", g_se),
        ("stab_init_sup_sq", diff.view().sup_norm_sq()),
        ("stab_init_lp", diff.view().lp_norm_pow(2.0)?),
        ("stab_lhs", lhs),
        ("stab_lhs_stderr", lhs_se),
    ];
    out.write("bound_inputs.csv", &key_value_csv(&pairs))?;
    finish(out, &cfg, "particles")
}

fn picard(a: RunArgs) -> CliResult {
    let cfg = effective_config(&a.common, a.particles)?;
    let model = linear_model(&cfg)?;
    let grid = time_grid(&cfg)?;
    let stride = stride(&cfg, &grid)?;
    let psi = initial_segment(&cfg, &grid, cfg_dim(&cfg), 0.0)?;
    let opts =
        PicardOptions { max_iters: cfg.solver.max_iters, tol: cfg.solver.tol, macro_stride: stride, metric: FlowMetric::Auto };
    let (sol, report) = picard_solve(&model, &psi, &grid, cfg.solver.seed, cfg.solver.particles, &opts)?;
    let mut csv = String::from("iter,flow_distance,path_distance\n");
    for r in &report.records {
        let _ = writeln!(csv, "{},{},{}", r.iter, fmt_num(r.flow_distance), fmt_num(r.path_distance));
    }
    let mut out = OutputDir::create(out_dir(&a.common, &cfg))?;
    out.write("picard.csv", &csv)?;
    let views: Vec<_> = sol.paths.iter().map(|p| p.segment_at_node(grid.n_steps())).collect();
    out.write("ensemble.csv", &ensemble_csv(&views))?;
    if !report.converged {
        warn!("picard iteration did not reach tol = {} in {} iterations", cfg.solver.tol, report.iterations_used);
    }
    finish(out, &cfg, "picard")
}

fn galerkin_init(cfg: &RunConfig, grid: &TimeGrid, n: usize, extra: f64) -> Result<SpectralSegment> {
    let k = cfg.galerkin.init_mode.min(n);
    Ok(SpectralSegment::constant(grid.meta(), &SpectralField::mode(n, k, cfg.galerkin.init_amplitude + extra)?))
}

fn galerkin(a: GalerkinArgs) -> CliResult {
    let mut cfg = effective_config(&a.common, a.particles)?;
    let (mut p, mut length) = match cfg.model {
        ModelConfig::PorousMedium { p, domain_length } => (p, domain_length),
        ModelConfig::LinearMeanField { .. } => {
            return Err(Failure::Usage("galerkin needs model.kind = \"porous_medium\"".into()));
        }
    };
    if let Some(x) = a.p {
        p = x;
    }
    if let Some(x) = a.domain_length {
        length = x;
    }
    cfg.model = ModelConfig::PorousMedium { p, domain_length: length };
    if let Some(n) = a.modes {
        cfg.galerkin.n_modes = n;
    }
    if let Some(s) = a.modes_sweep {
        cfg.galerkin.modes_sweep = s;
    }
    let params = PorousMediumParams::new(p, length).map_err(|e| Failure::Usage(e.to_string()))?;
    let grid = time_grid(&cfg)?;
    let stride = stride(&cfg, &grid)?;
    let n = cfg.galerkin.n_modes;
    if n == 0 || cfg.galerkin.init_mode > n {
        return Err(Failure::Usage("need 1 <= galerkin.init_mode <= n_modes".into()));
    }
    let largest = cfg.galerkin.modes_sweep.iter().copied().chain([n]).max().unwrap_or(n);
    let spec_largest = GelfandSpec::with_default_grid(length, p, largest)?;
    let stiffness = grid.dt() * spec_largest.lambdas()[largest - 1];
    if stiffness > MAX_STIFFNESS && !a.force {
        return Err(Failure::Usage(format!(
            "dt·λ_n = {stiffness:.4} exceeds {MAX_STIFFNESS}; refine dt or pass --force"
        )));
    }
    let n_x = if cfg.galerkin.n_x == 0 { 8 * n } else { cfg.galerkin.n_x };
    let spec = GelfandSpec::new(length, p, n, n_x)?;
    let opts = GalerkinOptions {
        seed: cfg.solver.seed,
        run: 0,
        replicas: cfg.solver.particles,
        macro_stride: stride,
        noise_amplitude: cfg.galerkin.noise_amplitude,
    };
    let run = galerkin_integrate(&params, &spec, &galerkin_init(&cfg, &grid, n, 0.0)?, &grid, &opts)?;
    let mut out = OutputDir::create(out_dir(&a.common, &cfg))?;
    let mut csv = String::from("k,lambda_k,mean_cK,var_ck,var_ck_theory\n");
    for s in mode_statistics(&run) {
        let _ = writeln!(csv, "{},{},{},{},{}", s.k, fmt_num(s.lambda), fmt_num(s.mean), fmt_num(s.var), fmt_num(s.var_theory));
    }
    out.write("galerkin_modes.csv", &csv)?;

    if !cfg.galerkin.modes_sweep.is_empty() {
        let mut sweep = cfg.galerkin.modes_sweep.clone();
        sweep.sort_unstable();
        sweep.dedup();
        let oversampling = if cfg.galerkin.n_x == 0 { 8 } else { n_x.div_ceil(n) };
        let rows = uniform_bound_sweep(&params, &sweep, oversampling, &grid, |k| galerkin_init(&cfg, &grid, k, 0.0), &opts)?;
        let mut csv = String::from(
            "n_modes,v_integral,v_integral_se,kstar_integral,kstar_integral_se,b_term,h_moment,h_moment_se,error\n",
        );
        for r in rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                r.n_modes,
                fmt_num(r.v_integral.0),
                fmt_num(r.v_integral.1),
                fmt_num(r.kstar_integral.0),
                fmt_num(r.kstar_integral.1),
                fmt_num(r.b_term),
                fmt_num(r.h_moment.0),
                fmt_num(r.h_moment.1),
                r.error.unwrap_or_default().replace(',', ";")
            );
        }
        out.write("uniform_bound.csv", &csv)?;
    }

    // Synchronously coupled run from the shifted initial amplitude.
    let run2 = galerkin_integrate(&params, &spec, &galerkin_init(&cfg, &grid, n, cfg.initial.shift)?, &grid, &opts)?;
    let (lhs_t, lhs_t_se, lhs_sup, lhs_sup_se) = coupled_h_distances(&run, &run2, &spec);
    let init_ch = run.initial.sub(&run2.initial)?.sup_h_sq(&spec);
    let pairs = [
        ("kind", 1.0),
        ("beta", params.constants().beta),
        ("T", grid.horizon()),
        ("r0", grid.r0()),
        ("init_ch", init_ch),
        ("lhs_t", lhs_t),
        ("lhs_t_stderr", lhs_t_se),
        ("lhs_sup", lhs_sup),
        ("lhs_sup_stderr", lhs_sup_se),
    ];
    out.write("bound_inputs.csv", &key_value_csv(&pairs))?;
    finish(out, &cfg, "galerkin")
}

/// `E‖X(T) - Y(T)‖²_H` and `E sup_t ‖X(t) - Y(t)‖²_H` over snapshots.
fn coupled_h_distances(a: &GalerkinRun, b: &GalerkinRun, spec: &GelfandSpec) -> (f64, f64, f64, f64) {
    let last = a.n_snapshots() - 1;
    let mut at_t = Vec::with_capacity(a.replicas);
    let mut sup = Vec::with_capacity(a.replicas);
    let mut diff = vec![0.0; a.n_modes];
    for r in 0..a.replicas {
        let mut worst = 0.0f64;
        for s in 0..=last {
            for (d, (x, y)) in diff.iter_mut().zip(a.field(r, s).iter().zip(b.field(r, s))) {
                *d = x - y;
            }
            let h = spec.norm_h_sq(&diff);
            worst = worst.max(h);
            if s == last {
                at_t.push(h);
            }
        }
        sup.push(worst);
    }
    let (m1, s1) = crate::numeric::mean_stderr(&at_t);
    let (m2, s2) = crate::numeric::mean_stderr(&sup);
    (m1, s1, m2, s2)
}

fn w2(a: W2Args) -> CliResult {
    let read = |p: &Path| -> std::result::Result<_, Failure> {
        let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
        read_ensemble_csv(&text, a.r0).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
    };
    let (ea, eb) = (read(&a.a)?, read(&a.b)?);
    let g = match a.metric {
        MetricArg::Sup => GroundMetric::SupNorm,
        MetricArg::L2 => GroundMetric::L2Weighted,
    };
    let d = if ea.len() <= DEFAULT_EXACT_CAP && ea.len() == eb.len() {
        w2_exact(&ea, &eb, g)?
    } else {
        warn!("using the entropic solver (sizes {} and {})", ea.len(), eb.len());
        w2_entropic(&ea, &eb, g, SinkhornOptions::new(1e-3, 100_000))?
    };
    println!("{}", fmt_num(d));
    Ok(EXIT_OK)
}

fn probe_csv(report: &ProbeReport) -> String {
    let mut out = String::from("condition,worst_margin,checks,violations\n");
    for m in &report.margins {
        let _ = writeln!(out, "{},{},{},{}", m.name, fmt_num(m.worst_margin), m.checks, m.violations);
    }
    out
}

fn check_conditions(a: ProbeArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    let seed = a.seed.unwrap_or(cfg.solver.seed);
    let mut sampler = ProbeSampler::new(seed);
    let report = match cfg.model {
        ModelConfig::LinearMeanField { .. } => {
            probe_conditions(&linear_model(&cfg)?, PROBE_M, PROBE_DT, PROBE_T_MAX, &mut sampler, a.trials)?
        }
        ModelConfig::PorousMedium { p, domain_length } => {
            let params = PorousMediumParams::new(p, domain_length)?;
            let spec = GelfandSpec::with_default_grid(domain_length, p, cfg.galerkin.n_modes)?;
            probe_psi_conditions(&params, &spec, PROBE_M, PROBE_DT, PROBE_T_MAX, &mut sampler, a.trials)?
        }
    };
    print!("{}", probe_csv(&report));
    Ok(if report.passed() { EXIT_OK } else { EXIT_DOMAIN })
}

fn read_inputs(dir: &Path) -> std::result::Result<Vec<(String, f64)>, Failure> {
    let path = dir.join("bound_inputs.csv");
    let text = fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut pairs = vec![];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let v: f64 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Failure::Usage(format!("{}: bad value", path.display())))?;
        pairs.push((rec.get(0).unwrap_or_default().to_string(), v));
    }
    Ok(pairs)
}

fn bounds_for(dir: &Path) -> std::result::Result<Vec<BoundReport>, Failure> {
    let pairs = read_inputs(dir)?;
    let get = |k: &str| -> std::result::Result<f64, Failure> {
        pairs
            .iter()
            .find(|(n, _)| n == k)
            .map(|p| p.1)
            .ok_or_else(|| Failure::Usage(format!("{}: missing `{k}`", dir.display())))
    };
    let eps = default_eps_grid();
    if get("kind")? == 0.0 {
        let stab = CoupledStats {
            init_sup_sq: get("stab_init_sup_sq")?,
            init_lp: get("stab_init_lp")?,
            lhs: get("stab_lhs")?,
            lhs_stderr: get("stab_lhs_stderr")?,
        };
        let mom = MomentStats { init_sup_sq: get("init_sup_sq")?, init_lp: get("init_lp")?, g: get("g")?, g_stderr: get("g_stderr")? };
        Ok(vec![
            bounds::stability_bound_finite(get("beta")?, &stab, get("T")?, &eps)?,
            bounds::moment_bound_finite(get("alpha")?, get("gamma")?, &mom, get("T")?),
        ])
    } else {
        let (beta, r0, t, init) = (get("beta")?, get("r0")?, get("T")?, get("init_ch")?);
        Ok(vec![
            bounds::stability_bound_infinite(beta, r0, t, init, get("lhs_t")?, get("lhs_t_stderr")?),
            bounds::stability_bound_infinite_sup(beta, r0, t, init, get("lhs_sup")?, get("lhs_sup_stderr")?, &eps)?,
        ])
    }
}

fn check_bounds(a: BoundsArgs) -> CliResult {
    let mut csv = String::from("bound_name,lhs,stderr,rhs,margin,pass\n");
    let mut all = true;
    for dir in &a.dirs {
        for r in bounds_for(dir)? {
            all &= r.pass();
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                r.name,
                fmt_num(r.lhs),
                fmt_num(r.stderr),
                fmt_num(r.rhs),
                fmt_num(r.margin()),
                r.pass()
            );
        }
    }
    match &a.out {
        Some(p) => fs::write(p, &csv).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => print!("{csv}"),
    }
    Ok(if all { EXIT_OK } else { EXIT_DOMAIN })
}
