//! Picard iteration in distribution, the interacting-particle solver and the
//! method-of-steps mean oracle for the linear model.

use std::sync::Arc;

use log::{debug, info};

use crate::error::{Error, Result};
use crate::euler::{euler_step, integrate_ensemble, Ensemble, FrozenLaw, StepScratch};
use crate::law::{coupling_upper_bound_views, w2_exact_views, GroundMetric, LawFlow, Moment, DEFAULT_EXACT_CAP};
use crate::models::{LinearMeanFieldParams, ModelCoefficients};
use crate::noise::{NoisePlan, NoiseStream};
use crate::numeric::{compensated_sum, diff_euclidean_sq, mean_stderr};
use crate::par;
use crate::segment::{check_psi, GridPath, Segment, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Picard,
    Particle,
}

#[derive(Debug, Clone)]
pub struct McKeanSolution {
    pub paths: Arc<Vec<GridPath>>,
    pub flow: LawFlow,
    pub method: Method,
}

impl McKeanSolution {
    /// Sample mean and its standard error at every grid node, per coordinate.
    pub fn mean_path(&self) -> (GridPath, Vec<f64>) {
        ensemble_mean(&self.paths)
    }
}

/// Node-wise sample mean of `paths` and the standard errors (node-major, `d` per node).
pub fn ensemble_mean(paths: &[GridPath]) -> (GridPath, Vec<f64>) {
    let grid = *paths[0].grid();
    let d = paths[0].dim();
    let per_node = par::map_indexed(grid.n_nodes(), |k| {
        (0..d)
            .map(|j| {
                let xs: Vec<f64> = paths.iter().map(|p| p.node(k)[j]).collect();
                mean_stderr(&xs)
            })
            .collect::<Vec<_>>()
    });
    let means = per_node.iter().flatten().map(|x| x.0).collect();
    let se = per_node.iter().flatten().map(|x| if x.1.is_nan() { 0.0 } else { x.1 }).collect();
    (GridPath::from_values(grid, d, means).expect("finite means"), se)
}

/// `Λ`: the empirical law of `N` frozen-law paths driven by `input_flow`.
///
/// The noise streams depend only on `(seed, N)`, so successive calls are
/// synchronously coupled.
pub fn apply_lambda<M: ModelCoefficients>(
    model: &M,
    psi: &Segment,
    grid: &TimeGrid,
    seed: u64,
    n: usize,
    input_flow: &LawFlow,
    macro_stride: usize,
) -> Result<Ensemble> {
    let law = FrozenLaw::new(model, input_flow, grid)?;
    let plan = NoisePlan::particles(seed, model.dim(), grid.dt());
    integrate_ensemble(model, psi, &law, grid, &plan, n, macro_stride)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowMetric {
    /// Exact `W2` when `N` is within the exact-solver cap, otherwise the coupling bound.
    Auto,
    Exact,
    /// Upper bound from pairing particle `i` of both iterates.
    Coupling,
}

#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    pub max_iters: usize,
    /// Relative to the RMS sup-norm of the latest iterate.
    pub tol: f64,
    pub macro_stride: usize,
    pub metric: FlowMetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardRecord {
    pub iter: usize,
    /// `sup_t W2(μ^(n)_t, μ^(n+1)_t)` over snapshots (sup ground metric).
    pub flow_distance: f64,
    /// `mean_i sup_t |X^(n)_i - X^(n+1)_i|²`.
    pub path_distance: f64,
    /// RMS sup-norm of `μ^(n+1)` used to scale the tolerance.
    pub scale: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardReport {
    pub records: Vec<PicardRecord>,
    pub converged: bool,
    pub iterations_used: usize,
}

fn flow_distance(a: &LawFlow, b: &LawFlow, metric: FlowMetric) -> Result<(f64, bool)> {
    let n = a.n_samples();
    let exact = match metric {
        FlowMetric::Exact => true,
        FlowMetric::Coupling => false,
        FlowMetric::Auto => n <= DEFAULT_EXACT_CAP,
    };
    let mut worst = 0.0f64;
    for s in 0..a.n_snapshots() {
        let (va, vb) = (a.snapshot_views(s), b.snapshot_views(s));
        let d = if exact {
            w2_exact_views(&va, &vb, GroundMetric::SupNorm, usize::MAX)?
        } else {
            coupling_upper_bound_views(&va, &vb, GroundMetric::SupNorm)?
        };
        worst = worst.max(d);
    }
    Ok((worst, exact))
}

fn path_distance(a: &[GridPath], b: &[GridPath]) -> f64 {
    let d = par::map_indexed(a.len(), |i| {
        let (p, q) = (&a[i], &b[i]);
        (0..p.grid().n_nodes())
            .map(|k| diff_euclidean_sq(p.node(k), q.node(k)))
            .fold(0.0, f64::max)
    });
    compensated_sum(d) / a.len() as f64
}

fn rms_scale(flow: &LawFlow) -> Result<f64> {
    let mut s = 0.0f64;
    for i in 0..flow.n_snapshots() {
        s = s.max(flow.moment(i, Moment::SupSq)?);
    }
    Ok(s.sqrt())
}

/// Picard iteration `μ^(n+1) = law(Λ μ^(n))` from the constant extension
/// `X^(0)(t) = ψ(t ∧ 0)`. Record `n` compares `μ^(n)` with `μ^(n+1)`.
pub fn picard_solve<M: ModelCoefficients>(
    model: &M,
    psi: &Segment,
    grid: &TimeGrid,
    seed: u64,
    n: usize,
    opts: &PicardOptions,
) -> Result<(McKeanSolution, PicardReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::param("Picard tolerance must be positive"));
    }
    if opts.max_iters == 0 {
        return Err(Error::param("max_iters must be at least 1"));
    }
    let x0 = GridPath::constant_extension(*grid, psi)?;
    let flow0 = LawFlow::dirac(x0, opts.macro_stride)?;
    let mut current = apply_lambda(model, psi, grid, seed, n, &flow0, opts.macro_stride)?;
    let mut records = Vec::new();
    let mut converged = false;
    for iter in 1..=opts.max_iters {
        let next = apply_lambda(model, psi, grid, seed, n, &current.flow, opts.macro_stride)?;
        let (fd, exact) = flow_distance(&current.flow, &next.flow, opts.metric)?;
        let pd = path_distance(&current.paths, &next.paths);
        let scale = rms_scale(&next.flow)?;
        debug!("picard iter {iter}: flow {fd:e}, path {pd:e}, scale {scale:e}");
        records.push(PicardRecord { iter, flow_distance: fd, path_distance: pd, scale, exact });
        current = next;
        if fd <= opts.tol * scale {
            converged = true;
            break;
        }
    }
    let iterations_used = records.len();
    info!("picard: {iterations_used} iterations, converged = {converged}");
    Ok((
        McKeanSolution { paths: current.paths, flow: current.flow, method: Method::Picard },
        PicardReport { records, converged, iterations_used },
    ))
}

struct Particle {
    path: GridPath,
    noise: NoiseStream,
    scratch: StepScratch,
}

/// Interacting particle system: every step feeds the empirical law of all
/// current windows (the particle itself included) to the coefficients.
pub fn particle_solve<M: ModelCoefficients>(
    model: &M,
    psi: &Segment,
    grid: &TimeGrid,
    seed: u64,
    n: usize,
    macro_stride: usize,
) -> Result<McKeanSolution> {
    if n == 0 {
        return Err(Error::param("need at least one particle"));
    }
    check_psi(grid, psi)?;
    let d = model.dim();
    if psi.dim() != d {
        return Err(Error::SizeMismatch { left: psi.dim(), right: d });
    }
    let plan = NoisePlan::particles(seed, d, grid.dt());
    let mut particles: Vec<Particle> = (0..n)
        .map(|i| {
            Ok(Particle {
                path: GridPath::with_initial(*grid, psi)?,
                noise: plan.stream(i as u64),
                scratch: StepScratch::new(d),
            })
        })
        .collect::<Result<_>>()?;
    let meta = grid.meta();
    for j in 0..grid.n_future() {
        let k = grid.m() + j;
        let t = j as f64 * grid.dt();
        let stats = {
            let views: Vec<_> = particles.iter().map(|p| p.path.segment_at_node(k)).collect();
            model.summarize_law(&views)
        };
        let ok = {
            let mut flags = vec![true; n];
            let mut zipped: Vec<(&mut Particle, &mut bool)> = particles.iter_mut().zip(flags.iter_mut()).collect();
            par::for_each_mut(&mut zipped, |_, (p, flag)| {
                **flag = euler_step(model, p.path.values_mut(), meta, d, k, t, &stats, &mut p.noise, &mut p.scratch);
            });
            flags
        };
        if let Some(bad) = ok.iter().position(|f| !f) {
            return Err(Error::Divergence { step: j, particle: Some(bad) });
        }
    }
    let paths = Arc::new(particles.into_iter().map(|p| p.path).collect::<Vec<_>>());
    let flow = LawFlow::from_paths(paths.clone(), macro_stride)?;
    Ok(McKeanSolution { paths, flow, method: Method::Particle })
}

/// Taylor degree kept on each sub-piece of the method-of-steps oracle.
const ORACLE_DEGREE: usize = 48;

/// Exact mean of the linear model,
/// `m'(t) = (a + c)·m(t) + (b + e)·m(t - r0)`, on the nodes of `grid`.
///
/// Each grid step is split into sub-pieces short enough that the
/// solution's Taylor series in the local variable converges to machine
/// precision well before the kept degree; the delayed forcing on a sub-piece
/// is the polynomial of the same sub-piece one delay earlier. Between the
/// nodes of `psi_mean` the history is linearly interpolated.
pub fn mean_oracle_method_of_steps(params: &LinearMeanFieldParams, psi_mean: &Segment, grid: &TimeGrid) -> Result<GridPath> {
    check_psi(grid, psi_mean)?;
    let m = grid.m();
    let limit = 4.0 * grid.r0();
    if grid.n_future() > 4 * m {
        return Err(Error::HorizonTooLong { horizon: grid.horizon(), limit });
    }
    let a = params.a_self + params.c_mean;
    let b = params.b_delay + params.e_mean_delay;
    let h = grid.dt();
    let q = ((2.0 * (a.abs() + b.abs()) * h).ceil() as usize).max(1);
    let hs = h / q as f64;
    let d = psi_mean.dim();
    let mut values = vec![0.0; grid.n_nodes() * d];
    values[..(m + 1) * d].copy_from_slice(psi_mean.values());

    for coord in 0..d {
        let psi = |i: usize| psi_mean.values()[i * d + coord];
        // Forcing polynomials for the current delay interval, indexed by (piece, sub-piece).
        let mut forcing: Vec<Vec<f64>> = (0..m * q)
            .map(|idx| {
                let (j, i) = (idx / q, idx % q);
                let delta = psi(j + 1) - psi(j);
                vec![psi(j) + delta * i as f64 / q as f64, delta / q as f64]
            })
            .collect();
        let mut start = psi(m);
        let mut step = 0;
        while step < grid.n_future() {
            let mut next_forcing = Vec::with_capacity(m * q);
            for piece in 0..m {
                if step == grid.n_future() {
                    break;
                }
                for sub in 0..q {
                    let f = &forcing[piece * q + sub];
                    let mut c = vec![0.0; ORACLE_DEGREE + 1];
                    c[0] = start;
                    for l in 0..ORACLE_DEGREE {
                        let fl = f.get(l).copied().unwrap_or(0.0);
                        c[l + 1] = hs * (a * c[l] + b * fl) / (l + 1) as f64;
                    }
                    start = c.iter().rev().fold(0.0, |acc, x| acc + x);
                    next_forcing.push(c);
                }
                step += 1;
                values[(m + step) * d + coord] = start;
            }
            forcing = next_forcing;
        }
    }
    GridPath::from_values(*grid, d, values)
}
