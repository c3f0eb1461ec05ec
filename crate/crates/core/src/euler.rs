//! Euler–Maruyama for the frozen-law delay equation.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::law::LawFlow;
use crate::models::ModelCoefficients;
use crate::noise::{IncrementSource, NoisePlan};
use crate::par;
use crate::segment::{check_psi, GridPath, Segment, SegmentMeta, SegmentView, TimeGrid};

/// A law flow with its coefficient summaries precomputed per snapshot.
pub struct FrozenLaw<M: ModelCoefficients> {
    stats: Vec<M::LawStats>,
    stride: usize,
}

impl<M: ModelCoefficients> FrozenLaw<M> {
    /// Summaries of every snapshot of `flow`; `flow` must cover `grid`.
    pub fn new(model: &M, flow: &LawFlow, grid: &TimeGrid) -> Result<Self> {
        let fg = flow.grid();
        if fg.m() != grid.m() || fg.dt() != grid.dt() || fg.n_future() < grid.n_future() {
            return Err(Error::param("law flow does not cover the integration grid"));
        }
        let stats = par::map_indexed(flow.n_snapshots(), |i| model.summarize_law(&flow.snapshot_views(i)));
        Ok(Self { stats, stride: flow.macro_stride() })
    }

    /// The same summary at every step.
    pub fn constant(stats: M::LawStats) -> Self {
        Self { stats: vec![stats], stride: usize::MAX }
    }

    /// Summary for a law-independent model, computed from an empty ensemble.
    pub fn empty(model: &M) -> Self {
        Self::constant(model.summarize_law(&[]))
    }

    /// Summary in force at future step `j`.
    #[inline]
    pub fn at_step(&self, j: usize) -> &M::LawStats {
        &self.stats[(j / self.stride).min(self.stats.len() - 1)]
    }
}

/// Work buffers for one particle.
#[derive(Debug, Clone)]
pub(crate) struct StepScratch {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    dw: Vec<f64>,
}

impl StepScratch {
    pub(crate) fn new(d: usize) -> Self {
        Self { drift: vec![0.0; d], diffusion: vec![0.0; d * d], dw: vec![0.0; d] }
    }
}

/// One explicit step from node `k` to `k + 1` of a flat path buffer.
///
/// Only nodes `<= k` are readable while node `k + 1` is written, so the
/// scheme is adapted by construction. Returns false on a non-finite state.
#[inline]
pub(crate) fn euler_step<M: ModelCoefficients, S: IncrementSource>(
    model: &M,
    values: &mut [f64],
    meta: SegmentMeta,
    d: usize,
    k: usize,
    t: f64,
    law: &M::LawStats,
    noise: &mut S,
    scratch: &mut StepScratch,
) -> bool {
    let (past, future) = values.split_at_mut((k + 1) * d);
    let seg = SegmentView::new(meta, d, &past[(k - meta.m) * d..]);
    model.drift(t, &seg, law, &mut scratch.drift);
    model.diffusion(t, &seg, law, &mut scratch.diffusion);
    noise.next_into(&mut scratch.dw);
    let x = seg.current();
    let dt = meta.dt;
    let next = &mut future[..d];
    let mut ok = true;
    for i in 0..d {
        let mut v = x[i] + scratch.drift[i] * dt;
        let row = &scratch.diffusion[i * d..(i + 1) * d];
        for j in 0..d {
            v += row[j] * scratch.dw[j];
        }
        ok &= v.is_finite();
        next[i] = v;
    }
    ok
}

/// Path of the frozen-law equation driven by an arbitrary increment source.
pub fn integrate_sdde_with<M: ModelCoefficients, S: IncrementSource>(
    model: &M,
    psi: &Segment,
    law: &FrozenLaw<M>,
    grid: &TimeGrid,
    noise: &mut S,
) -> Result<GridPath> {
    let d = model.dim();
    if psi.dim() != d || noise.dim() != d {
        return Err(Error::SizeMismatch { left: psi.dim(), right: d });
    }
    let mut path = GridPath::with_initial(*grid, psi)?;
    let mut scratch = StepScratch::new(d);
    let meta = grid.meta();
    for j in 0..grid.n_future() {
        let k = grid.m() + j;
        let t = j as f64 * grid.dt();
        if !euler_step(model, path.values_mut(), meta, d, k, t, law.at_step(j), noise, &mut scratch) {
            return Err(Error::Divergence { step: j, particle: None });
        }
    }
    Ok(path)
}

/// Path of the frozen-law equation on stream `stream` of `noise`.
pub fn integrate_sdde<M: ModelCoefficients>(
    model: &M,
    psi: &Segment,
    law: &FrozenLaw<M>,
    grid: &TimeGrid,
    noise: &NoisePlan,
    stream: u64,
) -> Result<GridPath> {
    check_noise(model, noise, grid)?;
    integrate_sdde_with(model, psi, law, grid, &mut noise.stream(stream))
}

fn check_noise<M: ModelCoefficients>(model: &M, noise: &NoisePlan, grid: &TimeGrid) -> Result<()> {
    if noise.dim != model.dim() {
        return Err(Error::SizeMismatch { left: noise.dim, right: model.dim() });
    }
    if noise.dt != grid.dt() {
        return Err(Error::param("noise step size differs from the grid step"));
    }
    Ok(())
}

/// Paths of `N` particles with their empirical law flow.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub paths: Arc<Vec<GridPath>>,
    pub flow: LawFlow,
}

/// `N` independent frozen-law paths on streams `0..N`, integrated in parallel.
pub fn integrate_ensemble<M: ModelCoefficients>(
    model: &M,
    psi: &Segment,
    law: &FrozenLaw<M>,
    grid: &TimeGrid,
    noise: &NoisePlan,
    n: usize,
    macro_stride: usize,
) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::param("need at least one particle"));
    }
    check_noise(model, noise, grid)?;
    check_psi(grid, psi)?;
    let paths = par::try_map_indexed(n, |i| {
        integrate_sdde_with(model, psi, law, grid, &mut noise.stream(i as u64)).map_err(|e| match e {
            Error::Divergence { step, .. } => Error::Divergence { step, particle: Some(i) },
            other => other,
        })
    })?;
    let paths = Arc::new(paths);
    let flow = LawFlow::from_paths(paths.clone(), macro_stride)?;
    Ok(Ensemble { paths, flow })
}
