//! Uniform time grids, state paths and the delay-segment operator.
//!
//! A [`TimeGrid`] covers `[-r0, T]` with nodes `t_k = -r0 + k·dt`, where
//! `r0 = m·dt` exactly. Node `m` is `t = 0`. Paths keep the initial window
//! inline (nodes `0..=m`), so extracting the segment at a grid time is an
//! index shift and never interpolates.

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, euclidean_sq, trapezoid_weight};

const ALIGN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    m: usize,
    dt: f64,
    n_future: usize,
}

impl TimeGrid {
    /// Grid with `m` delay steps of size `dt` and `n_future` steps over `[0, T]`.
    pub fn new(m: usize, dt: f64, n_future: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("delay steps m must be at least 1"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param(format!("dt must be positive and finite, got {dt}")));
        }
        if n_future == 0 {
            return Err(Error::param("horizon T must be positive"));
        }
        Ok(Self { m, dt, n_future })
    }

    /// Grid whose horizon is given as a time; `horizon` must be a multiple of `dt`.
    pub fn with_horizon(m: usize, dt: f64, horizon: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param(format!("dt must be positive and finite, got {dt}")));
        }
        let steps = horizon / dt;
        let rounded = steps.round();
        if !(horizon > 0.0) || (steps - rounded).abs() > ALIGN_TOL * rounded.max(1.0) {
            return Err(Error::param(format!("T = {horizon} is not a positive multiple of dt = {dt}")));
        }
        Self::new(m, dt, rounded as usize)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_future(&self) -> usize {
        self.n_future
    }

    pub fn r0(&self) -> f64 {
        self.m as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.n_future as f64 * self.dt
    }

    /// Total number of steps over `[-r0, T]`.
    pub fn n_steps(&self) -> usize {
        self.m + self.n_future
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps() + 1
    }

    pub fn meta(&self) -> SegmentMeta {
        SegmentMeta { m: self.m, dt: self.dt }
    }

    /// Time of grid node `k`.
    pub fn time(&self, node: usize) -> f64 {
        (node as f64 - self.m as f64) * self.dt
    }

    /// Node index of a grid time, or an alignment error.
    pub fn node_at(&self, t: f64) -> Result<usize> {
        let x = (t + self.r0()) / self.dt;
        let k = x.round();
        if !t.is_finite() || (x - k).abs() > ALIGN_TOL * k.abs().max(1.0) || k < 0.0 {
            return Err(Error::Alignment { t, dt: self.dt });
        }
        let k = k as usize;
        if k > self.n_steps() {
            return Err(Error::IndexOutOfRange { index: k, max: self.n_steps() });
        }
        Ok(k)
    }

    /// Same delay window, step size and horizon, refined by an integer factor.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::param("refinement factor must be positive"));
        }
        Self::new(self.m * factor, self.dt / factor as f64, self.n_future * factor)
    }
}

/// Delay-window geometry shared by segments: `m + 1` nodes spaced `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentMeta {
    pub m: usize,
    pub dt: f64,
}

impl SegmentMeta {
    pub fn r0(&self) -> f64 {
        self.m as f64 * self.dt
    }

    /// Trapezoid weight of window node `i`; the weights sum to `r0`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        trapezoid_weight(i, self.m, self.dt)
    }
}

/// Borrowed delay segment: `m + 1` consecutive `d`-vectors covering `θ ∈ [-r0, 0]`.
#[derive(Debug, Clone, Copy)]
pub struct SegmentView<'a> {
    meta: SegmentMeta,
    dim: usize,
    values: &'a [f64],
}

impl<'a> SegmentView<'a> {
    pub(crate) fn new(meta: SegmentMeta, dim: usize, values: &'a [f64]) -> Self {
        debug_assert_eq!(values.len(), (meta.m + 1) * dim);
        Self { meta, dim, values }
    }

    pub fn meta(&self) -> SegmentMeta {
        self.meta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.meta.m
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    /// Value at window node `i`, no bounds check beyond the slice's own.
    #[inline]
    pub fn node(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Value at window node `i`; node `m` is `θ = 0`, node 0 is `θ = -r0`.
    pub fn evaluate(&self, i: usize) -> Result<&'a [f64]> {
        if i > self.meta.m {
            return Err(Error::IndexOutOfRange { index: i, max: self.meta.m });
        }
        Ok(self.node(i))
    }

    /// `ξ(0)`.
    #[inline]
    pub fn current(&self) -> &'a [f64] {
        self.node(self.meta.m)
    }

    /// `ξ(-r0)`.
    #[inline]
    pub fn delayed(&self) -> &'a [f64] {
        self.node(0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm_sq().sqrt()
    }

    pub fn sup_norm_sq(&self) -> f64 {
        (0..=self.meta.m)
            .map(|i| euclidean_sq(self.node(i)))
            .fold(0.0, f64::max)
    }

    /// `‖ξ‖_{L^p}^p` by the trapezoid rule on the window nodes.
    pub fn lp_norm_pow(&self, p: f64) -> Result<f64> {
        if !(p >= 2.0) {
            return Err(Error::param(format!("L^p exponent must be >= 2, got {p}")));
        }
        Ok(self.lp_norm_pow_unchecked(p))
    }

    pub(crate) fn lp_norm_pow_unchecked(&self, p: f64) -> f64 {
        compensated_sum((0..=self.meta.m).map(|i| {
            let r2 = euclidean_sq(self.node(i));
            self.meta.weight(i) * pow_from_sq(r2, p)
        }))
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        Ok(self.lp_norm_pow(p)?.powf(1.0 / p))
    }

    pub fn to_owned(&self) -> Segment {
        Segment {
            meta: self.meta,
            dim: self.dim,
            values: self.values.to_vec(),
        }
    }
}

/// `|x|^p` given `|x|^2`.
#[inline]
pub(crate) fn pow_from_sq(r2: f64, p: f64) -> f64 {
    if p == 2.0 {
        r2
    } else {
        r2.powf(0.5 * p)
    }
}

/// Owned delay segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    meta: SegmentMeta,
    dim: usize,
    values: Vec<f64>,
}

impl Segment {
    /// Segment from flat node-major values (`(m + 1) · dim` entries).
    pub fn from_values(meta: SegmentMeta, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("state dimension must be at least 1"));
        }
        if values.len() != (meta.m + 1) * dim {
            return Err(Error::SizeMismatch { left: values.len(), right: (meta.m + 1) * dim });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("segment values must be finite"));
        }
        Ok(Self { meta, dim, values })
    }

    /// Segment sampled from `f(θ)` at the window nodes.
    pub fn from_fn(meta: SegmentMeta, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity((meta.m + 1) * dim);
        for i in 0..=meta.m {
            let theta = (i as f64 - meta.m as f64) * meta.dt;
            let v = f(theta);
            if v.len() != dim {
                return Err(Error::SizeMismatch { left: v.len(), right: dim });
            }
            values.extend(v);
        }
        Self::from_values(meta, dim, values)
    }

    pub fn constant(meta: SegmentMeta, value: &[f64]) -> Self {
        let values = (0..=meta.m).flat_map(|_| value.iter().copied()).collect();
        Self { meta, dim: value.len(), values }
    }

    pub fn view(&self) -> SegmentView<'_> {
        SegmentView::new(self.meta, self.dim, &self.values)
    }

    pub fn meta(&self) -> SegmentMeta {
        self.meta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn evaluate(&self, i: usize) -> Result<&[f64]> {
        self.view().evaluate(i)
    }

    pub fn sup_norm(&self) -> f64 {
        self.view().sup_norm()
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        self.view().lp_norm(p)
    }

    /// Node-wise map producing a segment of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            meta: self.meta,
            dim: self.dim,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Node-wise difference `self - other`.
    pub fn sub(&self, other: &Segment) -> Result<Self> {
        if self.meta != other.meta || self.dim != other.dim {
            return Err(Error::SizeMismatch { left: self.values.len(), right: other.values.len() });
        }
        Ok(Self {
            meta: self.meta,
            dim: self.dim,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }
}

/// A state path on a uniform grid, nodes `0..=n_steps`, each a `d`-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl GridPath {
    pub fn from_values(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("state dimension must be at least 1"));
        }
        if values.len() != grid.n_nodes() * dim {
            return Err(Error::SizeMismatch { left: values.len(), right: grid.n_nodes() * dim });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("path values must be finite"));
        }
        Ok(Self { grid, dim, values })
    }

    /// Path sampled from `f(t)` at every grid node.
    pub fn from_fn(grid: TimeGrid, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_nodes() * dim);
        for k in 0..grid.n_nodes() {
            let v = f(grid.time(k));
            if v.len() != dim {
                return Err(Error::SizeMismatch { left: v.len(), right: dim });
            }
            values.extend(v);
        }
        Self::from_values(grid, dim, values)
    }

    /// `X(t) = ψ(t ∧ 0)`: the initial segment extended constantly into the future.
    pub fn constant_extension(grid: TimeGrid, psi: &Segment) -> Result<Self> {
        check_psi(&grid, psi)?;
        let dim = psi.dim();
        let mut values = Vec::with_capacity(grid.n_nodes() * dim);
        values.extend_from_slice(psi.values());
        let last = psi.view().current().to_vec();
        for _ in 0..grid.n_future() {
            values.extend_from_slice(&last);
        }
        Ok(Self { grid, dim, values })
    }

    /// Path whose initial window is `psi` and whose future nodes are zero,
    /// ready to be filled step by step.
    pub(crate) fn with_initial(grid: TimeGrid, psi: &Segment) -> Result<Self> {
        check_psi(&grid, psi)?;
        let mut values = vec![0.0; grid.n_nodes() * psi.dim()];
        values[..psi.values().len()].copy_from_slice(psi.values());
        Ok(Self { grid, dim: psi.dim(), values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Value at grid node `k`.
    #[inline]
    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Segment ending at grid node `k` (`k >= m`).
    #[inline]
    pub fn segment_at_node(&self, k: usize) -> SegmentView<'_> {
        let m = self.grid.m();
        debug_assert!(k >= m && k <= self.grid.n_steps());
        SegmentView::new(self.grid.meta(), self.dim, &self.values[(k - m) * self.dim..(k + 1) * self.dim])
    }

    /// `X_t = π_t X` for a grid time `t >= 0`.
    pub fn extract_segment(&self, t: f64) -> Result<Segment> {
        if t < -ALIGN_TOL * self.grid.dt() {
            return Err(Error::WindowUnderflow { t });
        }
        let k = self.grid.node_at(t)?;
        Ok(self.segment_at_node(k).to_owned())
    }

    /// Initial segment `X_0`.
    pub fn initial_segment(&self) -> SegmentView<'_> {
        self.segment_at_node(self.grid.m())
    }

    /// `max_k |X(t_k)|^2` over all nodes.
    pub fn sup_sq(&self) -> f64 {
        (0..self.grid.n_nodes())
            .map(|k| euclidean_sq(self.node(k)))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_psi(grid: &TimeGrid, psi: &Segment) -> Result<()> {
    if psi.meta() != grid.meta() {
        return Err(Error::param(format!(
            "initial segment geometry (m = {}, dt = {}) does not match grid (m = {}, dt = {})",
            psi.meta().m,
            psi.meta().dt,
            grid.m(),
            grid.dt()
        )));
    }
    Ok(())
}
