//! Empirical laws on segment space and Wasserstein-2 distances between them.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, diff_euclidean_sq, CompensatedSum};
use crate::ot::{assignment_mean_cost, hungarian, sinkhorn_cost, CostMatrix, SinkhornOptions};
use crate::par;
use crate::segment::{GridPath, Segment, SegmentMeta, SegmentView, TimeGrid};

/// Largest ensemble handled by the exact assignment solver by default.
pub const DEFAULT_EXACT_CAP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundMetric {
    /// `max_i |ξ_i - η_i|` over window nodes.
    SupNorm,
    /// `Σ_i w_i |ξ_i - η_i|²` with trapezoid weights.
    L2Weighted,
}

impl GroundMetric {
    /// Squared ground distance between two segments of equal shape.
    pub fn distance_sq(&self, a: &SegmentView<'_>, b: &SegmentView<'_>) -> f64 {
        let m = a.m();
        match self {
            GroundMetric::SupNorm => (0..=m)
                .map(|i| diff_euclidean_sq(a.node(i), b.node(i)))
                .fold(0.0, f64::max),
            GroundMetric::L2Weighted => {
                let meta = a.meta();
                compensated_sum((0..=m).map(|i| meta.weight(i) * diff_euclidean_sq(a.node(i), b.node(i))))
            }
        }
    }
}

/// `N` equally weighted segment samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentEnsemble {
    samples: Vec<Segment>,
}

impl SegmentEnsemble {
    pub fn new(samples: Vec<Segment>) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::param("ensemble must have at least one sample"))?;
        let (meta, dim) = (first.meta(), first.dim());
        if let Some(bad) = samples.iter().position(|s| s.meta() != meta || s.dim() != dim) {
            return Err(Error::param(format!("sample {bad} does not share the ensemble's grid or dimension")));
        }
        Ok(Self { samples })
    }

    /// Segments of every path at grid node `k`.
    pub fn from_paths_at(paths: &[GridPath], k: usize) -> Result<Self> {
        Self::new(paths.iter().map(|p| p.segment_at_node(k).to_owned()).collect())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    pub fn meta(&self) -> SegmentMeta {
        self.samples[0].meta()
    }

    pub fn samples(&self) -> &[Segment] {
        &self.samples
    }

    pub fn views(&self) -> Vec<SegmentView<'_>> {
        self.samples.iter().map(Segment::view).collect()
    }

    /// Adds `shift` to every sample.
    pub fn translate(&self, shift: &Segment) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let neg = shift.map(|v| -v);
                s.sub(&neg)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples)
    }

    pub fn scale(&self, lambda: f64) -> Self {
        Self { samples: self.samples.iter().map(|s| s.map(|v| lambda * v)).collect() }
    }
}

fn check_pair(a: &[SegmentView<'_>], b: &[SegmentView<'_>]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("ensembles must be nonempty"));
    }
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: b.len() });
    }
    if a[0].meta() != b[0].meta() || a[0].dim() != b[0].dim() {
        return Err(Error::param("ensembles live on different segment grids"));
    }
    Ok(())
}

/// Pairwise squared ground costs; rows are built in parallel.
pub fn cost_matrix(a: &[SegmentView<'_>], b: &[SegmentView<'_>], g: GroundMetric) -> CostMatrix {
    let rows = par::map_indexed(a.len(), |i| b.iter().map(|bj| g.distance_sq(&a[i], bj)).collect());
    CostMatrix::from_rows(rows).expect("square by construction")
}

/// Exact `W2` between two equal-size uniform empirical laws.
pub fn w2_exact(a: &SegmentEnsemble, b: &SegmentEnsemble, g: GroundMetric) -> Result<f64> {
    w2_exact_views(&a.views(), &b.views(), g, DEFAULT_EXACT_CAP)
}

pub fn w2_exact_views(a: &[SegmentView<'_>], b: &[SegmentView<'_>], g: GroundMetric, cap: usize) -> Result<f64> {
    check_pair(a, b)?;
    if a.len() > cap {
        return Err(Error::Capacity { n: a.len(), cap });
    }
    let cost = cost_matrix(a, b, g);
    let assign = hungarian(&cost);
    Ok(assignment_mean_cost(&cost, &assign).max(0.0).sqrt())
}

fn node_marginal(a: &SegmentEnsemble, node: usize) -> Result<Vec<f64>> {
    if a.dim() != 1 {
        return Err(Error::param(format!("scalar marginal needs d = 1, got d = {}", a.dim())));
    }
    let m = a.meta().m;
    if node > m {
        return Err(Error::IndexOutOfRange { index: node, max: m });
    }
    let mut v: Vec<f64> = a.samples().iter().map(|s| s.values()[node]).collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `W2` between the scalar marginals at window node `node`, by rank pairing.
pub fn w2_sorted_1d(a: &SegmentEnsemble, b: &SegmentEnsemble, node: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: b.len() });
    }
    let x = node_marginal(a, node)?;
    let y = node_marginal(b, node)?;
    let s = compensated_sum(x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)));
    Ok((s / x.len() as f64).sqrt())
}

/// `W2` between scalar marginals of ensembles of possibly different sizes,
/// by integrating the squared gap between the two quantile functions.
pub fn w2_quantile_1d(a: &SegmentEnsemble, b: &SegmentEnsemble, node: usize) -> Result<f64> {
    let x = node_marginal(a, node)?;
    let y = node_marginal(b, node)?;
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0;
    let mut acc = CompensatedSum::new();
    while i < n && j < m {
        let next_i = (i + 1) as f64 / n as f64;
        let next_j = (j + 1) as f64 / m as f64;
        let next = next_i.min(next_j);
        let d = x[i] - y[j];
        acc.add((next - u) * d * d);
        u = next;
        // Advance by exact rational comparison to avoid skipping on rounding ties.
        let adv_i = (i + 1) * m <= (j + 1) * n;
        let adv_j = (j + 1) * n <= (i + 1) * m;
        if adv_i {
            i += 1;
        }
        if adv_j {
            j += 1;
        }
    }
    Ok(acc.value().max(0.0).sqrt())
}

/// Entropic approximation of `W2`; upper-biased by the regularization.
pub fn w2_entropic(a: &SegmentEnsemble, b: &SegmentEnsemble, g: GroundMetric, opts: SinkhornOptions) -> Result<f64> {
    let (va, vb) = (a.views(), b.views());
    check_pair(&va, &vb)?;
    let cost = cost_matrix(&va, &vb, g);
    Ok(sinkhorn_cost(&cost, opts)?.sqrt())
}

/// Root mean squared ground distance of an explicit pairing; bounds `W2` from above.
pub fn coupling_upper_bound(pairs: &[(Segment, Segment)], g: GroundMetric) -> Result<f64> {
    let a: Vec<_> = pairs.iter().map(|p| p.0.view()).collect();
    let b: Vec<_> = pairs.iter().map(|p| p.1.view()).collect();
    coupling_upper_bound_views(&a, &b, g)
}

/// Same as [`coupling_upper_bound`] with sample `i` of `a` paired to sample `i` of `b`.
pub fn coupling_upper_bound_views(a: &[SegmentView<'_>], b: &[SegmentView<'_>], g: GroundMetric) -> Result<f64> {
    check_pair(a, b)?;
    let d: Vec<f64> = par::map_indexed(a.len(), |i| g.distance_sq(&a[i], &b[i]));
    Ok((compensated_sum(d) / a.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    /// `μ(‖·‖²_∞)`
    SupSq,
    /// `μ(‖·‖^p_{L^p})`
    LpP(f64),
}

pub fn ensemble_moment(a: &SegmentEnsemble, which: Moment) -> Result<f64> {
    moment_views(&a.views(), which)
}

pub fn moment_views(a: &[SegmentView<'_>], which: Moment) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::param("ensemble must be nonempty"));
    }
    let vals: Vec<f64> = match which {
        Moment::SupSq => a.iter().map(|s| s.sup_norm_sq()).collect(),
        Moment::LpP(p) => a.iter().map(|s| s.lp_norm_pow(p)).collect::<Result<_>>()?,
    };
    Ok(compensated_sum(vals) / a.len() as f64)
}

#[derive(Debug, Clone)]
enum FlowStorage {
    /// Snapshots are read from the segment windows of stored paths.
    Paths(Arc<Vec<GridPath>>),
    Snapshots(Vec<SegmentEnsemble>),
}

/// Time-indexed empirical laws, one snapshot every `macro_stride` steps of `[0, T]`.
#[derive(Debug, Clone)]
pub struct LawFlow {
    grid: TimeGrid,
    macro_stride: usize,
    storage: FlowStorage,
}

impl LawFlow {
    /// Flow of the empirical laws of `paths`, sampled every `macro_stride` steps.
    pub fn from_paths(paths: Arc<Vec<GridPath>>, macro_stride: usize) -> Result<Self> {
        let first = paths.first().ok_or_else(|| Error::param("law flow needs at least one path"))?;
        let grid = *first.grid();
        if paths.iter().any(|p| *p.grid() != grid || p.dim() != first.dim()) {
            return Err(Error::param("paths in a law flow must share grid and dimension"));
        }
        check_stride(macro_stride, &grid)?;
        Ok(Self { grid, macro_stride, storage: FlowStorage::Paths(paths) })
    }

    /// Flow from explicit snapshots taken at future steps `0, stride, 2·stride, ...`.
    pub fn from_snapshots(grid: TimeGrid, macro_stride: usize, snapshots: Vec<SegmentEnsemble>) -> Result<Self> {
        check_stride(macro_stride, &grid)?;
        let expected = grid.n_future() / macro_stride + 1;
        if snapshots.len() != expected {
            return Err(Error::SizeMismatch { left: snapshots.len(), right: expected });
        }
        let (n, dim) = (snapshots[0].len(), snapshots[0].dim());
        if snapshots.iter().any(|s| s.len() != n || s.dim() != dim || s.meta() != grid.meta()) {
            return Err(Error::param("law flow snapshots must share N, dimension and grid"));
        }
        Ok(Self { grid, macro_stride, storage: FlowStorage::Snapshots(snapshots) })
    }

    /// The deterministic flow `δ_{X_t}` of a single path.
    pub fn dirac(path: GridPath, macro_stride: usize) -> Result<Self> {
        Self::from_paths(Arc::new(vec![path]), macro_stride)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn macro_stride(&self) -> usize {
        self.macro_stride
    }

    pub fn n_snapshots(&self) -> usize {
        self.grid.n_future() / self.macro_stride + 1
    }

    pub fn n_samples(&self) -> usize {
        match &self.storage {
            FlowStorage::Paths(p) => p.len(),
            FlowStorage::Snapshots(s) => s[0].len(),
        }
    }

    /// Future step (`0..=n_future`) of snapshot `i`.
    pub fn snapshot_step(&self, i: usize) -> usize {
        i * self.macro_stride
    }

    /// Snapshot in force at future step `j`: the latest one at or before it.
    pub fn snapshot_index_for_step(&self, j: usize) -> usize {
        (j / self.macro_stride).min(self.n_snapshots() - 1)
    }

    pub fn snapshot_views(&self, i: usize) -> Vec<SegmentView<'_>> {
        match &self.storage {
            FlowStorage::Paths(paths) => {
                let k = self.grid.m() + self.snapshot_step(i);
                paths.iter().map(|p| p.segment_at_node(k)).collect()
            }
            FlowStorage::Snapshots(s) => s[i].views(),
        }
    }

    pub fn snapshot(&self, i: usize) -> SegmentEnsemble {
        SegmentEnsemble { samples: self.snapshot_views(i).iter().map(|v| v.to_owned()).collect() }
    }

    /// Sample paths behind the flow, when it was built from paths.
    pub fn paths(&self) -> Option<&Arc<Vec<GridPath>>> {
        match &self.storage {
            FlowStorage::Paths(p) => Some(p),
            FlowStorage::Snapshots(_) => None,
        }
    }

    pub fn moment(&self, i: usize, which: Moment) -> Result<f64> {
        moment_views(&self.snapshot_views(i), which)
    }
}

fn check_stride(stride: usize, grid: &TimeGrid) -> Result<()> {
    if stride == 0 || stride > grid.n_future() {
        return Err(Error::param(format!(
            "macro_stride must be in 1..={}, got {stride}",
            grid.n_future()
        )));
    }
    Ok(())
}
