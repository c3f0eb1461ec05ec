//! Optimal-transport kernels on dense cost matrices.

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Square cost matrix, row-major.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::SizeMismatch { left: r.len(), right: n });
            }
            data.extend(r);
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn median(&self) -> f64 {
        let mut v = self.data.clone();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }
}

/// Minimum-cost perfect assignment (Hungarian method with potentials, O(n³)).
///
/// Returns `assign` with row `i` matched to column `assign[i]`.
pub fn hungarian(cost: &CostMatrix) -> Vec<usize> {
    let n = cost.n();
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Mean cost of an assignment. Costs are summed in sorted order so the value
/// depends only on the multiset of matched costs.
pub fn assignment_mean_cost(cost: &CostMatrix, assign: &[usize]) -> f64 {
    let mut c: Vec<f64> = assign.iter().enumerate().map(|(i, &j)| cost.get(i, j)).collect();
    c.sort_by(f64::total_cmp);
    c.into_iter().collect::<CompensatedSum>().value() / cost.n() as f64
}

#[derive(Debug, Clone, Copy)]
pub struct SinkhornOptions {
    pub reg: f64,
    pub max_iter: usize,
    /// Target L1 gap between the plan's row marginals and the uniform weights;
    /// the induced cost error is at most `tol · max cost`.
    pub tol: f64,
}

impl SinkhornOptions {
    pub fn new(reg: f64, max_iter: usize) -> Self {
        Self { reg, max_iter, tol: 1e-5 }
    }

    /// Regularization set relative to the median entry of the cost matrix.
    pub fn relative(rel: f64, max_iter: usize) -> RelativeReg {
        RelativeReg { rel, max_iter }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RelativeReg {
    pub rel: f64,
    pub max_iter: usize,
}

impl RelativeReg {
    pub fn resolve(&self, cost: &CostMatrix) -> SinkhornOptions {
        let med = cost.median();
        let reg = if med > 0.0 { self.rel * med } else { self.rel };
        SinkhornOptions::new(reg, self.max_iter)
    }
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + xs.map(|x| (x - mx).exp()).sum::<f64>().ln()
}

fn row_gap(cost: &CostMatrix, f: &[f64], g: &[f64], eps: f64) -> f64 {
    let n = cost.n();
    (0..n)
        .map(|i| {
            let r: f64 = (0..n).map(|j| ((f[i] + g[j] - cost.get(i, j)) / eps).exp()).sum();
            (r - 1.0 / n as f64).abs()
        })
        .sum()
}

/// Transport cost `Σ P_ij C_ij` of the entropic plan between uniform marginals.
///
/// Log-domain Sinkhorn with ε-scaling: the regularization starts at the
/// largest cost and shrinks tenfold towards `opts.reg`, warm-starting the potentials.
/// `opts.max_iter` bounds the total number of sweeps.
pub fn sinkhorn_cost(cost: &CostMatrix, opts: SinkhornOptions) -> Result<f64> {
    let n = cost.n();
    if !(opts.reg > 0.0 && opts.reg.is_finite()) {
        return Err(Error::param(format!("entropic regularization must be positive, got {}", opts.reg)));
    }
    if n == 0 {
        return Err(Error::param("empty ensembles"));
    }
    let log_w = -(n as f64).ln();
    let cmax = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| cost.get(i, j)).fold(0.0, f64::max);
    let mut eps = cmax.max(opts.reg);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let last = eps <= opts.reg;
        let tol = if last { opts.tol } else { opts.tol.max(1e-3) };
        loop {
            if iterations >= opts.max_iter {
                return Err(Error::Convergence { iterations, gap });
            }
            iterations += 1;
            for i in 0..n {
                f[i] = eps * log_w - eps * logsumexp((0..n).map(|j| (g[j] - cost.get(i, j)) / eps));
            }
            for j in 0..n {
                g[j] = eps * log_w - eps * logsumexp((0..n).map(|i| (f[i] - cost.get(i, j)) / eps));
            }
            gap = row_gap(cost, &f, &g, eps);
            if gap <= tol {
                break;
            }
        }
        if last {
            break;
        }
        eps = (0.1 * eps).max(opts.reg);
    }
    let mut total = CompensatedSum::new();
    for i in 0..n {
        for j in 0..n {
            let c = cost.get(i, j);
            total.add(((f[i] + g[j] - c) / eps).exp() * c);
        }
    }
    Ok(total.value().max(0.0))
}
