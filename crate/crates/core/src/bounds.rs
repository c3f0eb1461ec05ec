//! Evaluation of explicit stability and moment bounds against Monte Carlo estimates.

use crate::error::{Error, Result};
use crate::mckean::PicardReport;
use crate::numeric::{compensated_sum, euclidean_sq, diff_euclidean_sq};
use crate::segment::{pow_from_sq, GridPath, SegmentView};

/// Standard errors allowed above the bound.
pub const PASS_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: String,
    pub lhs: f64,
    pub stderr: f64,
    pub rhs: f64,
    /// Deterministic slack for quadrature error; zero for Monte Carlo bounds.
    pub tolerance: f64,
    pub inputs: Vec<(String, f64)>,
    pub note: Option<String>,
}

impl BoundReport {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn pass(&self) -> bool {
        self.lhs <= self.rhs + PASS_SIGMAS * self.stderr + self.tolerance
    }
}

fn inputs(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// `‖Z_s‖_{L^p}^p` for the segment of `Z = X - Y` ending at node `k`.
fn diff_segment_lp(x: &GridPath, y: &GridPath, k: usize, p: f64) -> f64 {
    let (sx, sy) = (x.segment_at_node(k), y.segment_at_node(k));
    let meta = sx.meta();
    compensated_sum((0..=meta.m).map(|i| meta.weight(i) * pow_from_sq(diff_euclidean_sq(sx.node(i), sy.node(i)), p)))
}

/// The deterministic delay estimate
/// `∫_0^t e^{-λs} ‖X_s - Y_s‖_{L^p}^p ds
///   <= r0 ∫_0^t e^{-λs} |X(s) - Y(s)|^p ds + r0 e^{λ r0} ‖X_0 - Y_0‖_{L^p}^p`,
/// both sides by trapezoid quadrature, with slack `2·p·dt·max(1, r0)·scale^p`
/// where `scale` is the largest node distance between the paths.
pub fn lemma_a1_check(x: &GridPath, y: &GridPath, lambda: f64, p: f64, t: f64) -> Result<BoundReport> {
    if x.grid() != y.grid() || x.dim() != y.dim() {
        return Err(Error::param("paths must share grid and dimension"));
    }
    if !(lambda >= 0.0) || !(p >= 2.0) {
        return Err(Error::param("need λ >= 0 and p >= 2"));
    }
    let grid = x.grid();
    let kt = grid.node_at(t)?;
    if kt < grid.m() {
        return Err(Error::WindowUnderflow { t });
    }
    let (m, dt, r0) = (grid.m(), grid.dt(), grid.r0());
    let nsteps = kt - m;
    let w = |j: usize| if j == 0 || j == nsteps { 0.5 * dt } else { dt };
    let lhs = if nsteps == 0 {
        0.0
    } else {
        compensated_sum((0..=nsteps).map(|j| w(j) * (-lambda * j as f64 * dt).exp() * diff_segment_lp(x, y, m + j, p)))
    };
    let pointwise = if nsteps == 0 {
        0.0
    } else {
        compensated_sum((0..=nsteps).map(|j| {
            let k = m + j;
            w(j) * (-lambda * j as f64 * dt).exp() * pow_from_sq(diff_euclidean_sq(x.node(k), y.node(k)), p)
        }))
    };
    let initial = diff_segment_lp(x, y, m, p);
    let rhs = r0 * pointwise + r0 * (lambda * r0).exp() * initial;
    let scale_sq = (0..=kt).map(|k| diff_euclidean_sq(x.node(k), y.node(k))).fold(0.0, f64::max);
    let tolerance = 2.0 * p * dt * r0.max(1.0) * pow_from_sq(scale_sq, p);
    Ok(BoundReport {
        name: "lemma_a1".into(),
        lhs,
        stderr: 0.0,
        rhs,
        tolerance,
        inputs: inputs(&[("lambda", lambda), ("p", p), ("t", t), ("r0", r0), ("dt", dt)]),
        note: None,
    })
}

/// 64 log-spaced points in `(0.001, 0.999)`.
pub fn default_eps_grid() -> Vec<f64> {
    let (lo, hi) = (0.001f64.ln(), 0.999f64.ln());
    (0..64).map(|i| (lo + (hi - lo) * i as f64 / 63.0).exp()).collect()
}

fn check_eps(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.is_empty() || eps_grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::param("ε grid must be nonempty and inside (0, 1)"));
    }
    Ok(())
}

/// Minimum of `f` over the grid, with a flag set when it sits at either end.
fn minimize(eps_grid: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64, bool) {
    let mut best = (f64::INFINITY, eps_grid[0], 0usize);
    for (i, &e) in eps_grid.iter().enumerate() {
        let v = f(e);
        if v < best.0 {
            best = (v, e, i);
        }
    }
    let edge = best.2 == 0 || best.2 == eps_grid.len() - 1;
    (best.0, best.1, edge)
}

/// Statistics of two coupled runs from different initial segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledStats {
    /// `E‖X_0 - Y_0‖²_∞`
    pub init_sup_sq: f64,
    /// `E‖X_0 - Y_0‖^p_{L^p}`
    pub init_lp: f64,
    /// Estimate of `E sup_{[-r0, t]} |X - Y|²` and its standard error.
    pub lhs: f64,
    pub lhs_stderr: f64,
}

/// Finite-dimensional stability bound
/// `min_ε ( E‖X0-Y0‖²_∞/(1-ε) + 2β (ε+6)/((1-ε)ε) E‖X0-Y0‖^p_{L^p} )
///        · exp(4β (ε+3)/((1-ε)ε) t)`.
pub fn stability_bound_finite(beta: f64, stats: &CoupledStats, t: f64, eps_grid: &[f64]) -> Result<BoundReport> {
    check_eps(eps_grid)?;
    let f = |e: f64| {
        let k = (1.0 - e) * e;
        let pre = stats.init_sup_sq / (1.0 - e) + 2.0 * beta * (e + 6.0) / k * stats.init_lp;
        if pre == 0.0 {
            0.0
        } else {
            pre * (4.0 * beta * (e + 3.0) / k * t).exp()
        }
    };
    // With β = 0 the infimum is the ε → 0 limit.
    let (rhs, eps, edge) = if beta == 0.0 { (stats.init_sup_sq, 0.0, false) } else { minimize(eps_grid, f) };
    Ok(BoundReport {
        name: "stability_finite".into(),
        lhs: stats.lhs,
        stderr: stats.lhs_stderr,
        rhs,
        tolerance: 0.0,
        inputs: inputs(&[
            ("beta", beta),
            ("t", t),
            ("init_sup_sq", stats.init_sup_sq),
            ("init_lp", stats.init_lp),
            ("eps_min", eps),
        ]),
        note: edge.then(|| "minimizing ε at the grid edge".to_string()),
    })
}

/// Moment estimates of a run for the explicit Gronwall bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentStats {
    /// `E‖X_0‖²_∞`
    pub init_sup_sq: f64,
    /// `E‖X_0‖^p_{L^p}`
    pub init_lp: f64,
    /// Estimate of `G(T) = E sup_{[-r0,T]} |X|² + ∫_0^T E|X(s)|^p ds` and its standard error.
    pub g: f64,
    pub g_stderr: f64,
}

/// `G(T) <= (a0 + a1 T) e^{2 a1 T}` with `a0 = 2E‖X0‖²_∞ + 2α E‖X0‖^p_{L^p}`
/// and `a1 = 2(α + 2γ)`.
pub fn moment_bound_finite(alpha: f64, gamma: f64, stats: &MomentStats, horizon: f64) -> BoundReport {
    let a0 = 2.0 * stats.init_sup_sq + 2.0 * alpha * stats.init_lp;
    let a1 = 2.0 * (alpha + 2.0 * gamma);
    let rhs = (a0 + a1 * horizon) * (2.0 * a1 * horizon).exp();
    BoundReport {
        name: "moment_finite".into(),
        lhs: stats.g,
        stderr: stats.g_stderr,
        rhs,
        tolerance: 0.0,
        inputs: inputs(&[("alpha", alpha), ("gamma", gamma), ("T", horizon), ("a0", a0), ("a1", a1)]),
        note: None,
    }
}

/// Infinite-dimensional stability bound at time `t`:
/// `E‖X(t) - Y(t)‖²_H <= (1 + r0² e^{2β r0²}) e^{2β r0 t} E‖X_0 - Y_0‖²_{C(H)}`.
pub fn stability_bound_infinite(beta: f64, r0: f64, t: f64, init_ch: f64, lhs: f64, lhs_stderr: f64) -> BoundReport {
    let rhs = (1.0 + r0 * r0 * (2.0 * beta * r0 * r0).exp()) * (2.0 * beta * r0 * t).exp() * init_ch;
    BoundReport {
        name: "stability_infinite".into(),
        lhs,
        stderr: lhs_stderr,
        rhs,
        tolerance: 0.0,
        inputs: inputs(&[("beta", beta), ("r0", r0), ("t", t), ("init_ch", init_ch)]),
        note: None,
    }
}

/// Sup version:
/// `E sup_{[0,t]} ‖X - Y‖²_H <= min_ε E‖X_0 - Y_0‖²_{C(H)}/(1-ε) · exp(2r0/(1-ε) (1 + 6/ε) β t)`.
pub fn stability_bound_infinite_sup(
    beta: f64,
    r0: f64,
    t: f64,
    init_ch: f64,
    lhs: f64,
    lhs_stderr: f64,
    eps_grid: &[f64],
) -> Result<BoundReport> {
    check_eps(eps_grid)?;
    let (rhs, eps, edge) = if beta == 0.0 {
        (init_ch, 0.0, false)
    } else {
        minimize(eps_grid, |e| init_ch / (1.0 - e) * (2.0 * r0 / (1.0 - e) * (1.0 + 6.0 / e) * beta * t).exp())
    };
    Ok(BoundReport {
        name: "stability_infinite_sup".into(),
        lhs,
        stderr: lhs_stderr,
        rhs,
        tolerance: 0.0,
        inputs: inputs(&[("beta", beta), ("r0", r0), ("t", t), ("init_ch", init_ch), ("eps_min", eps)]),
        note: edge.then(|| "minimizing ε at the grid edge".to_string()),
    })
}

/// `E sup_{[-r0, T]} |X - Y|²` over coupled path pairs, with standard error.
pub fn coupled_sup_sq(xs: &[GridPath], ys: &[GridPath]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::SizeMismatch { left: xs.len(), right: ys.len() });
    }
    let v: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (0..x.grid().n_nodes()).map(|k| diff_euclidean_sq(x.node(k), y.node(k))).fold(0.0, f64::max))
        .collect();
    Ok(crate::numeric::mean_stderr(&v))
}

/// Per-path `sup_{[-r0, T]} |X|² + ∫_0^T |X(s)|^p ds` (trapezoid), averaged.
pub fn moment_functional(paths: &[GridPath], p: f64) -> (f64, f64) {
    let v: Vec<f64> = paths
        .iter()
        .map(|x| {
            let g = x.grid();
            let nf = g.n_future();
            let integral = compensated_sum((0..=nf).map(|j| {
                let w = if j == 0 || j == nf { 0.5 * g.dt() } else { g.dt() };
                w * pow_from_sq(euclidean_sq(x.node(g.m() + j)), p)
            }));
            x.sup_sq() + integral
        })
        .collect();
    crate::numeric::mean_stderr(&v)
}

/// Initial-segment moments `(E‖X_0‖²_∞, E‖X_0‖^p_{L^p})`.
pub fn initial_moments(init: &[SegmentView<'_>], p: f64) -> (f64, f64) {
    let n = init.len() as f64;
    (
        compensated_sum(init.iter().map(|s| s.sup_norm_sq())) / n,
        compensated_sum(init.iter().map(|s| s.lp_norm_pow_unchecked(p))) / n,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractionStatus {
    /// The first distance is already zero (no law dependence).
    AlreadyZero,
    /// Every distance is at or below the floor.
    FloorSaturated,
    /// Ratios are eventually below one and nonincreasing before the floor.
    SuperGeometricConsistent,
    NotContracting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionSummary {
    pub status: ContractionStatus,
    /// `ρ_n = d(n+1) / d(n)` over iterations above the floor.
    pub ratios: Vec<f64>,
    /// Index of the first record at or below the floor, if any.
    pub floor_reached_at: Option<usize>,
}

/// Ratio summary of the Picard flow distances.
pub fn contraction_report(report: &PicardReport, floor: f64) -> Result<ContractionSummary> {
    let d: Vec<f64> = report.records.iter().map(|r| r.flow_distance).collect();
    if d.first() == Some(&0.0) {
        return Ok(ContractionSummary { status: ContractionStatus::AlreadyZero, ratios: vec![], floor_reached_at: Some(0) });
    }
    if d.len() < 4 {
        return Err(Error::param(format!("contraction summary needs at least 4 iterations, got {}", d.len())));
    }
    let floor_at = d.iter().position(|&x| x <= floor);
    if floor_at == Some(0) {
        return Ok(ContractionSummary { status: ContractionStatus::FloorSaturated, ratios: vec![], floor_reached_at: floor_at });
    }
    let end = floor_at.map_or(d.len(), |i| i + 1);
    let ratios: Vec<f64> = d[..end].windows(2).map(|w| w[1] / w[0]).collect();
    let mut tail = 0;
    for i in (0..ratios.len()).rev() {
        let ok = ratios[i] < 1.0 && (i + 1 == ratios.len() || ratios[i + 1] <= ratios[i] * (1.0 + 1e-9) || floor_at.is_some() && i + 2 == ratios.len());
        if ok {
            tail += 1;
        } else {
            break;
        }
    }
    let needed = ratios.len().min(2);
    let status = if tail >= needed && !ratios.is_empty() {
        ContractionStatus::SuperGeometricConsistent
    } else {
        ContractionStatus::NotContracting
    };
    Ok(ContractionSummary { status, ratios, floor_reached_at: floor_at })
}
