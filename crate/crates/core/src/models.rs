//! Drift/diffusion coefficients, the shipped model families and numerical
//! probes of the coercivity, monotonicity and growth conditions.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::galerkin::GelfandSpec;
use crate::law::{w2_exact_views, GroundMetric, DEFAULT_EXACT_CAP};
use crate::noise::{derive_rng, Purpose};
use crate::numeric::{compensated_sum, euclidean_sq};
use crate::segment::{pow_from_sq, GridPath, Segment, SegmentView, TimeGrid};

/// Constants of the coercivity (α), monotonicity (β) and growth (γ, q0) conditions,
/// taken as their values on the whole horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionConstants {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub q0: u32,
}

impl ConditionConstants {
    pub fn new(alpha: f64, beta: f64, gamma: f64, q0: u32) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if q0 == 0 {
            return Err(Error::param("q0 must be at least 1"));
        }
        Ok(Self { alpha, beta, gamma, q0 })
    }
}

/// Coefficients `b(t, ξ, μ)` and `σ(t, ξ, μ)`.
///
/// The law enters only through [`summarize_law`](Self::summarize_law), which
/// is evaluated once per time step on the whole ensemble; `drift` and
/// `diffusion` then see the summary. Implementations must be pure.
pub trait ModelCoefficients: Sync {
    type LawStats: Send + Sync;

    fn dim(&self) -> usize;

    /// Growth exponent `p >= 2`.
    fn exponent(&self) -> f64;

    fn constants(&self) -> ConditionConstants;

    fn summarize_law(&self, law: &[SegmentView<'_>]) -> Self::LawStats;

    fn drift(&self, t: f64, seg: &SegmentView<'_>, law: &Self::LawStats, out: &mut [f64]);

    /// `d × d` matrix, row-major.
    fn diffusion(&self, t: f64, seg: &SegmentView<'_>, law: &Self::LawStats, out: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMeanFieldParams {
    pub a_self: f64,
    pub b_delay: f64,
    pub c_mean: f64,
    pub e_mean_delay: f64,
    /// `d × d`, row-major.
    pub sigma: Vec<f64>,
    pub dim: usize,
}

impl LinearMeanFieldParams {
    /// Scalar-weight model with `σ = sigma · I_d`.
    pub fn isotropic(a_self: f64, b_delay: f64, c_mean: f64, e_mean_delay: f64, sigma: f64, dim: usize) -> Self {
        let mut s = vec![0.0; dim * dim];
        for i in 0..dim {
            s[i * dim + i] = sigma;
        }
        Self { a_self, b_delay, c_mean, e_mean_delay, sigma: s, dim }
    }

    pub fn weight_sum(&self) -> f64 {
        self.a_self.abs() + self.b_delay.abs() + self.c_mean.abs() + self.e_mean_delay.abs()
    }

    pub fn depends_on_law(&self) -> bool {
        self.c_mean != 0.0 || self.e_mean_delay != 0.0
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::param("dim must be at least 1"));
        }
        if self.sigma.len() != self.dim * self.dim {
            return Err(Error::SizeMismatch { left: self.sigma.len(), right: self.dim * self.dim });
        }
        let all = [self.a_self, self.b_delay, self.c_mean, self.e_mean_delay];
        if all.iter().chain(&self.sigma).any(|v| !v.is_finite()) {
            return Err(Error::param("linear model parameters must be finite"));
        }
        Ok(())
    }
}

/// `b = a·ξ(0) + b·ξ(-r0) + c·E_μ[x(0)] + e·E_μ[x(-r0)]`, `σ` constant, `p = 2`.
#[derive(Debug, Clone)]
pub struct LinearMeanField {
    params: LinearMeanFieldParams,
    constants: ConditionConstants,
}

/// Means of the law at `θ = 0` and `θ = -r0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanStats {
    pub now: Vec<f64>,
    pub delayed: Vec<f64>,
}

impl LinearMeanField {
    pub fn new(params: LinearMeanFieldParams) -> Result<Self> {
        params.validate()?;
        let s = params.weight_sum();
        let sig = DMatrix::from_row_slice(params.dim, params.dim, &params.sigma);
        let op = sig.singular_values().max();
        let sigma_sq = op * op;
        let constants = ConditionConstants {
            alpha: 2.0 * s + 1.0,
            beta: 4.0 * (s * s + s),
            gamma: 2.0 * (4.0 * s * s).max(3.0 * sigma_sq).max(1.0),
            q0: 1,
        };
        Ok(Self { params, constants })
    }

    /// Same coefficients with caller-supplied constants (used to test the probes).
    pub fn with_constants(mut self, constants: ConditionConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn params(&self) -> &LinearMeanFieldParams {
        &self.params
    }
}

impl ModelCoefficients for LinearMeanField {
    type LawStats = MeanStats;

    fn dim(&self) -> usize {
        self.params.dim
    }

    fn exponent(&self) -> f64 {
        2.0
    }

    fn constants(&self) -> ConditionConstants {
        self.constants
    }

    fn summarize_law(&self, law: &[SegmentView<'_>]) -> MeanStats {
        let d = self.params.dim;
        let n = law.len() as f64;
        let mean_at = |delayed: bool| -> Vec<f64> {
            let pick = |s: &SegmentView<'_>, j: usize| if delayed { s.delayed()[j] } else { s.current()[j] };
            (0..d).map(|j| compensated_sum(law.iter().map(|s| pick(s, j))) / n).collect()
        };
        if !self.params.depends_on_law() || law.is_empty() {
            return MeanStats { now: vec![0.0; d], delayed: vec![0.0; d] };
        }
        MeanStats {
            now: mean_at(false),
            delayed: mean_at(true),
        }
    }

    #[inline]
    fn drift(&self, _t: f64, seg: &SegmentView<'_>, law: &MeanStats, out: &mut [f64]) {
        let p = &self.params;
        let (x0, xr) = (seg.current(), seg.delayed());
        for j in 0..p.dim {
            let mut v = p.a_self * x0[j];
            if p.b_delay != 0.0 {
                v += p.b_delay * xr[j];
            }
            if p.c_mean != 0.0 {
                v += p.c_mean * law.now[j];
            }
            if p.e_mean_delay != 0.0 {
                v += p.e_mean_delay * law.delayed[j];
            }
            out[j] = v;
        }
    }

    #[inline]
    fn diffusion(&self, _t: f64, _seg: &SegmentView<'_>, _law: &MeanStats, out: &mut [f64]) {
        out.copy_from_slice(&self.params.sigma);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerLawKind {
    PowerLaw,
}

/// Porous-medium-type nonlinearity `ψ(u) = |u|^{p-2} u` on `(0, L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PorousMediumParams {
    pub p: f64,
    pub domain_length: f64,
    pub kind: PowerLawKind,
}

impl PorousMediumParams {
    pub fn new(p: f64, domain_length: f64) -> Result<Self> {
        if !(p >= 2.0 && p.is_finite()) {
            return Err(Error::param(format!("p must be >= 2, got {p}")));
        }
        if !(domain_length > 0.0 && domain_length.is_finite()) {
            return Err(Error::param(format!("domain length must be positive, got {domain_length}")));
        }
        Ok(Self { p, domain_length, kind: PowerLawKind::PowerLaw })
    }

    /// `|u|^{p-2} u`.
    #[inline]
    pub fn psi(&self, u: f64) -> f64 {
        if self.p == 2.0 {
            u
        } else {
            u.abs().powf(self.p - 2.0) * u
        }
    }

    /// Pointwise `ψ` applied to `u` sampled on the x-grid.
    pub fn psi_on_grid(&self, u: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(u) {
            *o = self.psi(x);
        }
    }

    /// Constants for the power law: `2∫ψ(u)u = 2‖u‖_V^p` gives α = 0,
    /// monotonicity gives β = 0, and `‖ψ(u)‖_{p*}^{p*} = ‖u‖_V^p` gives γ = 1.
    pub fn constants(&self) -> ConditionConstants {
        ConditionConstants { alpha: 0.0, beta: 0.0, gamma: 1.0, q0: 1 }
    }

    pub fn is_identity(&self) -> bool {
        self.p == 2.0
    }
}

/// `(ψ(a) - ψ(b))(a - b)`, the monotonicity integrand.
pub fn power_law_monotonicity_integrand(params: &PorousMediumParams, a: f64, b: f64) -> f64 {
    (params.psi(a) - params.psi(b)) * (a - b)
}

/// Worst margin `RHS - LHS` seen for one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionMargin {
    pub name: &'static str,
    pub worst_margin: f64,
    pub checks: usize,
    pub violations: usize,
}

impl ConditionMargin {
    fn new(name: &'static str) -> Self {
        Self { name, worst_margin: f64::INFINITY, checks: 0, violations: 0 }
    }

    fn record(&mut self, margin: f64) {
        self.checks += 1;
        if !(margin >= 0.0) {
            self.violations += 1;
        }
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub trials: usize,
    pub margins: Vec<ConditionMargin>,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        self.margins.iter().all(|m| m.violations == 0)
    }

    pub fn margin(&self, name: &str) -> Option<&ConditionMargin> {
        self.margins.iter().find(|m| m.name == name)
    }
}

/// Random inputs for the condition probes.
#[derive(Debug, Clone)]
pub struct ProbeSampler {
    rng: ChaCha8Rng,
    /// Number of atoms of each sampled law.
    pub atoms: usize,
}

impl ProbeSampler {
    pub fn new(seed: u64) -> Self {
        Self { rng: derive_rng(Purpose::Probe, seed, 0, 0), atoms: 5 }
    }

    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Scale drawn log-uniformly in `[10^lo, 10^hi]`.
    fn log_scale(&mut self, lo: f64, hi: f64) -> f64 {
        10f64.powf(self.rng.random_range(lo..hi))
    }

    /// Random walk on the grid: Gaussian start, Gaussian increments, optional drift.
    fn walk(&mut self, grid: &TimeGrid, dim: usize, scale: f64) -> Vec<f64> {
        let n = grid.n_nodes();
        let tilt: Vec<f64> = (0..dim).map(|_| self.normal()).collect();
        let mut v = Vec::with_capacity(n * dim);
        let mut cur: Vec<f64> = (0..dim).map(|_| scale * self.normal()).collect();
        let step = scale * grid.dt().sqrt();
        for _ in 0..n {
            v.extend_from_slice(&cur);
            for (c, t) in cur.iter_mut().zip(&tilt) {
                *c += step * self.normal() + scale * t * grid.dt();
            }
        }
        v
    }

    fn path(&mut self, grid: &TimeGrid, dim: usize, scale: f64) -> GridPath {
        GridPath::from_values(*grid, dim, self.walk(grid, dim, scale)).expect("finite walk")
    }

    /// `other + δ·walk`, with `δ` relative to `scale`.
    fn perturb(&mut self, other: &GridPath, scale: f64) -> GridPath {
        let delta = scale * self.log_scale(-3.0, 0.3);
        let w = self.walk(other.grid(), other.dim(), delta);
        let vals = other.values().iter().zip(&w).map(|(a, b)| a + b).collect();
        GridPath::from_values(*other.grid(), other.dim(), vals).expect("finite walk")
    }

    fn field_path(&mut self, grid: &TimeGrid, n_modes: usize, scale: f64) -> Vec<Vec<f64>> {
        let raw = self.walk(grid, n_modes, scale);
        raw.chunks(n_modes)
            .map(|c| c.iter().enumerate().map(|(k, v)| v / (k + 1) as f64).collect())
            .collect()
    }
}

/// Running trapezoid integral over the future nodes `s = 0, dt, 2dt, ...`.
#[derive(Debug, Clone, Copy, Default)]
struct RunningIntegral {
    value: f64,
    prev: Option<f64>,
}

impl RunningIntegral {
    fn push(&mut self, f: f64, dt: f64) -> f64 {
        if let Some(p) = self.prev {
            self.value += 0.5 * dt * (p + f);
        }
        self.prev = Some(f);
        self.value
    }
}

pub const H2: &str = "H2 coercivity";
pub const H3_DRIFT: &str = "H3 monotonicity (drift)";
pub const H3_DIFFUSION: &str = "H3 monotonicity (diffusion)";
pub const H4_DRIFT: &str = "H4 growth (drift)";
pub const H4_DIFFUSION: &str = "H4 growth (diffusion)";

/// Evaluates both sides of the coercivity, monotonicity and growth
/// inequalities on random paths `ξ, η` and random law flows `μ, ν` over
/// `[0, t]` for every grid time `t <= t_max`, with trapezoid quadrature.
pub fn probe_conditions<M: ModelCoefficients>(
    model: &M,
    m: usize,
    dt: f64,
    t_max: f64,
    sampler: &mut ProbeSampler,
    n_trials: usize,
) -> Result<ProbeReport> {
    let grid = TimeGrid::with_horizon(m, dt, t_max)?;
    let d = model.dim();
    let p = model.exponent();
    let pstar = p / (p - 1.0);
    let c = model.constants();
    let q0 = c.q0 as i32;
    let mut margins: Vec<ConditionMargin> =
        [H2, H3_DRIFT, H3_DIFFUSION, H4_DRIFT, H4_DIFFUSION].into_iter().map(ConditionMargin::new).collect();

    let mut b1 = vec![0.0; d];
    let mut b2 = vec![0.0; d];
    let mut s1 = vec![0.0; d * d];
    let mut s2 = vec![0.0; d * d];

    for _ in 0..n_trials {
        let scale = sampler.log_scale(-1.0, 1.0);
        let xi = sampler.path(&grid, d, scale);
        let eta = sampler.perturb(&xi, scale);
        let mu: Vec<GridPath> = (0..sampler.atoms).map(|_| sampler.path(&grid, d, scale)).collect();
        let nu: Vec<GridPath> = mu.iter().map(|a| sampler.perturb(a, scale)).collect();

        let x0 = xi.initial_segment();
        let xi0_lp = x0.lp_norm_pow_unchecked(p);
        let diff0 = Segment::from_values(grid.meta(), d, {
            let e0 = eta.initial_segment();
            x0.values().iter().zip(e0.values()).map(|(a, b)| a - b).collect()
        })?;
        let diff0_lp = diff0.view().lp_norm_pow_unchecked(p);

        let mut i_b_xi = RunningIntegral::default();
        let mut i_coerc_rhs = RunningIntegral::default();
        let mut i_xi_p = RunningIntegral::default();
        let mut i_mono_rhs = RunningIntegral::default();
        let mut i_mono_b = RunningIntegral::default();
        let mut i_mono_s = RunningIntegral::default();
        let mut i_growth_lhs = RunningIntegral::default();
        let mut i_growth_in = RunningIntegral::default();
        let mut sup_xi = 0.0f64;
        let mut sup_mu = 0.0f64;

        for k in grid.m()..grid.n_nodes() {
            let t = grid.time(k);
            let xs = xi.segment_at_node(k);
            let es = eta.segment_at_node(k);
            let mu_s: Vec<_> = mu.iter().map(|a| a.segment_at_node(k)).collect();
            let nu_s: Vec<_> = nu.iter().map(|a| a.segment_at_node(k)).collect();
            let mu_stats = model.summarize_law(&mu_s);
            let nu_stats = model.summarize_law(&nu_s);
            model.drift(t, &xs, &mu_stats, &mut b1);
            model.drift(t, &es, &nu_stats, &mut b2);
            model.diffusion(t, &xs, &mu_stats, &mut s1);
            model.diffusion(t, &es, &nu_stats, &mut s2);

            let xnow = xs.current();
            let enow = es.current();
            let xi_sup_sq = xs.sup_norm_sq();
            let mu_sup_sq = compensated_sum(mu_s.iter().map(|s| s.sup_norm_sq())) / mu_s.len() as f64;
            let mu_lp = compensated_sum(mu_s.iter().map(|s| s.lp_norm_pow_unchecked(p))) / mu_s.len() as f64;
            let w2 = w2_exact_views(&mu_s, &nu_s, GroundMetric::SupNorm, DEFAULT_EXACT_CAP)?;
            let diff_sup_sq = (0..=grid.m())
                .map(|i| crate::numeric::diff_euclidean_sq(xs.node(i), es.node(i)))
                .fold(0.0, f64::max);
            let xi_p = pow_from_sq(euclidean_sq(xnow), p);
            sup_xi = sup_xi.max(xi_sup_sq);
            sup_mu = sup_mu.max(mu_sup_sq);

            let b_dot_x: f64 = b1.iter().zip(xnow).map(|(b, x)| b * x).sum();
            let db_dot_dx: f64 = (0..d).map(|j| (b1[j] - b2[j]) * (xnow[j] - enow[j])).sum();
            let ds_hs: f64 = s1.iter().zip(&s2).map(|(a, b)| (a - b) * (a - b)).sum();
            let s_hs: f64 = s1.iter().map(|a| a * a).sum();
            let b_pstar = euclidean_sq(&b1).powf(0.5 * pstar);

            // Coercivity.
            let lhs = i_b_xi.push(2.0 * b_dot_x, dt);
            let ixp = i_xi_p.push(xi_p, dt);
            let rhs = -0.5 * ixp + c.alpha * xi0_lp + c.alpha * i_coerc_rhs.push(1.0 + xi_sup_sq + mu_sup_sq, dt);
            margins[0].record(rhs - lhs);

            // Monotonicity.
            let mono = c.beta * i_mono_rhs.push(diff_sup_sq + w2 * w2, dt) + c.beta * diff0_lp;
            margins[1].record(mono - i_mono_b.push(2.0 * db_dot_dx, dt));
            margins[2].record(mono - i_mono_s.push(ds_hs, dt));

            // Growth.
            let inner = i_growth_in.push(xi_p + mu_lp, dt) + xi0_lp;
            let rhs = c.gamma * inner.powi(q0) + c.gamma * (1.0 + sup_xi.powi(q0) + sup_mu.powi(q0));
            margins[3].record(rhs - i_growth_lhs.push(b_pstar, dt));
            margins[4].record(c.gamma * (1.0 + xi_sup_sq + mu_sup_sq) - s_hs);
        }
    }
    Ok(ProbeReport { trials: n_trials, margins })
}

pub const PSI2: &str = "Psi2 coercivity";
pub const PSI3: &str = "Psi3 monotonicity";
pub const PSI4: &str = "Psi4 growth";

/// Probe of the integral conditions on `ψ` with x-grid quadrature, for
/// discount rates `λ ∈ {0, 1, 5}` and every grid time `t <= t_max`.
pub fn probe_psi_conditions(
    params: &PorousMediumParams,
    spec: &GelfandSpec,
    m: usize,
    dt: f64,
    t_max: f64,
    sampler: &mut ProbeSampler,
    n_trials: usize,
) -> Result<ProbeReport> {
    let grid = TimeGrid::with_horizon(m, dt, t_max)?;
    let n = spec.n_modes();
    let p = params.p;
    let pstar = p / (p - 1.0);
    let c = params.constants();
    let meta = grid.meta();
    let mut margins: Vec<ConditionMargin> = [PSI2, PSI3, PSI4].into_iter().map(ConditionMargin::new).collect();
    let mut u = vec![0.0; spec.n_x()];
    let mut w = vec![0.0; spec.n_x()];
    let mut psi_u = vec![0.0; spec.n_x()];
    let mut psi_w = vec![0.0; spec.n_x()];

    for _ in 0..n_trials {
        let scale = sampler.log_scale(-1.0, 1.0);
        let xi = sampler.field_path(&grid, n, scale);
        let eta = sampler.field_path(&grid, n, scale);
        let mu: Vec<Vec<Vec<f64>>> = (0..sampler.atoms).map(|_| sampler.field_path(&grid, n, scale)).collect();

        let h_sq: Vec<f64> = xi.iter().map(|f| spec.norm_h_sq(f)).collect();
        let v_p: Vec<f64> = xi.iter().map(|f| spec.norm_v_pow(f, p)).collect();
        let mu_h_sq: Vec<Vec<f64>> = mu.iter().map(|a| a.iter().map(|f| spec.norm_h_sq(f)).collect()).collect();
        let mu_v_p: Vec<Vec<f64>> = mu.iter().map(|a| a.iter().map(|f| spec.norm_v_pow(f, p)).collect()).collect();
        let window = |vals: &[f64], k: usize| -> f64 {
            compensated_sum((0..=m).map(|i| meta.weight(i) * vals[k - m + i]))
        };
        let xi0_lpv = window(&v_p, m);

        for lambda in [0.0, 1.0, 5.0] {
            let mut i2_lhs = RunningIntegral::default();
            let mut i2_rhs = RunningIntegral::default();
            let mut i3 = RunningIntegral::default();
            let mut i4_lhs = RunningIntegral::default();
            let mut i4_rhs = RunningIntegral::default();
            for k in m..grid.n_nodes() {
                let s = grid.time(k);
                let disc = (-lambda * s).exp();
                spec.synthesize(&xi[k], &mut u);
                spec.synthesize(&eta[k], &mut w);
                params.psi_on_grid(&u, &mut psi_u);
                params.psi_on_grid(&w, &mut psi_w);
                let h = spec.quadrature_weight();
                let pair = compensated_sum(psi_u.iter().zip(&u).map(|(a, b)| h * a * b));
                let mono = compensated_sum((0..u.len()).map(|j| h * (psi_u[j] - psi_w[j]) * (u[j] - w[j])));
                let psi_pstar = compensated_sum(psi_u.iter().map(|a| h * a.abs().powf(pstar)));
                let mu_l2h = compensated_sum(mu_h_sq.iter().map(|a| window(a, k))) / mu.len() as f64;
                let mu_lpv = compensated_sum(mu_v_p.iter().map(|a| window(a, k))) / mu.len() as f64;
                let xi_l2h = window(&h_sq, k);

                let lhs2 = i2_lhs.push(disc * 2.0 * pair, dt);
                let rhs2 = i2_rhs.push(disc * (-c.alpha * (1.0 + xi_l2h + mu_l2h) + 0.5 * v_p[k]), dt);
                margins[0].record(lhs2 - rhs2);
                margins[1].record(i3.push(disc * 2.0 * mono, dt));
                let lhs4 = i4_lhs.push(psi_pstar, dt);
                let rhs4 = c.gamma * i4_rhs.push(1.0 + v_p[k] + mu_lpv, dt) + c.gamma * xi0_lpv;
                margins[2].record(rhs4 - lhs4);
            }
        }
    }
    Ok(ProbeReport { trials: n_trials, margins })
}
