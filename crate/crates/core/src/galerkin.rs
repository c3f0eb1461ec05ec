//! Spectral Galerkin scheme for the porous-medium-type equation on `(0, L)`
//! with Dirichlet sine basis `e_k(x) = sqrt(2/L) sin(kπx/L)`, `λ_k = (kπ/L)²`.
//!
//! Fields are coefficient vectors. `V = L^p` norms and pairings use the
//! interior grid `x_j = jL/(n_x+1)` with weight `L/(n_x+1)`, on which the
//! sine basis is exactly orthonormal for `k <= n_x`. The `H` norm is the dual
//! Dirichlet norm `(Σ c_k² / λ_k)^{1/2}`.

use std::f64::consts::PI;

use log::warn;

use crate::error::{Error, Result};
use crate::models::PorousMediumParams;
use crate::noise::{IncrementSource, NoisePlan, Purpose};
use crate::numeric::{compensated_sum, mean_stderr, trapezoid};
use crate::par;
use crate::segment::{SegmentMeta, TimeGrid};

#[derive(Debug, Clone)]
pub struct GelfandSpec {
    domain_length: f64,
    p: f64,
    n_modes: usize,
    n_x: usize,
    lambda: Vec<f64>,
    /// `e_k(x_j)`, mode-major.
    basis: Vec<f64>,
}

impl GelfandSpec {
    pub fn new(domain_length: f64, p: f64, n_modes: usize, n_x: usize) -> Result<Self> {
        if !(domain_length > 0.0 && domain_length.is_finite()) {
            return Err(Error::param(format!("domain length must be positive, got {domain_length}")));
        }
        if !(p >= 2.0) {
            return Err(Error::param(format!("p must be >= 2, got {p}")));
        }
        if n_modes == 0 {
            return Err(Error::param("need at least one mode"));
        }
        if n_x < n_modes {
            return Err(Error::param(format!("x-grid ({n_x} points) must resolve all {n_modes} modes")));
        }
        let norm = (2.0 / domain_length).sqrt();
        let mut basis = Vec::with_capacity(n_modes * n_x);
        for k in 1..=n_modes {
            for j in 1..=n_x {
                basis.push(norm * (PI * (k * j) as f64 / (n_x + 1) as f64).sin());
            }
        }
        let lambda = (1..=n_modes).map(|k| (k as f64 * PI / domain_length).powi(2)).collect();
        Ok(Self { domain_length, p, n_modes, n_x, lambda, basis })
    }

    /// Spec with the default eightfold oversampled x-grid.
    pub fn with_default_grid(domain_length: f64, p: f64, n_modes: usize) -> Result<Self> {
        Self::new(domain_length, p, n_modes, 8 * n_modes)
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn quadrature_weight(&self) -> f64 {
        self.domain_length / (self.n_x + 1) as f64
    }

    pub fn x_grid(&self) -> Vec<f64> {
        let h = self.quadrature_weight();
        (1..=self.n_x).map(|j| j as f64 * h).collect()
    }

    fn mode(&self, k: usize) -> &[f64] {
        &self.basis[k * self.n_x..(k + 1) * self.n_x]
    }

    /// Values on the x-grid of the field with the given coefficients.
    pub fn synthesize(&self, coeffs: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, &c) in coeffs.iter().enumerate().take(self.n_modes) {
            if c != 0.0 {
                for (o, e) in out.iter_mut().zip(self.mode(k)) {
                    *o += c * e;
                }
            }
        }
    }

    /// Coefficients `∫ f e_k` of grid values `f` by quadrature.
    pub fn analyze(&self, values: &[f64], out: &mut [f64]) {
        let h = self.quadrature_weight();
        for (k, o) in out.iter_mut().enumerate().take(self.n_modes) {
            *o = h * self.mode(k).iter().zip(values).map(|(e, f)| e * f).sum::<f64>();
        }
    }

    /// `‖u‖_V^p`.
    pub fn norm_v_pow(&self, coeffs: &[f64], p: f64) -> f64 {
        let mut u = vec![0.0; self.n_x];
        self.synthesize(coeffs, &mut u);
        let h = self.quadrature_weight();
        compensated_sum(u.iter().map(|v| h * v.abs().powf(p)))
    }

    pub fn norm_v(&self, u: &SpectralField) -> f64 {
        self.norm_v_pow(&u.coeffs, self.p).powf(1.0 / self.p)
    }

    /// `‖u‖_H²`.
    pub fn norm_h_sq(&self, coeffs: &[f64]) -> f64 {
        compensated_sum(coeffs.iter().zip(&self.lambda).map(|(c, l)| c * c / l))
    }

    pub fn norm_h(&self, u: &SpectralField) -> f64 {
        self.norm_h_sq(&u.coeffs).sqrt()
    }

    /// `∫ u v dx` by x-grid quadrature.
    pub fn duality_pairing(&self, u: &SpectralField, v: &SpectralField) -> f64 {
        let mut a = vec![0.0; self.n_x];
        let mut b = vec![0.0; self.n_x];
        self.synthesize(&u.coeffs, &mut a);
        self.synthesize(&v.coeffs, &mut b);
        let h = self.quadrature_weight();
        compensated_sum(a.iter().zip(&b).map(|(x, y)| h * x * y))
    }

    /// `⟨Δψ(u), v⟩` evaluated spectrally: `Σ_k (-λ_k ψ̂_k) v_k / λ_k` in the
    /// dual pairing of `H`, where `ψ̂` are the coefficients of `ψ(u)`.
    pub fn drift_pairing_spectral(&self, params: &PorousMediumParams, u: &SpectralField, v: &SpectralField) -> f64 {
        let psi_hat = self.psi_coefficients(params, &u.coeffs);
        compensated_sum((0..self.n_modes).map(|k| (-self.lambda[k] * psi_hat[k]) * v.coeffs[k] / self.lambda[k]))
    }

    /// Coefficients of `ψ(u)` after pointwise evaluation on the x-grid.
    pub fn psi_coefficients(&self, params: &PorousMediumParams, coeffs: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_x];
        let mut w = vec![0.0; self.n_x];
        let mut out = vec![0.0; self.n_modes];
        self.synthesize(coeffs, &mut u);
        params.psi_on_grid(&u, &mut w);
        self.analyze(&w, &mut out);
        out
    }
}

/// Element of `H_n = span{e_1..e_n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(n: usize) -> Self {
        Self { coeffs: vec![0.0; n] }
    }

    /// `amplitude · e_k` (`k` from 1).
    pub fn mode(n: usize, k: usize, amplitude: f64) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::IndexOutOfRange { index: k, max: n });
        }
        let mut c = vec![0.0; n];
        c[k - 1] = amplitude;
        Ok(Self { coeffs: c })
    }

    pub fn dot(&self, other: &SpectralField) -> f64 {
        compensated_sum(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b))
    }
}

/// `P_n`: truncation to the first `n` coefficients.
pub fn project_pn(coeffs_full: &[f64], n: usize) -> Result<SpectralField> {
    if n > coeffs_full.len() {
        return Err(Error::IndexOutOfRange { index: n, max: coeffs_full.len() });
    }
    Ok(SpectralField::new(coeffs_full[..n].to_vec()))
}

/// Delay window of spectral fields, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSegment {
    pub meta: SegmentMeta,
    pub n_modes: usize,
    pub values: Vec<f64>,
}

impl SpectralSegment {
    pub fn constant(meta: SegmentMeta, field: &SpectralField) -> Self {
        let values = (0..=meta.m).flat_map(|_| field.coeffs.iter().copied()).collect();
        Self { meta, n_modes: field.coeffs.len(), values }
    }

    pub fn from_fn(meta: SegmentMeta, n_modes: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity((meta.m + 1) * n_modes);
        for i in 0..=meta.m {
            let v = f((i as f64 - meta.m as f64) * meta.dt);
            if v.len() != n_modes {
                return Err(Error::SizeMismatch { left: v.len(), right: n_modes });
            }
            values.extend(v);
        }
        Ok(Self { meta, n_modes, values })
    }

    pub fn field(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_modes..(i + 1) * self.n_modes]
    }

    /// `P_n` applied node-wise.
    pub fn project(&self, n: usize) -> Result<Self> {
        if n > self.n_modes {
            return Err(Error::IndexOutOfRange { index: n, max: self.n_modes });
        }
        let values = (0..=self.meta.m).flat_map(|i| self.field(i)[..n].to_vec()).collect();
        Ok(Self { meta: self.meta, n_modes: n, values })
    }

    /// `sup_θ ‖ξ(θ)‖_H²`.
    pub fn sup_h_sq(&self, spec: &GelfandSpec) -> f64 {
        (0..=self.meta.m).map(|i| spec.norm_h_sq(self.field(i))).fold(0.0, f64::max)
    }

    /// Node-wise difference.
    pub fn sub(&self, other: &SpectralSegment) -> Result<Self> {
        if self.meta != other.meta || self.n_modes != other.n_modes {
            return Err(Error::SizeMismatch { left: self.values.len(), right: other.values.len() });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { meta: self.meta, n_modes: self.n_modes, values })
    }
}

/// Read access to the delay window held in a replica's ring buffer.
pub struct SpectralWindow<'a> {
    ring: &'a [f64],
    n: usize,
    m: usize,
    /// Grid node of the window's right end (`θ = 0`).
    node: usize,
}

impl SpectralWindow<'_> {
    /// Coefficients at window node `i` (`i = m` is `θ = 0`).
    pub fn field(&self, i: usize) -> &[f64] {
        let k = self.node - self.m + i;
        let slot = k % (self.m + 1);
        &self.ring[slot * self.n..(slot + 1) * self.n]
    }
}

/// Nonlinearity `ψ(t, ξ)` evaluated on the x-grid. The law argument is not
/// passed: shipped nonlinearities do not depend on it.
pub trait FieldNonlinearity: Sync {
    fn apply(&self, t: f64, window: &SpectralWindow<'_>, current_on_grid: &[f64], out: &mut [f64]);

    /// When true the integrator skips the x-grid round trip and uses `ψ̂ = c`.
    fn is_identity(&self) -> bool {
        false
    }
}

impl FieldNonlinearity for PorousMediumParams {
    fn apply(&self, _t: f64, _window: &SpectralWindow<'_>, current_on_grid: &[f64], out: &mut [f64]) {
        self.psi_on_grid(current_on_grid, out);
    }

    fn is_identity(&self) -> bool {
        PorousMediumParams::is_identity(self)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GalerkinOptions {
    pub seed: u64,
    pub run: u64,
    pub replicas: usize,
    pub macro_stride: usize,
    /// Multiplies every noise increment; 0 gives the deterministic equation.
    pub noise_amplitude: f64,
}

/// Replica snapshots of the Galerkin solution at future steps `0, stride, ...`.
#[derive(Debug, Clone)]
pub struct GalerkinRun {
    pub grid: TimeGrid,
    pub macro_stride: usize,
    pub n_modes: usize,
    pub replicas: usize,
    pub lambdas: Vec<f64>,
    /// `[replica][snapshot][mode]`.
    coeffs: Vec<f64>,
    pub initial: SpectralSegment,
}

impl GalerkinRun {
    pub fn n_snapshots(&self) -> usize {
        self.grid.n_future() / self.macro_stride + 1
    }

    pub fn snapshot_time(&self, s: usize) -> f64 {
        (s * self.macro_stride) as f64 * self.grid.dt()
    }

    pub fn field(&self, replica: usize, snapshot: usize) -> &[f64] {
        let off = (replica * self.n_snapshots() + snapshot) * self.n_modes;
        &self.coeffs[off..off + self.n_modes]
    }

    /// Empirical law in `H_n` at a snapshot.
    pub fn snapshot_ensemble(&self, snapshot: usize) -> Vec<&[f64]> {
        (0..self.replicas).map(|r| self.field(r, snapshot)).collect()
    }

    /// Per-replica values of `f(field)` at one snapshot.
    pub fn map_snapshot(&self, snapshot: usize, f: impl Fn(&[f64]) -> f64 + Sync + Send) -> Vec<f64> {
        par::map_indexed(self.replicas, |r| f(self.field(r, snapshot)))
    }

    /// `E‖X(t)‖_H²` with standard error at a snapshot.
    pub fn h_moment(&self, spec: &GelfandSpec, snapshot: usize) -> (f64, f64) {
        mean_stderr(&self.map_snapshot(snapshot, |c| spec.norm_h_sq(c)))
    }
}

/// Integrates the Galerkin system
/// `c_k ← c_k - dt·λ_k·ψ̂_k + Δβ_k`, with `ψ̂` the coefficients of `ψ(u)`,
/// for independent replicas driven by mode-wise Brownian motions.
pub fn galerkin_integrate<F: FieldNonlinearity>(
    psi: &F,
    spec: &GelfandSpec,
    psi0: &SpectralSegment,
    grid: &TimeGrid,
    opts: &GalerkinOptions,
) -> Result<GalerkinRun> {
    let n = spec.n_modes();
    let m = grid.m();
    if psi0.meta != grid.meta() {
        return Err(Error::param("initial segment does not match the grid"));
    }
    let init = psi0.project(n)?;
    if opts.replicas == 0 {
        return Err(Error::param("need at least one replica"));
    }
    if opts.macro_stride == 0 || opts.macro_stride > grid.n_future() {
        return Err(Error::param(format!("macro_stride must be in 1..={}", grid.n_future())));
    }
    let stiffness = grid.dt() * spec.lambdas()[n - 1];
    if stiffness > 1.0 {
        warn!("explicit Galerkin step is stiff: dt·λ_n = {stiffness:.3} > 1");
    }
    let plan = NoisePlan { seed: opts.seed, run: opts.run, dim: n, dt: grid.dt(), purpose: Purpose::Galerkin };
    let n_snap = grid.n_future() / opts.macro_stride + 1;
    let identity = psi.is_identity();

    let per_replica = par::try_map_indexed(opts.replicas, |r| -> Result<Vec<f64>> {
        let mut ring = init.values.clone();
        let mut stream = plan.stream(r as u64);
        let mut out = Vec::with_capacity(n_snap * n);
        out.extend_from_slice(init.field(m));
        let mut cur = init.field(m).to_vec();
        let mut next = vec![0.0; n];
        let mut dw = vec![0.0; n];
        let mut psi_hat = vec![0.0; n];
        let mut u = vec![0.0; spec.n_x()];
        let mut w = vec![0.0; spec.n_x()];
        let dt = grid.dt();
        for j in 0..grid.n_future() {
            let node = m + j;
            if identity {
                psi_hat.copy_from_slice(&cur);
            } else {
                spec.synthesize(&cur, &mut u);
                let window = SpectralWindow { ring: &ring, n, m, node };
                psi.apply(j as f64 * dt, &window, &u, &mut w);
                spec.analyze(&w, &mut psi_hat);
            }
            stream.next_into(&mut dw);
            for k in 0..n {
                next[k] = cur[k] - dt * spec.lambdas()[k] * psi_hat[k] + opts.noise_amplitude * dw[k];
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: j, particle: Some(r) });
            }
            let slot = (node + 1) % (m + 1);
            ring[slot * n..(slot + 1) * n].copy_from_slice(&next);
            std::mem::swap(&mut cur, &mut next);
            if (j + 1) % opts.macro_stride == 0 {
                out.extend_from_slice(&cur);
            }
        }
        Ok(out)
    })?;

    Ok(GalerkinRun {
        grid: *grid,
        macro_stride: opts.macro_stride,
        n_modes: n,
        replicas: opts.replicas,
        lambdas: spec.lambdas().to_vec(),
        coeffs: per_replica.concat(),
        initial: init,
    })
}

/// Per-mode statistics at the final snapshot against the Ornstein–Uhlenbeck
/// variance `(1 - e^{-2λT}) / (2λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeStat {
    pub k: usize,
    pub lambda: f64,
    pub mean: f64,
    pub mean_theory: f64,
    pub var: f64,
    pub var_se: f64,
    pub var_theory: f64,
}

pub fn mode_statistics(run: &GalerkinRun) -> Vec<ModeStat> {
    let s = run.n_snapshots() - 1;
    let t = run.snapshot_time(s);
    let c0 = run.initial.field(run.initial.meta.m);
    (0..run.n_modes)
        .map(|k| {
            let xs: Vec<f64> = (0..run.replicas).map(|r| run.field(r, s)[k]).collect();
            let n = xs.len() as f64;
            let mean = compensated_sum(xs.iter().copied()) / n;
            let dev2: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            let m2 = compensated_sum(dev2.iter().copied()) / n;
            let m4 = compensated_sum(dev2.iter().map(|d| d * d)) / n;
            let var = if xs.len() > 1 { m2 * n / (n - 1.0) } else { 0.0 };
            let lambda = run.lambdas[k];
            ModeStat {
                k: k + 1,
                lambda,
                mean,
                mean_theory: c0[k] * (-lambda * t).exp(),
                var,
                var_se: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
                var_theory: (1.0 - (-2.0 * lambda * t).exp()) / (2.0 * lambda),
            }
        })
        .collect()
}

/// Sample covariance of modes `a` and `b` at the final snapshot, with standard error.
pub fn mode_cross_covariance(run: &GalerkinRun, a: usize, b: usize) -> (f64, f64) {
    let s = run.n_snapshots() - 1;
    let xa: Vec<f64> = (0..run.replicas).map(|r| run.field(r, s)[a]).collect();
    let xb: Vec<f64> = (0..run.replicas).map(|r| run.field(r, s)[b]).collect();
    let (ma, _) = mean_stderr(&xa);
    let (mb, _) = mean_stderr(&xb);
    let prod: Vec<f64> = xa.iter().zip(&xb).map(|(x, y)| (x - ma) * (y - mb)).collect();
    mean_stderr(&prod)
}

/// The four quantities of the uniform Galerkin bound for one `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBoundRow {
    pub n_modes: usize,
    /// `∫_0^T E‖X(t)‖_V^p dt`
    pub v_integral: (f64, f64),
    /// `∫_0^T E‖ψ(X(t))‖_{p*}^{p*} dt`
    pub kstar_integral: (f64, f64),
    /// `Σ_k ∫_0^T ‖B e_k‖² dt = n·T` for identity noise on `n` modes.
    pub b_term: f64,
    /// `sup_{t ∈ [-r0, T]} E‖X(t)‖_H²`
    pub h_moment: (f64, f64),
    pub error: Option<String>,
}

/// Quantities of the uniform Galerkin bound for a run.
pub fn uniform_bound_row(run: &GalerkinRun, spec: &GelfandSpec, params: &PorousMediumParams) -> UniformBoundRow {
    let p = params.p;
    let pstar = p / (p - 1.0);
    let h = run.macro_stride as f64 * run.grid.dt();
    let snaps = run.n_snapshots();
    let per_replica = |f: &(dyn Fn(&[f64]) -> f64 + Sync)| -> (f64, f64) {
        let vals = par::map_indexed(run.replicas, |r| {
            let series: Vec<f64> = (0..snaps).map(|s| f(run.field(r, s))).collect();
            trapezoid(&series, h)
        });
        mean_stderr(&vals)
    };
    let v_integral = per_replica(&|c| spec.norm_v_pow(c, p));
    let kstar_integral = if params.is_identity() {
        v_integral
    } else {
        per_replica(&|c| {
            let mut u = vec![0.0; spec.n_x()];
            spec.synthesize(c, &mut u);
            let hq = spec.quadrature_weight();
            compensated_sum(u.iter().map(|x| hq * params.psi(*x).abs().powf(pstar)))
        })
    };
    let mut h_moment = (run.initial.sup_h_sq(spec), 0.0);
    for s in 0..snaps {
        let hm = run.h_moment(spec, s);
        if hm.0 > h_moment.0 {
            h_moment = hm;
        }
    }
    UniformBoundRow {
        n_modes: run.n_modes,
        v_integral,
        kstar_integral,
        b_term: run.n_modes as f64 * run.grid.horizon(),
        h_moment,
        error: None,
    }
}

/// Runs the Galerkin scheme for every `n` in `family` with shared initial
/// data `init(n)` and seed, and tabulates the uniform-bound quantities.
pub fn uniform_bound_sweep(
    params: &PorousMediumParams,
    family: &[usize],
    oversampling: usize,
    grid: &TimeGrid,
    init: impl Fn(usize) -> Result<SpectralSegment>,
    opts: &GalerkinOptions,
) -> Result<Vec<UniformBoundRow>> {
    if family.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("mode counts must be strictly increasing"));
    }
    let mut rows = Vec::with_capacity(family.len());
    for &n in family {
        let spec = GelfandSpec::new(params.domain_length, params.p, n, oversampling.max(1) * n)?;
        let psi0 = init(n)?;
        match galerkin_integrate(params, &spec, &psi0, grid, opts) {
            Ok(run) => rows.push(uniform_bound_row(&run, &spec, params)),
            Err(e @ Error::Divergence { .. }) => rows.push(UniformBoundRow {
                n_modes: n,
                v_integral: (f64::NAN, f64::NAN),
                kstar_integral: (f64::NAN, f64::NAN),
                b_term: n as f64 * grid.horizon(),
                h_moment: (f64::NAN, f64::NAN),
                error: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}
