//! Čech ↔ Dolbeault on the two-annulus torus cover, the two directions of the
//! algebraic/analytic correspondence, and the pairing with a pluggable kernel.
//!
//! Conventions. Cocycles follow the coboundary rule c_e = σ₀ − σ₁∘f_e, so a
//! partition of unity ρ₀ + ρ₁ = 1 gives σ₀ = ρ₁c, σ₁ = −ρ₀c and the global form
//! φ = ∂̄σ₀ = −c·∂̄ρ₀. With v = Im z/Im τ one has ∂v/∂z̄ = κ = 1/(τ̄ − τ), and the
//! class-1 cocycle (1, 0) maps to a form of mean −κ. That mean is the cover
//! normalization N; it is measured by quadrature when a cover is built.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use num_complex::Complex64;
use rustfft::FftDirection;
use serde::Serialize;

use crate::analytic::{check_analytic_deformation, harmonic_normal_form, AnalyticDeformation, GaugeOrder, GaugeVectorField};
use crate::atlas::{
    apply_equivalence, integrate_thickening, verify_atlas, wronskian_check, AlgebraicDeformation, BaseCurve, CechCocycle, CechRing,
    GaugeCochain,
};
use crate::funcfield::{fft2, CoefficientRing, FormCoefficient, FormType, FourierCtx, FourierFn, LaurentFn, StripFn};
use crate::supernumber::Mono;
use crate::{Error, Result};

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn bump(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// C^∞ step from 0 at t ≤ 0 to 1 at t ≥ 1.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let (a, b) = (bump(t), bump(1.0 - t));
        a / (a + b)
    }
}

pub fn smoothstep_deriv(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let (a, b) = (bump(t), bump(1.0 - t));
    let (da, db) = (a / (t * t), b / ((1.0 - t) * (1.0 - t)));
    (da * b + a * db) / ((a + b) * (a + b))
}

/// ρ₀, ρ₁ as functions of v = Im z/Im τ. ρ₀ rises across the A-overlap
/// (|v| < δ) and falls across the B-overlap (|v − ½| < δ); ρ₁ = 1 − ρ₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionOfUnity {
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PouReport {
    pub ok: bool,
    pub sum_residual: f64,
    pub support_violation: f64,
}

/// v ∈ [0,1) lifted to (−½, ½].
fn lift_a(v: f64) -> f64 {
    let v = v.rem_euclid(1.0);
    if v < 0.5 {
        v
    } else {
        v - 1.0
    }
}

impl PartitionOfUnity {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.25) {
            return Err(Error::Config(format!("overlap half-width δ = {delta} must lie in (0, ¼)")));
        }
        Ok(Self { delta })
    }

    pub fn rho0(&self, v: f64) -> f64 {
        let d = self.delta;
        let va = lift_a(v);
        let vb = v.rem_euclid(1.0) - 0.5;
        if va.abs() < d {
            smoothstep((va + d) / (2.0 * d))
        } else if vb.abs() < d {
            1.0 - smoothstep((vb + d) / (2.0 * d))
        } else if va > 0.0 && va < 0.5 {
            1.0
        } else {
            0.0
        }
    }

    /// dρ₀/dv.
    pub fn drho0(&self, v: f64) -> f64 {
        let d = self.delta;
        let va = lift_a(v);
        let vb = v.rem_euclid(1.0) - 0.5;
        if va.abs() < d {
            smoothstep_deriv((va + d) / (2.0 * d)) / (2.0 * d)
        } else if vb.abs() < d {
            -smoothstep_deriv((vb + d) / (2.0 * d)) / (2.0 * d)
        } else {
            0.0
        }
    }

    pub fn rho(&self, chart: usize, v: f64) -> f64 {
        if chart == 0 {
            self.rho0(v)
        } else {
            1.0 - self.rho0(v)
        }
    }

    /// Profiles on the M×M grid, same layout as [`FourierFn::to_grid`].
    pub fn sample(&self, m: usize) -> [Vec<f64>; 2] {
        let col: Vec<f64> = (0..m).map(|j| self.rho0(j as f64 / m as f64)).collect();
        let r0: Vec<f64> = (0..m * m).map(|k| col[k % m]).collect();
        let r1 = r0.iter().map(|r| 1.0 - r).collect();
        [r0, r1]
    }

    pub fn check(&self, m: usize) -> PouReport {
        let [r0, r1] = self.sample(m);
        let d = self.delta;
        let mut sum_residual: f64 = 0.0;
        let mut support_violation: f64 = 0.0;
        for k in 0..m * m {
            let v = (k % m) as f64 / m as f64;
            sum_residual = sum_residual.max((r0[k] + r1[k] - 1.0).abs());
            // U₀ misses v ∈ [½+δ, 1−δ], U₁ misses v ∈ [δ, ½−δ]
            if v >= 0.5 + d && v <= 1.0 - d {
                support_violation = support_violation.max(r0[k].abs());
            }
            if v >= d && v <= 0.5 - d {
                support_violation = support_violation.max(r1[k].abs());
            }
        }
        PouReport { ok: sum_residual < 1e-10 && support_violation == 0.0, sum_residual, support_violation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeConfig {
    pub grid: usize,
    pub cutoff: usize,
    pub delta: f64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self { grid: 256, cutoff: 64, delta: 0.2 }
    }
}

/// κ = ∂v/∂z̄.
pub fn kappa(tau: Complex64) -> Complex64 {
    (tau.conj() - tau).inv()
}

/// Closed form of the cover normalization, −κ.
pub fn normalization_closed_form(tau: Complex64) -> Complex64 {
    -kappa(tau)
}

/// A torus base together with everything the conversions need.
#[derive(Debug, Clone)]
pub struct TorusCover {
    pub base: BaseCurve<StripFn>,
    pub pou: PartitionOfUnity,
    pub fctx: FourierCtx,
    pub grid: usize,
    /// Mean of the Dolbeault image of the class-1 cocycle, by quadrature.
    pub normalization: Complex64,
}

#[derive(Debug, Clone)]
pub struct DolbeaultImage {
    pub form: FourierFn,
    pub harmonic: Complex64,
    /// max |φ via U₀ − φ via U₁| on the grid.
    pub chart_disagreement: f64,
}

impl DolbeaultImage {
    pub fn as_form(&self, weight: i32) -> FormCoefficient {
        FormCoefficient::fourier(self.form.clone(), FormType::ZeroOne, weight)
    }
}

/// Per-row evaluation of a strip series: Σ cₘ e^{2πim(u + τv)} with the v-factor
/// folded into the coefficients.
fn row_weights(f: &StripFn, tau: Complex64, v: f64) -> Vec<(i64, Complex64)> {
    f.modes()
        .filter(|(_, c)| c.norm() != 0.0)
        .map(|(m, c)| (m, c * (Complex64::new(0.0, TWO_PI * m as f64) * tau * v).exp()))
        .collect()
}

fn eval_row(w: &[(i64, Complex64)], phases: &[Vec<Complex64>], i: usize, nmax: i64) -> Complex64 {
    w.iter().map(|(m, c)| c * phases[i][(m + nmax) as usize]).sum()
}

impl TorusCover {
    pub fn new(base: &BaseCurve<StripFn>, cfg: BridgeConfig) -> Result<Self> {
        let pou = PartitionOfUnity::new(cfg.delta)?;
        if cfg.grid < 2 * cfg.cutoff + 1 {
            return Err(Error::Config(format!("grid {} too coarse for cutoff {}", cfg.grid, cfg.cutoff)));
        }
        let fctx = FourierCtx::new(cfg.cutoff, base.tau())?;
        let mut cover = Self { base: base.clone(), pou, fctx, grid: cfg.grid, normalization: C0 };
        let ctx = base.charts[0].ctx;
        let (grid, _) = cover.raw_dolbeault(&[StripFn::one(&ctx), StripFn::zero(&ctx)])?;
        cover.normalization = grid.iter().sum::<Complex64>() / grid.len() as f64;
        Ok(cover)
    }

    pub fn tau(&self) -> Complex64 {
        self.fctx.tau
    }

    /// φ = −c·∂̄ρ₀ sampled on the grid, computed once through U₀ and once
    /// through U₁.
    fn raw_dolbeault(&self, c: &[StripFn]) -> Result<(Vec<Complex64>, f64)> {
        if c.len() != self.base.intersections.len() {
            return Err(Error::Config(format!("cocycle has {} entries, cover has {}", c.len(), self.base.intersections.len())));
        }
        let sctx = self.base.charts[0].ctx;
        if c.iter().any(|x| x.ctx() != sctx) {
            return Err(Error::ChartMismatch("cocycle entry on a foreign strip context".into()));
        }
        let tau = self.tau();
        let k = kappa(tau);
        let m = self.grid;
        let nmax = sctx.n as i64;
        let phases: Vec<Vec<Complex64>> = (0..m)
            .map(|i| (-nmax..=nmax).map(|q| Complex64::from_polar(1.0, TWO_PI * q as f64 * i as f64 / m as f64)).collect())
            .collect();
        let back: Vec<StripFn> = self
            .base
            .intersections
            .iter()
            .zip(c)
            .map(|(x, ce)| Ok(ce.pullback(&StripFn::map_inverse(&x.map)?)))
            .collect::<Result<_>>()?;
        let mut out = vec![C0; m * m];
        let mut disagreement: f64 = 0.0;
        let d = self.pou.delta;
        for j in 0..m {
            let v = j as f64 / m as f64;
            let dr = self.pou.drho0(v);
            if dr == 0.0 {
                continue;
            }
            let va = lift_a(v);
            // U₀ coordinate of the point, and its U₁ coordinate f_e(z)
            let (e, v0) = if va.abs() < d { (0, va) } else { (1, v) };
            let b = self.base.intersections[e].map.b;
            let v1 = v0 + b.im / tau.im;
            let w0 = row_weights(&c[e], tau, v0);
            let w1 = row_weights(&back[e], tau, v1);
            // the u-offset of the U₁ coordinate
            let du = b.re - tau.re * (b.im / tau.im);
            let shift: Vec<Complex64> = (-nmax..=nmax).map(|q| Complex64::from_polar(1.0, TWO_PI * q as f64 * du)).collect();
            let w1: Vec<(i64, Complex64)> = w1.into_iter().map(|(q, c)| (q, c * shift[(q + nmax) as usize])).collect();
            let f = -k * dr;
            for i in 0..m {
                let a = f * eval_row(&w0, &phases, i, nmax);
                let a1 = f * eval_row(&w1, &phases, i, nmax);
                disagreement = disagreement.max((a - a1).norm());
                out[i * m + j] = a;
            }
        }
        Ok((out, disagreement))
    }

    /// Dolbeault image of a scalar cocycle (one strip function per overlap
    /// component).
    pub fn cech_to_dolbeault(&self, c: &[StripFn]) -> Result<DolbeaultImage> {
        let (grid, chart_disagreement) = self.raw_dolbeault(c)?;
        let form = FourierFn::from_grid(self.fctx, self.grid, &grid)?;
        Ok(DolbeaultImage { harmonic: form.mean(), form, chart_disagreement })
    }

    /// Dolbeault images of every θ-free component of a superseries cocycle.
    pub fn cocycle_to_dolbeault(&self, c: &CechCocycle<StripFn>) -> Result<BTreeMap<Mono, DolbeaultImage>> {
        c.monomials().into_iter().map(|mono| Ok((mono, self.cech_to_dolbeault(&c.component(mono))?))).collect()
    }

    /// Čech preimage of a (0,1)-form.
    ///
    /// With φ = h + ∂̄s (s zero-mean), the chart primitives are
    /// σ = (h/κ)·v + s, v taken in each chart's own range. Across A the lift
    /// of v jumps by one and s is periodic, across B nothing changes, so the
    /// cocycle is (−h/κ, 0) = (h/N, 0).
    pub fn dolbeault_to_cech(&self, phi: &FourierFn) -> Result<Vec<StripFn>> {
        self.check_tau(phi.ctx().tau)?;
        let ctx = self.base.charts[0].ctx;
        Ok(vec![StripFn::constant(ctx, phi.mean() / self.normalization), StripFn::zero(&ctx)])
    }

    /// Reduced class of a form: its mean divided by N.
    pub fn dolbeault_class(&self, phi: &FourierFn) -> Complex64 {
        phi.mean() / self.normalization
    }

    fn check_tau(&self, tau: Complex64) -> Result<()> {
        if (tau - self.tau()).norm() > 1e-12 {
            return Err(Error::Backend(format!("form lives on τ = {tau}, cover on τ = {}", self.tau())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalizationReport {
    pub closed_form: Complex64,
    pub by_grid: Vec<(usize, Complex64)>,
    pub spread: f64,
}

/// N measured at several grid sizes.
pub fn normalization_stability(base: &BaseCurve<StripFn>, grids: &[usize], delta: f64) -> Result<NormalizationReport> {
    let mut by_grid = Vec::new();
    for g in grids {
        let c = TorusCover::new(base, BridgeConfig { grid: *g, cutoff: (*g - 1) / 4, delta })?;
        by_grid.push((*g, c.normalization));
    }
    let spread = by_grid.iter().flat_map(|a| by_grid.iter().map(move |b| (a.1 - b.1).norm())).fold(0.0, f64::max);
    Ok(NormalizationReport { closed_form: normalization_closed_form(base.tau()), by_grid, spread })
}

/// Backends that may or may not carry smooth data.
pub trait SmoothBackend: CechRing {
    fn as_torus(d: &AlgebraicDeformation<Self>) -> Option<&AlgebraicDeformation<StripFn>>;
}

impl SmoothBackend for StripFn {
    fn as_torus(d: &AlgebraicDeformation<Self>) -> Option<&AlgebraicDeformation<StripFn>> {
        Some(d)
    }
}

impl SmoothBackend for LaurentFn {
    fn as_torus(_: &AlgebraicDeformation<Self>) -> Option<&AlgebraicDeformation<StripFn>> {
        None
    }
}

/// Gauge taking every ψⁱ to its class representative (aᵢ, 0).
pub fn normal_form_gauge(d: &AlgebraicDeformation<StripFn>) -> Result<GaugeCochain<StripFn>> {
    let n = d.n();
    let k = d.base.charts.len();
    let mut w = vec![BTreeMap::new(); k];
    for i in 1..=n {
        let (_, b) = StripFn::split_cocycle(&d.base, &d.psi(i), 1)?;
        for (a, ba) in b.into_iter().enumerate() {
            w[a].insert(i, ba.neg());
        }
    }
    GaugeCochain::new(&d.base, n, w, vec![BTreeMap::new(); k])
}

/// χⁱ = ½·Dol(ψⁱ), hⁱʲ = Dol(gⁱʲ), read off after normalizing ψ.
pub fn algebraic_to_analytic<R: SmoothBackend>(cover: &TorusCover, d: &AlgebraicDeformation<R>) -> Result<AnalyticDeformation> {
    let d = R::as_torus(d).ok_or_else(|| Error::Precondition("the ℙ¹ backend has no smooth (0,1)-forms".into()))?;
    if !d.base.same_as(&cover.base) {
        return Err(Error::Backend("atlas and cover live on different bases".into()));
    }
    let rep = verify_atlas(d);
    if let Some(f) = rep.failures().next() {
        return Err(Error::Precondition(format!("atlas fails {} on {} (residual {:e})", f.relation, f.label, f.residual)));
    }
    if !wronskian_check(d).ok {
        return Err(Error::Precondition("atlas fails the Wronskian condition".into()));
    }
    let nf = apply_equivalence(d, &normal_form_gauge(d)?)?;
    let n = d.n();
    let mut chi = BTreeMap::new();
    for i in 1..=n {
        chi.insert(i, cover.cech_to_dolbeault(&nf.psi(i))?.form.scale_q(1, 2));
    }
    let mut h = BTreeMap::new();
    for i in 1..=n {
        for j in (i + 1)..=n {
            h.insert((i, j), cover.cech_to_dolbeault(&nf.g(i, j))?.form);
        }
    }
    AnalyticDeformation::new(cover.fctx, n, chi, h)
}

/// Harmonic normal form, then ψⁱ = Dol⁻¹(2χⁱ), gⁱʲ = Dol⁻¹(hⁱʲ), completed by
/// [`integrate_thickening`].
pub fn analytic_to_algebraic(cover: &TorusCover, a: &AnalyticDeformation) -> Result<AlgebraicDeformation<StripFn>> {
    cover.check_tau(a.ctx.tau)?;
    let rep = check_analytic_deformation(a);
    if !rep.ok {
        let worst = rep.entries.iter().map(|e| e.max_abs).fold(0.0, f64::max);
        return Err(Error::Precondition(format!("Wr(χⁱ, χʲ) ≠ 0 (max {worst:e})")));
    }
    let nf = harmonic_normal_form(a)?;
    let mut psi = BTreeMap::new();
    for i in 1..=a.n {
        psi.insert(i, cover.dolbeault_to_cech(&nf.chi(i).scale_q(2, 1))?);
    }
    let mut g = BTreeMap::new();
    for (i, j) in a.pairs() {
        g.insert((i, j), cover.dolbeault_to_cech(&nf.h(i, j))?);
    }
    integrate_thickening(&cover.base, a.n, &psi, &g)
}

/// Values of K on the coarse product grid.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelValues {
    /// K(z, w) row-major in z then w, M⁴ entries.
    Full(Vec<Complex64>),
    /// K(z, w) = k(z − w), M² entries.
    Difference(Vec<Complex64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResidueValues {
    Constant(Complex64),
    Grid(Vec<Complex64>),
}

impl ResidueValues {
    fn at(&self, k: usize) -> Complex64 {
        match self {
            Self::Constant(c) => *c,
            Self::Grid(g) => g[k],
        }
    }
}

/// Stand-in for the supermoduli form ω (values K) and its residue R.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingKernel {
    pub m: usize,
    pub tau: Complex64,
    pub r: ResidueValues,
    pub k: KernelValues,
    /// Relative residual of ∂̄_z K = 2πi·R·(δ_moll − 1/Area).
    pub compat_residual: f64,
}

/// Spectral taper: 1 for |k|∞ ≤ M/4, C^∞ down to 0 at 3M/8.
pub fn taper(m: usize, q: (i64, i64)) -> f64 {
    let r = q.0.unsigned_abs().max(q.1.unsigned_abs()) as f64;
    let (pass, stop) = (m as f64 / 4.0, 3.0 * m as f64 / 8.0);
    1.0 - smoothstep((r - pass) / (stop - pass))
}

fn stopband(m: usize) -> usize {
    3 * m / 8
}

fn signed(i: usize, m: usize) -> i64 {
    if i <= m / 2 {
        i as i64
    } else {
        i as i64 - m as i64
    }
}

/// (1/Area)·Σ g(k)e_k on the grid.
pub fn mollified_delta(tau: Complex64, m: usize) -> Result<Vec<Complex64>> {
    let s = stopband(m);
    let ctx = FourierCtx::new(s, tau)?;
    let a = tau.im;
    let si = s as i64;
    let modes = (-si..=si).flat_map(|p| (-si..=si).map(move |q| (p, q))).map(|q| (q, Complex64::new(taper(m, q) / a, 0.0)));
    Ok(FourierFn::from_modes(ctx, modes).to_grid(m))
}

fn dbar_grid(ctx: &FourierCtx, m: usize, g: &[Complex64]) -> Vec<Complex64> {
    let mut data = g.to_vec();
    fft2(&mut data, m, FftDirection::Forward);
    let norm = 1.0 / (m * m) as f64;
    for i in 0..m {
        for j in 0..m {
            data[i * m + j] *= ctx.dbar_symbol(signed(i, m), signed(j, m)) * norm;
        }
    }
    fft2(&mut data, m, FftDirection::Inverse);
    data
}

impl PairingKernel {
    pub fn new(m: usize, tau: Complex64, r: ResidueValues, k: KernelValues) -> Result<Self> {
        if m < 4 {
            return Err(Error::Config(format!("kernel grid {m} too small")));
        }
        if tau.im <= 0.0 {
            return Err(Error::Config(format!("Im τ must be positive, got {tau}")));
        }
        let (kl, want_k) = match &k {
            KernelValues::Full(v) => (v.len(), m * m * m * m),
            KernelValues::Difference(v) => (v.len(), m * m),
        };
        if kl != want_k {
            return Err(Error::Config(format!("kernel has {kl} values, expected {want_k}")));
        }
        if let ResidueValues::Grid(g) = &r {
            if g.len() != m * m {
                return Err(Error::Config(format!("residue grid has {} values, expected {}", g.len(), m * m)));
            }
        }
        let mut out = Self { m, tau, r, k, compat_residual: 0.0 };
        out.compat_residual = out.compute_compat()?;
        Ok(out)
    }

    /// Solves ∂̄k = 2πiR(δ_moll − 1/Area) mode by mode for constant R.
    pub fn spectral(tau: Complex64, m: usize, r: Complex64, zero_mode: Complex64) -> Result<Self> {
        let s = stopband(m);
        let ctx = FourierCtx::new(s, tau)?;
        let a = tau.im;
        let si = s as i64;
        let c = Complex64::new(0.0, TWO_PI) * r / a;
        let modes = (-si..=si).flat_map(|p| (-si..=si).map(move |q| (p, q))).map(|q| {
            let v = if q == (0, 0) { zero_mode } else { c * taper(m, q) / ctx.dbar_symbol(q.0, q.1) };
            (q, v)
        });
        let k = FourierFn::from_modes(ctx, modes).to_grid(m);
        Self::new(m, tau, ResidueValues::Constant(r), KernelValues::Difference(k))
    }

    /// Same kernel with M⁴ storage.
    pub fn to_full(&self) -> Self {
        let m2 = self.m * self.m;
        let k = match &self.k {
            KernelValues::Full(v) => v.clone(),
            KernelValues::Difference(d) => {
                let m = self.m;
                let mut v = vec![C0; m2 * m2];
                for z in 0..m2 {
                    for w in 0..m2 {
                        let (a, b) = ((z / m + m - w / m) % m, (z % m + m - w % m) % m);
                        v[z * m2 + w] = d[a * m + b];
                    }
                }
                v
            }
        };
        Self { m: self.m, tau: self.tau, r: self.r.clone(), k: KernelValues::Full(k), compat_residual: self.compat_residual }
    }

    fn compute_compat(&self) -> Result<f64> {
        let m = self.m;
        let m2 = m * m;
        let ctx = FourierCtx::new(0, self.tau)?;
        let delta = mollified_delta(self.tau, m)?;
        let a = self.tau.im;
        let two_pi_i = Complex64::new(0.0, TWO_PI);
        let shift = |g: &[Complex64], w: usize| -> Vec<Complex64> {
            let (wi, wj) = (w / m, w % m);
            (0..m2).map(|z| g[((z / m + m - wi) % m) * m + (z % m + m - wj) % m]).collect()
        };
        let dk0 = match &self.k {
            KernelValues::Difference(d) => Some(dbar_grid(&ctx, m, d)),
            KernelValues::Full(_) => None,
        };
        let (mut worst, mut scale): (f64, f64) = (0.0, 0.0);
        for w in 0..m2 {
            let dk = match (&self.k, &dk0) {
                (KernelValues::Difference(_), Some(d)) => shift(d, w),
                (KernelValues::Full(v), _) => {
                    let col: Vec<Complex64> = (0..m2).map(|z| v[z * m2 + w]).collect();
                    dbar_grid(&ctx, m, &col)
                }
                _ => unreachable!(),
            };
            let dw = shift(&delta, w);
            for z in 0..m2 {
                let target = two_pi_i * self.r.at(z) * (dw[z] - 1.0 / a);
                worst = worst.max((dk[z] - target).norm());
                scale = scale.max(target.norm());
            }
            if matches!(self.r, ResidueValues::Constant(_)) && dk0.is_some() {
                // translation invariant: one column decides
                break;
            }
        }
        Ok(if scale > 0.0 { worst / scale } else { worst })
    }

    /// Σ_w K(z,w)b(w) on the grid.
    fn apply(&self, b: &[Complex64]) -> Vec<Complex64> {
        let m = self.m;
        let m2 = m * m;
        match &self.k {
            KernelValues::Full(v) => (0..m2).map(|z| (0..m2).map(|w| v[z * m2 + w] * b[w]).sum()).collect(),
            KernelValues::Difference(d) => {
                let mut fk = d.clone();
                let mut fb = b.to_vec();
                fft2(&mut fk, m, FftDirection::Forward);
                fft2(&mut fb, m, FftDirection::Forward);
                let norm = 1.0 / m2 as f64;
                let mut prod: Vec<Complex64> = fk.iter().zip(&fb).map(|(x, y)| x * y * norm).collect();
                fft2(&mut prod, m, FftDirection::Inverse);
                prod
            }
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"SRSK")?;
        w.write_all(&1u32.to_le_bytes())?;
        let kind = matches!(self.k, KernelValues::Difference(_)) as u8;
        let rkind = matches!(self.r, ResidueValues::Grid(_)) as u8;
        w.write_all(&[kind, rkind, 0, 0])?;
        w.write_all(&(self.m as u32).to_le_bytes())?;
        let put = |w: &mut dyn Write, c: &Complex64| -> std::io::Result<()> {
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())
        };
        put(w, &self.tau)?;
        match &self.r {
            ResidueValues::Constant(c) => put(w, c)?,
            ResidueValues::Grid(g) => g.iter().try_for_each(|c| put(w, c))?,
        }
        match &self.k {
            KernelValues::Full(v) | KernelValues::Difference(v) => v.iter().try_for_each(|c| put(w, c))?,
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |msg: &str| Error::Schema { location: "kernel header".into(), message: msg.into() };
        let mut head = [0u8; 16];
        r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
        if &head[0..4] != b"SRSK" {
            return Err(bad("missing SRSK magic"));
        }
        if u32::from_le_bytes(head[4..8].try_into().unwrap()) != 1 {
            return Err(bad("unsupported kernel version"));
        }
        let (kind, rkind) = (head[8], head[9]);
        if kind > 1 || rkind > 1 {
            return Err(bad("unknown kernel or residue kind"));
        }
        let m = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
        if !(4..=128).contains(&m) {
            return Err(bad("grid size outside 4..=128"));
        }
        let mut get = |count: usize| -> Result<Vec<Complex64>> {
            let mut buf = vec![0u8; 16 * count];
            r.read_exact(&mut buf).map_err(|_| Error::Schema { location: "kernel body".into(), message: "truncated values".into() })?;
            Ok(buf
                .chunks_exact(16)
                .map(|b| Complex64::new(f64::from_le_bytes(b[0..8].try_into().unwrap()), f64::from_le_bytes(b[8..16].try_into().unwrap())))
                .collect())
        };
        let tau = get(1)?[0];
        let res = if rkind == 0 { ResidueValues::Constant(get(1)?[0]) } else { ResidueValues::Grid(get(m * m)?) };
        let k = if kind == 0 { KernelValues::Full(get(m * m * m * m)?) } else { KernelValues::Difference(get(m * m)?) };
        Self::new(m, tau, res, k)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairingValue {
    pub total: Complex64,
    /// Σ ∫∫ K χⁱ⊠χʲ.
    pub first: Complex64,
    /// Σ ∫ R hⁱʲ (enters the total with −2πi).
    pub second: Complex64,
}

/// Σ_{i<j} (∫∫ K χⁱ⊠χʲ − 2πi∫ R hⁱʲ) by trapezoidal quadrature on the kernel
/// grid. χ and h are sampled exactly from their modes.
pub fn pairing(a: &AnalyticDeformation, k: &PairingKernel) -> Result<PairingValue> {
    if (a.ctx.tau - k.tau).norm() > 1e-12 {
        return Err(Error::Backend(format!("kernel τ = {} but deformation τ = {}", k.tau, a.ctx.tau)));
    }
    let m = k.m;
    let da = k.tau.im / (m * m) as f64;
    let mut first = C0;
    let mut second = C0;
    let grids: BTreeMap<usize, Vec<Complex64>> = (1..=a.n).filter(|i| a.chi.contains_key(i)).map(|i| (i, a.chi(i).to_grid(m))).collect();
    for (i, j) in a.pairs() {
        if let (Some(x), Some(y)) = (grids.get(&i), grids.get(&j)) {
            let ky = k.apply(y);
            first += x.iter().zip(&ky).map(|(p, q)| p * q).sum::<Complex64>() * da * da;
        }
        if let Some(h) = a.h.get(&(i, j)) {
            let hg = h.to_grid(m);
            second += hg.iter().enumerate().map(|(z, v)| k.r.at(z) * v).sum::<Complex64>() * da;
        }
    }
    let total = first - Complex64::new(0.0, TWO_PI) * second;
    Ok(PairingValue { total, first, second })
}

#[derive(Debug, Clone, Copy)]
pub struct InvarianceOptions {
    /// Largest accepted kernel compat_residual.
    pub kernel_bound: f64,
    /// Pass iff |ΔP| ≤ rel_tol·max(|P|, 1).
    pub rel_tol: f64,
}

impl Default for InvarianceOptions {
    fn default() -> Self {
        Self { kernel_bound: 1e-6, rel_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub ok: bool,
    pub before: Complex64,
    pub after: Complex64,
    pub abs_diff: f64,
    pub rel_diff: f64,
    pub compat_residual: f64,
}

pub fn pairing_invariance_check(a: &AnalyticDeformation, k: &PairingKernel, nu: &GaugeVectorField, opts: InvarianceOptions) -> Result<InvarianceReport> {
    if !(k.compat_residual <= opts.kernel_bound) {
        return Err(Error::Precondition(format!(
            "kernel compat_residual {:e} exceeds bound {:e}; invariance only holds for compatible kernels",
            k.compat_residual, opts.kernel_bound
        )));
    }
    let before = pairing(a, k)?.total;
    let after = pairing(&crate::analytic::apply_gauge(a, nu, GaugeOrder::Second)?, k)?.total;
    let abs_diff = (after - before).norm();
    let rel_diff = abs_diff / before.norm().max(1.0);
    Ok(InvarianceReport { ok: rel_diff <= opts.rel_tol, before, after, abs_diff, rel_diff, compat_residual: k.compat_residual })
}
