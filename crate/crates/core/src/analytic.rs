//! Analytic deformations ∂̃_ξ = ∂̃ − φ(ξ) on the torus, their gauge action and
//! gauge-equivalence search.
//!
//! φ(ξ) = Σξᵢχⁱ·W⁻ + Σξᵢξⱼhⁱʲ·W⁺ with dz̄-components χⁱ (odd slot) and hⁱʲ
//! (even slot), all FourierFn on one context. A gauge field
//! ν = Σξᵢνⁱ W⁻ + Σξᵢξⱼνⁱʲ W⁺ acts by
//!
//! χⁱ ↦ χⁱ + ∂̄νⁱ,
//! hⁱʲ ↦ hⁱʲ + ∂̄νⁱʲ − (νⁱχʲ − νʲχⁱ) − ½(νⁱ∂̄νʲ − νʲ∂̄νⁱ),
//!
//! the brackets having been reduced modulo D with ½[W⁻(a), W⁻(b)] ≡ −ab∂/∂x.
//! The last term is dropped at linear order.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::funcfield::{dbar_solve, spectral_ddz, CoefficientRing, FormCoefficient, FormType, FourierCtx, FourierFn};
use crate::linalg;
use crate::{Error, Result};

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticDeformation {
    pub ctx: FourierCtx,
    pub n: usize,
    /// χⁱ by index 1..n.
    pub chi: BTreeMap<usize, FourierFn>,
    /// hⁱʲ by pair i < j.
    pub h: BTreeMap<(usize, usize), FourierFn>,
}

fn check_pair(n: usize, (i, j): (usize, usize)) -> Result<()> {
    if i == 0 || i >= j || j > n {
        return Err(Error::Config(format!("pair ({i},{j}) outside 1 ≤ i < j ≤ {n}")));
    }
    Ok(())
}

impl AnalyticDeformation {
    pub fn zero(ctx: FourierCtx, n: usize) -> Self {
        Self { ctx, n, chi: BTreeMap::new(), h: BTreeMap::new() }
    }

    pub fn new(ctx: FourierCtx, n: usize, chi: BTreeMap<usize, FourierFn>, h: BTreeMap<(usize, usize), FourierFn>) -> Result<Self> {
        for (i, f) in &chi {
            if *i == 0 || *i > n {
                return Err(Error::Config(format!("χ index {i} outside 1..{n}")));
            }
            if f.ctx() != ctx {
                return Err(Error::Backend("χ lives on a different Fourier context".into()));
            }
        }
        for (k, f) in &h {
            check_pair(n, *k)?;
            if f.ctx() != ctx {
                return Err(Error::Backend("h lives on a different Fourier context".into()));
            }
        }
        Ok(Self { ctx, n, chi, h })
    }

    pub fn chi(&self, i: usize) -> FourierFn {
        self.chi.get(&i).cloned().unwrap_or_else(|| FourierFn::zero(&self.ctx))
    }

    pub fn h(&self, i: usize, j: usize) -> FourierFn {
        self.h.get(&(i, j)).cloned().unwrap_or_else(|| FourierFn::zero(&self.ctx))
    }

    /// χⁱ as an odd (0,1)-form in the spin frame.
    pub fn chi_form(&self, i: usize) -> FormCoefficient {
        FormCoefficient::fourier(self.chi(i), FormType::ZeroOne, 1)
    }

    /// hⁱʲ as an even (0,1)-form in the tangent frame.
    pub fn h_form(&self, i: usize, j: usize) -> FormCoefficient {
        FormCoefficient::fourier(self.h(i, j), FormType::ZeroOne, 2)
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (1..=self.n).flat_map(|i| ((i + 1)..=self.n).map(move |j| (i, j))).collect()
    }

    pub fn distance(&self, o: &Self) -> f64 {
        if self.ctx != o.ctx || self.n != o.n {
            return f64::INFINITY;
        }
        let c = (1..=self.n).map(|i| self.chi(i).sub(&o.chi(i)).norm());
        let h = self.pairs().into_iter().map(|(i, j)| self.h(i, j).sub(&o.h(i, j)).norm());
        c.chain(h).fold(0.0, f64::max)
    }
}

/// ν = Σξᵢνⁱ(∂/∂θ − θ∂/∂x) + Σξᵢξⱼ(νⁱʲ∂/∂x + ½∂νⁱʲ/∂x θ∂/∂θ).
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeVectorField {
    pub nu1: BTreeMap<usize, FourierFn>,
    pub nu2: BTreeMap<(usize, usize), FourierFn>,
}

impl GaugeVectorField {
    pub fn zero() -> Self {
        Self { nu1: BTreeMap::new(), nu2: BTreeMap::new() }
    }

    fn nu1(&self, ctx: &FourierCtx, i: usize) -> FourierFn {
        self.nu1.get(&i).cloned().unwrap_or_else(|| FourierFn::zero(ctx))
    }

    fn nu2(&self, ctx: &FourierCtx, k: (usize, usize)) -> FourierFn {
        self.nu2.get(&k).cloned().unwrap_or_else(|| FourierFn::zero(ctx))
    }

    pub fn neg(&self) -> Self {
        Self {
            nu1: self.nu1.iter().map(|(k, v)| (*k, v.neg())).collect(),
            nu2: self.nu2.iter().map(|(k, v)| (*k, v.neg())).collect(),
        }
    }

    /// The single gauge field equivalent to gauging by `self`, then `next`:
    /// first orders add, νⁱʲ picks up ½(νⁱμʲ − μⁱνʲ).
    pub fn then(&self, next: &Self, ctx: &FourierCtx, n: usize) -> Self {
        let mut out = Self::zero();
        for i in 1..=n {
            out.nu1.insert(i, self.nu1(ctx, i).add(&next.nu1(ctx, i)));
        }
        for i in 1..=n {
            for j in (i + 1)..=n {
                let (a, b) = (self.nu1(ctx, i), self.nu1(ctx, j));
                let (c, d) = (next.nu1(ctx, i), next.nu1(ctx, j));
                let corr = a.mul(&d).sub(&c.mul(&b)).scale_q(1, 2);
                out.nu2.insert((i, j), self.nu2(ctx, (i, j)).add(&next.nu2(ctx, (i, j))).add(&corr));
            }
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.nu1.values().chain(self.nu2.values()).map(|f| f.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeOrder {
    Linear,
    Second,
}

#[derive(Debug, Clone, Serialize)]
pub struct WrEntry {
    pub i: usize,
    pub j: usize,
    pub max_abs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticReport {
    pub ok: bool,
    pub tol: f64,
    pub grid: usize,
    pub entries: Vec<WrEntry>,
}

/// Grid on which pointwise identities are checked: 4N rounded up to a power
/// of two, at least 16.
pub fn check_grid(ctx: &FourierCtx) -> usize {
    (4 * ctx.n + 2).next_power_of_two().max(16)
}

/// max over the grid of |∂χⁱ·χʲ − χⁱ·∂χʲ| for every pair.
pub fn check_analytic_deformation(a: &AnalyticDeformation) -> AnalyticReport {
    check_analytic_deformation_tol(a, 1e-8)
}

pub fn check_analytic_deformation_tol(a: &AnalyticDeformation, tol: f64) -> AnalyticReport {
    let m = check_grid(&a.ctx);
    let grids: BTreeMap<usize, (Vec<Complex64>, Vec<Complex64>)> =
        (1..=a.n).map(|i| (i, (a.chi(i).to_grid(m), spectral_ddz(&a.chi(i)).to_grid(m)))).collect();
    let mut entries = Vec::new();
    for (i, j) in a.pairs() {
        let (ci, di) = &grids[&i];
        let (cj, dj) = &grids[&j];
        let max_abs = (0..m * m).map(|k| (di[k] * cj[k] - ci[k] * dj[k]).norm()).fold(0.0, f64::max);
        entries.push(WrEntry { i, j, max_abs });
    }
    let ok = entries.iter().all(|e| e.max_abs < tol);
    AnalyticReport { ok, tol, grid: m, entries }
}

pub fn apply_gauge(a: &AnalyticDeformation, nu: &GaugeVectorField, order: GaugeOrder) -> Result<AnalyticDeformation> {
    for (i, f) in &nu.nu1 {
        if *i == 0 || *i > a.n || f.ctx() != a.ctx {
            return Err(Error::Config(format!("gauge component ν^{i} does not match the deformation")));
        }
    }
    for (k, f) in &nu.nu2 {
        check_pair(a.n, *k)?;
        if f.ctx() != a.ctx {
            return Err(Error::Config("gauge component on a different context".into()));
        }
    }
    let ctx = &a.ctx;
    let mut chi = BTreeMap::new();
    for i in 1..=a.n {
        let v = a.chi(i).add(&nu.nu1(ctx, i).ddxbar());
        if !v.is_zero(0.0) || a.chi.contains_key(&i) {
            chi.insert(i, v);
        }
    }
    let mut h = BTreeMap::new();
    for (i, j) in a.pairs() {
        let (vi, vj) = (nu.nu1(ctx, i), nu.nu1(ctx, j));
        let cross = vi.mul(&a.chi(j)).sub(&vj.mul(&a.chi(i)));
        let mut v = a.h(i, j).add(&nu.nu2(ctx, (i, j)).ddxbar()).sub(&cross);
        if order == GaugeOrder::Second {
            let quad = vi.mul(&vj.ddxbar()).sub(&vj.mul(&vi.ddxbar())).scale_q(1, 2);
            v = v.sub(&quad);
        }
        if !v.is_zero(0.0) || a.h.contains_key(&(i, j)) {
            h.insert((i, j), v);
        }
    }
    Ok(AnalyticDeformation { ctx: a.ctx, n: a.n, chi, h })
}

#[derive(Debug, Clone)]
pub struct GaugeOutcome {
    pub witness: Option<GaugeVectorField>,
    pub failed_order: Option<usize>,
    /// Harmonic differences that obstruct: χ-means (order 1) or h-means
    /// after the best constant adjustment (order 2).
    pub difference: BTreeMap<String, Complex64>,
    pub residual: f64,
}

fn h_means(a1: &AnalyticDeformation, a2: &AnalyticDeformation, nu: &GaugeVectorField) -> Result<(AnalyticDeformation, Vec<Complex64>)> {
    let g = apply_gauge(a1, nu, GaugeOrder::Second)?;
    let m = a1.pairs().into_iter().map(|(i, j)| a2.h(i, j).sub(&g.h(i, j)).mean()).collect();
    Ok((g, m))
}

/// Searches ν with apply_gauge(a1, ν, second) = a2.
pub fn find_gauge(a1: &AnalyticDeformation, a2: &AnalyticDeformation) -> Result<GaugeOutcome> {
    find_gauge_tol(a1, a2, 1e-8)
}

pub fn find_gauge_tol(a1: &AnalyticDeformation, a2: &AnalyticDeformation, tol: f64) -> Result<GaugeOutcome> {
    if a1.ctx != a2.ctx || a1.n != a2.n {
        return Err(Error::Precondition("deformations live on different bases".into()));
    }
    let ctx = a1.ctx;
    let n = a1.n;
    let mut nu = GaugeVectorField::zero();
    let mut diff = BTreeMap::new();
    for i in 1..=n {
        let (prim, harm) = dbar_solve(&a2.chi(i).sub(&a1.chi(i)));
        if harm.norm() > tol {
            diff.insert(format!("chi{i}"), harm);
        }
        nu.nu1.insert(i, prim);
    }
    if !diff.is_empty() {
        return Ok(GaugeOutcome { witness: None, failed_order: Some(1), difference: diff, residual: f64::INFINITY });
    }
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (mut g, mut means) = h_means(a1, a2, &nu)?;
    // constant shifts tⁱ of νⁱ move the h-means affinely
    if norm(&means) > tol && !means.is_empty() {
        let mut cols = Vec::new();
        for i in 1..=n {
            let mut p = nu.clone();
            let cur = p.nu1(&ctx, i);
            p.nu1.insert(i, cur.add(&FourierFn::one(&ctx)));
            let (_, pm) = h_means(a1, a2, &p)?;
            cols.push(pm);
        }
        let rows = means.len();
        let mut mat = vec![C0; rows * n];
        for (k, col) in cols.iter().enumerate() {
            for r in 0..rows {
                mat[r * n + k] = col[r] - means[r];
            }
        }
        let rhs: Vec<Complex64> = means.iter().map(|z| -z).collect();
        if let Some((t, _)) = linalg::lstsq(&mat, rows, n, &rhs) {
            let mut p = nu.clone();
            for (k, tk) in t.iter().enumerate() {
                let cur = p.nu1(&ctx, k + 1);
                p.nu1.insert(k + 1, cur.add(&FourierFn::constant(ctx, *tk)));
            }
            let (g2, m2) = h_means(a1, a2, &p)?;
            if norm(&m2) < norm(&means) {
                nu = p;
                g = g2;
                means = m2;
            }
        }
    }
    if norm(&means) > tol {
        let difference = a1.pairs().into_iter().zip(&means).map(|((i, j), z)| (format!("h{i}{j}"), *z)).collect();
        return Ok(GaugeOutcome { witness: None, failed_order: Some(2), difference, residual: f64::INFINITY });
    }
    for (i, j) in a1.pairs() {
        let (prim, _) = dbar_solve(&a2.h(i, j).sub(&g.h(i, j)));
        nu.nu2.insert((i, j), prim);
    }
    let residual = apply_gauge(a1, &nu, GaugeOrder::Second)?.distance(a2);
    if residual > tol.max(1e-8) {
        return Err(Error::Backend(format!("gauge solve left residual {residual:e}")));
    }
    Ok(GaugeOutcome { witness: Some(nu), failed_order: None, difference: BTreeMap::new(), residual })
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticClasses {
    /// Mean of χⁱ, index i at position i−1.
    pub chi: Vec<Complex64>,
    /// Raw means of hⁱʲ in pair order; these move under gauge cross terms.
    pub h_raw: Vec<Complex64>,
    /// Means of hⁱʲ after gauging χ to its harmonic part with zero-mean ν.
    pub h_normalized: Vec<Complex64>,
}

/// Zero-mean gauge that takes each χⁱ to its mean.
pub fn harmonic_gauge(a: &AnalyticDeformation) -> GaugeVectorField {
    let mut nu = GaugeVectorField::zero();
    for i in 1..=a.n {
        let (prim, _) = dbar_solve(&a.chi(i));
        nu.nu1.insert(i, prim.neg());
    }
    nu
}

/// Harmonic normal form: χⁱ constant, h unchanged up to the gauge.
pub fn harmonic_normal_form(a: &AnalyticDeformation) -> Result<AnalyticDeformation> {
    apply_gauge(a, &harmonic_gauge(a), GaugeOrder::Second)
}

pub fn analytic_classes(a: &AnalyticDeformation) -> Result<AnalyticClasses> {
    let norm = harmonic_normal_form(a)?;
    Ok(AnalyticClasses {
        chi: (1..=a.n).map(|i| a.chi(i).mean()).collect(),
        h_raw: a.pairs().into_iter().map(|(i, j)| a.h(i, j).mean()).collect(),
        h_normalized: a.pairs().into_iter().map(|(i, j)| norm.h(i, j).mean()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> FourierCtx {
        FourierCtx::new(8, Complex64::new(0.15, 1.05)).unwrap()
    }

    fn f(modes: &[((i64, i64), f64, f64)]) -> FourierFn {
        FourierFn::from_modes(ctx(), modes.iter().map(|(k, re, im)| (*k, Complex64::new(*re, *im))))
    }

    fn sample() -> AnalyticDeformation {
        let s = f(&[((0, 0), 1.0, 0.5), ((1, 0), 0.2, 0.0), ((0, -1), 0.0, 0.1)]);
        AnalyticDeformation::new(
            ctx(),
            2,
            [(1, s.clone()), (2, s.scale(Complex64::new(0.0, 2.0)))].into(),
            [((1, 2), f(&[((0, 0), 0.3, 0.0), ((1, 1), 0.1, 0.1)]))].into(),
        )
        .unwrap()
    }

    fn nu() -> GaugeVectorField {
        GaugeVectorField {
            nu1: [(1, f(&[((1, 0), 0.1, 0.2), ((-1, 1), 0.05, 0.0)])), (2, f(&[((0, 1), 0.0, 0.3)]))].into(),
            nu2: [((1, 2), f(&[((2, -1), 0.4, 0.0)]))].into(),
        }
    }

    #[test]
    fn wronskian_check_examples() {
        let c = AnalyticDeformation::new(ctx(), 2, [(1, f(&[((0, 0), 1.0, 0.0)])), (2, f(&[((0, 0), 0.0, 3.0)]))].into(), BTreeMap::new()).unwrap();
        assert!(check_analytic_deformation(&c).ok);
        assert!(check_analytic_deformation(&sample()).ok);
        let bad = AnalyticDeformation::new(ctx(), 2, [(1, f(&[((0, 0), 1.0, 0.0)])), (2, f(&[((1, 0), 1.0, 0.0)]))].into(), BTreeMap::new()).unwrap();
        let rep = check_analytic_deformation(&bad);
        assert!(!rep.ok);
        // |∂e₁₀| = |2πiτ̄/(τ − τ̄)|·|e₁₀|
        let want = ctx().dz_symbol(1, 0).norm();
        assert!((rep.entries[0].max_abs - want).abs() < 1e-9);
    }

    #[test]
    fn linear_law_on_h_only() {
        let z = AnalyticDeformation::zero(ctx(), 2);
        let mut g = GaugeVectorField::zero();
        let v = f(&[((1, 2), 0.5, 0.0)]);
        g.nu2.insert((1, 2), v.clone());
        let out = apply_gauge(&z, &g, GaugeOrder::Linear).unwrap();
        assert!(out.h(1, 2).sub(&v.ddxbar()).norm() < 1e-15);
        assert_eq!(apply_gauge(&sample(), &GaugeVectorField::zero(), GaugeOrder::Second).unwrap(), sample());
    }

    #[test]
    fn negated_gauge_inverts() {
        let a = sample();
        let there = apply_gauge(&a, &nu(), GaugeOrder::Second).unwrap();
        let back = apply_gauge(&there, &nu().neg(), GaugeOrder::Second).unwrap();
        assert!(back.distance(&a) < 1e-12);
    }

    #[test]
    fn gauges_compose() {
        let a = sample();
        let mu = GaugeVectorField { nu1: [(1, f(&[((0, 2), 0.2, -0.1)]))].into(), nu2: BTreeMap::new() };
        let seq = apply_gauge(&apply_gauge(&a, &nu(), GaugeOrder::Second).unwrap(), &mu, GaugeOrder::Second).unwrap();
        let once = apply_gauge(&a, &nu().then(&mu, &ctx(), 2), GaugeOrder::Second).unwrap();
        assert!(seq.distance(&once) < 1e-12);
    }

    #[test]
    fn find_gauge_cases() {
        let a = sample();
        let same = find_gauge(&a, &a).unwrap();
        assert!(same.witness.unwrap().norm() < 1e-14);
        let b = apply_gauge(&a, &nu(), GaugeOrder::Second).unwrap();
        let w = find_gauge(&a, &b).unwrap().witness.unwrap();
        assert!(apply_gauge(&a, &w, GaugeOrder::Second).unwrap().distance(&b) < 1e-10);
        let mut c = a.clone();
        c.chi.insert(1, a.chi(1).add(&f(&[((0, 0), 0.25, 0.0)])));
        let r = find_gauge(&a, &c).unwrap();
        assert_eq!(r.failed_order, Some(1));
        assert!((r.difference["chi1"] - Complex64::new(0.25, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn constant_shift_absorbs_h_mean() {
        let a = sample();
        let mut b = a.clone();
        // h-mean shift reachable through νⁱ ↦ νⁱ + tⁱ since χ̄ ≠ 0
        b.h.insert((1, 2), a.h(1, 2).add(&f(&[((0, 0), 0.7, -0.2)])));
        assert!(find_gauge(&a, &b).unwrap().witness.is_some());
        let z = AnalyticDeformation::zero(ctx(), 2);
        let mut zb = z.clone();
        zb.h.insert((1, 2), f(&[((0, 0), 0.7, 0.0)]));
        assert_eq!(find_gauge(&z, &zb).unwrap().failed_order, Some(2));
    }

    #[test]
    fn classes_are_gauge_invariant() {
        let a = sample();
        let c0 = analytic_classes(&a).unwrap();
        assert!((c0.chi[0] - Complex64::new(1.0, 0.5)).norm() < 1e-15);
        let zero_mean = GaugeVectorField { nu1: nu().nu1, nu2: nu().nu2 };
        let b = apply_gauge(&a, &zero_mean, GaugeOrder::Second).unwrap();
        let c1 = analytic_classes(&b).unwrap();
        for (x, y) in c0.chi.iter().zip(&c1.chi) {
            assert!((x - y).norm() < 1e-10);
        }
        for (x, y) in c0.h_normalized.iter().zip(&c1.h_normalized) {
            assert!((x - y).norm() < 1e-10);
        }
        let z = analytic_classes(&AnalyticDeformation::zero(ctx(), 2)).unwrap();
        assert!(z.chi.iter().chain(&z.h_raw).all(|v| v.norm() == 0.0));
    }
}
