//! Shared builders for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use srsdef::analytic::{AnalyticDeformation, GaugeVectorField};
use srsdef::atlas::{integrate_thickening, AlgebraicDeformation, BaseCurve, CechRing, GaugeCochain};
use srsdef::bridge::{BridgeConfig, TorusCover};
use srsdef::funcfield::{cq, Chart, CoefficientRing, FourierCtx, FourierFn, FourierShift, LaurentFn, LaurentMap, StripFn, StripShift, CQ};
use srsdef::superconformal::{SuperconformalMap, SuperconformalVectorField};
use srsdef::supernumber::{xi, xi2, Parity, SeriesConfig, SuperSeries, ONE};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn tau() -> Complex64 {
    c(0.2, 0.9)
}

pub fn cfg2() -> SeriesConfig {
    SeriesConfig::second_order(2)
}

// ---- ℙ¹ ----

pub fn p1() -> BaseCurve<LaurentFn> {
    BaseCurve::p1()
}

fn small_cq(r: &mut ChaCha8Rng) -> CQ {
    cq(r.gen_range(-4..=4), r.gen_range(1..=3), r.gen_range(-4..=4), r.gen_range(1..=3))
}

/// Random Laurent polynomial with exponents in [lo, hi].
pub fn rand_laurent(r: &mut ChaCha8Rng, chart: Chart, lo: i64, hi: i64) -> LaurentFn {
    let k = r.gen_range(1..=3);
    LaurentFn::new(chart, (0..k).map(|_| (r.gen_range(lo..=hi), small_cq(r))).collect::<Vec<_>>())
}

/// Random odd field of W⁻ type over A^{0|2}: pieces at 1 and ξ₁ξ₂.
pub fn rand_odd_field(r: &mut ChaCha8Rng) -> SuperconformalVectorField<LaurentFn> {
    let a = Chart::Alpha;
    let mut odd = BTreeMap::new();
    odd.insert(ONE, rand_laurent(r, a, -2, 3));
    if r.gen_bool(0.7) {
        odd.insert(xi2(1, 2), rand_laurent(r, a, -2, 3));
    }
    SuperconformalVectorField::new(cfg2(), &a, Parity::Odd, odd, BTreeMap::new()).unwrap()
}

fn laurent_shape(r: &mut ChaCha8Rng, chart: Chart) -> (SuperSeries<LaurentFn>, SuperSeries<LaurentFn>) {
    let psi = SuperSeries::from_terms(cfg2(), &chart, [(xi(1), rand_laurent(r, chart, -2, 2)), (xi(2), rand_laurent(r, chart, -2, 2))]);
    let fp = SuperSeries::from_terms(cfg2(), &chart, [(xi2(1, 2), rand_laurent(r, chart, -2, 2))]);
    (psi, fp)
}

/// x ↦ s²x on the α chart, with ζ₀ = s.
pub fn rand_laurent_scaling(r: &mut ChaCha8Rng) -> SuperconformalMap<LaurentFn> {
    let s: i64 = [1, 2, -3][r.gen_range(0..3)];
    let a = Chart::Alpha;
    let cl = LaurentMap::new(a, a, cq(s * s, 1, 0, 1), 1).unwrap();
    let (psi, fp) = laurent_shape(r, a);
    SuperconformalMap::from_relations(cl, LaurentFn::constant(a, cq(s, 1, 0, 1)), fp, psi).unwrap()
}

/// x ↦ 1/x from α to β, with ζ₀ = i/x.
pub fn rand_laurent_flip(r: &mut ChaCha8Rng) -> SuperconformalMap<LaurentFn> {
    let a = Chart::Alpha;
    let (psi, fp) = laurent_shape(r, a);
    SuperconformalMap::from_relations(LaurentMap::flip(), LaurentFn::monomial(a, -1, cq(0, 1, 1, 1)), fp, psi).unwrap()
}

// ---- torus, Čech side ----

pub fn torus() -> BaseCurve<StripFn> {
    BaseCurve::torus(tau(), 12).unwrap()
}

pub fn sf(base: &BaseCurve<StripFn>, modes: &[(i64, f64, f64)]) -> StripFn {
    StripFn::from_modes(base.charts[0].ctx, modes.iter().map(|(m, a, b)| (*m, c(*a, *b))))
}

/// Random strip series with modes in [lo, hi].
pub fn rand_strip(r: &mut ChaCha8Rng, base: &BaseCurve<StripFn>, lo: i64, hi: i64, scale: f64) -> StripFn {
    let modes: Vec<_> = (lo..=hi).map(|m| (m, c(scale * r.gen_range(-1.0..1.0), scale * r.gen_range(-1.0..1.0)))).collect();
    StripFn::from_modes(base.charts[0].ctx, modes)
}

/// Class-one cochain (1, 0) moved by the coboundary of a fixed low-mode b.
pub fn unit_psi(base: &BaseCurve<StripFn>) -> Vec<StripFn> {
    let b = vec![sf(base, &[(1, 0.2, 0.0)]), sf(base, &[(-1, 0.0, 0.1)])];
    let cob = base.coboundary(&b, 1);
    vec![cob[0].add(&StripFn::one(&base.charts[0].ctx)), cob[1].clone()]
}

pub fn scaled(v: &[StripFn], k: Complex64) -> Vec<StripFn> {
    v.iter().map(|x| x.scale(k)).collect()
}

/// n = 2 torus atlas with ψ¹ = c·P, ψ² = ratio·c·P and optional g¹² data.
pub fn torus_atlas(class: Complex64, ratio: Complex64, g_level: Option<Complex64>) -> AlgebraicDeformation<StripFn> {
    let base = torus();
    let p = unit_psi(&base);
    let mut psi = BTreeMap::new();
    if class != c(0.0, 0.0) {
        psi.insert(1, scaled(&p, class));
        psi.insert(2, scaled(&p, class * ratio));
    }
    let mut g = BTreeMap::new();
    if let Some(h) = g_level {
        let ctx = base.charts[0].ctx;
        g.insert((1, 2), vec![StripFn::constant(ctx, h).add(&sf(&base, &[(1, 0.1, 0.0)])), sf(&base, &[(1, 0.1, 0.0), (-1, 0.0, 0.05)])]);
    }
    integrate_thickening(&base, 2, &psi, &g).unwrap()
}

/// Modes m ≥ 0 only: the shift by τ damps them, so products stay well inside
/// the strip cutoff.
pub fn rand_strip_gauge(r: &mut ChaCha8Rng, base: &BaseCurve<StripFn>, n: usize) -> GaugeCochain<StripFn> {
    let k = base.charts.len();
    let w = (0..k).map(|_| (1..=n).map(|i| (i, rand_strip(r, base, 0, 1, 0.3))).collect()).collect();
    let u = (0..k)
        .map(|_| {
            let mut m = BTreeMap::new();
            for i in 1..=n {
                for j in (i + 1)..=n {
                    m.insert((i, j), rand_strip(r, base, 0, 1, 0.3));
                }
            }
            m
        })
        .collect();
    GaugeCochain::new(base, n, w, u).unwrap()
}

/// n = 2 gauge with w² = ratio·w¹, so gauged atlases keep Wr(ψ¹, ψ²) = 0.
pub fn proportional_strip_gauge(r: &mut ChaCha8Rng, base: &BaseCurve<StripFn>, ratio: Complex64) -> GaugeCochain<StripFn> {
    let lam = rand_strip_gauge(r, base, 2);
    let w = lam.w.iter().map(|m| BTreeMap::from([(1, m[&1].clone()), (2, m[&1].scale(ratio))])).collect();
    GaugeCochain::new(base, 2, w, lam.u.clone()).unwrap()
}

pub fn rand_strip_map(r: &mut ChaCha8Rng) -> SuperconformalMap<StripFn> {
    let base = torus();
    let ctx = base.charts[0].ctx;
    let cl = StripShift { ctx, b: c(r.gen_range(-0.5..0.5), r.gen_range(-0.1..0.1)) };
    let psi = SuperSeries::from_terms(cfg2(), &ctx, [(xi(1), rand_strip(r, &base, -2, 2, 0.5)), (xi(2), rand_strip(r, &base, -2, 2, 0.5))]);
    let fp = SuperSeries::from_terms(cfg2(), &ctx, [(xi2(1, 2), rand_strip(r, &base, -2, 2, 0.5))]);
    let z0 = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
    SuperconformalMap::from_relations(cl, StripFn::constant(ctx, c(z0, 0.0)), fp, psi).unwrap()
}

// ---- torus, Dolbeault side ----

pub fn cover(grid: usize, cutoff: usize) -> TorusCover {
    TorusCover::new(&torus(), BridgeConfig { grid, cutoff, delta: 0.2 }).unwrap()
}

pub fn fctx(n: usize) -> FourierCtx {
    FourierCtx::new(n, tau()).unwrap()
}

pub fn ff(ctx: FourierCtx, modes: &[((i64, i64), f64, f64)]) -> FourierFn {
    FourierFn::from_modes(ctx, modes.iter().map(|(k, a, b)| (*k, c(*a, *b))))
}

pub fn rand_fourier(r: &mut ChaCha8Rng, ctx: FourierCtx, width: i64, scale: f64) -> FourierFn {
    let mut modes = Vec::new();
    for m in -width..=width {
        for n in -width..=width {
            modes.push(((m, n), c(scale * r.gen_range(-1.0..1.0), scale * r.gen_range(-1.0..1.0))));
        }
    }
    FourierFn::from_modes(ctx, modes)
}

/// Random gauge field with ν² = ratio·ν¹, which keeps χ² = ratio·χ¹, and
/// no zero modes in ν¹.
pub fn rand_gauge_field(r: &mut ChaCha8Rng, ctx: FourierCtx, ratio: Complex64) -> GaugeVectorField {
    let nu = rand_fourier(r, ctx, 2, 0.2).map_modes(|m, k, z| if m == 0 && k == 0 { c(0.0, 0.0) } else { z });
    let nu1 = [(1, nu.clone()), (2, nu.scale(ratio))].into();
    let nu2 = [((1, 2), rand_fourier(r, ctx, 2, 0.2))].into();
    GaugeVectorField { nu1, nu2 }
}

/// χ² proportional to χ¹ (so the Wronskian vanishes) with optional h.
pub fn analytic_fixture(ctx: FourierCtx, profile: &FourierFn, ratio: Complex64, h: Option<FourierFn>) -> AnalyticDeformation {
    let chi = [(1, profile.clone()), (2, profile.scale(ratio))].into();
    let hh = h.map(|f| [((1, 2), f)].into()).unwrap_or_default();
    AnalyticDeformation::new(ctx, 2, chi, hh).unwrap()
}

pub fn rand_fourier_map(r: &mut ChaCha8Rng, ctx: FourierCtx) -> SuperconformalMap<FourierFn> {
    let cl = FourierShift { ctx, b: ctx.point(r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)) };
    let psi = SuperSeries::from_terms(cfg2(), &ctx, [(xi(1), rand_fourier(r, ctx, 1, 0.4)), (xi(2), rand_fourier(r, ctx, 1, 0.4))]);
    let fp = SuperSeries::from_terms(cfg2(), &ctx, [(xi2(1, 2), rand_fourier(r, ctx, 1, 0.4))]);
    SuperconformalMap::from_relations(cl, FourierFn::one(&ctx), fp, psi).unwrap()
}

/// Extension-class coordinates of Θⁱ.
pub fn class_at<R: CechRing>(d: &AlgebraicDeformation<R>, i: usize) -> Vec<Complex64> {
    srsdef::atlas::extension_class(d).unwrap().class.get(xi(i))
}
