//! Base curves with spin structure, superconformal atlases over A^{0|n}, their
//! Čech invariants and equivalences.
//!
//! Two covers are supported:
//! - ℙ¹ with charts α, β and the single overlap ℂ*, y = 1/x, ζ = i/x.
//! - The torus ℂ/(ℤ+τℤ) with two annular charts U₀, U₁ in the coordinate z.
//!   Their overlap has components A (v near 0, z ↦ z + τ) and B (v near ½,
//!   z ↦ z), both with ζ = 1.
//!
//! Neither cover has triple intersections, so every cochain on overlaps is a
//! cocycle.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::funcfield::{cq_int, Chart, CoefficientRing, LaurentFn, LaurentMap, StripCtx, StripFn, StripShift};
use crate::linalg;
use crate::superconformal::{
    check_superconformal_map_tol, compose, invert_tol, reduce_mod_d, SuperVf, SuperconformalMap,
};
use crate::supernumber::{has_theta, ss_derive_odd, xi, xi2, xi_degree, Mono, OddVar, Parity, SeriesConfig, SuperSeries};
use crate::{Error, Result};

type S<R> = SuperSeries<R>;

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseKind {
    P1,
    Torus { tau: [f64; 2], n: usize },
}

#[derive(Debug, Clone)]
pub struct ChartInfo<R: CoefficientRing> {
    pub name: String,
    pub ctx: R::Ctx,
}

/// One connected component of an ordered chart overlap.
#[derive(Debug, Clone)]
pub struct Intersection<R: CoefficientRing> {
    pub src: usize,
    pub dst: usize,
    pub component: String,
    pub map: R::Map,
    pub zeta: R,
    pub domain: String,
}

#[derive(Debug, Clone)]
pub struct BaseCurve<R: CoefficientRing> {
    pub kind: BaseKind,
    pub charts: Vec<ChartInfo<R>>,
    pub intersections: Vec<Intersection<R>>,
}

impl BaseCurve<LaurentFn> {
    pub fn p1() -> Self {
        Self {
            kind: BaseKind::P1,
            charts: vec![
                ChartInfo { name: "alpha".into(), ctx: Chart::Alpha },
                ChartInfo { name: "beta".into(), ctx: Chart::Beta },
            ],
            intersections: vec![Intersection {
                src: 0,
                dst: 1,
                component: "C*".into(),
                map: LaurentMap::flip(),
                zeta: LaurentFn::monomial(Chart::Alpha, -1, cq_int(0, 1)),
                domain: "0 < |x| < ∞".into(),
            }],
        }
    }
}

impl BaseCurve<StripFn> {
    pub fn torus(tau: Complex64, n: usize) -> Result<Self> {
        let ctx = StripCtx::new(n, tau)?;
        let one = StripFn::one(&ctx);
        Ok(Self {
            kind: BaseKind::Torus { tau: [tau.re, tau.im], n },
            charts: vec![
                ChartInfo { name: "U0".into(), ctx },
                ChartInfo { name: "U1".into(), ctx },
            ],
            intersections: vec![
                Intersection {
                    src: 0,
                    dst: 1,
                    component: "A".into(),
                    map: StripShift { ctx, b: tau },
                    zeta: one.clone(),
                    domain: "Im z/Im τ ∈ (−δ, δ) in U0, (1−δ, 1+δ) in U1".into(),
                },
                Intersection {
                    src: 0,
                    dst: 1,
                    component: "B".into(),
                    map: StripShift { ctx, b: C0 },
                    zeta: one,
                    domain: "Im z/Im τ ∈ (½−δ, ½+δ)".into(),
                },
            ],
        })
    }

    pub fn tau(&self) -> Complex64 {
        match self.kind {
            BaseKind::Torus { tau, .. } => Complex64::new(tau[0], tau[1]),
            BaseKind::P1 => unreachable!("strip base is always a torus"),
        }
    }
}

impl<R: CoefficientRing> BaseCurve<R> {
    pub fn label(&self, e: usize) -> String {
        let x = &self.intersections[e];
        format!("{}→{}:{}", self.charts[x.src].name, self.charts[x.dst].name, x.component)
    }

    /// ζ² − ∂f/∂x per intersection.
    pub fn spin_residuals(&self) -> Vec<f64> {
        self.intersections
            .iter()
            .map(|x| x.zeta.mul(&x.zeta).sub(&R::map_derivative(&x.map)).norm())
            .collect()
    }

    pub fn same_as(&self, o: &Self) -> bool {
        self.kind == o.kind
            && self.charts.len() == o.charts.len()
            && self.intersections.len() == o.intersections.len()
            && self.intersections.iter().zip(&o.intersections).all(|(a, b)| {
                a.src == b.src && a.dst == b.dst && R::map_eq(&a.map, &b.map, 1e-12) && a.zeta.sub(&b.zeta).is_zero(1e-12)
            })
    }

    fn zeta_pow(&self, e: usize, weight: i32) -> R {
        let z = &self.intersections[e].zeta;
        let base = if weight < 0 { z.try_inv().expect("spin transition is invertible") } else { z.clone() };
        let mut out = R::one(&z.ctx());
        for _ in 0..weight.unsigned_abs() {
            out = out.mul(&base);
        }
        out
    }

    /// (δb)_e = ζ_e^w·b_src − b_dst∘f_e.
    pub fn coboundary(&self, b: &[R], weight: i32) -> Vec<R> {
        self.intersections
            .iter()
            .enumerate()
            .map(|(e, x)| self.zeta_pow(e, weight).mul(&b[x.src]).sub(&b[x.dst].pullback(&x.map)))
            .collect()
    }
}

/// Coefficient rings that carry Čech data on one of the supported covers.
pub trait CechRing: CoefficientRing {
    /// dim H¹ of the weight-w bundle (w = 1: spin bundle, w = 2: tangent).
    fn class_dim(base: &BaseCurve<Self>, weight: i32) -> usize;
    /// Writes c = rep(class) + δb, returning the class and b.
    fn split_cocycle(base: &BaseCurve<Self>, c: &[Self], weight: i32) -> Result<(Vec<Complex64>, Vec<Self>)>;
    fn class_representative(base: &BaseCurve<Self>, class: &[Complex64], weight: i32) -> Vec<Self>;
    /// A basis of H⁰ (the kernel of δ), as chart cochains.
    fn global_sections(base: &BaseCurve<Self>, weight: i32) -> Vec<Vec<Self>>;
    /// Points at which functions on a chart are compared.
    fn sample_points(ctx: &Self::Ctx) -> Vec<Complex64>;
}

fn check_len<R: CoefficientRing>(base: &BaseCurve<R>, c: &[R]) -> Result<()> {
    if c.len() != base.intersections.len() {
        return Err(Error::Config(format!(
            "cocycle has {} entries, cover has {} intersection components",
            c.len(),
            base.intersections.len()
        )));
    }
    for (x, v) in base.intersections.iter().zip(c) {
        if v.ctx() != base.charts[x.src].ctx {
            return Err(Error::ChartMismatch("cocycle entry is not on the source chart".into()));
        }
    }
    Ok(())
}

impl CechRing for LaurentFn {
    fn class_dim(_: &BaseCurve<Self>, _: i32) -> usize {
        0
    }

    fn split_cocycle(base: &BaseCurve<Self>, c: &[Self], weight: i32) -> Result<(Vec<Complex64>, Vec<Self>)> {
        check_len(base, c)?;
        if weight < -1 {
            return Err(Error::Precondition(format!("H¹ of weight {weight} does not vanish on ℙ¹")));
        }
        let x = &base.intersections[0];
        // positive powers extend over α after dividing by ζ^w; the rest over β
        let zinv = base.zeta_pow(0, -weight);
        let b_alpha = zinv.mul(&c[0].filter(|e| e > 0));
        let back = Self::map_inverse(&x.map)?;
        let b_beta = c[0].filter(|e| e <= 0).pullback(&back).neg();
        debug_assert!(b_alpha.coeffs().keys().all(|e| *e >= 0) && b_beta.coeffs().keys().all(|e| *e >= 0));
        Ok((Vec::new(), vec![b_alpha, b_beta]))
    }

    fn class_representative(base: &BaseCurve<Self>, _: &[Complex64], _: i32) -> Vec<Self> {
        vec![Self::zero(&base.charts[0].ctx)]
    }

    fn global_sections(base: &BaseCurve<Self>, weight: i32) -> Vec<Vec<Self>> {
        let x = &base.intersections[0];
        let back = Self::map_inverse(&x.map).expect("flip is invertible");
        (0..=weight.max(-1))
            .map(|j| {
                let a = Self::monomial(Chart::Alpha, j as i64, cq_int(1, 0));
                let b = base.zeta_pow(0, weight).mul(&a).pullback(&back);
                vec![a, b]
            })
            .collect()
    }

    fn sample_points(_: &Chart) -> Vec<Complex64> {
        (0..7).map(|k| Complex64::from_polar(0.6 + 0.15 * k as f64, 0.9 * k as f64 + 0.3)).collect()
    }
}

impl CechRing for StripFn {
    fn class_dim(_: &BaseCurve<Self>, _: i32) -> usize {
        1
    }

    fn split_cocycle(base: &BaseCurve<Self>, c: &[Self], _weight: i32) -> Result<(Vec<Complex64>, Vec<Self>)> {
        check_len(base, c)?;
        // ζ = 1 on both components, so the weight does not enter
        let p = Complex64::new(0.0, 2.0 * std::f64::consts::PI) * base.tau();
        let class = c[0].mode(0) - c[1].mode(0);
        let (ca, cb) = (&c[0], &c[1]);
        let b1 = ca.map_modes(|m, a| if m == 0 { C0 } else { (a - cb.mode(m)) / (Complex64::new(1.0, 0.0) - (p * m as f64).exp()) });
        let b0 = cb.add(&b1);
        Ok((vec![class], vec![b0, b1]))
    }

    fn class_representative(base: &BaseCurve<Self>, class: &[Complex64], _: i32) -> Vec<Self> {
        let ctx = base.charts[0].ctx;
        vec![StripFn::constant(ctx, class.first().copied().unwrap_or(C0)), StripFn::zero(&ctx)]
    }

    fn global_sections(base: &BaseCurve<Self>, _: i32) -> Vec<Vec<Self>> {
        let ctx = base.charts[0].ctx;
        vec![vec![StripFn::one(&ctx), StripFn::one(&ctx)]]
    }

    fn sample_points(ctx: &StripCtx) -> Vec<Complex64> {
        (0..7).map(|k| Complex64::new(0.137 * k as f64, 0.0) + ctx.tau * (0.07 * k as f64 - 0.2)).collect()
    }
}

/// Reduced class of a Čech cochain with SuperSeries values: one vector of
/// H¹-coordinates per θ-free ξ-monomial. Empty vectors on ℙ¹.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohomologyClass {
    pub dim: usize,
    pub values: BTreeMap<Mono, Vec<Complex64>>,
}

impl CohomologyClass {
    pub fn get(&self, m: Mono) -> Vec<Complex64> {
        self.values.get(&m).cloned().unwrap_or_else(|| vec![C0; self.dim])
    }

    pub fn norm(&self) -> f64 {
        self.values.values().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.norm() <= tol
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut values = BTreeMap::new();
        for m in self.values.keys().chain(o.values.keys()) {
            let (a, b) = (self.get(*m), o.get(*m));
            values.insert(*m, a.iter().zip(&b).map(|(x, y)| x - y).collect());
        }
        Self { dim: self.dim, values }
    }
}

/// Čech 1-cochain on the overlap components, with its bundle weight.
#[derive(Debug, Clone)]
pub struct CechCocycle<R: CoefficientRing> {
    pub weight: i32,
    pub values: Vec<S<R>>,
}

impl<R: CechRing> CechCocycle<R> {
    /// Ring-valued entries at one ξ-monomial.
    pub fn component(&self, m: Mono) -> Vec<R> {
        self.values.iter().map(|v| v.coeff(m)).collect()
    }

    pub fn monomials(&self) -> Vec<Mono> {
        let mut ms: Vec<Mono> = self.values.iter().flat_map(|v| v.terms().keys().copied()).filter(|m| !has_theta(*m)).collect();
        ms.sort_unstable();
        ms.dedup();
        ms
    }

    /// No triple intersections on either cover: always 0.
    pub fn cocycle_residual(&self) -> f64 {
        0.0
    }

    pub fn class(&self, base: &BaseCurve<R>) -> Result<CohomologyClass> {
        let mut values = BTreeMap::new();
        for m in self.monomials() {
            let (cls, _) = R::split_cocycle(base, &self.component(m), self.weight)?;
            values.insert(m, cls);
        }
        Ok(CohomologyClass { dim: R::class_dim(base, self.weight), values })
    }
}

/// Raw per-intersection coefficients {ψⁱ, fⁱ, gⁱʲ, ζⁱʲ}, indices 1-based.
#[derive(Debug, Clone)]
pub struct TransitionData<R: CoefficientRing> {
    pub psi: BTreeMap<usize, R>,
    pub f: BTreeMap<usize, R>,
    pub g: BTreeMap<(usize, usize), R>,
    pub zeta2: BTreeMap<(usize, usize), R>,
}

impl<R: CoefficientRing> Default for TransitionData<R> {
    fn default() -> Self {
        Self { psi: BTreeMap::new(), f: BTreeMap::new(), g: BTreeMap::new(), zeta2: BTreeMap::new() }
    }
}

/// A superconformal atlas over A^{0|n}, one transition per overlap component.
#[derive(Debug, Clone)]
pub struct AlgebraicDeformation<R: CoefficientRing> {
    pub base: BaseCurve<R>,
    pub cfg: SeriesConfig,
    pub transitions: Vec<SuperconformalMap<R>>,
    /// Transitions in the opposite direction, checked against the forward ones.
    pub reverse: Vec<SuperconformalMap<R>>,
}

fn pair_key(i: usize, j: usize) -> Result<Mono> {
    if i == 0 || i >= j {
        return Err(Error::Config(format!("pair ({i},{j}) must satisfy 1 ≤ i < j")));
    }
    Ok(xi2(i, j))
}

fn check_index(n: usize, i: usize) -> Result<()> {
    if i == 0 || i > n {
        return Err(Error::Config(format!("odd index {i} outside 1..{n}")));
    }
    Ok(())
}

impl<R: CechRing> AlgebraicDeformation<R> {
    pub fn split(base: &BaseCurve<R>, n: usize) -> Self {
        let cfg = SeriesConfig::second_order(n);
        let transitions: Vec<_> = base
            .intersections
            .iter()
            .map(|x| {
                let src = &base.charts[x.src].ctx;
                SuperconformalMap {
                    classical: x.map.clone(),
                    f_plus: S::zero(cfg, src),
                    f_minus: S::zero(cfg, src),
                    zeta: S::scalar(cfg, x.zeta.clone()),
                    psi: S::zero(cfg, src),
                }
            })
            .collect();
        let reverse = transitions.iter().map(|t| invert_tol(t, f64::INFINITY).expect("classical transitions invert")).collect();
        Self { base: base.clone(), cfg, transitions, reverse }
    }

    /// Builds transitions from raw coefficient tables without enforcing any
    /// relation. Reverse transitions are the computed inverses.
    pub fn from_raw(base: &BaseCurve<R>, n: usize, data: &[TransitionData<R>]) -> Result<Self> {
        if data.len() != base.intersections.len() {
            return Err(Error::Config("one coefficient table per intersection component".into()));
        }
        let cfg = SeriesConfig::second_order(n);
        let mut transitions = Vec::new();
        for (x, d) in base.intersections.iter().zip(data) {
            let src = &base.charts[x.src].ctx;
            let mut f_plus = S::zero(cfg, src);
            let mut f_minus = S::zero(cfg, src);
            let mut zeta = S::scalar(cfg, x.zeta.clone());
            let mut psi = S::zero(cfg, src);
            for (i, v) in &d.psi {
                check_index(n, *i)?;
                psi.add_term(xi(*i), v.clone());
            }
            for (i, v) in &d.f {
                check_index(n, *i)?;
                f_minus.add_term(xi(*i), v.clone());
            }
            for ((i, j), v) in &d.g {
                check_index(n, *j)?;
                f_plus.add_term(pair_key(*i, *j)?, v.clone());
            }
            for ((i, j), v) in &d.zeta2 {
                check_index(n, *j)?;
                zeta.add_term(pair_key(*i, *j)?, v.clone());
            }
            transitions.push(SuperconformalMap::new(x.map.clone(), f_plus, f_minus, zeta, psi)?);
        }
        let reverse = transitions.iter().map(|t| invert_tol(t, f64::INFINITY)).collect::<Result<_>>()?;
        Ok(Self { base: base.clone(), cfg, transitions, reverse })
    }

    /// Completes ψⁱ and gⁱʲ cochains to a superconformal atlas, deriving fⁱ and
    /// ζⁱʲ from the map relations. Does not check the Wronskian condition.
    pub fn from_cochains(base: &BaseCurve<R>, n: usize, psi: &BTreeMap<usize, Vec<R>>, g: &BTreeMap<(usize, usize), Vec<R>>) -> Result<Self> {
        let cfg = SeriesConfig::second_order(n);
        let mut transitions = Vec::new();
        for (e, x) in base.intersections.iter().enumerate() {
            let src = &base.charts[x.src].ctx;
            let mut ps = S::zero(cfg, src);
            for (i, v) in psi {
                check_index(n, *i)?;
                check_len(base, v)?;
                ps.add_term(xi(*i), v[e].clone());
            }
            let mut fp = S::zero(cfg, src);
            for ((i, j), v) in g {
                check_index(n, *j)?;
                check_len(base, v)?;
                fp.add_term(pair_key(*i, *j)?, v[e].clone());
            }
            transitions.push(SuperconformalMap::from_relations(x.map.clone(), x.zeta.clone(), fp, ps)?);
        }
        let reverse = transitions.iter().map(|t| invert_tol(t, f64::INFINITY)).collect::<Result<_>>()?;
        Ok(Self { base: base.clone(), cfg, transitions, reverse })
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    pub fn psi(&self, i: usize) -> Vec<R> {
        self.transitions.iter().map(|t| t.psi.coeff(xi(i))).collect()
    }

    pub fn g(&self, i: usize, j: usize) -> Vec<R> {
        self.transitions.iter().map(|t| t.f_plus.coeff(xi2(i, j))).collect()
    }

    pub fn data(&self, e: usize) -> TransitionData<R> {
        let t = &self.transitions[e];
        let mut d = TransitionData::default();
        let keep = |c: &R| !c.is_zero(0.0);
        for i in 1..=self.n() {
            let (p, f) = (t.psi.coeff(xi(i)), t.f_minus.coeff(xi(i)));
            if keep(&p) {
                d.psi.insert(i, p);
            }
            if keep(&f) {
                d.f.insert(i, f);
            }
            for j in (i + 1)..=self.n() {
                let (g, z) = (t.f_plus.coeff(xi2(i, j)), t.zeta.coeff(xi2(i, j)));
                if keep(&g) {
                    d.g.insert((i, j), g);
                }
                if keep(&z) {
                    d.zeta2.insert((i, j), z);
                }
            }
        }
        d
    }

    pub fn distance(&self, o: &Self) -> f64 {
        if !self.base.same_as(&o.base) || self.cfg != o.cfg {
            return f64::INFINITY;
        }
        self.transitions.iter().zip(&o.transitions).map(|(a, b)| a.distance(b)).fold(0.0, f64::max)
    }
}

/// Zero for exact rings, 1e−8 otherwise.
pub fn default_tol<R: CoefficientRing>() -> f64 {
    if R::ZERO_TOL == 0.0 {
        0.0
    } else {
        1e-8
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AtlasCheck {
    pub check: &'static str,
    pub intersection: usize,
    pub label: String,
    pub relation: String,
    pub order: usize,
    pub residual: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AtlasReport {
    pub ok: bool,
    pub tol: f64,
    pub triple_intersections: usize,
    pub checks: Vec<AtlasCheck>,
}

impl AtlasReport {
    pub fn failures(&self) -> impl Iterator<Item = &AtlasCheck> {
        self.checks.iter().filter(|c| !c.ok)
    }
}

pub fn verify_atlas<R: CechRing>(d: &AlgebraicDeformation<R>) -> AtlasReport {
    verify_atlas_tol(d, default_tol::<R>())
}

/// Checks (a) the map relations per intersection, (b) that forward and
/// reverse transitions are mutually inverse, (c) triple cocycle conditions,
/// of which these covers have none.
pub fn verify_atlas_tol<R: CechRing>(d: &AlgebraicDeformation<R>, tol: f64) -> AtlasReport {
    let mut checks = Vec::new();
    for (e, t) in d.transitions.iter().enumerate() {
        let label = d.base.label(e);
        let rep = check_superconformal_map_tol(t, tol);
        for r in rep.residuals {
            checks.push(AtlasCheck {
                check: "superconformal",
                intersection: e,
                label: label.clone(),
                relation: r.relation.to_string(),
                order: r.order,
                residual: r.norm,
                ok: r.norm <= tol,
            });
        }
        let inv = d.reverse.get(e);
        let residual = match inv {
            None => f64::INFINITY,
            Some(rv) => {
                let a = compose(t, rv).map(|m| m.distance(&SuperconformalMap::identity(d.cfg, &t.source())));
                let b = compose(rv, t).map(|m| m.distance(&SuperconformalMap::identity(d.cfg, &rv.source())));
                match (a, b) {
                    (Ok(a), Ok(b)) => a.max(b),
                    _ => f64::INFINITY,
                }
            }
        };
        checks.push(AtlasCheck {
            check: "inverse",
            intersection: e,
            label,
            relation: "forward∘reverse = 1".into(),
            order: d.cfg.truncation,
            residual,
            ok: residual <= tol,
        });
    }
    let ok = checks.iter().all(|c| c.ok);
    AtlasReport { ok, tol, triple_intersections: 0, checks }
}

#[derive(Debug, Clone, Serialize)]
pub struct WronskianEntry {
    pub intersection: usize,
    pub label: String,
    pub i: usize,
    pub j: usize,
    pub norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WronskianReport {
    pub ok: bool,
    pub entries: Vec<WronskianEntry>,
}

/// Wr(ψⁱ, ψʲ) on every intersection and pair i < j.
pub fn wronskian_check<R: CechRing>(d: &AlgebraicDeformation<R>) -> WronskianReport {
    let tol = default_tol::<R>();
    let mut entries = Vec::new();
    for e in 0..d.transitions.len() {
        for i in 1..=d.n() {
            for j in (i + 1)..=d.n() {
                let (a, b) = (d.transitions[e].psi.coeff(xi(i)), d.transitions[e].psi.coeff(xi(j)));
                let w = a.ddx().mul(&b).sub(&a.mul(&b.ddx()));
                entries.push(WronskianEntry { intersection: e, label: d.base.label(e), i, j, norm: w.norm() });
            }
        }
    }
    let ok = entries.iter().all(|x| x.norm <= tol);
    WronskianReport { ok, entries }
}

fn require_valid<R: CechRing>(d: &AlgebraicDeformation<R>) -> Result<()> {
    let rep = verify_atlas(d);
    if let Some(f) = rep.failures().next() {
        return Err(Error::Precondition(format!(
            "invalid atlas: {} check '{}' at {} (order {}) residual {:e}",
            f.check, f.relation, f.label, f.order, f.residual
        )));
    }
    Ok(())
}

/// Primary obstruction ω_{αβ} = (Σθξᵢfⁱ + Σξᵢξⱼgⁱʲ)⊗∂/∂y, stored by its
/// coefficient series.
pub fn obstruction<R: CechRing>(d: &AlgebraicDeformation<R>) -> Result<CechCocycle<R>> {
    require_valid(d)?;
    let values = d.transitions.iter().map(|t| t.even_image().nil).collect();
    Ok(CechCocycle { weight: 2, values })
}

/// ζ⁻¹ times the odd part of ∂ω/∂ξᵢ|_{ξ=0} modulo D, per intersection.
pub fn project_obstruction<R: CechRing>(d: &AlgebraicDeformation<R>, omega: &CechCocycle<R>, i: usize) -> Result<Vec<R>> {
    let mut out = Vec::new();
    for (e, w) in omega.values.iter().enumerate() {
        let ctx = w.ctx().clone();
        let dw = ss_derive_odd(OddVar::Xi(i), w).filter(|m| xi_degree(m) == 0);
        let mut v = SuperVf::zero(Parity::Odd, d.cfg, &ctx);
        v.dx = dw;
        let red = reduce_mod_d(&v)?;
        let zinv = d.base.intersections[e]
            .zeta
            .try_inv()
            .ok_or_else(|| Error::NotInvertible("spin transition".into()))?;
        out.push(zinv.mul(&red.odd.body()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ExtensionClass<R: CoefficientRing> {
    /// Θ_{αβ} = Σξᵢψⁱ_{αβ}.
    pub cocycle: CechCocycle<R>,
    pub class: CohomologyClass,
    /// max |pr_*ω − Θ| over indices and intersections.
    pub projection_residual: f64,
}

pub fn extension_class<R: CechRing>(d: &AlgebraicDeformation<R>) -> Result<ExtensionClass<R>> {
    let omega = obstruction(d)?;
    let cocycle = CechCocycle { weight: 1, values: d.transitions.iter().map(|t| t.psi.clone()).collect() };
    let mut values = BTreeMap::new();
    let mut projection_residual: f64 = 0.0;
    for i in 1..=d.n() {
        let (cls, _) = R::split_cocycle(&d.base, &d.psi(i), 1)?;
        values.insert(xi(i), cls);
        for (p, q) in project_obstruction(d, &omega, i)?.iter().zip(d.psi(i)) {
            projection_residual = projection_residual.max(p.sub(&q).norm());
        }
    }
    let class = CohomologyClass { dim: R::class_dim(&d.base, 1), values };
    Ok(ExtensionClass { cocycle, class, projection_residual })
}

/// Superconformal automorphisms λ_α of each chart with identity classical part:
/// x ↦ x + θΣξᵢwⁱ + Σξᵢξⱼuⁱʲ, θ ↦ θ(1 + Σξᵢξⱼwⁱʲ) + Σξᵢwⁱ.
#[derive(Debug, Clone)]
pub struct GaugeCochain<R: CoefficientRing> {
    pub cfg: SeriesConfig,
    /// Per chart: wⁱ by index.
    pub w: Vec<BTreeMap<usize, R>>,
    /// Per chart: uⁱʲ by pair.
    pub u: Vec<BTreeMap<(usize, usize), R>>,
    /// Per chart: derived wⁱʲ = ½∂uⁱʲ/∂x − ½Wr(wⁱ, wʲ).
    pub w2: Vec<BTreeMap<(usize, usize), R>>,
}

impl<R: CechRing> GaugeCochain<R> {
    pub fn trivial(base: &BaseCurve<R>, n: usize) -> Self {
        let k = base.charts.len();
        Self { cfg: SeriesConfig::second_order(n), w: vec![BTreeMap::new(); k], u: vec![BTreeMap::new(); k], w2: vec![BTreeMap::new(); k] }
    }

    pub fn new(base: &BaseCurve<R>, n: usize, w: Vec<BTreeMap<usize, R>>, u: Vec<BTreeMap<(usize, usize), R>>) -> Result<Self> {
        let k = base.charts.len();
        if w.len() != k || u.len() != k {
            return Err(Error::Config("gauge cochain needs one entry per chart".into()));
        }
        let mut out = Self { cfg: SeriesConfig::second_order(n), w, u, w2: vec![BTreeMap::new(); k] };
        for a in 0..k {
            let lam = out.automorphism(base, a)?;
            for i in 1..=n {
                for j in (i + 1)..=n {
                    out.w2[a].insert((i, j), lam.zeta.coeff(xi2(i, j)));
                }
            }
        }
        Ok(out)
    }

    /// Checks declared wⁱʲ against the automorphism relation.
    pub fn validate(&self, base: &BaseCurve<R>, declared: &[BTreeMap<(usize, usize), R>]) -> Result<()> {
        for (a, map) in declared.iter().enumerate() {
            for (k, v) in map {
                let want = self.w2.get(a).and_then(|m| m.get(k)).cloned().unwrap_or_else(|| R::zero(&base.charts[a].ctx));
                if !v.sub(&want).is_zero(default_tol::<R>()) {
                    return Err(Error::NotSuperconformal(format!(
                        "w^{{{},{}}} on chart {} violates ½∂u/∂x − ½Wr(w, w)",
                        k.0, k.1, base.charts[a].name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn automorphism(&self, base: &BaseCurve<R>, a: usize) -> Result<SuperconformalMap<R>> {
        let ctx = &base.charts[a].ctx;
        let n = self.cfg.n;
        let mut psi = S::zero(self.cfg, ctx);
        for (i, v) in &self.w[a] {
            check_index(n, *i)?;
            psi.add_term(xi(*i), v.clone());
        }
        let mut fp = S::zero(self.cfg, ctx);
        for ((i, j), v) in &self.u[a] {
            check_index(n, *j)?;
            fp.add_term(pair_key(*i, *j)?, v.clone());
        }
        SuperconformalMap::from_relations(R::map_identity(ctx), R::one(ctx), fp, psi)
    }

    fn from_automorphisms(base: &BaseCurve<R>, n: usize, maps: &[SuperconformalMap<R>]) -> Result<Self> {
        let mut w = Vec::new();
        let mut u = Vec::new();
        for m in maps {
            let mut wa = BTreeMap::new();
            let mut ua = BTreeMap::new();
            for i in 1..=n {
                wa.insert(i, m.psi.coeff(xi(i)));
                for j in (i + 1)..=n {
                    ua.insert((i, j), m.f_plus.coeff(xi2(i, j)));
                }
            }
            w.push(wa);
            u.push(ua);
        }
        Self::new(base, n, w, u)
    }

    /// The cochain whose effect is applying `self` and then `next`.
    pub fn then(&self, base: &BaseCurve<R>, next: &Self) -> Result<Self> {
        let maps = (0..base.charts.len())
            .map(|a| compose(&next.automorphism(base, a)?, &self.automorphism(base, a)?))
            .collect::<Result<Vec<_>>>()?;
        Self::from_automorphisms(base, self.cfg.n, &maps)
    }

    pub fn inverse(&self, base: &BaseCurve<R>) -> Result<Self> {
        let maps = (0..base.charts.len())
            .map(|a| invert_tol(&self.automorphism(base, a)?, f64::INFINITY))
            .collect::<Result<Vec<_>>>()?;
        Self::from_automorphisms(base, self.cfg.n, &maps)
    }

    pub fn norm(&self) -> f64 {
        let w = self.w.iter().flat_map(|m| m.values()).map(|c| c.norm());
        let u = self.u.iter().flat_map(|m| m.values()).map(|c| c.norm());
        w.chain(u).fold(0.0, f64::max)
    }

    fn add_w(&mut self, i: usize, b: &[R]) {
        for (a, v) in b.iter().enumerate() {
            let cur = self.w[a].get(&i).cloned().unwrap_or_else(|| R::zero(&v.ctx()));
            self.w[a].insert(i, cur.add(v));
        }
    }
}

/// θ̃_{αβ} = λ_β⁻¹∘θ_{αβ}∘λ_α on every overlap component.
pub fn apply_equivalence<R: CechRing>(d: &AlgebraicDeformation<R>, lam: &GaugeCochain<R>) -> Result<AlgebraicDeformation<R>> {
    if lam.cfg != d.cfg || lam.w.len() != d.base.charts.len() {
        return Err(Error::Config("gauge cochain does not match the atlas".into()));
    }
    let autos = (0..d.base.charts.len()).map(|a| lam.automorphism(&d.base, a)).collect::<Result<Vec<_>>>()?;
    let inv = autos.iter().map(|m| invert_tol(m, f64::INFINITY)).collect::<Result<Vec<_>>>()?;
    let mut transitions = Vec::new();
    let mut reverse = Vec::new();
    for (e, x) in d.base.intersections.iter().enumerate() {
        transitions.push(compose(&compose(&autos[x.src], &d.transitions[e])?, &inv[x.dst])?);
        reverse.push(compose(&compose(&autos[x.dst], &d.reverse[e])?, &inv[x.src])?);
    }
    Ok(AlgebraicDeformation { base: d.base.clone(), cfg: d.cfg, transitions, reverse })
}

#[derive(Debug, Clone)]
pub struct EquivalenceOutcome<R: CoefficientRing> {
    pub witness: Option<GaugeCochain<R>>,
    /// Order at which the search stopped (1 or 2) when no witness exists.
    pub failed_order: Option<usize>,
    /// Obstructing class difference, keyed by ξ-monomial.
    pub class_difference: CohomologyClass,
    /// Distance between apply_equivalence(d1, witness) and d2.
    pub residual: f64,
}

fn diff_list<R: CoefficientRing>(a: &[R], b: &[R]) -> Vec<R> {
    a.iter().zip(b).map(|(x, y)| x.sub(y)).collect()
}

/// Order-2 class differences between `d2` and `d1` gauged by (w + t, 0).
fn second_order_classes<R: CechRing>(d1: &AlgebraicDeformation<R>, d2: &AlgebraicDeformation<R>, lam: &GaugeCochain<R>) -> Result<(AlgebraicDeformation<R>, Vec<Complex64>)> {
    let d1p = apply_equivalence(d1, lam)?;
    let mut cls = Vec::new();
    for i in 1..=d1.n() {
        for j in (i + 1)..=d1.n() {
            let (c, _) = R::split_cocycle(&d1.base, &diff_list(&d2.g(i, j), &d1p.g(i, j)), 2)?;
            cls.extend(c);
        }
    }
    Ok((d1p, cls))
}

/// Searches for λ with apply_equivalence(d1, λ) = d2 to truncation 2.
pub fn find_equivalence<R: CechRing>(d1: &AlgebraicDeformation<R>, d2: &AlgebraicDeformation<R>) -> Result<EquivalenceOutcome<R>> {
    find_equivalence_tol(d1, d2, default_tol::<R>().max(1e-12) * 100.0)
}

pub fn find_equivalence_tol<R: CechRing>(d1: &AlgebraicDeformation<R>, d2: &AlgebraicDeformation<R>, tol: f64) -> Result<EquivalenceOutcome<R>> {
    if !d1.base.same_as(&d2.base) || d1.cfg != d2.cfg {
        return Err(Error::Precondition("atlases live on different base curves".into()));
    }
    let base = &d1.base;
    let n = d1.n();
    let exact = R::ZERO_TOL == 0.0;
    let tol = if exact { 0.0 } else { tol };
    // order 1: δw = ψ₂ − ψ₁
    let mut lam = GaugeCochain::trivial(base, n);
    let mut diff = BTreeMap::new();
    for i in 1..=n {
        let (cls, b) = R::split_cocycle(base, &diff_list(&d2.psi(i), &d1.psi(i)), 1)?;
        diff.insert(xi(i), cls);
        lam.add_w(i, &b);
    }
    let first = CohomologyClass { dim: R::class_dim(base, 1), values: diff };
    if !first.is_zero(tol) {
        return Ok(EquivalenceOutcome { witness: None, failed_order: Some(1), class_difference: first, residual: f64::INFINITY });
    }
    let lam = GaugeCochain::new(base, n, lam.w, lam.u)?;
    // order 2: the remaining freedom is w ↦ w + t with t ∈ H⁰; solve for t
    let sections = R::global_sections(base, 1);
    let (mut d1p, mut cls) = second_order_classes(d1, d2, &lam)?;
    let mut lam_t = lam.clone();
    let cls_norm = |c: &[Complex64]| c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if cls_norm(&cls) > tol && !sections.is_empty() && !cls.is_empty() {
        let mut probes = Vec::new();
        for i in 1..=n {
            for s in &sections {
                let mut l = lam.clone();
                l.add_w(i, s);
                let l = GaugeCochain::new(base, n, l.w, l.u)?;
                probes.push((i, s, second_order_classes(d1, d2, &l)?.1));
            }
        }
        let (rows, cols) = (cls.len(), probes.len());
        let mut a = vec![C0; rows * cols];
        for (k, (_, _, pc)) in probes.iter().enumerate() {
            for r in 0..rows {
                a[r * cols + k] = pc[r] - cls[r];
            }
        }
        let rhs: Vec<Complex64> = cls.iter().map(|c| -c).collect();
        if let Some((t, _)) = linalg::lstsq(&a, rows, cols, &rhs) {
            let mut l = lam.clone();
            for (k, (i, s, _)) in probes.iter().enumerate() {
                let scaled: Vec<R> = s.iter().map(|f| f.scale_c64(t[k])).collect();
                l.add_w(*i, &scaled);
            }
            let l = GaugeCochain::new(base, n, l.w, l.u)?;
            let (dp, c2) = second_order_classes(d1, d2, &l)?;
            if cls_norm(&c2) < cls_norm(&cls) {
                d1p = dp;
                cls = c2;
                lam_t = l;
            }
        }
    }
    let mut values = BTreeMap::new();
    let mut idx = 0;
    let dim = R::class_dim(base, 2);
    for i in 1..=n {
        for j in (i + 1)..=n {
            values.insert(xi2(i, j), cls[idx..idx + dim].to_vec());
            idx += dim;
        }
    }
    let second = CohomologyClass { dim, values };
    if !second.is_zero(tol) {
        return Ok(EquivalenceOutcome { witness: None, failed_order: Some(2), class_difference: second, residual: f64::INFINITY });
    }
    let mut lam2 = GaugeCochain::trivial(base, n);
    for i in 1..=n {
        for j in (i + 1)..=n {
            let (_, b) = R::split_cocycle(base, &diff_list(&d2.g(i, j), &d1p.g(i, j)), 2)?;
            for (a, v) in b.into_iter().enumerate() {
                lam2.u[a].insert((i, j), v);
            }
        }
    }
    let lam2 = GaugeCochain::new(base, n, lam2.w, lam2.u)?;
    let witness = lam_t.then(base, &lam2)?;
    let residual = apply_equivalence(d1, &witness)?.distance(d2);
    let zero = CohomologyClass { dim, values: BTreeMap::new() };
    if residual <= tol.max(if exact { 0.0 } else { 1e-8 }) {
        Ok(EquivalenceOutcome { witness: Some(witness), failed_order: None, class_difference: zero, residual })
    } else {
        Err(Error::Backend(format!("order-2 solve left residual {residual:e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitVerdict {
    NonSplit,
    UndeterminedSplit,
}

/// Non-split iff the extension class is nonzero. A zero class does not decide
/// splitness.
pub fn split_verdict<R: CechRing>(d: &AlgebraicDeformation<R>) -> Result<SplitVerdict> {
    let ext = extension_class(d)?;
    Ok(if ext.class.is_zero(1e-8) { SplitVerdict::UndeterminedSplit } else { SplitVerdict::NonSplit })
}

/// Builds an atlas from ψ and g cochains after checking Wr(ψⁱ,ψʲ) = 0.
pub fn integrate_thickening<R: CechRing>(base: &BaseCurve<R>, n: usize, psi: &BTreeMap<usize, Vec<R>>, g: &BTreeMap<(usize, usize), Vec<R>>) -> Result<AlgebraicDeformation<R>> {
    let tol = default_tol::<R>();
    for (i, a) in psi {
        check_len(base, a)?;
        for (j, b) in psi.range((i + 1)..) {
            for (e, (x, y)) in a.iter().zip(b).enumerate() {
                let w = x.ddx().mul(y).sub(&x.mul(&y.ddx()));
                if !w.is_zero(tol) {
                    return Err(Error::Precondition(format!(
                        "Wr(ψ^{i}, ψ^{j}) ≠ 0 on {} (norm {:e})",
                        base.label(e),
                        w.norm()
                    )));
                }
            }
        }
    }
    let d = AlgebraicDeformation::from_cochains(base, n, psi, g)?;
    require_valid(&d)?;
    Ok(d)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProportionalityReport {
    pub proportional: bool,
    /// Class of Θⁱ per index (1-based, position i−1).
    pub classes: Vec<Vec<Complex64>>,
    /// Θⁱ = ratioᵢ·Θʳ for the reference index r (first with nonzero class).
    pub reference: Option<usize>,
    pub ratios: Vec<Option<Complex64>>,
    /// ψⁱ_e/ψʳ_e on each overlap component, when pointwise proportional.
    pub component_ratios: Vec<Vec<Option<Complex64>>>,
}

fn sample_ratio<R: CechRing>(a: &R, b: &R) -> Option<Complex64> {
    // b = r·a at the sample points
    let pts = R::sample_points(&a.ctx());
    let va: Vec<_> = pts.iter().map(|p| a.eval(*p)).collect();
    let vb: Vec<_> = pts.iter().map(|p| b.eval(*p)).collect();
    let k = (0..va.len()).max_by(|x, y| va[*x].norm().total_cmp(&va[*y].norm()))?;
    if va[k].norm() < 1e-12 {
        return None;
    }
    let r = vb[k] / va[k];
    let scale = va.iter().chain(&vb).map(|z| z.norm()).fold(1.0, f64::max);
    va.iter().zip(&vb).all(|(x, y)| (y - r * x).norm() <= 1e-9 * scale).then_some(r)
}

pub fn proportionality_check<R: CechRing>(d: &AlgebraicDeformation<R>) -> Result<ProportionalityReport> {
    if d.n() < 2 {
        return Err(Error::Precondition("proportionality needs n ≥ 2".into()));
    }
    require_valid(d)?;
    if !wronskian_check(d).ok {
        return Err(Error::Precondition("Wronskian check fails".into()));
    }
    let ext = extension_class(d)?;
    let classes: Vec<Vec<Complex64>> = (1..=d.n()).map(|i| ext.class.get(xi(i))).collect();
    let tol = 1e-10;
    let nrm = |v: &Vec<Complex64>| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let reference = (0..d.n()).find(|i| nrm(&classes[*i]) > tol);
    let mut proportional = true;
    let mut ratios = Vec::new();
    for c in &classes {
        match reference {
            None => ratios.push(Some(C0)),
            Some(r) => {
                let rc = &classes[r];
                let k = (0..rc.len()).max_by(|x, y| rc[*x].norm().total_cmp(&rc[*y].norm())).unwrap();
                let ratio = c[k] / rc[k];
                let ok = c.iter().zip(rc).all(|(x, y)| (x - ratio * y).norm() <= 1e-8 * (1.0 + nrm(c)));
                proportional &= ok;
                ratios.push(ok.then_some(ratio));
            }
        }
    }
    let r = reference.unwrap_or(0) + 1;
    let component_ratios = (1..=d.n())
        .map(|i| d.psi(r).iter().zip(d.psi(i)).map(|(a, b)| sample_ratio(a, &b)).collect())
        .collect();
    Ok(ProportionalityReport { proportional, classes, reference: reference.map(|r| r + 1), ratios, component_ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcfield::{cq, CQ};
    use num_traits::One;

    fn p1() -> BaseCurve<LaurentFn> {
        BaseCurve::p1()
    }

    fn lm(e: i64, re: i64, im: i64) -> LaurentFn {
        LaurentFn::monomial(Chart::Alpha, e, cq_int(re, im))
    }

    fn torus() -> BaseCurve<StripFn> {
        BaseCurve::torus(Complex64::new(0.2, 0.9), 12).unwrap()
    }

    fn sf(base: &BaseCurve<StripFn>, modes: &[(i64, f64, f64)]) -> StripFn {
        StripFn::from_modes(base.charts[0].ctx, modes.iter().map(|(m, re, im)| (*m, Complex64::new(*re, *im))))
    }

    /// c·((1, 0) + δb) with a fixed low-mode b.
    fn torus_psi(base: &BaseCurve<StripFn>, c: Complex64) -> Vec<StripFn> {
        let b = vec![sf(base, &[(1, 0.3, 0.0), (-1, 0.0, 0.2)]), sf(base, &[(2, 0.25, -0.1), (0, 0.5, 0.0)])];
        let db = base.coboundary(&b, 1);
        let rep = StripFn::class_representative(base, &[Complex64::new(1.0, 0.0)], 1);
        rep.iter().zip(db).map(|(r, d)| r.add(&d).scale(c)).collect()
    }

    #[test]
    fn bases_carry_spin_structures() {
        assert!(p1().spin_residuals().iter().all(|r| *r == 0.0));
        assert!(torus().spin_residuals().iter().all(|r| *r < 1e-14));
    }

    #[test]
    fn split_atlases_verify() {
        assert!(verify_atlas(&AlgebraicDeformation::split(&p1(), 2)).ok);
        assert!(verify_atlas(&AlgebraicDeformation::split(&torus(), 2)).ok);
        let ext = extension_class(&AlgebraicDeformation::split(&torus(), 2)).unwrap();
        assert!(ext.class.is_zero(0.0));
        assert_eq!(split_verdict(&AlgebraicDeformation::split(&torus(), 1)).unwrap(), SplitVerdict::UndeterminedSplit);
    }

    #[test]
    fn p1_g_only_thickening_is_valid_and_unobstructed() {
        let g: BTreeMap<_, _> = [((1, 2), vec![lm(-1, 1, 0)])].into();
        let d = integrate_thickening(&p1(), 2, &BTreeMap::new(), &g).unwrap();
        assert!(verify_atlas(&d).ok);
        let omega = obstruction(&d).unwrap();
        let c = omega.component(xi2(1, 2));
        let (cls, b) = LaurentFn::split_cocycle(&p1(), &c, 2).unwrap();
        assert!(cls.is_empty());
        assert_eq!(p1().coboundary(&b, 2), c);
    }

    #[test]
    fn p1_classes_vanish_with_witness() {
        let psi = vec![lm(-3, 1, 2).add(&lm(0, 5, 0)).add(&lm(4, 0, -1))];
        for w in [1, 2] {
            let (cls, b) = LaurentFn::split_cocycle(&p1(), &psi, w).unwrap();
            assert!(cls.is_empty());
            assert_eq!(p1().coboundary(&b, w), psi);
        }
        let d = integrate_thickening(&p1(), 1, &[(1, psi)].into(), &BTreeMap::new()).unwrap();
        let ext = extension_class(&d).unwrap();
        assert!(ext.class.is_zero(0.0));
        assert_eq!(ext.projection_residual, 0.0);
        assert_eq!(split_verdict(&d).unwrap(), SplitVerdict::UndeterminedSplit);
    }

    #[test]
    fn p1_global_sections_are_in_kernel() {
        for w in [0, 1, 2] {
            let secs = LaurentFn::global_sections(&p1(), w);
            assert_eq!(secs.len(), (w + 1) as usize);
            for s in secs {
                assert!(p1().coboundary(&s, w)[0].is_zero(0.0));
            }
        }
    }

    #[test]
    fn wronskian_examples() {
        let one = BTreeMap::from([(1, vec![lm(0, 1, 0)]), (2, vec![lm(1, 1, 0)])]);
        let d = AlgebraicDeformation::from_cochains(&p1(), 2, &one, &BTreeMap::new()).unwrap();
        let rep = wronskian_check(&d);
        assert!(!rep.ok);
        assert_eq!(rep.entries[0].norm, 1.0);
        assert!(matches!(integrate_thickening(&p1(), 2, &one, &BTreeMap::new()), Err(Error::Precondition(_))));
        let s = lm(2, 1, 1).add(&lm(-1, 0, 1));
        let dep = BTreeMap::from([(1, vec![s.clone()]), (2, vec![s.scale(&cq_int(3, 0))])]);
        assert!(wronskian_check(&AlgebraicDeformation::from_cochains(&p1(), 2, &dep, &BTreeMap::new()).unwrap()).ok);
        assert!(wronskian_check(&AlgebraicDeformation::split(&p1(), 1)).ok);
    }

    #[test]
    fn injected_defects_are_localized() {
        let base = torus();
        let psi = BTreeMap::from([(1, torus_psi(&base, Complex64::new(1.0, 0.0)))]);
        let g = BTreeMap::from([((1, 2), vec![sf(&base, &[(1, 0.1, 0.0)]), sf(&base, &[])])]);
        let d = integrate_thickening(&base, 2, &psi, &g).unwrap();
        assert!(verify_atlas(&d).ok);
        let eps = 1e-3;
        let cases: [(&str, Box<dyn Fn(&mut TransitionData<StripFn>)>); 3] = [
            ("f-zeta-psi", Box::new(move |t| {
                let v = t.f[&1].add(&StripFn::constant(t.f[&1].ctx(), Complex64::new(eps, 0.0)));
                t.f.insert(1, v);
            })),
            ("second-order", Box::new(move |t| {
                let c = t.f[&1].ctx();
                t.zeta2.insert((1, 2), StripFn::from_modes(c, [(1, Complex64::new(eps, 0.0))]));
            })),
            ("spin", Box::new(|_| {})),
        ];
        for (rel, f) in cases.iter() {
            let mut data: Vec<_> = (0..2).map(|e| d.data(e)).collect();
            f(&mut data[1]);
            let mut bad = AlgebraicDeformation::from_raw(&base, 2, &data).unwrap();
            if *rel == "spin" {
                bad.transitions[1].zeta = bad.transitions[1].zeta.scale_ring(&StripFn::constant(base.charts[0].ctx, Complex64::new(1.0 + eps, 0.0)));
            }
            let rep = verify_atlas(&bad);
            assert!(!rep.ok);
            let fails: Vec<_> = rep.failures().filter(|c| c.check == "superconformal").collect();
            assert!(fails.iter().all(|c| c.intersection == 1), "{rel}: {fails:?}");
            assert!(fails.iter().any(|c| c.relation == *rel), "{rel}: {fails:?}");
        }
    }

    #[test]
    fn torus_class_round_trip() {
        let base = torus();
        let c = Complex64::new(1.0, 1.0);
        let psi = BTreeMap::from([(1, torus_psi(&base, c))]);
        let d = integrate_thickening(&base, 2, &psi, &BTreeMap::new()).unwrap();
        let ext = extension_class(&d).unwrap();
        assert!((ext.class.get(xi(1))[0] - c).norm() < 1e-12);
        assert!(ext.class.get(xi(2))[0].norm() < 1e-12);
        assert!(ext.projection_residual < 1e-12);
        assert_eq!(split_verdict(&d).unwrap(), SplitVerdict::NonSplit);
        // first-order-only atlas: ω has θξᵢ terms only
        let omega = obstruction(&d).unwrap();
        assert!(omega.values.iter().all(|v| v.terms().keys().all(|m| has_theta(*m) && xi_degree(*m) == 1)));
    }

    #[test]
    fn torus_coboundary_solver_inverts_delta() {
        let base = torus();
        let c = vec![sf(&base, &[(0, 0.7, 0.1), (1, 0.2, 0.0), (-2, 0.0, 0.3)]), sf(&base, &[(0, 0.2, 0.0), (3, 0.1, 0.1)])];
        let (cls, b) = StripFn::split_cocycle(&base, &c, 1).unwrap();
        assert!((cls[0] - Complex64::new(0.5, 0.1)).norm() < 1e-14);
        let rep = StripFn::class_representative(&base, &cls, 1);
        for ((x, r), y) in base.coboundary(&b, 1).iter().zip(&rep).zip(&c) {
            assert!(x.add(r).sub(y).norm() < 1e-12);
        }
    }

    fn gauge_torus(base: &BaseCurve<StripFn>, s: f64) -> GaugeCochain<StripFn> {
        let w = vec![
            BTreeMap::from([(1, sf(base, &[(1, 0.2 * s, 0.1)])), (2, sf(base, &[(0, 0.3, -0.2 * s)]))]),
            BTreeMap::from([(1, sf(base, &[(-1, 0.1, 0.0), (0, 0.4 * s, 0.0)])), (2, sf(base, &[(2, 0.0, 0.15)]))]),
        ];
        let u = vec![BTreeMap::from([((1, 2), sf(base, &[(1, 0.5, 0.0)]))]), BTreeMap::from([((1, 2), sf(base, &[(0, 0.1 * s, 0.3)]))])];
        GaugeCochain::new(base, 2, w, u).unwrap()
    }

    fn torus_fixture(base: &BaseCurve<StripFn>, c1: f64, c2: f64) -> AlgebraicDeformation<StripFn> {
        let psi = BTreeMap::from([(1, torus_psi(base, Complex64::new(c1, 0.0))), (2, torus_psi(base, Complex64::new(c2, 0.0)))]);
        let g = BTreeMap::from([((1, 2), vec![sf(base, &[(0, 0.4, 0.0), (1, 0.1, 0.0)]), sf(base, &[(-1, 0.0, 0.1)])])]);
        integrate_thickening(base, 2, &psi, &g).unwrap()
    }

    #[test]
    fn equivalence_preserves_class_and_validity() {
        let base = torus();
        let d = torus_fixture(&base, 1.0, 2.0);
        assert!(apply_equivalence(&d, &GaugeCochain::trivial(&base, 2)).unwrap().distance(&d) < 1e-14);
        let lam = gauge_torus(&base, 1.0);
        let d2 = apply_equivalence(&d, &lam).unwrap();
        assert!(verify_atlas(&d2).ok);
        let (e1, e2) = (extension_class(&d).unwrap(), extension_class(&d2).unwrap());
        assert!(e1.class.sub(&e2.class).is_zero(1e-10));
        assert!(e2.projection_residual < 1e-12);
        let back = apply_equivalence(&d2, &lam.inverse(&base).unwrap()).unwrap();
        assert!(back.distance(&d) < 1e-12);
        let mu = gauge_torus(&base, -0.5);
        let seq = apply_equivalence(&d2, &mu).unwrap();
        let once = apply_equivalence(&d, &lam.then(&base, &mu).unwrap()).unwrap();
        assert!(seq.distance(&once) < 1e-12);
    }

    #[test]
    fn first_order_law_on_split_atlas() {
        let base = torus();
        let d = AlgebraicDeformation::split(&base, 2);
        let lam = gauge_torus(&base, 1.0);
        let w1: Vec<StripFn> = lam.w.iter().map(|m| m[&1].clone()).collect();
        let d2 = apply_equivalence(&d, &lam).unwrap();
        for (x, y) in d2.psi(1).iter().zip(base.coboundary(&w1, 1)) {
            assert!(x.sub(&y).norm() < 1e-14);
        }
        assert!(extension_class(&d2).unwrap().class.is_zero(1e-12));
    }

    #[test]
    fn find_equivalence_cases() {
        let base = torus();
        let d = torus_fixture(&base, 1.0, 2.0);
        let same = find_equivalence(&d, &d).unwrap();
        assert!(same.witness.unwrap().norm() < 1e-12);
        let d2 = apply_equivalence(&d, &gauge_torus(&base, 1.0)).unwrap();
        let found = find_equivalence(&d, &d2).unwrap();
        let w = found.witness.expect("witness");
        assert!(apply_equivalence(&d, &w).unwrap().distance(&d2) < 1e-9);
        let other = torus_fixture(&base, 2.0, 4.0);
        let none = find_equivalence(&d, &other).unwrap();
        assert!(none.witness.is_none());
        assert_eq!(none.failed_order, Some(1));
        assert!((none.class_difference.get(xi(1))[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn find_equivalence_second_order_obstruction() {
        let base = torus();
        let d = torus_fixture(&base, 1.0, 2.0);
        let mut data: Vec<_> = (0..2).map(|e| d.data(e)).collect();
        let bump = StripFn::constant(base.charts[0].ctx, Complex64::new(0.5, 0.0));
        let bumped = data[0].g[&(1, 2)].add(&bump);
        data[0].g.insert((1, 2), bumped);
        let psi = BTreeMap::from([(1, d.psi(1)), (2, d.psi(2))]);
        let g = BTreeMap::from([((1, 2), vec![data[0].g[&(1, 2)].clone(), data[1].g[&(1, 2)].clone()])]);
        let shifted = integrate_thickening(&base, 2, &psi, &g).unwrap();
        // ψ² = 2ψ¹, so the constant shift tⁱ moves the order-2 class by a
        // multiple of (t¹·2 − t²)·c; it can absorb the bump
        let r = find_equivalence(&d, &shifted).unwrap();
        assert!(r.witness.is_some(), "{:?}", r.class_difference);
        // with ψ = 0 nothing can absorb it
        let g0 = BTreeMap::from([((1, 2), vec![bump.clone(), StripFn::zero(&base.charts[0].ctx)])]);
        let plain = integrate_thickening(&base, 2, &BTreeMap::new(), &g0).unwrap();
        let r = find_equivalence(&AlgebraicDeformation::split(&base, 2), &plain).unwrap();
        assert_eq!(r.failed_order, Some(2));
        assert!((r.class_difference.get(xi2(1, 2))[0] - Complex64::new(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn p1_equivalence_always_found() {
        let base = p1();
        let psi = BTreeMap::from([(1, vec![lm(-2, 1, 0).add(&lm(3, 0, 1))])]);
        let d1 = integrate_thickening(&base, 2, &psi, &BTreeMap::new()).unwrap();
        let g = BTreeMap::from([((1, 2), vec![lm(-1, 2, 0)])]);
        let d2 = integrate_thickening(&base, 2, &BTreeMap::new(), &g).unwrap();
        let r = find_equivalence(&d1, &d2).unwrap();
        let w = r.witness.expect("H¹ vanishes on ℙ¹");
        assert_eq!(apply_equivalence(&d1, &w).unwrap().distance(&d2), 0.0);
    }

    #[test]
    fn proportionality_reports_ratio() {
        let base = torus();
        let d = torus_fixture(&base, 1.0, 2.0);
        let rep = proportionality_check(&d).unwrap();
        assert!(rep.proportional);
        assert_eq!(rep.reference, Some(1));
        assert!((rep.ratios[1].unwrap() - Complex64::new(2.0, 0.0)).norm() < 1e-10);
        assert!(rep.component_ratios[1].iter().all(|r| (r.unwrap() - Complex64::new(2.0, 0.0)).norm() < 1e-9));
        let p = proportionality_check(&AlgebraicDeformation::split(&p1(), 2)).unwrap();
        assert!(p.proportional && p.reference.is_none());
        assert!(proportionality_check(&AlgebraicDeformation::split(&p1(), 1)).is_err());
    }

    #[test]
    fn gauge_validation_rejects_bad_w2() {
        let base = p1();
        let w = vec![BTreeMap::from([(1, lm(1, 1, 0)), (2, lm(2, 1, 0))]), BTreeMap::new()];
        let lam = GaugeCochain::new(&base, 2, w, vec![BTreeMap::new(), BTreeMap::new()]).unwrap();
        // wⁱʲ = −½Wr(x, x²) = ½x²
        assert_eq!(lam.w2[0][&(1, 2)], LaurentFn::monomial(Chart::Alpha, 2, cq(1, 2, 0, 1)));
        let bad = vec![BTreeMap::from([((1, 2), lm(0, 1, 0))]), BTreeMap::new()];
        assert!(lam.validate(&base, &bad).is_err());
        assert!(lam.validate(&base, &lam.w2).is_ok());
        let _ = CQ::one();
    }
}
