//! Superconformal maps and vector fields on ℂ^{1|1} over A^{0|n}.
//!
//! A map is held in normal form y = f₊ + θf₋, η = θζ + ψ with f₊ split into a
//! classical chart map and a nilpotent correction. It is superconformal iff
//! ζ² = ∂f₊/∂x + ψ∂ψ/∂x and f₋ = ζψ.
//!
//! Vector fields act by left derivations; the bracket is
//! [A,B] = AB − (−1)^{|A||B|}BA.

use std::collections::BTreeMap;

use crate::funcfield::CoefficientRing;
use crate::supernumber::{
    has_theta, ss_derive_odd, ss_substitute, xi_degree, EvenImage, Mono, OddVar, Parity, SeriesConfig,
    SuperSeries, ONE,
};
use crate::{Error, Result};

type S<R> = SuperSeries<R>;

/// The generator D = ∂/∂θ + θ∂/∂x of a chart.
#[derive(Debug, Clone)]
pub struct DGenerator<R: CoefficientRing> {
    pub chart: R::Ctx,
}

impl<R: CoefficientRing> DGenerator<R> {
    pub fn apply(&self, a: &S<R>) -> S<R> {
        let theta = S::theta(a.config(), &self.chart);
        ss_derive_odd(OddVar::Theta, a).add(&theta.mul(&a.ddx()))
    }

    pub fn as_field(&self, cfg: SeriesConfig) -> SuperVf<R> {
        SuperVf::d(cfg, &self.chart)
    }
}

/// A map over A^{0|n} in normal form. The superconformal relations are not
/// enforced by construction; see [`check_superconformal_map`].
#[derive(Debug, Clone)]
pub struct SuperconformalMap<R: CoefficientRing> {
    pub classical: R::Map,
    /// Nilpotent part of f₊ (even, θ-free, no body).
    pub f_plus: S<R>,
    pub f_minus: S<R>,
    pub zeta: S<R>,
    pub psi: S<R>,
}

fn theta_free<R: CoefficientRing>(s: &S<R>) -> bool {
    s.terms().keys().all(|m| !has_theta(*m))
}

impl<R: CoefficientRing> SuperconformalMap<R> {
    pub fn new(classical: R::Map, f_plus: S<R>, f_minus: S<R>, zeta: S<R>, psi: S<R>) -> Result<Self> {
        let src = R::map_source(&classical);
        for (name, s) in [("f_plus", &f_plus), ("f_minus", &f_minus), ("zeta", &zeta), ("psi", &psi)] {
            if !theta_free(s) {
                return Err(Error::Config(format!("{name} must be θ-free")));
            }
            if s.ctx() != &src {
                return Err(Error::ChartMismatch(format!("{name} is not on the source chart")));
            }
        }
        if !f_plus.has_parity(Parity::Even) || !zeta.has_parity(Parity::Even) {
            return Err(Error::Parity("f₊ and ζ must be even".into()));
        }
        if !f_minus.has_parity(Parity::Odd) || !psi.has_parity(Parity::Odd) {
            return Err(Error::Parity("f₋ and ψ must be odd".into()));
        }
        if f_plus.terms().contains_key(&ONE) {
            return Err(Error::Config("f₊ correction must be nilpotent".into()));
        }
        Ok(Self { classical, f_plus, f_minus, zeta, psi })
    }

    pub fn identity(cfg: SeriesConfig, ctx: &R::Ctx) -> Self {
        Self {
            classical: R::map_identity(ctx),
            f_plus: S::zero(cfg, ctx),
            f_minus: S::zero(cfg, ctx),
            zeta: S::one(cfg, ctx),
            psi: S::zero(cfg, ctx),
        }
    }

    /// Completes (classical, ζ₀, f₊ correction, ψ) to a superconformal map:
    /// f₋ = ζψ and the order-2 part of ζ from ζ² = ∂f₊/∂x + ψ∂ψ/∂x.
    pub fn from_relations(classical: R::Map, zeta0: R, f_plus: S<R>, psi: S<R>) -> Result<Self> {
        let cfg = psi.config();
        let src = R::map_source(&classical);
        let inv2 = zeta0
            .scale_q(2, 1)
            .try_inv()
            .ok_or_else(|| Error::NotInvertible("ζ body has no inverse in the ring".into()))?;
        let fprime = S::scalar(cfg, R::map_derivative(&classical)).add(&f_plus.ddx());
        let target = fprime.add(&psi.mul(&psi.ddx()));
        let z0 = S::scalar(cfg, zeta0.clone());
        let rest = target.sub(&z0.mul(&z0)).filter(|m| xi_degree(m) >= 1);
        let zeta = z0.add(&rest.scale_ring(&inv2));
        let f_minus = zeta.mul(&psi);
        let _ = src;
        Self::new(classical, f_plus, f_minus, zeta, psi)
    }

    pub fn config(&self) -> SeriesConfig {
        self.zeta.config()
    }

    pub fn source(&self) -> R::Ctx {
        R::map_source(&self.classical)
    }

    pub fn target(&self) -> R::Ctx {
        R::map_target(&self.classical)
    }

    pub fn even_image(&self) -> EvenImage<R> {
        let cfg = self.config();
        let theta = S::theta(cfg, &self.source());
        EvenImage { map: self.classical.clone(), nil: self.f_plus.add(&theta.mul(&self.f_minus)) }
    }

    pub fn odd_image(&self) -> S<R> {
        let theta = S::theta(self.config(), &self.source());
        theta.mul(&self.zeta).add(&self.psi)
    }

    /// Rebuilds normal form from full images. The even image is given by its
    /// classical map and a nilpotent series.
    fn from_images(classical: R::Map, even_nil: S<R>, odd: S<R>) -> Result<Self> {
        if even_nil.terms().contains_key(&ONE) {
            return Err(Error::Config("composite even image acquired a body".into()));
        }
        let (f_plus, f_minus) = even_nil.split_theta();
        let (psi, zeta) = odd.split_theta();
        Self::new(classical, f_plus, f_minus, zeta, psi)
    }

    /// Max coefficient distance to another map with the same charts.
    pub fn distance(&self, o: &Self) -> f64 {
        let mut d: f64 = 0.0;
        if !R::map_eq(&self.classical, &o.classical, 1e-12) {
            return f64::INFINITY;
        }
        for (a, b) in [(&self.f_plus, &o.f_plus), (&self.f_minus, &o.f_minus), (&self.zeta, &o.zeta), (&self.psi, &o.psi)] {
            d = d.max(a.sub(b).norm());
        }
        d
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        let id = Self::identity(self.config(), &self.source());
        self.source() == self.target() && self.distance(&id) <= tol
    }
}

/// ζ₀² = ∂f₀/∂x.
pub const RELATION_SPIN: &str = "spin";
/// fⁱ = ζψⁱ.
pub const RELATION_FIRST: &str = "f-zeta-psi";
/// ½∂fⁱʲ/∂x = ζζⁱʲ + ½Wr(ψⁱ,ψʲ), or any higher even order of ζ² = ∂f₊/∂x + ψ∂ψ/∂x.
pub const RELATION_SECOND: &str = "second-order";

/// One residual entry of a map check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Residual {
    pub relation: &'static str,
    pub order: usize,
    pub norm: f64,
}

#[derive(Debug, Clone)]
pub struct MapReport<R: CoefficientRing> {
    pub ok: bool,
    pub residuals: Vec<Residual>,
    /// ζ² − ∂f₊/∂x − ψ∂ψ/∂x.
    pub zeta_residual: S<R>,
    /// f₋ − ζψ.
    pub f_minus_residual: S<R>,
}

/// Checks ζ² = ∂f₊/∂x + ψ∂ψ/∂x and f₋ = ζψ, reporting residual norms per
/// ξ-order. Order 0 of the first relation is the spin condition ζ₀² = f₀′;
/// order 2 is ½∂fⁱʲ/∂x = ζζⁱʲ + ½Wr(ψⁱ,ψʲ) read off the same identity.
pub fn check_superconformal_map<R: CoefficientRing>(phi: &SuperconformalMap<R>) -> MapReport<R> {
    check_superconformal_map_tol(phi, R::ZERO_TOL)
}

pub fn check_superconformal_map_tol<R: CoefficientRing>(phi: &SuperconformalMap<R>, tol: f64) -> MapReport<R> {
    let cfg = phi.config();
    let fprime = S::scalar(cfg, R::map_derivative(&phi.classical)).add(&phi.f_plus.ddx());
    let r1 = phi.zeta.mul(&phi.zeta).sub(&fprime).sub(&phi.psi.mul(&phi.psi.ddx()));
    let r2 = phi.f_minus.sub(&phi.zeta.mul(&phi.psi));
    let mut residuals = Vec::new();
    for d in (0..=cfg.truncation).step_by(2) {
        let relation = if d == 0 { RELATION_SPIN } else { RELATION_SECOND };
        residuals.push(Residual { relation, order: d, norm: r1.norm_at_degree(d) });
    }
    for d in (1..=cfg.truncation).step_by(2) {
        residuals.push(Residual { relation: RELATION_FIRST, order: d, norm: r2.norm_at_degree(d) });
    }
    let ok = residuals.iter().all(|r| r.norm <= tol);
    MapReport { ok, residuals, zeta_residual: r1, f_minus_residual: r2 }
}

/// Ψ∘Φ: first Φ, then Ψ.
pub fn compose<R: CoefficientRing>(phi: &SuperconformalMap<R>, psi_map: &SuperconformalMap<R>) -> Result<SuperconformalMap<R>> {
    if phi.target() != psi_map.source() {
        return Err(Error::ChartMismatch("image chart of the first map is not the source of the second".into()));
    }
    if phi.config() != psi_map.config() {
        return Err(Error::Config("maps use different series configs".into()));
    }
    let cfg = phi.config();
    let classical = R::map_then(&phi.classical, &psi_map.classical)?;
    let ev = phi.even_image();
    let od = phi.odd_image();
    // Taylor part of the second map's classical piece around the first map's body.
    let d1 = R::map_derivative(&psi_map.classical);
    let d2 = d1.ddx();
    let n = &ev.nil;
    let taylor = n
        .scale_ring(&d1.pullback(&phi.classical))
        .add(&n.mul(n).scale_ring(&d2.pullback(&phi.classical).scale_q(1, 2)));
    let second_even = psi_map.even_image().nil;
    let even_nil = taylor.add(&ss_substitute(&second_even, &ev, &od)?);
    let odd = ss_substitute(&psi_map.odd_image(), &ev, &od)?;
    let _ = cfg;
    SuperconformalMap::from_images(classical, even_nil, odd)
}

/// Inverse of a near-identity map (classical part the identity), correct to
/// first order in its deviation.
fn near_identity_inverse<R: CoefficientRing>(r: &SuperconformalMap<R>) -> SuperconformalMap<R> {
    let cfg = r.config();
    let ctx = r.source();
    let two = S::one(cfg, &ctx).scale_q(2, 1);
    SuperconformalMap {
        classical: R::map_identity(&ctx),
        f_plus: r.f_plus.neg(),
        f_minus: r.f_minus.neg(),
        zeta: two.sub(&r.zeta),
        psi: r.psi.neg(),
    }
}

/// Inverse map, built order by order: the classical inverse first, then
/// corrections until compose(Φ, Φ⁻¹) is the identity at truncation 2.
pub fn invert<R: CoefficientRing>(phi: &SuperconformalMap<R>) -> Result<SuperconformalMap<R>> {
    invert_tol(phi, if R::ZERO_TOL == 0.0 { 0.0 } else { 1e-8 })
}

pub fn invert_tol<R: CoefficientRing>(phi: &SuperconformalMap<R>, tol: f64) -> Result<SuperconformalMap<R>> {
    let cfg = phi.config();
    let inv_cl = R::map_inverse(&phi.classical)?;
    let z0 = phi.zeta.body();
    let z0_inv = z0.try_inv().ok_or_else(|| Error::NotInvertible("ζ body is not invertible".into()))?;
    let tgt = phi.target();
    let mut g = SuperconformalMap {
        classical: inv_cl.clone(),
        f_plus: S::zero(cfg, &tgt),
        f_minus: S::zero(cfg, &tgt),
        zeta: S::scalar(cfg, z0_inv.pullback(&inv_cl)),
        psi: S::zero(cfg, &tgt),
    };
    // each correction gains one ξ-order; exact rings stop early
    for _ in 0..=cfg.truncation {
        let r = compose(phi, &g)?;
        if r.distance(&SuperconformalMap::identity(cfg, &r.source())) == 0.0 {
            return Ok(g);
        }
        g = compose(&g, &near_identity_inverse(&r))?;
    }
    let r = compose(phi, &g)?;
    let d = r.distance(&SuperconformalMap::identity(cfg, &r.source()));
    if d <= tol {
        Ok(g)
    } else {
        Err(Error::NotInvertible(format!("order-by-order inversion left residual {d:e}")))
    }
}

/// Multiplier h with Φ_*D = (Φ*h)·D.
#[derive(Debug, Clone)]
pub struct SCFactor<R: CoefficientRing> {
    pub value: S<R>,
}

/// Φ*h = ζ + θ∂ψ/∂x.
pub fn conformal_factor<R: CoefficientRing>(phi: &SuperconformalMap<R>) -> Result<SCFactor<R>> {
    let rep = check_superconformal_map(phi);
    if !rep.ok {
        return Err(Error::NotSuperconformal(format!("{:?}", rep.residuals)));
    }
    let theta = S::theta(phi.config(), &phi.source());
    Ok(SCFactor { value: phi.zeta.add(&theta.mul(&phi.psi.ddx())) })
}

/// Φ_*D expressed in the target chart, with its defect from being a multiple
/// of D_{(y|η)}.
#[derive(Debug, Clone)]
pub struct Pushforward<R: CoefficientRing> {
    /// Components along ∂/∂y and ∂/∂η.
    pub field: SuperVf<R>,
    /// The ∂/∂η component, i.e. the candidate factor h.
    pub factor: S<R>,
    /// ∂/∂y component minus η·h; zero iff Φ_*D ∝ D.
    pub residual: S<R>,
    pub proportional: bool,
}

pub fn pushforward_d<R: CoefficientRing>(phi: &SuperconformalMap<R>) -> Result<Pushforward<R>> {
    let cfg = phi.config();
    let src = phi.source();
    let tgt = phi.target();
    let theta = S::theta(cfg, &src);
    let cl_prime = S::scalar(cfg, R::map_derivative(&phi.classical)).add(&phi.f_plus.ddx());
    let dy = phi.f_minus.add(&theta.mul(&cl_prime));
    let deta = phi.zeta.add(&theta.mul(&phi.psi.ddx()));
    let inv = invert(phi)?;
    let (ev, od) = (inv.even_image(), inv.odd_image());
    let a = ss_substitute(&dy, &ev, &od)?;
    let b = ss_substitute(&deta, &ev, &od)?;
    let eta = S::theta(cfg, &tgt);
    let residual = a.sub(&eta.mul(&b));
    let proportional = residual.is_zero(R::ZERO_TOL);
    let field = SuperVf { parity: Parity::Odd, dx: a, dtheta: b.clone(), dxi: vec![S::zero(cfg, &tgt); cfg.n] };
    Ok(Pushforward { field, factor: b, residual, proportional })
}

/// General vector field a∂/∂x + b∂/∂θ + Σ cᵢ∂/∂ξᵢ with homogeneous parity.
#[derive(Debug, Clone)]
pub struct SuperVf<R: CoefficientRing> {
    pub parity: Parity,
    pub dx: S<R>,
    pub dtheta: S<R>,
    pub dxi: Vec<S<R>>,
}

impl<R: CoefficientRing> SuperVf<R> {
    pub fn zero(parity: Parity, cfg: SeriesConfig, ctx: &R::Ctx) -> Self {
        Self { parity, dx: S::zero(cfg, ctx), dtheta: S::zero(cfg, ctx), dxi: vec![S::zero(cfg, ctx); cfg.n] }
    }

    pub fn new(parity: Parity, dx: S<R>, dtheta: S<R>, dxi: Vec<S<R>>) -> Result<Self> {
        let cfg = dx.config();
        if dxi.len() != cfg.n {
            return Err(Error::Config("one ∂/∂ξ component per odd parameter".into()));
        }
        if !dx.has_parity(parity) || !dtheta.has_parity(parity.add(Parity::Odd)) || !dxi.iter().all(|c| c.has_parity(parity.add(Parity::Odd))) {
            return Err(Error::Parity("vector field components have inconsistent parity".into()));
        }
        Ok(Self { parity, dx, dtheta, dxi })
    }

    /// D = ∂/∂θ + θ∂/∂x.
    pub fn d(cfg: SeriesConfig, ctx: &R::Ctx) -> Self {
        let mut v = Self::zero(Parity::Odd, cfg, ctx);
        v.dx = S::theta(cfg, ctx);
        v.dtheta = S::one(cfg, ctx);
        v
    }

    pub fn config(&self) -> SeriesConfig {
        self.dx.config()
    }

    pub fn ctx(&self) -> R::Ctx {
        self.dx.ctx().clone()
    }

    pub fn apply(&self, f: &S<R>) -> S<R> {
        let mut out = self.dx.mul(&f.ddx()).add(&self.dtheta.mul(&ss_derive_odd(OddVar::Theta, f)));
        for (i, c) in self.dxi.iter().enumerate() {
            if !c.is_zero_default() {
                out = out.add(&c.mul(&ss_derive_odd(OddVar::Xi(i + 1), f)));
            }
        }
        out
    }

    fn components(&self) -> Vec<&S<R>> {
        let mut v = vec![&self.dx, &self.dtheta];
        v.extend(self.dxi.iter());
        v
    }

    fn from_components(parity: Parity, mut comps: Vec<S<R>>) -> Self {
        let dx = comps.remove(0);
        let dtheta = comps.remove(0);
        Self { parity, dx, dtheta, dxi: comps }
    }

    pub fn scale_q(&self, num: i64, den: i64) -> Self {
        Self::from_components(self.parity, self.components().into_iter().map(|c| c.scale_q(num, den)).collect())
    }

    pub fn add(&self, o: &Self) -> Self {
        let comps = self.components().into_iter().zip(o.components()).map(|(a, b)| a.add(b)).collect();
        Self::from_components(self.parity, comps)
    }

    pub fn sub(&self, o: &Self) -> Self {
        let comps = self.components().into_iter().zip(o.components()).map(|(a, b)| a.sub(b)).collect();
        Self::from_components(self.parity, comps)
    }

    /// Left multiplication by a homogeneous series.
    pub fn left_mul(&self, s: &S<R>) -> Self {
        let p = s.parity().unwrap_or(Parity::Even).add(self.parity);
        Self::from_components(p, self.components().into_iter().map(|c| s.mul(c)).collect())
    }

    pub fn norm(&self) -> f64 {
        self.components().into_iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn has_xi_components(&self) -> bool {
        self.dxi.iter().any(|c| !c.is_zero_default())
    }
}

/// [A,B] = AB − (−1)^{|A||B|}BA, as a vector field.
pub fn bracket<R: CoefficientRing>(a: &SuperVf<R>, b: &SuperVf<R>) -> Result<SuperVf<R>> {
    if a.ctx() != b.ctx() {
        return Err(Error::ChartMismatch("fields live on different charts".into()));
    }
    let sign_odd = a.parity == Parity::Odd && b.parity == Parity::Odd;
    let comps = a
        .components()
        .into_iter()
        .zip(b.components())
        .map(|(ak, bk)| {
            let ab = a.apply(bk);
            let ba = b.apply(ak);
            if sign_odd {
                ab.add(&ba)
            } else {
                ab.sub(&ba)
            }
        })
        .collect();
    Ok(SuperVf::from_components(a.parity.add(b.parity), comps))
}

/// The composite operator A∘B, provided its second-order symbol vanishes.
pub fn compose_operators<R: CoefficientRing>(a: &SuperVf<R>, b: &SuperVf<R>) -> Result<SuperVf<R>> {
    if a.ctx() != b.ctx() {
        return Err(Error::ChartMismatch("fields live on different charts".into()));
    }
    let ac = a.components();
    let bc = b.components();
    // variable parities: x even, θ and ξ odd
    let vp = |k: usize| if k == 0 { 0u32 } else { 1u32 };
    let koszul = |k: usize, l: usize| {
        // sign from moving ∂_k past b^l
        let pb = b.parity.bit() + vp(l);
        if (vp(k) * pb) % 2 == 0 {
            1
        } else {
            -1
        }
    };
    for k in 0..ac.len() {
        for l in k..ac.len() {
            if k == l && vp(k) == 1 {
                continue;
            }
            let t1 = ac[k].mul(bc[l]);
            let t1 = if koszul(k, l) < 0 { t1.neg() } else { t1 };
            let s = if k == l {
                t1
            } else {
                let t2 = ac[l].mul(bc[k]);
                let t2 = if koszul(l, k) < 0 { t2.neg() } else { t2 };
                // ∂_l∂_k = (−1)^{|k||l|} ∂_k∂_l
                let t2 = if (vp(k) * vp(l)) % 2 == 1 { t2.neg() } else { t2 };
                t1.add(&t2)
            };
            if !s.is_zero(R::ZERO_TOL) {
                return Err(Error::Precondition("operator product has a second-order part".into()));
            }
        }
    }
    let comps = bc.into_iter().map(|c| a.apply(c)).collect();
    Ok(SuperVf::from_components(a.parity.add(b.parity), comps))
}

/// Class of a field in T/D: V ≡ even·∂/∂x + odd·∂/∂θ with even, odd θ-free.
#[derive(Debug, Clone)]
pub struct Reduced<R: CoefficientRing> {
    pub even: S<R>,
    pub odd: S<R>,
}

impl<R: CoefficientRing> Reduced<R> {
    pub fn distance(&self, o: &Self) -> f64 {
        self.even.sub(&o.even).norm().max(self.odd.sub(&o.odd).norm())
    }
}

/// Reduction modulo D, using ∂/∂θ ≡ −θ∂/∂x. Gives W⁻(w) ↦ (0, 2w) and
/// W⁺(w) ↦ (w, 0).
pub fn reduce_mod_d<R: CoefficientRing>(v: &SuperVf<R>) -> Result<Reduced<R>> {
    if v.has_xi_components() {
        return Err(Error::Precondition("field has ∂/∂ξ components".into()));
    }
    let cfg = v.config();
    let theta = S::theta(cfg, &v.ctx());
    let c = v.dx.sub(&v.dtheta.mul(&theta));
    let (c0, c1) = c.split_theta();
    // θ·c₁∂x = (−1)^{|c₁|} c₁θ∂x ≡ −(−1)^{|c₁|} c₁∂θ, termwise
    let mut odd = S::zero(cfg, &v.ctx());
    for (m, coef) in c1.terms() {
        let flip = Parity::of(*m) == Parity::Even;
        odd.add_term(*m, if flip { coef.neg() } else { coef.clone() });
    }
    Ok(Reduced { even: c0, odd })
}

/// Superconformal field Σ_I ξ_I W^I with W⁻(w) = w(∂/∂θ − θ∂/∂x) and
/// W⁺(w) = w∂/∂x + ½w′θ∂/∂θ. Keys are θ-free ξ-monomials.
#[derive(Debug, Clone)]
pub struct SuperconformalVectorField<R: CoefficientRing> {
    pub cfg: SeriesConfig,
    pub ctx: R::Ctx,
    pub parity: Parity,
    pub odd_coeffs: BTreeMap<Mono, R>,
    pub even_coeffs: BTreeMap<Mono, R>,
}

impl<R: CoefficientRing> SuperconformalVectorField<R> {
    pub fn new(cfg: SeriesConfig, ctx: &R::Ctx, parity: Parity, odd_coeffs: BTreeMap<Mono, R>, even_coeffs: BTreeMap<Mono, R>) -> Result<Self> {
        for (m, _) in odd_coeffs.iter() {
            if has_theta(*m) || Parity::from_bit(xi_degree(*m) as u32 + 1) != parity {
                return Err(Error::Parity(format!("W⁻ piece at ξ-monomial {m:#b} has the wrong parity")));
            }
        }
        for (m, _) in even_coeffs.iter() {
            if has_theta(*m) || Parity::from_bit(xi_degree(*m) as u32) != parity {
                return Err(Error::Parity(format!("W⁺ piece at ξ-monomial {m:#b} has the wrong parity")));
            }
        }
        let odd_coeffs = odd_coeffs.into_iter().filter(|(_, c)| !c.is_zero_default()).collect();
        let even_coeffs = even_coeffs.into_iter().filter(|(_, c)| !c.is_zero_default()).collect();
        Ok(Self { cfg, ctx: ctx.clone(), parity, odd_coeffs, even_coeffs })
    }

    /// W⁻(w) on ℂ^{1|1}.
    pub fn minus(cfg: SeriesConfig, w: R) -> Self {
        let ctx = w.ctx();
        Self::new(cfg, &ctx, Parity::Odd, [(ONE, w)].into(), BTreeMap::new()).unwrap()
    }

    /// W⁺(w) on ℂ^{1|1}.
    pub fn plus(cfg: SeriesConfig, w: R) -> Self {
        let ctx = w.ctx();
        Self::new(cfg, &ctx, Parity::Even, BTreeMap::new(), [(ONE, w)].into()).unwrap()
    }

    pub fn is_zero(&self) -> bool {
        self.odd_coeffs.is_empty() && self.even_coeffs.is_empty()
    }

    pub fn to_vf(&self) -> SuperVf<R> {
        let cfg = self.cfg;
        let theta = S::theta(cfg, &self.ctx);
        let mut v = SuperVf::zero(self.parity, cfg, &self.ctx);
        for (m, w) in &self.odd_coeffs {
            let xi_i = S::term(cfg, *m, R::one(&self.ctx));
            let ws = S::scalar(cfg, w.clone());
            v.dx = v.dx.sub(&xi_i.mul(&theta.mul(&ws)));
            v.dtheta = v.dtheta.add(&xi_i.mul(&ws));
        }
        for (m, w) in &self.even_coeffs {
            let xi_i = S::term(cfg, *m, R::one(&self.ctx));
            v.dx = v.dx.add(&xi_i.mul(&S::scalar(cfg, w.clone())));
            let half = S::scalar(cfg, w.ddx().scale_q(1, 2));
            v.dtheta = v.dtheta.add(&xi_i.mul(&half.mul(&theta)));
        }
        v
    }

    /// Reads a general field back into the W± basis; fails if it is not of
    /// that shape.
    pub fn from_vf(v: &SuperVf<R>, tol: f64) -> Result<Self> {
        if v.has_xi_components() {
            return Err(Error::Precondition("field has ∂/∂ξ components".into()));
        }
        let mut odd = BTreeMap::new();
        let mut even = BTreeMap::new();
        for (m, c) in v.dtheta.terms() {
            if !has_theta(*m) {
                odd.insert(*m, c.clone());
            }
        }
        for (m, c) in v.dx.terms() {
            if !has_theta(*m) {
                even.insert(*m, c.clone());
            }
        }
        let out = Self::new(v.config(), &v.ctx(), v.parity, odd, even)
            .map_err(|e| Error::NotSuperconformal(e.to_string()))?;
        let defect = out.to_vf().sub(v).norm();
        if defect > tol {
            return Err(Error::NotSuperconformal(format!("field is not in the span of W± (defect {defect:e})")));
        }
        Ok(out)
    }

    /// Single-piece fields ξ_I W^I, by monomial.
    pub fn pieces(&self) -> Vec<(Mono, Self)> {
        let mut keys: Vec<Mono> = self.odd_coeffs.keys().chain(self.even_coeffs.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .map(|k| {
                let odd = self.odd_coeffs.get(&k).map(|c| [(k, c.clone())].into()).unwrap_or_default();
                let even = self.even_coeffs.get(&k).map(|c| [(k, c.clone())].into()).unwrap_or_default();
                (k, Self { cfg: self.cfg, ctx: self.ctx.clone(), parity: self.parity, odd_coeffs: odd, even_coeffs: even })
            })
            .collect()
    }
}

/// Bracket of superconformal fields, re-expressed in the W± basis.
pub fn vf_bracket<R: CoefficientRing>(v: &SuperconformalVectorField<R>, w: &SuperconformalVectorField<R>) -> Result<SuperconformalVectorField<R>> {
    let b = bracket(&v.to_vf(), &w.to_vf())?;
    SuperconformalVectorField::from_vf(&b, R::ZERO_TOL.max(0.0))
}

pub fn reduce_scvf<R: CoefficientRing>(v: &SuperconformalVectorField<R>) -> Reduced<R> {
    reduce_mod_d(&v.to_vf()).expect("superconformal fields have no ξ-direction")
}

/// The factor f in [W, D] = f·D, or an error if [W, D] is not a multiple of D.
pub fn d_commutator_factor<R: CoefficientRing>(w: &SuperVf<R>, tol: f64) -> Result<S<R>> {
    let cfg = w.config();
    let ctx = w.ctx();
    let c = bracket(w, &SuperVf::d(cfg, &ctx))?;
    let f = c.dtheta.clone();
    let theta = S::theta(cfg, &ctx);
    let defect = c.dx.sub(&f.mul(&theta)).norm().max(c.dxi.iter().map(|x| x.norm()).fold(0.0, f64::max));
    if defect > tol {
        return Err(Error::NotSuperconformal(format!("[W, D] is not proportional to D (defect {defect:e})")));
    }
    Ok(f)
}

/// Checks νχ ≡ ½[ν,χ] modulo D for odd superconformal ν, χ.
pub fn check_product_bracket<R: CoefficientRing>(nu: &SuperconformalVectorField<R>, chi: &SuperconformalVectorField<R>) -> Result<bool> {
    if nu.parity != Parity::Odd || chi.parity != Parity::Odd {
        return Err(Error::Parity("both fields must be odd".into()));
    }
    let (a, b) = (nu.to_vf(), chi.to_vf());
    let prod = compose_operators(&a, &b)?;
    let half = bracket(&a, &b)?.scale_q(1, 2);
    let lhs = reduce_mod_d(&prod)?;
    let rhs = reduce_mod_d(&half)?;
    Ok(lhs.distance(&rhs) <= R::ZERO_TOL)
}

/// Splits a superconformal field over A^{0|n} into its ξ-graded pieces.
pub fn decompose_vf<R: CoefficientRing>(w: &SuperVf<R>) -> Result<Vec<(Mono, SuperconformalVectorField<R>)>> {
    if w.has_xi_components() {
        return Err(Error::Precondition("a superconformal field has no ∂/∂ξ component".into()));
    }
    d_commutator_factor(w, R::ZERO_TOL)?;
    let scvf = SuperconformalVectorField::from_vf(w, R::ZERO_TOL)?;
    Ok(scvf.pieces())
}

/// ξ-monomial helper for tests and fixtures.
pub fn xi_mono(indices: &[usize]) -> Mono {
    indices.iter().fold(0, |m, i| m | (1 << i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcfield::{cq_int, Chart, LaurentFn, LaurentMap, CQ};
    use crate::supernumber::{xi, xi2, THETA};
    use num_traits::One;

    type L = LaurentFn;

    fn cfg() -> SeriesConfig {
        SeriesConfig::second_order(2)
    }

    fn a() -> Chart {
        Chart::Alpha
    }

    fn mono(e: i64, re: i64, im: i64) -> L {
        L::monomial(a(), e, cq_int(re, im))
    }

    fn flip() -> SuperconformalMap<L> {
        let zeta = S::scalar(cfg(), mono(-1, 0, 1));
        SuperconformalMap::new(LaurentMap::flip(), S::zero(cfg(), &a()), S::zero(cfg(), &a()), zeta, S::zero(cfg(), &a())).unwrap()
    }

    #[test]
    fn identity_and_flip_are_superconformal() {
        assert!(check_superconformal_map(&SuperconformalMap::<L>::identity(cfg(), &a())).ok);
        assert!(check_superconformal_map(&flip()).ok);
    }

    #[test]
    fn square_map_fails_at_order_zero() {
        let mut phi = SuperconformalMap::<L>::identity(cfg(), &a());
        phi.classical = LaurentMap::new(a(), a(), CQ::one(), 2).unwrap();
        let rep = check_superconformal_map(&phi);
        assert!(!rep.ok);
        assert_eq!(rep.zeta_residual.body(), L::one(&a()).sub(&mono(1, 2, 0)));
        assert_eq!(rep.residuals[0].order, 0);
        assert!(rep.residuals[0].norm > 0.0 && rep.residuals[1].norm == 0.0);
        assert!(matches!(invert(&phi), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn flip_composed_with_inverse_flip_is_identity() {
        let back = SuperconformalMap::new(
            LaurentMap { src: Chart::Beta, dst: Chart::Alpha, a: CQ::one(), k: -1 },
            S::zero(cfg(), &Chart::Beta),
            S::zero(cfg(), &Chart::Beta),
            S::scalar(cfg(), L::monomial(Chart::Beta, -1, cq_int(0, -1))),
            S::zero(cfg(), &Chart::Beta),
        )
        .unwrap();
        assert!(check_superconformal_map(&back).ok);
        let id = compose(&flip(), &back).unwrap();
        assert!(id.is_identity(0.0));
        let inv = invert(&flip()).unwrap();
        assert!(inv.distance(&back) == 0.0);
    }

    #[test]
    fn shifts_add() {
        let shift = |c: L| {
            SuperconformalMap::new(L::map_identity(&a()), S::term(cfg(), xi2(1, 2), c), S::zero(cfg(), &a()), S::one(cfg(), &a()), S::zero(cfg(), &a())).unwrap()
        };
        let p = mono(2, 1, 0);
        let q = mono(-3, 0, 2);
        let c = compose(&shift(p.clone()), &shift(q.clone())).unwrap();
        assert!(c.distance(&shift(p.add(&q))) == 0.0);
        let inv = invert(&shift(p.clone())).unwrap();
        assert!(inv.distance(&shift(p.neg())) == 0.0);
    }

    #[test]
    fn odd_shift_round_trips() {
        let c = mono(0, 3, -1);
        let phi = SuperconformalMap::from_relations(L::map_identity(&a()), L::one(&a()), S::zero(cfg(), &a()), S::term(cfg(), xi(1), c)).unwrap();
        assert!(check_superconformal_map(&phi).ok);
        let inv = invert(&phi).unwrap();
        assert!(compose(&phi, &inv).unwrap().is_identity(0.0));
        assert!(compose(&inv, &phi).unwrap().is_identity(0.0));
    }

    #[test]
    fn conformal_factor_examples() {
        let id = SuperconformalMap::<L>::identity(cfg(), &a());
        assert_eq!(conformal_factor(&id).unwrap().value, S::one(cfg(), &a()));
        assert_eq!(conformal_factor(&flip()).unwrap().value, flip().zeta);
        let s = mono(2, 1, 1);
        let phi = SuperconformalMap::from_relations(L::map_identity(&a()), L::one(&a()), S::zero(cfg(), &a()), S::term(cfg(), xi(1), s.clone())).unwrap();
        let expect = phi.zeta.add(&S::term(cfg(), THETA | xi(1), s.ddx()));
        assert_eq!(conformal_factor(&phi).unwrap().value, expect);
    }

    #[test]
    fn pushforward_of_flip_is_factor_times_d() {
        let p = pushforward_d(&flip()).unwrap();
        assert!(p.proportional);
        // h = i/x expressed in y = 1/x is i·y
        assert_eq!(p.factor, S::scalar(cfg(), L::monomial(Chart::Beta, 1, cq_int(0, 1))));
        let id = pushforward_d(&SuperconformalMap::<L>::identity(cfg(), &a())).unwrap();
        assert!(id.proportional && id.factor == S::one(cfg(), &a()));
    }

    #[test]
    fn pushforward_flags_non_superconformal() {
        let mut phi = SuperconformalMap::<L>::identity(cfg(), &a());
        phi.f_minus = S::term(cfg(), xi(1), mono(1, 1, 0));
        let p = pushforward_d(&phi).unwrap();
        assert!(!p.proportional);
    }

    #[test]
    fn displayed_bracket_expansion() {
        let v = mono(2, 1, 0).add(&mono(-1, 0, 3));
        let x = mono(1, 2, -1);
        let nu = SuperconformalVectorField::minus(cfg(), v.clone());
        let chi = SuperconformalVectorField::minus(cfg(), x.clone());
        let b = bracket(&nu.to_vf(), &chi.to_vf()).unwrap().scale_q(1, 2);
        let vx = v.mul(&x);
        let theta = S::theta(cfg(), &a());
        assert_eq!(b.dx, S::scalar(cfg(), vx.neg()));
        assert_eq!(b.dtheta, S::scalar(cfg(), vx.ddx().scale_q(-1, 2)).mul(&theta));
        assert!(check_product_bracket(&nu, &chi).unwrap());
    }

    #[test]
    fn plus_minus_bracket() {
        let w = mono(3, 1, 1);
        let v = mono(-2, 2, 0);
        let br = vf_bracket(&SuperconformalVectorField::plus(cfg(), w.clone()), &SuperconformalVectorField::minus(cfg(), v.clone())).unwrap();
        let expect = w.mul(&v.ddx()).sub(&w.ddx().mul(&v).scale_q(1, 2));
        assert_eq!(br.odd_coeffs.get(&ONE), Some(&expect));
        assert!(br.even_coeffs.is_empty());
    }

    #[test]
    fn reduction_examples() {
        let v = mono(1, 1, 0);
        let r = reduce_scvf(&SuperconformalVectorField::minus(cfg(), v.clone()));
        assert!(r.even.is_zero_default() && r.odd == S::scalar(cfg(), v.scale_q(2, 1)));
        let r = reduce_scvf(&SuperconformalVectorField::plus(cfg(), v.clone()));
        assert!(r.odd.is_zero_default() && r.even == S::scalar(cfg(), v));
        let r = reduce_mod_d(&SuperVf::<L>::d(cfg(), &a())).unwrap();
        assert!(r.even.is_zero_default() && r.odd.is_zero_default());
    }

    #[test]
    fn product_bracket_rejects_even() {
        let e = SuperconformalVectorField::plus(cfg(), mono(0, 1, 0));
        let o = SuperconformalVectorField::minus(cfg(), mono(0, 1, 0));
        assert!(matches!(check_product_bracket(&e, &o), Err(Error::Parity(_))));
    }

    #[test]
    fn self_product_reduces_to_minus_square() {
        let v = mono(1, 1, 2);
        let nu = SuperconformalVectorField::minus(cfg(), v.clone());
        let prod = compose_operators(&nu.to_vf(), &nu.to_vf()).unwrap();
        let r = reduce_mod_d(&prod).unwrap();
        assert_eq!(r.even, S::scalar(cfg(), v.mul(&v).neg()));
    }

    #[test]
    fn decompose_graded_field() {
        let v = mono(1, 1, 0);
        let h = mono(-1, 0, 1);
        let w = SuperconformalVectorField::new(cfg(), &a(), Parity::Even, [(xi(1), v.clone())].into(), [(xi2(1, 2), h.clone())].into()).unwrap();
        let pieces = decompose_vf(&w.to_vf()).unwrap();
        assert_eq!(pieces.len(), 2);
        assert_eq!(pieces[0].0, xi(1));
        assert_eq!(pieces[0].1.odd_coeffs.get(&xi(1)), Some(&v));
        assert_eq!(pieces[1].0, xi2(1, 2));
        assert_eq!(pieces[1].1.even_coeffs.get(&xi2(1, 2)), Some(&h));
        assert!(decompose_vf(&SuperVf::<L>::zero(Parity::Even, cfg(), &a())).unwrap().is_empty());
        let mut bad = w.to_vf();
        bad.dxi[0] = S::term(cfg(), THETA, mono(0, 1, 0));
        assert!(decompose_vf(&bad).is_err());
    }

    #[test]
    fn basis_fields_commute_into_d() {
        let w = mono(2, 1, -1);
        for f in [SuperconformalVectorField::minus(cfg(), w.clone()), SuperconformalVectorField::plus(cfg(), w.clone())] {
            d_commutator_factor(&f.to_vf(), 0.0).unwrap();
        }
        let mut not = SuperVf::<L>::zero(Parity::Even, cfg(), &a());
        not.dx = S::scalar(cfg(), w);
        assert!(d_commutator_factor(&not, 0.0).is_err());
    }
}
