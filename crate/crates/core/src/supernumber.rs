//! Truncated supercommutative series.
//!
//! A term is a coefficient (an element of a [`CoefficientRing`], i.e. a
//! function of the even chart coordinate x) times a monomial in the odd
//! generators θ, ξ₁…ξₙ. Monomials are bitmasks: bit 0 is θ and bit i is ξᵢ,
//! so canonical order (θ first, then ξ ascending) is the bit order.
//!
//! Odd derivatives are *left* derivatives: the variable is moved to the front
//! with Koszul signs and then struck. With this convention
//! D = ∂/∂θ + θ∂/∂x squares to ∂/∂x.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::funcfield::CoefficientRing;
use crate::{Error, Result};

/// Monomial bitmask: bit 0 is θ, bit i ≥ 1 is ξᵢ.
pub type Mono = u32;

pub const THETA: Mono = 1;
pub const ONE: Mono = 0;

pub fn xi(i: usize) -> Mono {
    1 << i
}

pub fn xi2(i: usize, j: usize) -> Mono {
    xi(i) | xi(j)
}

pub fn xi_degree(m: Mono) -> usize {
    (m >> 1).count_ones() as usize
}

pub fn has_theta(m: Mono) -> bool {
    m & THETA != 0
}

/// ξ indices of a monomial, ascending.
pub fn xi_indices(m: Mono) -> Vec<usize> {
    (1..32).filter(|i| m & (1 << i) != 0).collect()
}

/// Sign of the product of two canonical monomials, or `None` when a
/// generator repeats.
pub fn mono_product_sign(a: Mono, b: Mono) -> Option<i64> {
    if a & b != 0 {
        return None;
    }
    let mut swaps = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        swaps += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    Some(if swaps % 2 == 0 { 1 } else { -1 })
}

pub fn mono_name(m: Mono) -> String {
    if m == 0 {
        return "1".into();
    }
    let mut s = String::new();
    if has_theta(m) {
        s.push('θ');
    }
    for i in xi_indices(m) {
        let _ = write!(s, "ξ{i}");
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(m: Mono) -> Self {
        if m.count_ones() % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn bit(self) -> u32 {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }

    pub fn from_bit(b: u32) -> Self {
        if b % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn add(self, o: Parity) -> Parity {
        Parity::from_bit(self.bit() + o.bit())
    }
}

/// An odd variable to differentiate by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OddVar {
    Theta,
    Xi(usize),
}

impl OddVar {
    pub fn bit(self) -> Mono {
        match self {
            OddVar::Theta => THETA,
            OddVar::Xi(i) => xi(i),
        }
    }
}

/// Readable form of a monomial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OddMultiIndex {
    pub theta_flag: bool,
    pub indices: Vec<usize>,
}

impl OddMultiIndex {
    pub fn new(theta_flag: bool, indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) || indices.iter().any(|&i| i == 0 || i > 31) {
            return Err(Error::Config(format!("indices must be strictly increasing in 1..=31: {indices:?}")));
        }
        Ok(Self { theta_flag, indices })
    }

    pub fn mask(&self) -> Mono {
        self.indices.iter().fold(if self.theta_flag { THETA } else { 0 }, |m, &i| m | xi(i))
    }

    pub fn from_mask(m: Mono) -> Self {
        Self { theta_flag: has_theta(m), indices: xi_indices(m) }
    }

    pub fn parity(&self) -> Parity {
        Parity::from_bit(self.indices.len() as u32 + self.theta_flag as u32)
    }
}

/// Number of odd parameters and truncation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeriesConfig {
    pub n: usize,
    pub truncation: usize,
}

impl SeriesConfig {
    /// The only accepted truncation is 2.
    pub fn new(n: usize, truncation: usize) -> Result<Self> {
        if truncation != 2 {
            return Err(Error::Config(format!("truncation order must be 2, got {truncation}")));
        }
        Self::check_n(n)?;
        Ok(Self { n, truncation })
    }

    pub fn second_order(n: usize) -> Self {
        Self::new(n, 2).expect("n within range")
    }

    /// Unchecked truncation, for cross-checking truncation consistency only.
    pub fn scratch(n: usize, truncation: usize) -> Result<Self> {
        Self::check_n(n)?;
        Ok(Self { n, truncation })
    }

    fn check_n(n: usize) -> Result<()> {
        if n > 30 {
            return Err(Error::Config(format!("at most 30 odd parameters, got {n}")));
        }
        Ok(())
    }
}

/// Truncated series Σ c_M(x)·M over canonical odd monomials M.
#[derive(Debug, Clone)]
pub struct SuperSeries<R: CoefficientRing> {
    cfg: SeriesConfig,
    ctx: R::Ctx,
    terms: BTreeMap<Mono, R>,
}

impl<R: CoefficientRing> PartialEq for SuperSeries<R>
where
    R: PartialEq,
{
    fn eq(&self, o: &Self) -> bool {
        self.cfg == o.cfg && self.ctx == o.ctx && self.terms == o.terms
    }
}

impl<R: CoefficientRing> SuperSeries<R> {
    pub fn zero(cfg: SeriesConfig, ctx: &R::Ctx) -> Self {
        Self { cfg, ctx: ctx.clone(), terms: BTreeMap::new() }
    }

    pub fn one(cfg: SeriesConfig, ctx: &R::Ctx) -> Self {
        Self::scalar(cfg, R::one(ctx))
    }

    /// A θ- and ξ-free series.
    pub fn scalar(cfg: SeriesConfig, c: R) -> Self {
        Self::term(cfg, ONE, c)
    }

    /// c·M for a canonical monomial M.
    pub fn term(cfg: SeriesConfig, m: Mono, c: R) -> Self {
        let mut out = Self::zero(cfg, &c.ctx());
        out.add_term(m, c);
        out
    }

    pub fn theta(cfg: SeriesConfig, ctx: &R::Ctx) -> Self {
        Self::term(cfg, THETA, R::one(ctx))
    }

    pub fn xi(cfg: SeriesConfig, ctx: &R::Ctx, i: usize) -> Self {
        Self::term(cfg, xi(i), R::one(ctx))
    }

    pub fn from_terms(cfg: SeriesConfig, ctx: &R::Ctx, terms: impl IntoIterator<Item = (Mono, R)>) -> Self {
        let mut out = Self::zero(cfg, ctx);
        for (m, c) in terms {
            out.add_term(m, c);
        }
        out
    }

    pub fn config(&self) -> SeriesConfig {
        self.cfg
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    pub fn ctx(&self) -> &R::Ctx {
        &self.ctx
    }

    pub fn terms(&self) -> &BTreeMap<Mono, R> {
        &self.terms
    }

    pub fn coeff(&self, m: Mono) -> R {
        self.terms.get(&m).cloned().unwrap_or_else(|| R::zero(&self.ctx))
    }

    pub fn body(&self) -> R {
        self.coeff(ONE)
    }

    fn admissible(&self, m: Mono) -> bool {
        let top = m >> 1;
        (top >> self.cfg.n) == 0 && xi_degree(m) <= self.cfg.truncation
    }

    /// Adds c·M, dropping it if M is beyond truncation or c tests as zero.
    pub fn add_term(&mut self, m: Mono, c: R) {
        assert_eq!(c.ctx(), self.ctx, "coefficient ring mismatch");
        if !self.admissible(m) {
            return;
        }
        let next = match self.terms.remove(&m) {
            Some(old) => old.add(&c),
            None => c,
        };
        if !next.is_zero_default() {
            self.terms.insert(m, next);
        }
    }

    fn compatible(&self, o: &Self) -> Result<()> {
        if self.cfg != o.cfg {
            return Err(Error::Config(format!("series configs differ: {:?} vs {:?}", self.cfg, o.cfg)));
        }
        if self.ctx != o.ctx {
            return Err(Error::Config(format!("ring mismatch: {:?} vs {:?}", self.ctx, o.ctx)));
        }
        Ok(())
    }

    pub fn add(&self, o: &Self) -> Self {
        self.compatible(o).expect("add");
        let mut out = self.clone();
        for (m, c) in &o.terms {
            out.add_term(*m, c.clone());
        }
        out
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> Self {
        self.map_coeffs(|c| c.neg())
    }

    pub fn scale_q(&self, num: i64, den: i64) -> Self {
        self.map_coeffs(|c| c.scale_q(num, den))
    }

    /// Multiplies every coefficient by an even, ξ-free ring element.
    pub fn scale_ring(&self, r: &R) -> Self {
        self.map_coeffs(|c| c.mul(r))
    }

    /// Coefficient-wise map within the same context.
    pub fn map_coeffs(&self, f: impl Fn(&R) -> R) -> Self {
        let mut out = Self::zero(self.cfg, &self.ctx);
        for (m, c) in &self.terms {
            out.add_term(*m, f(c));
        }
        out
    }

    /// Coefficient-wise map into another context (e.g. a pullback).
    pub fn map_ctx(&self, ctx: &R::Ctx, f: impl Fn(&R) -> R) -> Self {
        let mut out = Self::zero(self.cfg, ctx);
        for (m, c) in &self.terms {
            out.add_term(*m, f(c));
        }
        out
    }

    pub fn mul(&self, o: &Self) -> Self {
        ss_mul(self, o).expect("mul")
    }

    /// Even derivative ∂/∂x.
    pub fn ddx(&self) -> Self {
        self.map_coeffs(|c| c.ddx())
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.terms.values().all(|c| c.is_zero(tol))
    }

    pub fn is_zero_default(&self) -> bool {
        self.terms.is_empty()
    }

    /// Max coefficient norm.
    pub fn norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Max coefficient norm on terms of a given ξ-degree.
    pub fn norm_at_degree(&self, d: usize) -> f64 {
        self.terms
            .iter()
            .filter(|(m, _)| xi_degree(**m) == d)
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max)
    }

    /// Parity if homogeneous; zero counts as both and reports `None`.
    pub fn parity(&self) -> Option<Parity> {
        let mut it = self.terms.keys().map(|m| Parity::of(*m));
        let p = it.next()?;
        it.all(|q| q == p).then_some(p)
    }

    pub fn has_parity(&self, p: Parity) -> bool {
        self.terms.keys().all(|m| Parity::of(*m) == p)
    }

    /// Terms of ξ-degree ≤ `order`.
    pub fn truncate_to(&self, order: usize) -> Self {
        let mut out = self.clone();
        out.terms.retain(|m, _| xi_degree(*m) <= order);
        out
    }

    /// Re-reads the series under another configuration, dropping terms that
    /// do not fit.
    pub fn with_config(&self, cfg: SeriesConfig) -> Self {
        let mut out = Self::zero(cfg, &self.ctx);
        for (m, c) in &self.terms {
            out.add_term(*m, c.clone());
        }
        out
    }

    /// Terms whose monomial satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(Mono) -> bool) -> Self {
        let mut out = self.clone();
        out.terms.retain(|m, _| keep(*m));
        out
    }

    /// Writes a = a₀ + θ·a₁ with a₀, a₁ free of θ.
    pub fn split_theta(&self) -> (Self, Self) {
        let mut a0 = Self::zero(self.cfg, &self.ctx);
        let mut a1 = Self::zero(self.cfg, &self.ctx);
        for (m, c) in &self.terms {
            if has_theta(*m) {
                a1.add_term(m & !THETA, c.clone());
            } else {
                a0.add_term(*m, c.clone());
            }
        }
        (a0, a1)
    }

    /// a₀ + θ·a₁.
    pub fn join_theta(a0: &Self, a1: &Self) -> Self {
        let theta = Self::theta(a0.cfg, &a0.ctx);
        a0.add(&theta.mul(a1))
    }

    pub fn describe(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|(m, c)| format!("{}:|{:.3e}|", mono_name(*m), c.norm()))
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// Supercommutative product with Koszul signs, truncated at the configured
/// ξ-degree.
pub fn ss_mul<R: CoefficientRing>(a: &SuperSeries<R>, b: &SuperSeries<R>) -> Result<SuperSeries<R>> {
    a.compatible(b)?;
    let mut out = SuperSeries::zero(a.cfg, &a.ctx);
    for (ma, ca) in &a.terms {
        for (mb, cb) in &b.terms {
            if xi_degree(*ma) + xi_degree(*mb) > a.cfg.truncation {
                continue;
            }
            if let Some(s) = mono_product_sign(*ma, *mb) {
                let c = ca.mul(cb);
                out.add_term(ma | mb, if s < 0 { c.neg() } else { c });
            }
        }
    }
    Ok(out)
}

/// Left derivative by an odd variable.
pub fn ss_derive_odd<R: CoefficientRing>(v: OddVar, a: &SuperSeries<R>) -> SuperSeries<R> {
    let bit = v.bit();
    let mut out = SuperSeries::zero(a.cfg, &a.ctx);
    for (m, c) in &a.terms {
        if m & bit == 0 {
            continue;
        }
        let before = (m & (bit - 1)).count_ones();
        out.add_term(m & !bit, if before % 2 == 0 { c.clone() } else { c.neg() });
    }
    out
}

/// Image of the even coordinate: a classical chart map plus a nilpotent
/// even correction in the source chart.
#[derive(Debug, Clone)]
pub struct EvenImage<R: CoefficientRing> {
    pub map: R::Map,
    pub nil: SuperSeries<R>,
}

impl<R: CoefficientRing> EvenImage<R> {
    pub fn new(map: R::Map, nil: SuperSeries<R>) -> Result<Self> {
        if !nil.has_parity(Parity::Even) {
            return Err(Error::Parity("even image must be even".into()));
        }
        if nil.terms.contains_key(&ONE) {
            return Err(Error::Precondition("nilpotent part of the even image has a body term".into()));
        }
        if &R::map_source(&map) != nil.ctx() {
            return Err(Error::ChartMismatch("even image correction lives outside the map's source chart".into()));
        }
        Ok(Self { map, nil })
    }

    pub fn identity(cfg: SeriesConfig, ctx: &R::Ctx) -> Self {
        Self { map: R::map_identity(ctx), nil: SuperSeries::zero(cfg, ctx) }
    }
}

/// Substitutes x ↦ even image, θ ↦ odd image into `a`, a series in the
/// target chart. Even coefficients are Taylor-expanded to second order in
/// the nilpotent part.
pub fn ss_substitute<R: CoefficientRing>(
    a: &SuperSeries<R>,
    even_image: &EvenImage<R>,
    odd_image: &SuperSeries<R>,
) -> Result<SuperSeries<R>> {
    if !odd_image.has_parity(Parity::Odd) {
        return Err(Error::Parity("odd image must be odd".into()));
    }
    if !even_image.nil.has_parity(Parity::Even) {
        return Err(Error::Parity("even image must be even".into()));
    }
    if a.ctx() != &R::map_target(&even_image.map) {
        return Err(Error::ChartMismatch("series does not live on the map's target chart".into()));
    }
    let cfg = a.cfg;
    if even_image.nil.cfg != cfg || odd_image.cfg != cfg {
        return Err(Error::Config("substitution images use a different series config".into()));
    }
    let src = R::map_source(&even_image.map);
    if odd_image.ctx() != &src {
        return Err(Error::ChartMismatch("odd image lives outside the map's source chart".into()));
    }
    let nil = &even_image.nil;
    let nil2 = nil.mul(nil);
    let mut out = SuperSeries::zero(cfg, &src);
    for (m, c) in &a.terms {
        let c1 = c.ddx();
        let c2 = c1.ddx();
        let value = SuperSeries::scalar(cfg, c.pullback(&even_image.map))
            .add(&nil.scale_ring(&c1.pullback(&even_image.map)))
            .add(&nil2.scale_ring(&c2.pullback(&even_image.map).scale_q(1, 2)));
        let mut image = if has_theta(*m) { odd_image.clone() } else { SuperSeries::one(cfg, &src) };
        for i in xi_indices(*m) {
            image = image.mul(&SuperSeries::xi(cfg, &src, i));
        }
        out = out.add(&value.mul(&image));
    }
    Ok(out)
}
