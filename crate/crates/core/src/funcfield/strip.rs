use num_complex::Complex64;
use std::f64::consts::PI;

use super::CoefficientRing;
use crate::{Error, Result};

/// Cutoff and modulus for holomorphic strip series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripCtx {
    pub n: usize,
    pub tau: Complex64,
}

impl StripCtx {
    pub fn new(n: usize, tau: Complex64) -> Result<Self> {
        if tau.im <= 0.0 {
            return Err(Error::Config(format!("Im τ must be positive, got {tau}")));
        }
        Ok(Self { n, tau })
    }
}

/// Holomorphic function Σ_{|m|≤N} aₘ e^{2πimz} on a horizontal strip of the
/// torus. Products are truncated back to |m| ≤ N.
#[derive(Debug, Clone, PartialEq)]
pub struct StripFn {
    ctx: StripCtx,
    modes: Vec<Complex64>,
}

impl StripFn {
    pub fn from_modes(ctx: StripCtx, modes: impl IntoIterator<Item = (i64, Complex64)>) -> Self {
        let mut out = Self::zero(&ctx);
        for (m, c) in modes {
            if let Some(slot) = out.slot(m) {
                out.modes[slot] += c;
            }
        }
        out
    }

    pub fn constant(ctx: StripCtx, c: Complex64) -> Self {
        Self::from_modes(ctx, [(0, c)])
    }

    fn slot(&self, m: i64) -> Option<usize> {
        let n = self.ctx.n as i64;
        (m.abs() <= n).then(|| (m + n) as usize)
    }

    pub fn mode(&self, m: i64) -> Complex64 {
        self.slot(m).map(|s| self.modes[s]).unwrap_or_default()
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let n = self.ctx.n as i64;
        self.modes.iter().enumerate().map(move |(i, c)| (i as i64 - n, *c))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { ctx: self.ctx, modes: self.modes.iter().map(|v| v * c).collect() }
    }

    pub fn map_modes(&self, f: impl Fn(i64, Complex64) -> Complex64) -> Self {
        let n = self.ctx.n as i64;
        Self {
            ctx: self.ctx,
            modes: self.modes.iter().enumerate().map(|(i, c)| f(i as i64 - n, *c)).collect(),
        }
    }

    fn zip(&self, o: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.ctx, o.ctx, "strip ring mismatch");
        Self { ctx: self.ctx, modes: self.modes.iter().zip(&o.modes).map(|(a, b)| f(*a, *b)).collect() }
    }
}

/// Translation z ↦ z + b between strip coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripShift {
    pub ctx: StripCtx,
    pub b: Complex64,
}

impl CoefficientRing for StripFn {
    type Ctx = StripCtx;
    type Map = StripShift;
    const ZERO_TOL: f64 = 1e-9;

    fn ctx(&self) -> StripCtx {
        self.ctx
    }
    fn zero(ctx: &StripCtx) -> Self {
        Self { ctx: *ctx, modes: vec![Complex64::new(0.0, 0.0); 2 * ctx.n + 1] }
    }
    fn one(ctx: &StripCtx) -> Self {
        Self::constant(*ctx, Complex64::new(1.0, 0.0))
    }
    fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a + b)
    }
    fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a - b)
    }
    fn neg(&self) -> Self {
        self.scale(Complex64::new(-1.0, 0.0))
    }
    fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.ctx, o.ctx, "strip ring mismatch");
        let n = self.ctx.n as i64;
        let mut out = Self::zero(&self.ctx);
        let nz: Vec<(i64, Complex64)> = o.modes().filter(|(_, c)| c.norm() != 0.0).collect();
        for (m1, c1) in self.modes() {
            if c1.norm() == 0.0 {
                continue;
            }
            for &(m2, c2) in &nz {
                let m = m1 + m2;
                if m.abs() <= n {
                    out.modes[(m + n) as usize] += c1 * c2;
                }
            }
        }
        out
    }
    fn scale_c64(&self, c: Complex64) -> Self {
        self.scale(c)
    }
    fn scale_q(&self, num: i64, den: i64) -> Self {
        self.scale(Complex64::new(num as f64 / den as f64, 0.0))
    }
    fn ddx(&self) -> Self {
        self.map_modes(|m, c| c * Complex64::new(0.0, 2.0 * PI * m as f64))
    }
    fn ddxbar(&self) -> Self {
        Self::zero(&self.ctx)
    }
    fn eval(&self, p: Complex64) -> Complex64 {
        self.modes()
            .map(|(m, c)| c * (Complex64::new(0.0, 2.0 * PI * m as f64) * p).exp())
            .sum()
    }
    fn is_zero(&self, tol: f64) -> bool {
        self.norm() < tol.max(f64::MIN_POSITIVE)
    }
    fn norm(&self) -> f64 {
        self.modes.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
    fn try_inv(&self) -> Option<Self> {
        let c0 = self.mode(0);
        let rest = self.modes().filter(|(m, _)| *m != 0).map(|(_, c)| c.norm()).fold(0.0, f64::max);
        (rest == 0.0 && c0.norm() > 0.0).then(|| Self::constant(self.ctx, c0.inv()))
    }
    fn pullback(&self, s: &StripShift) -> Self {
        self.map_modes(|m, c| c * (Complex64::new(0.0, 2.0 * PI * m as f64) * s.b).exp())
    }
    fn map_derivative(s: &StripShift) -> Self {
        Self::one(&s.ctx)
    }
    fn map_identity(ctx: &StripCtx) -> StripShift {
        StripShift { ctx: *ctx, b: Complex64::new(0.0, 0.0) }
    }
    fn map_then(first: &StripShift, second: &StripShift) -> Result<StripShift> {
        if first.ctx != second.ctx {
            return Err(Error::ChartMismatch("strip contexts differ".into()));
        }
        Ok(StripShift { ctx: first.ctx, b: first.b + second.b })
    }
    fn map_inverse(s: &StripShift) -> Result<StripShift> {
        Ok(StripShift { ctx: s.ctx, b: -s.b })
    }
    fn map_source(s: &StripShift) -> StripCtx {
        s.ctx
    }
    fn map_target(s: &StripShift) -> StripCtx {
        s.ctx
    }
    fn map_eq(a: &StripShift, b: &StripShift, tol: f64) -> bool {
        a.ctx == b.ctx && (a.b - b.b).norm() <= tol
    }
}
