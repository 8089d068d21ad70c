use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use std::cell::RefCell;
use std::f64::consts::PI;

use super::CoefficientRing;
use crate::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place 2-D FFT of a row-major `m × m` array, unnormalized.
pub(crate) fn fft2(data: &mut [Complex64], m: usize, dir: FftDirection) {
    PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft(m, dir);
        for row in data.chunks_mut(m) {
            fft.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..m {
            for i in 0..m {
                col[i] = data[i * m + j];
            }
            fft.process(&mut col);
            for i in 0..m {
                data[i * m + j] = col[i];
            }
        }
    });
}

/// Cutoff N and modulus τ of the torus ℂ/(ℤ+τℤ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierCtx {
    pub n: usize,
    pub tau: Complex64,
}

impl FourierCtx {
    pub fn new(n: usize, tau: Complex64) -> Result<Self> {
        if tau.im <= 0.0 {
            return Err(Error::Config(format!("Im τ must be positive, got {tau}")));
        }
        Ok(Self { n, tau })
    }

    pub fn area(&self) -> f64 {
        self.tau.im
    }

    /// Symbol of ∂/∂z̄ on e_{m,n} = exp(2πi(mu+nv)), z = u + τv.
    ///
    /// From u = (τ̄z − τz̄)/(τ̄ − τ) and v = (z − z̄)/(τ − τ̄) one gets
    /// ∂/∂z̄ = (τ∂_u − ∂_v)/(τ − τ̄), hence 2πi(τm − n)/(τ − τ̄).
    pub fn dbar_symbol(&self, m: i64, n: i64) -> Complex64 {
        let t = self.tau;
        Complex64::new(0.0, 2.0 * PI) * (t * m as f64 - n as f64) / (t - t.conj())
    }

    /// Symbol of ∂/∂z: 2πi(n − τ̄m)/(τ − τ̄).
    pub fn dz_symbol(&self, m: i64, n: i64) -> Complex64 {
        let t = self.tau;
        Complex64::new(0.0, 2.0 * PI) * (n as f64 - t.conj() * m as f64) / (t - t.conj())
    }

    /// Lattice coordinates (u, v) of a point z = u + τv.
    pub fn uv(&self, z: Complex64) -> (f64, f64) {
        let v = z.im / self.tau.im;
        (z.re - self.tau.re * v, v)
    }

    pub fn point(&self, u: f64, v: f64) -> Complex64 {
        self.tau * v + u
    }

    fn side(&self) -> usize {
        2 * self.n + 1
    }
}

/// Doubly periodic function with modes (m,n) ∈ [−N,N]².
#[derive(Debug, Clone, PartialEq)]
pub struct FourierFn {
    ctx: FourierCtx,
    modes: Vec<Complex64>,
}

impl FourierFn {
    pub fn from_modes(ctx: FourierCtx, modes: impl IntoIterator<Item = ((i64, i64), Complex64)>) -> Self {
        let mut out = Self::zero(&ctx);
        for ((m, n), c) in modes {
            if let Some(s) = out.slot(m, n) {
                out.modes[s] += c;
            }
        }
        out
    }

    pub fn constant(ctx: FourierCtx, c: Complex64) -> Self {
        Self::from_modes(ctx, [((0, 0), c)])
    }

    pub fn cutoff(&self) -> usize {
        self.ctx.n
    }

    fn slot(&self, m: i64, n: i64) -> Option<usize> {
        let k = self.ctx.n as i64;
        (m.abs() <= k && n.abs() <= k).then(|| ((m + k) as usize) * self.ctx.side() + (n + k) as usize)
    }

    pub fn mode(&self, m: i64, n: i64) -> Complex64 {
        self.slot(m, n).map(|s| self.modes[s]).unwrap_or_default()
    }

    /// Harmonic (mean) part.
    pub fn mean(&self) -> Complex64 {
        self.mode(0, 0)
    }

    pub fn modes(&self) -> impl Iterator<Item = ((i64, i64), Complex64)> + '_ {
        let k = self.ctx.n as i64;
        let side = self.ctx.side();
        self.modes
            .iter()
            .enumerate()
            .map(move |(i, c)| (((i / side) as i64 - k, (i % side) as i64 - k), *c))
    }

    pub fn nonzero_modes(&self) -> Vec<((i64, i64), Complex64)> {
        self.modes().filter(|(_, c)| c.norm() != 0.0).collect()
    }

    pub fn map_modes(&self, f: impl Fn(i64, i64, Complex64) -> Complex64) -> Self {
        let k = self.ctx.n as i64;
        let side = self.ctx.side();
        Self {
            ctx: self.ctx,
            modes: self
                .modes
                .iter()
                .enumerate()
                .map(|(i, c)| f((i / side) as i64 - k, (i % side) as i64 - k, *c))
                .collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map_modes(|_, _, v| v * c)
    }

    /// Keeps modes with |m|,|n| ≤ n_new in a context with that cutoff.
    pub fn with_cutoff(&self, n_new: usize) -> Self {
        let ctx = FourierCtx { n: n_new, tau: self.ctx.tau };
        Self::from_modes(ctx, self.nonzero_modes())
    }

    /// Samples on the M×M grid uᵢ = i/M, vⱼ = j/M, row-major in i.
    pub fn to_grid(&self, m: usize) -> Vec<Complex64> {
        let mut data = vec![Complex64::new(0.0, 0.0); m * m];
        let mi = m as i64;
        for ((a, b), c) in self.modes() {
            if c.norm() == 0.0 {
                continue;
            }
            let i = a.rem_euclid(mi) as usize;
            let j = b.rem_euclid(mi) as usize;
            data[i * m + j] += c;
        }
        fft2(&mut data, m, FftDirection::Inverse);
        data
    }

    /// Inverse of [`FourierFn::to_grid`], keeping modes up to the context cutoff.
    pub fn from_grid(ctx: FourierCtx, m: usize, grid: &[Complex64]) -> Result<Self> {
        if grid.len() != m * m {
            return Err(Error::Config(format!("grid has {} samples, expected {}", grid.len(), m * m)));
        }
        if m < 2 * ctx.n + 1 {
            return Err(Error::Config(format!("grid {m} too coarse for cutoff {}", ctx.n)));
        }
        let mut data = grid.to_vec();
        fft2(&mut data, m, FftDirection::Forward);
        let norm = 1.0 / (m * m) as f64;
        let mi = m as i64;
        let mut out = Self::zero(&ctx);
        let k = ctx.n as i64;
        for a in -k..=k {
            for b in -k..=k {
                let i = a.rem_euclid(mi) as usize;
                let j = b.rem_euclid(mi) as usize;
                let s = out.slot(a, b).unwrap();
                out.modes[s] = data[i * m + j] * norm;
            }
        }
        Ok(out)
    }

    fn zip(&self, o: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.ctx, o.ctx, "Fourier ring mismatch");
        Self { ctx: self.ctx, modes: self.modes.iter().zip(&o.modes).map(|(a, b)| f(*a, *b)).collect() }
    }

    fn mul_direct(&self, a: &[((i64, i64), Complex64)], b: &[((i64, i64), Complex64)]) -> Self {
        let mut out = Self::zero(&self.ctx);
        for ((m1, n1), c1) in a {
            for ((m2, n2), c2) in b {
                if let Some(s) = out.slot(m1 + m2, n1 + n2) {
                    out.modes[s] += c1 * c2;
                }
            }
        }
        out
    }

    fn mul_fft(&self, o: &Self) -> Self {
        let m = (3 * self.ctx.n + 1).next_power_of_two();
        let ga = self.to_grid(m);
        let gb = o.to_grid(m);
        let prod: Vec<_> = ga.iter().zip(&gb).map(|(x, y)| x * y).collect();
        Self::from_grid(self.ctx, m, &prod).expect("dealiased grid")
    }
}

/// Translation z ↦ z + b on the torus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierShift {
    pub ctx: FourierCtx,
    pub b: Complex64,
}

impl CoefficientRing for FourierFn {
    type Ctx = FourierCtx;
    type Map = FourierShift;
    const ZERO_TOL: f64 = 1e-9;

    fn ctx(&self) -> FourierCtx {
        self.ctx
    }
    fn zero(ctx: &FourierCtx) -> Self {
        Self { ctx: *ctx, modes: vec![Complex64::new(0.0, 0.0); ctx.side() * ctx.side()] }
    }
    fn one(ctx: &FourierCtx) -> Self {
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
        assert_eq!(self.ctx, o.ctx, "Fourier ring mismatch");
        let a = self.nonzero_modes();
        let b = o.nonzero_modes();
        if a.len() * b.len() <= 1 << 16 {
            self.mul_direct(&a, &b)
        } else {
            self.mul_fft(o)
        }
    }
    fn scale_c64(&self, c: Complex64) -> Self {
        self.scale(c)
    }
    fn scale_q(&self, num: i64, den: i64) -> Self {
        self.scale(Complex64::new(num as f64 / den as f64, 0.0))
    }
    fn ddx(&self) -> Self {
        let ctx = self.ctx;
        self.map_modes(|m, n, c| c * ctx.dz_symbol(m, n))
    }
    fn ddxbar(&self) -> Self {
        let ctx = self.ctx;
        self.map_modes(|m, n, c| c * ctx.dbar_symbol(m, n))
    }
    fn eval(&self, p: Complex64) -> Complex64 {
        let (u, v) = self.ctx.uv(p);
        self.modes()
            .filter(|(_, c)| c.norm() != 0.0)
            .map(|((m, n), c)| c * Complex64::new(0.0, 2.0 * PI * (m as f64 * u + n as f64 * v)).exp())
            .sum()
    }
    fn is_zero(&self, tol: f64) -> bool {
        self.norm() < tol.max(f64::MIN_POSITIVE)
    }
    fn norm(&self) -> f64 {
        self.modes.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
    fn try_inv(&self) -> Option<Self> {
        let nz = self.nonzero_modes();
        if nz.len() == 1 && nz[0].0 == (0, 0) {
            return Some(Self::constant(self.ctx, nz[0].1.inv()));
        }
        let m = (4 * self.ctx.n + 2).next_power_of_two();
        let g = self.to_grid(m);
        if g.iter().any(|v| v.norm() < 1e-12) {
            return None;
        }
        let inv: Vec<_> = g.iter().map(|v| v.inv()).collect();
        Self::from_grid(self.ctx, m, &inv).ok()
    }
    fn pullback(&self, s: &FourierShift) -> Self {
        let (bu, bv) = self.ctx.uv(s.b);
        self.map_modes(|m, n, c| c * Complex64::new(0.0, 2.0 * PI * (m as f64 * bu + n as f64 * bv)).exp())
    }
    fn map_derivative(s: &FourierShift) -> Self {
        Self::one(&s.ctx)
    }
    fn map_identity(ctx: &FourierCtx) -> FourierShift {
        FourierShift { ctx: *ctx, b: Complex64::new(0.0, 0.0) }
    }
    fn map_then(first: &FourierShift, second: &FourierShift) -> Result<FourierShift> {
        if first.ctx != second.ctx {
            return Err(Error::ChartMismatch("Fourier contexts differ".into()));
        }
        Ok(FourierShift { ctx: first.ctx, b: first.b + second.b })
    }
    fn map_inverse(s: &FourierShift) -> Result<FourierShift> {
        Ok(FourierShift { ctx: s.ctx, b: -s.b })
    }
    fn map_source(s: &FourierShift) -> FourierCtx {
        s.ctx
    }
    fn map_target(s: &FourierShift) -> FourierCtx {
        s.ctx
    }
    fn map_eq(a: &FourierShift, b: &FourierShift, tol: f64) -> bool {
        a.ctx == b.ctx && (a.b - b.b).norm() <= tol
    }
}

pub fn spectral_ddzbar(f: &FourierFn) -> FourierFn {
    f.ddxbar()
}

pub fn spectral_ddz(f: &FourierFn) -> FourierFn {
    f.ddx()
}

/// Splits φ = harmonic + ∂̄(primitive) with a zero-mean primitive.
pub fn dbar_solve(phi: &FourierFn) -> (FourierFn, Complex64) {
    let ctx = phi.ctx;
    let harmonic = phi.mean();
    let primitive = phi.map_modes(|m, n, c| if m == 0 && n == 0 { Complex64::new(0.0, 0.0) } else { c / ctx.dbar_symbol(m, n) });
    (primitive, harmonic)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> FourierCtx {
        FourierCtx::new(8, Complex64::new(0.3, 1.2)).unwrap()
    }

    #[test]
    fn dbar_symbol_matches_finite_differences() {
        // ∂/∂z̄ = ½(∂/∂X + i∂/∂Y) in z = X + iY, evaluated on a 256² grid step
        let c = ctx();
        let h = 1.0 / 256.0 * 1e-2;
        for &(m, n) in &[(1, 0), (0, 1), (2, -3), (-1, 1)] {
            let f = FourierFn::from_modes(c, [((m, n), Complex64::new(1.0, 0.0))]);
            for k in 0..5 {
                let z = c.point(k as f64 / 256.0 * 37.0 % 1.0, k as f64 * 0.13 % 1.0);
                let dx = (f.eval(z + h) - f.eval(z - h)) / (2.0 * h);
                let ih = Complex64::new(0.0, h);
                let dy = (f.eval(z + ih) - f.eval(z - ih)) / (2.0 * h);
                let fd_bar = (dx + Complex64::i() * dy) * 0.5;
                let fd_z = (dx - Complex64::i() * dy) * 0.5;
                assert!((fd_bar - f.ddxbar().eval(z)).norm() < 1e-6, "dbar ({m},{n})");
                assert!((fd_z - f.ddx().eval(z)).norm() < 1e-6, "dz ({m},{n})");
            }
        }
    }

    #[test]
    fn constant_has_zero_dbar() {
        let f = FourierFn::constant(ctx(), Complex64::new(2.0, -1.0));
        assert!(f.ddxbar().is_zero(1e-15));
    }

    #[test]
    fn grid_round_trip() {
        let c = ctx();
        let f = FourierFn::from_modes(c, [((1, 2), Complex64::new(0.5, 0.0)), ((-1, -2), Complex64::new(0.5, 0.0)), ((0, 3), Complex64::new(0.0, 1.0))]);
        let g = f.to_grid(32);
        let back = FourierFn::from_grid(c, 32, &g).unwrap();
        assert!(back.sub(&f).norm() < 1e-10);
        let z = c.point(3.0 / 32.0, 5.0 / 32.0);
        assert!((g[3 * 32 + 5] - f.eval(z)).norm() < 1e-10);
    }

    #[test]
    fn dbar_solve_examples() {
        let c = ctx();
        let (p, h) = dbar_solve(&FourierFn::zero(&c));
        assert!(p.is_zero(0.0) && h.norm() == 0.0);
        let k = Complex64::new(1.5, 2.0);
        let (p, h) = dbar_solve(&FourierFn::constant(c, k));
        assert!(p.is_zero(0.0) && (h - k).norm() == 0.0);
        let e10 = FourierFn::from_modes(c, [((1, 0), Complex64::new(1.0, 0.0))]);
        let (p, h) = dbar_solve(&e10);
        assert_eq!(h, Complex64::new(0.0, 0.0));
        assert!((p.mode(1, 0) - c.dbar_symbol(1, 0).inv()).norm() < 1e-15);
        assert!(spectral_ddzbar(&p).sub(&e10).norm() < 1e-12);
    }

    #[test]
    fn fft_and_direct_products_agree() {
        let c = FourierCtx::new(4, Complex64::new(0.0, 1.0)).unwrap();
        let f = FourierFn::from_modes(c, (-2..=2).flat_map(|m| (-2..=2).map(move |n| ((m, n), Complex64::new(m as f64 * 0.1 + 0.3, n as f64 * 0.2)))));
        let g = f.ddx().add(&FourierFn::one(&c));
        let a = f.mul_direct(&f.nonzero_modes(), &g.nonzero_modes());
        let b = f.mul_fft(&g);
        assert!(a.sub(&b).norm() < 1e-12);
    }
}
