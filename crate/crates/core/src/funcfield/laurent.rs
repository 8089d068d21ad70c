use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;

use super::CoefficientRing;
use crate::{Error, Result};

/// Exact complex rational.
pub type CQ = Complex<BigRational>;

pub fn cq(re_num: i64, re_den: i64, im_num: i64, im_den: i64) -> CQ {
    Complex::new(
        BigRational::new(BigInt::from(re_num), BigInt::from(re_den)),
        BigRational::new(BigInt::from(im_num), BigInt::from(im_den)),
    )
}

pub fn cq_int(re: i64, im: i64) -> CQ {
    cq(re, 1, im, 1)
}

pub fn cq_to_c64(z: &CQ) -> Complex64 {
    Complex64::new(z.re.to_f64().unwrap_or(f64::NAN), z.im.to_f64().unwrap_or(f64::NAN))
}

fn cq_pow(a: &CQ, e: i64) -> CQ {
    let mut base = if e < 0 { CQ::one() / a.clone() } else { a.clone() };
    let mut k = e.unsigned_abs();
    let mut acc = CQ::one();
    while k > 0 {
        if k & 1 == 1 {
            acc = acc * base.clone();
        }
        base = base.clone() * base;
        k >>= 1;
    }
    acc
}

fn cq_abs(z: &CQ) -> f64 {
    cq_to_c64(z).norm()
}

/// The two standard charts of ℙ¹: α with coordinate x, β with y = 1/x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Chart {
    Alpha,
    Beta,
}

/// Laurent polynomial with exact complex-rational coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentFn {
    coeffs: BTreeMap<i64, CQ>,
    chart: Chart,
}

impl LaurentFn {
    pub fn new(chart: Chart, coeffs: impl IntoIterator<Item = (i64, CQ)>) -> Self {
        let mut out = Self { coeffs: BTreeMap::new(), chart };
        for (e, c) in coeffs {
            out.add_term(e, c);
        }
        out
    }

    pub fn monomial(chart: Chart, e: i64, c: CQ) -> Self {
        Self::new(chart, [(e, c)])
    }

    /// The chart coordinate itself.
    pub fn coord(chart: Chart) -> Self {
        Self::monomial(chart, 1, CQ::one())
    }

    pub fn constant(chart: Chart, c: CQ) -> Self {
        Self::monomial(chart, 0, c)
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn coeffs(&self) -> &BTreeMap<i64, CQ> {
        &self.coeffs
    }

    pub fn coeff(&self, e: i64) -> CQ {
        self.coeffs.get(&e).cloned().unwrap_or_else(CQ::zero)
    }

    fn add_term(&mut self, e: i64, c: CQ) {
        if c.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(e).or_insert_with(CQ::zero);
        *entry = entry.clone() + c;
        if entry.is_zero() {
            self.coeffs.remove(&e);
        }
    }

    pub fn scale(&self, c: &CQ) -> Self {
        Self::new(self.chart, self.coeffs.iter().map(|(e, v)| (*e, v.clone() * c.clone())))
    }

    /// Restricts to the exponents accepted by `keep`.
    pub fn filter(&self, keep: impl Fn(i64) -> bool) -> Self {
        Self::new(self.chart, self.coeffs.iter().filter(|(e, _)| keep(**e)).map(|(e, v)| (*e, v.clone())))
    }

    pub fn with_chart(&self, chart: Chart) -> Self {
        Self { coeffs: self.coeffs.clone(), chart }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(&self.chart);
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    fn assert_chart(&self, o: &Self) {
        assert_eq!(self.chart, o.chart, "Laurent chart mismatch");
    }
}

/// Classical map x ↦ a·x^k from chart `src` to chart `dst`. Only k = ±1 is
/// invertible.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentMap {
    pub src: Chart,
    pub dst: Chart,
    pub a: CQ,
    pub k: i64,
}

impl LaurentMap {
    pub fn new(src: Chart, dst: Chart, a: CQ, k: i64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("constant maps are not chart maps".into()));
        }
        if a.is_zero() {
            return Err(Error::NotInvertible("zero scale factor".into()));
        }
        Ok(Self { src, dst, a, k })
    }

    /// y = 1/x from α to β.
    pub fn flip() -> Self {
        Self { src: Chart::Alpha, dst: Chart::Beta, a: CQ::one(), k: -1 }
    }
}

impl CoefficientRing for LaurentFn {
    type Ctx = Chart;
    type Map = LaurentMap;
    const ZERO_TOL: f64 = 0.0;

    fn ctx(&self) -> Chart {
        self.chart
    }
    fn zero(ctx: &Chart) -> Self {
        Self { coeffs: BTreeMap::new(), chart: *ctx }
    }
    fn one(ctx: &Chart) -> Self {
        Self::constant(*ctx, CQ::one())
    }
    fn add(&self, o: &Self) -> Self {
        self.assert_chart(o);
        let mut out = self.clone();
        for (e, c) in &o.coeffs {
            out.add_term(*e, c.clone());
        }
        out
    }
    fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    fn neg(&self) -> Self {
        Self::new(self.chart, self.coeffs.iter().map(|(e, c)| (*e, -c.clone())))
    }
    fn mul(&self, o: &Self) -> Self {
        self.assert_chart(o);
        let mut out = Self::zero(&self.chart);
        for (e1, c1) in &self.coeffs {
            for (e2, c2) in &o.coeffs {
                out.add_term(e1 + e2, c1.clone() * c2.clone());
            }
        }
        out
    }
    fn scale_c64(&self, c: Complex64) -> Self {
        let q = |x: f64| BigRational::from_float(x).unwrap_or_else(BigRational::zero);
        self.scale(&Complex::new(q(c.re), q(c.im)))
    }
    fn scale_q(&self, num: i64, den: i64) -> Self {
        self.scale(&cq(num, den, 0, 1))
    }
    fn ddx(&self) -> Self {
        Self::new(self.chart, self.coeffs.iter().map(|(e, c)| (e - 1, c.clone() * cq_int(*e, 0))))
    }
    fn ddxbar(&self) -> Self {
        Self::zero(&self.chart)
    }
    fn eval(&self, p: Complex64) -> Complex64 {
        self.coeffs.iter().map(|(e, c)| cq_to_c64(c) * p.powi(*e as i32)).sum()
    }
    fn is_zero(&self, _tol: f64) -> bool {
        self.coeffs.is_empty()
    }
    fn norm(&self) -> f64 {
        self.coeffs.values().map(cq_abs).fold(0.0, f64::max)
    }
    fn try_inv(&self) -> Option<Self> {
        if self.coeffs.len() != 1 {
            return None;
        }
        let (e, c) = self.coeffs.iter().next().unwrap();
        Some(Self::monomial(self.chart, -e, CQ::one() / c.clone()))
    }
    fn pullback(&self, m: &LaurentMap) -> Self {
        assert_eq!(self.chart, m.dst, "pullback chart mismatch");
        Self::new(m.src, self.coeffs.iter().map(|(e, c)| (e * m.k, c.clone() * cq_pow(&m.a, *e))))
    }
    fn map_derivative(m: &LaurentMap) -> Self {
        Self::monomial(m.src, m.k - 1, m.a.clone() * cq_int(m.k, 0))
    }
    fn map_identity(ctx: &Chart) -> LaurentMap {
        LaurentMap { src: *ctx, dst: *ctx, a: CQ::one(), k: 1 }
    }
    fn map_then(first: &LaurentMap, second: &LaurentMap) -> Result<LaurentMap> {
        if first.dst != second.src {
            return Err(Error::ChartMismatch(format!("{:?} → {:?}", first.dst, second.src)));
        }
        Ok(LaurentMap {
            src: first.src,
            dst: second.dst,
            a: second.a.clone() * cq_pow(&first.a, second.k),
            k: first.k * second.k,
        })
    }
    fn map_inverse(m: &LaurentMap) -> Result<LaurentMap> {
        let a = match m.k {
            1 => CQ::one() / m.a.clone(),
            -1 => m.a.clone(),
            k => return Err(Error::NotInvertible(format!("x ↦ a·x^{k} has no Laurent inverse"))),
        };
        Ok(LaurentMap { src: m.dst, dst: m.src, a, k: m.k })
    }
    fn map_source(m: &LaurentMap) -> Chart {
        m.src
    }
    fn map_target(m: &LaurentMap) -> Chart {
        m.dst
    }
    fn map_eq(a: &LaurentMap, b: &LaurentMap, _tol: f64) -> bool {
        a == b
    }
}

impl std::fmt::Display for LaurentFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let var = match self.chart {
            Chart::Alpha => "x",
            Chart::Beta => "y",
        };
        let mut first = true;
        for (e, c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let im_zero = c.im.is_zero();
            if im_zero {
                write!(f, "{}", c.re)?;
            } else if c.re.is_zero() {
                write!(f, "{}i", c.im)?;
            } else {
                let sign = if c.im.is_negative() { "-" } else { "+" };
                write!(f, "({}{}{}i)", c.re, sign, c.im.abs())?;
            }
            if *e != 0 {
                write!(f, "·{var}^{e}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcfield::wronskian;

    fn x() -> LaurentFn {
        LaurentFn::coord(Chart::Alpha)
    }

    #[test]
    fn wronskian_examples() {
        let one = LaurentFn::one(&Chart::Alpha);
        assert_eq!(wronskian(&one, &x()).unwrap(), LaurentFn::constant(Chart::Alpha, cq_int(-1, 0)));
        let x2 = x().mul(&x());
        assert_eq!(wronskian(&x(), &x2).unwrap(), x2.neg());
        let f = LaurentFn::new(Chart::Alpha, [(-2, cq_int(3, 1)), (4, cq(1, 2, 0, 1))]);
        assert!(wronskian(&f, &f).unwrap().is_zero(0.0));
    }

    #[test]
    fn flip_twice_is_identity() {
        let f = LaurentFn::new(Chart::Beta, [(-3, cq_int(2, 0)), (1, cq(0, 1, 5, 7))]);
        let back = LaurentMap { src: Chart::Beta, dst: Chart::Alpha, a: CQ::one(), k: -1 };
        let g = f.pullback(&LaurentMap::flip()).pullback(&back);
        assert_eq!(g, f);
    }

    #[test]
    fn map_inverse_composes_to_identity() {
        let m = LaurentMap::new(Chart::Alpha, Chart::Beta, cq(3, 2, -1, 1), -1).unwrap();
        let id = LaurentFn::map_then(&m, &LaurentFn::map_inverse(&m).unwrap()).unwrap();
        assert_eq!(id, LaurentFn::map_identity(&Chart::Alpha));
        let m = LaurentMap::new(Chart::Alpha, Chart::Alpha, cq(0, 1, 2, 1), 1).unwrap();
        let id = LaurentFn::map_then(&LaurentFn::map_inverse(&m).unwrap(), &m).unwrap();
        assert_eq!(id, LaurentFn::map_identity(&Chart::Alpha));
    }

    #[test]
    fn leibniz() {
        let f = LaurentFn::new(Chart::Alpha, [(-1, cq_int(1, 1)), (2, cq_int(3, 0))]);
        let g = LaurentFn::new(Chart::Alpha, [(-4, cq(1, 3, 0, 1)), (0, cq_int(0, 2))]);
        assert_eq!(f.mul(&g).ddx(), f.ddx().mul(&g).add(&f.mul(&g.ddx())));
    }

    #[test]
    fn monomial_inverse() {
        let z = LaurentFn::monomial(Chart::Alpha, -1, cq_int(0, 1));
        assert_eq!(z.mul(&z.try_inv().unwrap()), LaurentFn::one(&Chart::Alpha));
        assert!(x().add(&LaurentFn::one(&Chart::Alpha)).try_inv().is_none());
    }
}
