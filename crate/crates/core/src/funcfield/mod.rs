//! Coefficient rings for superseries.
//!
//! Three backends implement [`CoefficientRing`]:
//! - [`LaurentFn`]: exact complex-rational Laurent polynomials on the two
//!   standard charts of ℙ¹.
//! - [`StripFn`]: holomorphic q-series Σ aₘ e^{2πimz} on annular charts of the
//!   torus ℂ/(ℤ+τℤ). These carry Čech data.
//! - [`FourierFn`]: doubly periodic smooth functions with modes (m,n) ∈ [−N,N]²
//!   and spectral ∂/∂z, ∂/∂z̄. These carry Dolbeault data.
//!
//! Each ring also fixes the classical chart maps it can pull back along.

mod fourier;
mod laurent;
mod strip;

pub(crate) use fourier::fft2;
pub use fourier::{dbar_solve, spectral_ddz, spectral_ddzbar, FourierCtx, FourierFn, FourierShift};
pub use laurent::{cq, cq_int, cq_to_c64, Chart, LaurentFn, LaurentMap, CQ};
pub use strip::{StripCtx, StripFn, StripShift};

use num_complex::Complex64;
use std::fmt::Debug;

use crate::{Error, Result};

/// Contract shared by all coefficient backends.
///
/// Operations are total on elements of the same context. Mixing contexts is a
/// programming error caught by [`CoefficientRing::check_same`] at the
/// superseries layer.
pub trait CoefficientRing: Clone + Debug + Send + Sync + 'static {
    type Ctx: Clone + Debug + PartialEq + Send + Sync;
    type Map: Clone + Debug + Send + Sync;

    /// Default tolerance used by zero tests. Zero means exact.
    const ZERO_TOL: f64;

    fn ctx(&self) -> Self::Ctx;
    fn zero(ctx: &Self::Ctx) -> Self;
    fn one(ctx: &Self::Ctx) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn scale_q(&self, num: i64, den: i64) -> Self;
    /// Multiplication by a floating complex constant. Exact rings convert the
    /// constant exactly from its binary value.
    fn scale_c64(&self, c: Complex64) -> Self;
    /// Holomorphic derivative ∂/∂x.
    fn ddx(&self) -> Self;
    /// Antiholomorphic derivative ∂/∂x̄.
    fn ddxbar(&self) -> Self;
    fn eval(&self, p: Complex64) -> Complex64;
    fn is_zero(&self, tol: f64) -> bool;
    /// Max-magnitude of the stored coefficients.
    fn norm(&self) -> f64;
    fn try_inv(&self) -> Option<Self>;

    /// Pullback g ↦ g∘m of a target-chart function to the source chart.
    fn pullback(&self, m: &Self::Map) -> Self;
    /// Derivative of the classical map, as a source-chart function.
    fn map_derivative(m: &Self::Map) -> Self;
    fn map_identity(ctx: &Self::Ctx) -> Self::Map;
    /// `first` then `second`.
    fn map_then(first: &Self::Map, second: &Self::Map) -> Result<Self::Map>;
    fn map_inverse(m: &Self::Map) -> Result<Self::Map>;
    fn map_source(m: &Self::Map) -> Self::Ctx;
    fn map_target(m: &Self::Map) -> Self::Ctx;
    fn map_eq(a: &Self::Map, b: &Self::Map, tol: f64) -> bool;

    fn check_same(&self, o: &Self) -> Result<()> {
        if self.ctx() == o.ctx() {
            Ok(())
        } else {
            Err(Error::Config(format!("ring mismatch: {:?} vs {:?}", self.ctx(), o.ctx())))
        }
    }

    fn is_zero_default(&self) -> bool {
        self.is_zero(Self::ZERO_TOL)
    }
}

/// Wronskian f′g − fg′.
pub fn wronskian<R: CoefficientRing>(f: &R, g: &R) -> Result<R> {
    f.check_same(g)?;
    Ok(f.ddx().mul(g).sub(&f.mul(&g.ddx())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FormType {
    Function,
    ZeroOne,
}

#[derive(Debug, Clone)]
pub enum FormBase {
    Fourier(FourierFn),
    Laurent(LaurentFn),
}

/// A function or dz̄-component, trivialized by a power of the spin frame.
#[derive(Debug, Clone)]
pub struct FormCoefficient {
    pub base: FormBase,
    pub form_type: FormType,
    pub bundle_weight: i32,
}

impl FormCoefficient {
    pub fn new(base: FormBase, form_type: FormType, bundle_weight: i32) -> Result<Self> {
        if let (FormBase::Laurent(l), FormType::ZeroOne) = (&base, form_type) {
            if !l.is_zero(0.0) {
                return Err(Error::Backend(
                    "holomorphic Laurent backend carries no nonzero (0,1)-forms".into(),
                ));
            }
        }
        Ok(Self { base, form_type, bundle_weight })
    }

    pub fn fourier(f: FourierFn, form_type: FormType, bundle_weight: i32) -> Self {
        Self { base: FormBase::Fourier(f), form_type, bundle_weight }
    }

    pub fn as_fourier(&self) -> Option<&FourierFn> {
        match &self.base {
            FormBase::Fourier(f) => Some(f),
            FormBase::Laurent(_) => None,
        }
    }
}
