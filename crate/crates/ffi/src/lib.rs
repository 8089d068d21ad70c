//! C ABI over `srsdef`.
//!
//! Every entry point returns an `int` status (`SRSDEF_OK`, `SRSDEF_FAIL` for a
//! negative verdict, negative values for errors). On error the message is kept
//! per thread and can be fetched with `srsdef_last_error_message`. Strings
//! returned through out-pointers belong to the caller and are released with
//! `srsdef_string_free`; spec handles with `srsdef_spec_free`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use num_complex::Complex64;
use srsdef::analytic::{analytic_classes, find_gauge_tol};
use srsdef::atlas::{extension_class, find_equivalence_tol};
use srsdef::bridge::{algebraic_to_analytic, pairing, BridgeConfig, PairingKernel, TorusCover};
use srsdef::cli::{cmd_verify, convert_spec, Body, DeformationSpec, Direction, Options};
use srsdef::supernumber::xi;
use srsdef::Error;

pub const SRSDEF_OK: c_int = 0;
pub const SRSDEF_FAIL: c_int = 1;
pub const SRSDEF_ERR_NULL: c_int = -1;
pub const SRSDEF_ERR_UTF8: c_int = -2;
pub const SRSDEF_ERR_SCHEMA: c_int = -3;
pub const SRSDEF_ERR_IO: c_int = -4;
pub const SRSDEF_ERR_PRECONDITION: c_int = -5;
pub const SRSDEF_ERR_BACKEND: c_int = -6;
pub const SRSDEF_ERR_INVALID: c_int = -7;
pub const SRSDEF_ERR_PANIC: c_int = -8;

pub const SRSDEF_TO_ANALYTIC: c_int = 0;
pub const SRSDEF_TO_ALGEBRAIC: c_int = 1;

/// Opaque handle to a parsed deformation spec.
pub struct SrsdefSpec {
    inner: DeformationSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code_of(e: &Error) -> c_int {
    match e {
        Error::Schema { .. } => SRSDEF_ERR_SCHEMA,
        Error::Io(_) => SRSDEF_ERR_IO,
        Error::Precondition(_) | Error::NotSuperconformal(_) | Error::NotInvertible(_) => SRSDEF_ERR_PRECONDITION,
        Error::Backend(_) | Error::ChartMismatch(_) => SRSDEF_ERR_BACKEND,
        Error::Config(_) | Error::Parity(_) => SRSDEF_ERR_INVALID,
    }
}

type Fallible = std::result::Result<c_int, (c_int, String)>;

fn lib(e: Error) -> (c_int, String) {
    (code_of(&e), e.to_string())
}

fn guard(f: impl FnOnce() -> Fallible) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(c)) => c,
        Ok(Err((c, msg))) => {
            set_error(msg);
            c
        }
        Err(_) => {
            set_error("internal panic".into());
            SRSDEF_ERR_PANIC
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> std::result::Result<&'a str, (c_int, String)> {
    if p.is_null() {
        return Err((SRSDEF_ERR_NULL, format!("{what} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (SRSDEF_ERR_UTF8, format!("{what} is not UTF-8")))
}

unsafe fn spec_ref<'a>(p: *const SrsdefSpec) -> std::result::Result<&'a DeformationSpec, (c_int, String)> {
    p.as_ref().map(|s| &s.inner).ok_or((SRSDEF_ERR_NULL, "spec handle is NULL".into()))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) {
    if !out.is_null() {
        *out = CString::new(s.replace('\0', " ")).map_or(std::ptr::null_mut(), CString::into_raw);
    }
}

unsafe fn put_spec(out: *mut *mut SrsdefSpec, s: DeformationSpec) -> Fallible {
    if out.is_null() {
        return Err((SRSDEF_ERR_NULL, "output pointer is NULL".into()));
    }
    *out = Box::into_raw(Box::new(SrsdefSpec { inner: s }));
    Ok(SRSDEF_OK)
}

fn opt_tol(tol: f64) -> Option<f64> {
    (tol > 0.0).then_some(tol)
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn srsdef_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of this thread's last error message, or NULL. Free with
/// `srsdef_string_free`.
#[no_mangle]
pub extern "C" fn srsdef_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn srsdef_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a spec from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn srsdef_spec_from_json(json: *const c_char, out: *mut *mut SrsdefSpec) -> c_int {
    guard(|| {
        let text = read_str(json, "json")?;
        put_spec(out, DeformationSpec::from_json_str(text).map_err(lib)?)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn srsdef_spec_load(path: *const c_char, out: *mut *mut SrsdefSpec) -> c_int {
    guard(|| {
        let p = read_str(path, "path")?;
        put_spec(out, DeformationSpec::load(Path::new(p)).map_err(lib)?)
    })
}

/// # Safety
/// `spec` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn srsdef_spec_free(spec: *mut SrsdefSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Serializes a spec back to JSON.
///
/// # Safety
/// `spec` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn srsdef_spec_to_json(spec: *const SrsdefSpec, out: *mut *mut c_char) -> c_int {
    guard(|| {
        let s = spec_ref(spec)?;
        if out.is_null() {
            return Err((SRSDEF_ERR_NULL, "output pointer is NULL".into()));
        }
        put_string(out, s.to_json_string());
        Ok(SRSDEF_OK)
    })
}

/// Number of odd parameters.
///
/// # Safety
/// `spec` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn srsdef_spec_n(spec: *const SrsdefSpec, out: *mut usize) -> c_int {
    guard(|| {
        let s = spec_ref(spec)?;
        if out.is_null() {
            return Err((SRSDEF_ERR_NULL, "output pointer is NULL".into()));
        }
        *out = s.n();
        Ok(SRSDEF_OK)
    })
}

/// Runs the atlas or analytic checks. Returns `SRSDEF_OK` on pass and
/// `SRSDEF_FAIL` otherwise; `report` (nullable) receives the JSON report.
/// `tol <= 0` selects the default tolerance.
///
/// # Safety
/// `spec` must be a live handle; `report` NULL or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn srsdef_verify(spec: *const SrsdefSpec, tol: f64, report: *mut *mut c_char) -> c_int {
    guard(|| {
        let s = spec_ref(spec)?;
        let o = cmd_verify(s, &Options { tol: opt_tol(tol), ..Options::default() });
        put_string(report, o.report.to_string());
        Ok(if o.code == 0 { SRSDEF_OK } else { SRSDEF_FAIL })
    })
}

/// Converts a torus spec to the other description. `grid`/`cutoff` of 0
/// select the defaults (256, 64).
///
/// # Safety
/// `spec` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn srsdef_convert(spec: *const SrsdefSpec, direction: c_int, grid: usize, cutoff: usize, out: *mut *mut SrsdefSpec) -> c_int {
    guard(|| {
        let s = spec_ref(spec)?;
        let dir = match direction {
            SRSDEF_TO_ANALYTIC => Direction::ToAnalytic,
            SRSDEF_TO_ALGEBRAIC => Direction::ToAlgebraic,
            d => return Err((SRSDEF_ERR_INVALID, format!("unknown direction {d}"))),
        };
        let opts = Options { grid: (grid > 0).then_some(grid), cutoff: (cutoff > 0).then_some(cutoff), ..Options::default() };
        let (converted, _) = convert_spec(s, dir, &opts).map_err(lib)?;
        put_spec(out, converted)
    })
}

/// Searches an equivalence (algebraic) or gauge (analytic). `found` is set to
/// 1 or 0.
///
/// # Safety
/// Both handles must be live; `found` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn srsdef_equivalent(a: *const SrsdefSpec, b: *const SrsdefSpec, tol: f64, found: *mut c_int) -> c_int {
    guard(|| {
        let (x, y) = (spec_ref(a)?, spec_ref(b)?);
        if found.is_null() {
            return Err((SRSDEF_ERR_NULL, "found pointer is NULL".into()));
        }
        let hit = match (&x.body, &y.body) {
            (Body::P1(p), Body::P1(q)) => find_equivalence_tol(p, q, opt_tol(tol).unwrap_or(0.0)).map_err(lib)?.witness.is_some(),
            (Body::Torus(p), Body::Torus(q)) => {
                if !p.base.same_as(&q.base) {
                    return Err((SRSDEF_ERR_BACKEND, "different bases".into()));
                }
                find_equivalence_tol(p, q, opt_tol(tol).unwrap_or(1e-6)).map_err(lib)?.witness.is_some()
            }
            (Body::Analytic(p), Body::Analytic(q)) => find_gauge_tol(p, q, opt_tol(tol).unwrap_or(1e-8)).map_err(lib)?.witness.is_some(),
            _ => return Err((SRSDEF_ERR_BACKEND, "specs are of different kinds".into())),
        };
        *found = hit as c_int;
        Ok(SRSDEF_OK)
    })
}

/// First-order class of parameter `index` (1-based): the extension-class
/// coordinate of an algebraic torus atlas, or the harmonic part of χ for an
/// analytic spec.
///
/// # Safety
/// `spec` must be a live handle; `re`, `im` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn srsdef_class(spec: *const SrsdefSpec, index: usize, re: *mut f64, im: *mut f64) -> c_int {
    guard(|| {
        let s = spec_ref(spec)?;
        if re.is_null() || im.is_null() {
            return Err((SRSDEF_ERR_NULL, "output pointer is NULL".into()));
        }
        if index == 0 || index > s.n() {
            return Err((SRSDEF_ERR_INVALID, format!("index {index} outside 1..{}", s.n())));
        }
        let z: Complex64 = match &s.body {
            Body::P1(_) => Complex64::new(0.0, 0.0),
            Body::Torus(d) => extension_class(d).map_err(lib)?.class.get(xi(index)).first().copied().unwrap_or_default(),
            Body::Analytic(a) => analytic_classes(a).map_err(lib)?.chi[index - 1],
        };
        *re = z.re;
        *im = z.im;
        Ok(SRSDEF_OK)
    })
}

/// Pairing against the default spectral kernel (R = 1, zero mode 0) on an
/// `grid`×`grid` product grid. Algebraic torus specs are converted first.
///
/// # Safety
/// `spec` must be a live handle; output pointers valid (`compat` may be NULL).
#[no_mangle]
pub unsafe extern "C" fn srsdef_pairing(spec: *const SrsdefSpec, grid: usize, re: *mut f64, im: *mut f64, compat: *mut f64) -> c_int {
    guard(|| {
        let s = spec_ref(spec)?;
        if re.is_null() || im.is_null() {
            return Err((SRSDEF_ERR_NULL, "output pointer is NULL".into()));
        }
        let a = match &s.body {
            Body::Analytic(a) => a.clone(),
            Body::Torus(d) => {
                let cover = TorusCover::new(&d.base, BridgeConfig::default()).map_err(lib)?;
                algebraic_to_analytic(&cover, d).map_err(lib)?
            }
            Body::P1(_) => return Err((SRSDEF_ERR_BACKEND, "the pairing needs the torus backend".into())),
        };
        let m = if grid == 0 { 64 } else { grid };
        let k = PairingKernel::spectral(a.ctx.tau, m, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)).map_err(lib)?;
        let v = pairing(&a, &k).map_err(lib)?;
        *re = v.total.re;
        *im = v.total.im;
        if !compat.is_null() {
            *compat = k.compat_residual;
        }
        Ok(SRSDEF_OK)
    })
}
