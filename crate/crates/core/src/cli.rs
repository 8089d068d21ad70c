//! Deformation-spec files and the `srsdef` command-line driver.
//!
//! A spec file is JSON with schema tag `srsdef/1`:
//!
//! ```json
//! {
//!   "schema": "srsdef/1",
//!   "header": { "backend": "torus", "n": 2, "tau": [0.2, 0.9], "N": 12 },
//!   "config": { "tol": 1e-8 },
//!   "algebraic": { "transitions": [
//!     { "intersection": "U0→U1:A", "psi": { "1": [[0, [1.0, 0.0]]] } }
//!   ] }
//! }
//! ```
//!
//! Exactly one of `algebraic` / `analytic` is present. Complex numbers are
//! `[re, im]`. Coefficient lists depend on the backend:
//! - `p1`: `[k, [re_num, re_den], [im_num, im_den]]` for the term of x^k,
//!   integers as JSON numbers or decimal strings;
//! - `torus` algebraic: `[m, [re, im]]` for e^{2πimz};
//! - `torus` analytic: `[m, n, [re, im]]` for e^{2πi(mu+nv)}.
//!
//! Exit codes: 0 pass, 1 fail, 2 usage, IO or schema error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytic::{analytic_classes, check_analytic_deformation_tol, find_gauge_tol, AnalyticDeformation, GaugeVectorField};
use crate::atlas::{
    default_tol, extension_class, find_equivalence_tol, obstruction, split_verdict, verify_atlas_tol, wronskian_check, AlgebraicDeformation,
    BaseCurve, CechRing, GaugeCochain, SplitVerdict, TransitionData,
};
use crate::bridge::{algebraic_to_analytic, analytic_to_algebraic, pairing, BridgeConfig, PairingKernel, TorusCover};
use crate::funcfield::{Chart, CoefficientRing, FourierCtx, FourierFn, LaurentFn, StripCtx, StripFn, CQ};
use crate::supernumber::{mono_name, SuperSeries};
use crate::{Error, Result};

pub const SCHEMA: &str = "srsdef/1";
const DEFAULT_STRIP_MODES: usize = 12;
const DEFAULT_KERNEL_GRID: usize = 64;

fn schema_err(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { location: location.into(), message: message.into() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    schema: String,
    header: RawHeader,
    #[serde(default, skip_serializing_if = "RawConfig::is_empty")]
    config: RawConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    algebraic: Option<RawAlgebraic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    analytic: Option<RawAnalytic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeader {
    backend: String,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<[f64; 2]>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    strip_modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<usize>,
}

/// Tolerances and resolutions; command-line flags override these.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl RawConfig {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlgebraic {
    transitions: Vec<RawTransition>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    intersection: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    psi: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    f: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    g: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    zeta2: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalytic {
    #[serde(default)]
    chi: BTreeMap<String, Value>,
    #[serde(default)]
    h: BTreeMap<String, Value>,
}

/// Parsed contents of a spec file.
#[derive(Debug, Clone)]
pub enum Body {
    P1(AlgebraicDeformation<LaurentFn>),
    Torus(AlgebraicDeformation<StripFn>),
    Analytic(AnalyticDeformation),
}

#[derive(Debug, Clone)]
pub struct DeformationSpec {
    pub body: Body,
    pub config: RawConfig,
    /// Kernel file, relative to the spec file.
    pub kernel: Option<String>,
}

fn c64_json(c: Complex64) -> Value {
    json!([c.re, c.im])
}

fn int_json(b: &BigInt) -> Value {
    match b.to_i64() {
        Some(v) => json!(v),
        None => json!(b.to_string()),
    }
}

fn rat_json(r: &BigRational) -> Value {
    json!([int_json(r.numer()), int_json(r.denom())])
}

pub fn laurent_json(f: &LaurentFn) -> Value {
    Value::Array(f.coeffs().iter().map(|(k, c)| json!([k, rat_json(&c.re), rat_json(&c.im)])).collect())
}

pub fn strip_json(f: &StripFn) -> Value {
    Value::Array(f.modes().filter(|(_, c)| c.norm() != 0.0).map(|(m, c)| json!([m, c64_json(c)])).collect())
}

pub fn fourier_json(f: &FourierFn) -> Value {
    Value::Array(f.nonzero_modes().into_iter().map(|((m, n), c)| json!([m, n, c64_json(c)])).collect())
}

fn parse_int(v: &Value, loc: &str) -> Result<BigInt> {
    match v {
        Value::Number(n) => n.as_i64().map(BigInt::from).ok_or_else(|| schema_err(loc, "expected an integer")),
        Value::String(s) => BigInt::from_str(s.trim()).map_err(|_| schema_err(loc, format!("'{s}' is not an integer"))),
        _ => Err(schema_err(loc, "expected an integer")),
    }
}

fn parse_rat(v: &Value, loc: &str) -> Result<BigRational> {
    let a = v.as_array().filter(|a| a.len() == 2).ok_or_else(|| schema_err(loc, "expected [numerator, denominator]"))?;
    let (p, q) = (parse_int(&a[0], loc)?, parse_int(&a[1], loc)?);
    if q.is_zero() {
        return Err(schema_err(loc, "zero denominator"));
    }
    Ok(BigRational::new(p, q))
}

fn parse_c64(v: &Value, loc: &str) -> Result<Complex64> {
    let a = v.as_array().filter(|a| a.len() == 2).ok_or_else(|| schema_err(loc, "expected [re, im]"))?;
    let re = a[0].as_f64().ok_or_else(|| schema_err(loc, "re is not a number"))?;
    let im = a[1].as_f64().ok_or_else(|| schema_err(loc, "im is not a number"))?;
    Ok(Complex64::new(re, im))
}

fn parse_i64(v: &Value, loc: &str) -> Result<i64> {
    v.as_i64().ok_or_else(|| schema_err(loc, "expected an integer index"))
}

fn terms<'a>(v: &'a Value, loc: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| schema_err(loc, "expected a list of terms"))
}

fn parse_laurent(v: &Value, loc: &str) -> Result<LaurentFn> {
    let mut out = Vec::new();
    for (t, term) in terms(v, loc)?.iter().enumerate() {
        let loc = format!("{loc}[{t}]");
        let a = term.as_array().filter(|a| a.len() == 3).ok_or_else(|| schema_err(&loc, "expected [k, re, im]"))?;
        let c: CQ = Complex::new(parse_rat(&a[1], &loc)?, parse_rat(&a[2], &loc)?);
        out.push((parse_i64(&a[0], &loc)?, c));
    }
    Ok(LaurentFn::new(Chart::Alpha, out))
}

fn parse_strip(v: &Value, ctx: StripCtx, loc: &str) -> Result<StripFn> {
    let mut out = Vec::new();
    for (t, term) in terms(v, loc)?.iter().enumerate() {
        let loc = format!("{loc}[{t}]");
        let a = term.as_array().filter(|a| a.len() == 2).ok_or_else(|| schema_err(&loc, "expected [m, [re, im]]"))?;
        let m = parse_i64(&a[0], &loc)?;
        if m.unsigned_abs() as usize > ctx.n {
            return Err(schema_err(&loc, format!("mode {m} beyond N = {}", ctx.n)));
        }
        out.push((m, parse_c64(&a[1], &loc)?));
    }
    Ok(StripFn::from_modes(ctx, out))
}

fn parse_fourier(v: &Value, ctx: FourierCtx, loc: &str) -> Result<FourierFn> {
    let mut out = Vec::new();
    for (t, term) in terms(v, loc)?.iter().enumerate() {
        let loc = format!("{loc}[{t}]");
        let a = term.as_array().filter(|a| a.len() == 3).ok_or_else(|| schema_err(&loc, "expected [m, n, [re, im]]"))?;
        let (m, n) = (parse_i64(&a[0], &loc)?, parse_i64(&a[1], &loc)?);
        if m.unsigned_abs().max(n.unsigned_abs()) as usize > ctx.n {
            return Err(schema_err(&loc, format!("mode ({m},{n}) beyond cutoff {}", ctx.n)));
        }
        out.push(((m, n), parse_c64(&a[2], &loc)?));
    }
    Ok(FourierFn::from_modes(ctx, out))
}

fn parse_index(key: &str, n: usize, loc: &str) -> Result<usize> {
    match key.trim().parse::<usize>() {
        Ok(i) if (1..=n).contains(&i) => Ok(i),
        _ => Err(schema_err(loc, format!("index '{key}' outside 1..{n}"))),
    }
}

fn parse_pair(key: &str, n: usize, loc: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = key.split(',').collect();
    if parts.len() == 2 {
        if let (Ok(i), Ok(j)) = (parts[0].trim().parse::<usize>(), parts[1].trim().parse::<usize>()) {
            if i >= 1 && i < j && j <= n {
                return Ok((i, j));
            }
        }
    }
    Err(schema_err(loc, format!("pair '{key}' must be \"i,j\" with 1 ≤ i < j ≤ {n}")))
}

fn parse_transitions<R: CechRing>(
    base: &BaseCurve<R>,
    n: usize,
    raw: &RawAlgebraic,
    coeff: impl Fn(&Value, &str) -> Result<R>,
) -> Result<AlgebraicDeformation<R>> {
    let mut data: Vec<Option<TransitionData<R>>> = vec![None; base.intersections.len()];
    for (t, tr) in raw.transitions.iter().enumerate() {
        let loc = format!("algebraic.transitions[{t}]");
        let e = (0..base.intersections.len())
            .find(|e| base.label(*e) == tr.intersection)
            .ok_or_else(|| schema_err(&loc, format!("unknown intersection '{}'", tr.intersection)))?;
        if data[e].is_some() {
            return Err(schema_err(&loc, format!("intersection '{}' listed twice", tr.intersection)));
        }
        let mut d = TransitionData::default();
        for (k, v) in &tr.psi {
            let l = format!("{loc}.psi.{k}");
            d.psi.insert(parse_index(k, n, &l)?, coeff(v, &l)?);
        }
        for (k, v) in &tr.f {
            let l = format!("{loc}.f.{k}");
            d.f.insert(parse_index(k, n, &l)?, coeff(v, &l)?);
        }
        for (k, v) in &tr.g {
            let l = format!("{loc}.g.{k}");
            d.g.insert(parse_pair(k, n, &l)?, coeff(v, &l)?);
        }
        for (k, v) in &tr.zeta2 {
            let l = format!("{loc}.zeta2.{k}");
            d.zeta2.insert(parse_pair(k, n, &l)?, coeff(v, &l)?);
        }
        data[e] = Some(d);
    }
    let data: Vec<_> = data.into_iter().map(|d| d.unwrap_or_default()).collect();
    AlgebraicDeformation::from_raw(base, n, &data).map_err(|e| schema_err("algebraic", e.to_string()))
}

fn raw_transitions<R: CechRing>(d: &AlgebraicDeformation<R>, coeff: impl Fn(&R) -> Value) -> RawAlgebraic {
    let transitions = (0..d.transitions.len())
        .map(|e| {
            let t = d.data(e);
            RawTransition {
                intersection: d.base.label(e),
                psi: t.psi.iter().map(|(i, v)| (i.to_string(), coeff(v))).collect(),
                f: t.f.iter().map(|(i, v)| (i.to_string(), coeff(v))).collect(),
                g: t.g.iter().map(|((i, j), v)| (format!("{i},{j}"), coeff(v))).collect(),
                zeta2: t.zeta2.iter().map(|((i, j), v)| (format!("{i},{j}"), coeff(v))).collect(),
            }
        })
        .collect();
    RawAlgebraic { transitions }
}

fn header_tau(h: &RawHeader) -> Result<Complex64> {
    let t = h.tau.ok_or_else(|| schema_err("header.tau", "torus backend needs tau"))?;
    if !(t[1] > 0.0) {
        return Err(schema_err("header.tau", "Im τ must be positive"));
    }
    Ok(Complex64::new(t[0], t[1]))
}

impl DeformationSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawFile = serde_json::from_str(text).map_err(|e| schema_err(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        if raw.schema != SCHEMA {
            return Err(schema_err("schema", format!("expected '{SCHEMA}', got '{}'", raw.schema)));
        }
        let h = &raw.header;
        if h.n == 0 {
            return Err(schema_err("header.n", "n must be at least 1"));
        }
        let body = match (&raw.algebraic, &raw.analytic) {
            (Some(_), Some(_)) => return Err(schema_err("", "exactly one of 'algebraic' and 'analytic' may be present")),
            (None, None) => return Err(schema_err("", "missing 'algebraic' or 'analytic' section")),
            (Some(alg), None) => match h.backend.as_str() {
                "p1" => Body::P1(parse_transitions(&BaseCurve::p1(), h.n, alg, parse_laurent)?),
                "torus" => {
                    let tau = header_tau(h)?;
                    let base = BaseCurve::torus(tau, h.strip_modes.unwrap_or(DEFAULT_STRIP_MODES)).map_err(|e| schema_err("header", e.to_string()))?;
                    let ctx = base.charts[0].ctx;
                    Body::Torus(parse_transitions(&base, h.n, alg, |v, l| parse_strip(v, ctx, l))?)
                }
                b => return Err(schema_err("header.backend", format!("unknown backend '{b}' (p1 or torus)"))),
            },
            (None, Some(an)) => {
                if h.backend != "torus" {
                    return Err(schema_err("header.backend", "analytic sections need the torus backend"));
                }
                let tau = header_tau(h)?;
                let cutoff = h.cutoff.ok_or_else(|| schema_err("header.cutoff", "analytic sections need a Fourier cutoff"))?;
                let ctx = FourierCtx::new(cutoff, tau).map_err(|e| schema_err("header", e.to_string()))?;
                let mut chi = BTreeMap::new();
                for (k, v) in &an.chi {
                    let l = format!("analytic.chi.{k}");
                    chi.insert(parse_index(k, h.n, &l)?, parse_fourier(v, ctx, &l)?);
                }
                let mut hh = BTreeMap::new();
                for (k, v) in &an.h {
                    let l = format!("analytic.h.{k}");
                    hh.insert(parse_pair(k, h.n, &l)?, parse_fourier(v, ctx, &l)?);
                }
                Body::Analytic(AnalyticDeformation::new(ctx, h.n, chi, hh).map_err(|e| schema_err("analytic", e.to_string()))?)
            }
        };
        Ok(Self { body, config: raw.config, kernel: raw.kernel })
    }

    fn to_raw(&self) -> RawFile {
        let mut header = RawHeader { backend: "torus".into(), n: 0, tau: None, strip_modes: None, cutoff: None, grid: None };
        let (mut algebraic, mut analytic) = (None, None);
        match &self.body {
            Body::P1(d) => {
                header.backend = "p1".into();
                header.n = d.n();
                algebraic = Some(raw_transitions(d, laurent_json));
            }
            Body::Torus(d) => {
                let t = d.base.tau();
                header.n = d.n();
                header.tau = Some([t.re, t.im]);
                header.strip_modes = Some(d.base.charts[0].ctx.n);
                algebraic = Some(raw_transitions(d, strip_json));
            }
            Body::Analytic(a) => {
                header.n = a.n;
                header.tau = Some([a.ctx.tau.re, a.ctx.tau.im]);
                header.cutoff = Some(a.ctx.n);
                analytic = Some(RawAnalytic {
                    chi: a.chi.iter().map(|(i, f)| (i.to_string(), fourier_json(f))).collect(),
                    h: a.h.iter().map(|((i, j), f)| (format!("{i},{j}"), fourier_json(f))).collect(),
                });
            }
        }
        RawFile { schema: SCHEMA.into(), header, config: self.config.clone(), algebraic, analytic, kernel: self.kernel.clone() }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("spec values serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        match &self.body {
            Body::P1(d) => d.n(),
            Body::Torus(d) => d.n(),
            Body::Analytic(a) => a.n,
        }
    }

    fn kind(&self) -> &'static str {
        match self.body {
            Body::Analytic(_) => "analytic",
            _ => "algebraic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    ToAnalytic,
    ToAlgebraic,
}

#[derive(Debug, Parser)]
#[command(name = "srsdef", version, about = "Second-order deformations of super Riemann surfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
    /// Tolerance for pass/fail decisions.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Grid size for conversions (M×M) or for the default pairing kernel.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Fourier cutoff N for converted analytic data.
    #[arg(long, global = true)]
    pub cutoff: Option<usize>,
    /// Pairing kernel file.
    #[arg(long, global = true)]
    pub kernel: Option<PathBuf>,
    /// Output file for `convert`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Emit one JSON object instead of text lines.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Check an atlas (superconformal relations, inverses, Wronskian) or an analytic deformation.
    Verify { path: PathBuf },
    /// Convert between algebraic and analytic descriptions (torus only).
    Convert {
        path: PathBuf,
        #[arg(long, value_enum)]
        direction: Direction,
    },
    /// Search an equivalence (algebraic) or gauge (analytic) between two files.
    Equiv { first: PathBuf, second: PathBuf },
    /// Print the primary obstruction, its class and the split verdict.
    Obstruction { path: PathBuf },
    /// Evaluate the pairing against a kernel.
    Pairing { path: PathBuf },
    /// Convert to the other side and back, then search an equivalence with the input.
    Roundtrip { path: PathBuf },
}

/// Exit code and report of one command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub report: Value,
}

impl Outcome {
    fn new(code: i32, command: &str, mut report: Value) -> Self {
        report["command"] = json!(command);
        report["status"] = json!(match code {
            0 => "pass",
            1 => "fail",
            _ => "error",
        });
        Self { code, report }
    }

    fn error(command: &str, e: &Error) -> Self {
        let code = match e {
            Error::Precondition(_) | Error::NotSuperconformal(_) | Error::NotInvertible(_) => 1,
            _ => 2,
        };
        let mut report = json!({ "error": e.to_string() });
        if let Error::Schema { location, .. } = e {
            report["location"] = json!(location);
        }
        Self::new(code, command, report)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub tol: Option<f64>,
    pub grid: Option<usize>,
    pub cutoff: Option<usize>,
    pub kernel: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Options {
    fn tol(&self, spec: &DeformationSpec) -> Option<f64> {
        self.tol.or(spec.config.tol)
    }

    fn bridge(&self, spec: &DeformationSpec) -> BridgeConfig {
        let d = BridgeConfig::default();
        BridgeConfig {
            grid: self.grid.or(spec.config.grid).unwrap_or(d.grid),
            cutoff: self.cutoff.or(spec.config.cutoff).unwrap_or(d.cutoff),
            delta: spec.config.delta.unwrap_or(d.delta),
        }
    }
}

fn series_json<R: CoefficientRing>(s: &SuperSeries<R>, coeff: &impl Fn(&R) -> Value) -> Value {
    Value::Object(s.terms().iter().map(|(m, c)| (mono_name(*m), coeff(c))).collect())
}

fn gauge_json<R: CechRing>(base: &BaseCurve<R>, w: &GaugeCochain<R>, coeff: impl Fn(&R) -> Value) -> Value {
    let charts: Vec<Value> = (0..base.charts.len())
        .map(|a| {
            json!({
                "chart": base.charts[a].name,
                "w": w.w[a].iter().map(|(i, v)| (i.to_string(), coeff(v))).collect::<serde_json::Map<_, _>>(),
                "u": w.u[a].iter().map(|((i, j), v)| (format!("{i},{j}"), coeff(v))).collect::<serde_json::Map<_, _>>(),
            })
        })
        .collect();
    Value::Array(charts)
}

fn gauge_field_json(nu: &GaugeVectorField) -> Value {
    json!({
        "nu1": nu.nu1.iter().map(|(i, v)| (i.to_string(), fourier_json(v))).collect::<serde_json::Map<_, _>>(),
        "nu2": nu.nu2.iter().map(|((i, j), v)| (format!("{i},{j}"), fourier_json(v))).collect::<serde_json::Map<_, _>>(),
    })
}

fn class_json(c: &crate::atlas::CohomologyClass) -> Value {
    Value::Object(c.values.iter().map(|(m, v)| (mono_name(*m), Value::Array(v.iter().map(|z| c64_json(*z)).collect()))).collect())
}

fn verify_algebraic<R: CechRing>(d: &AlgebraicDeformation<R>, tol: Option<f64>) -> (bool, Value) {
    let rep = verify_atlas_tol(d, tol.unwrap_or_else(default_tol::<R>));
    let wr = wronskian_check(d);
    let failures: Vec<Value> = rep
        .failures()
        .map(|f| json!({ "intersection": f.label, "check": f.check, "relation": f.relation, "order": f.order, "residual": f.residual }))
        .chain(wr.entries.iter().filter(|e| e.norm > 1e-8).map(|e| {
            json!({ "intersection": e.label, "check": "wronskian", "relation": format!("Wr(psi{},psi{})", e.i, e.j), "order": 2, "residual": e.norm })
        }))
        .collect();
    let ok = rep.ok && wr.ok;
    (ok, json!({ "kind": "algebraic", "ok": ok, "tol": rep.tol, "atlas_ok": rep.ok, "wronskian_ok": wr.ok, "failures": failures, "checks": rep.checks.len() }))
}

pub fn cmd_verify(spec: &DeformationSpec, opts: &Options) -> Outcome {
    let (ok, report) = match &spec.body {
        Body::P1(d) => verify_algebraic(d, opts.tol(spec)),
        Body::Torus(d) => verify_algebraic(d, opts.tol(spec)),
        Body::Analytic(a) => {
            let rep = check_analytic_deformation_tol(a, opts.tol(spec).unwrap_or(1e-8));
            (rep.ok, json!({ "kind": "analytic", "ok": rep.ok, "tol": rep.tol, "grid": rep.grid, "wronskian": rep.entries }))
        }
    };
    Outcome::new(if ok { 0 } else { 1 }, "verify", report)
}

fn chi_classes(cover: &TorusCover, a: &AnalyticDeformation) -> Value {
    // Čech units: class of ψⁱ = Dol⁻¹(2χⁱ)
    Value::Array((1..=a.n).map(|i| c64_json(cover.dolbeault_class(&a.chi(i)) * 2.0)).collect())
}

/// Converts in memory; the report carries the classes of the result.
pub fn convert_spec(spec: &DeformationSpec, direction: Direction, opts: &Options) -> Result<(DeformationSpec, Value)> {
    let cfg = opts.bridge(spec);
    let (converted, report) = match (direction, &spec.body) {
        (Direction::ToAnalytic, Body::P1(_)) => return Err(Error::Precondition("the ℙ¹ backend has no smooth (0,1)-forms".into())),
        (Direction::ToAnalytic, Body::Torus(d)) => {
            let cover = TorusCover::new(&d.base, cfg)?;
            let a = algebraic_to_analytic(&cover, d)?;
            let cls = analytic_classes(&a)?;
            let rep = check_analytic_deformation_tol(&a, opts.tol(spec).unwrap_or(1e-8));
            let report = json!({
                "direction": "to-analytic",
                "chi_class": chi_classes(&cover, &a),
                "chi_harmonic": cls.chi.iter().map(|z| c64_json(*z)).collect::<Vec<_>>(),
                "h_harmonic": cls.h_normalized.iter().map(|z| c64_json(*z)).collect::<Vec<_>>(),
                "normalization": c64_json(cover.normalization),
                "reverify_ok": rep.ok,
            });
            (Body::Analytic(a), report)
        }
        (Direction::ToAlgebraic, Body::Analytic(a)) => {
            let base = BaseCurve::torus(a.ctx.tau, DEFAULT_STRIP_MODES)?;
            let cover = TorusCover::new(&base, cfg)?;
            let d = analytic_to_algebraic(&cover, a)?;
            let ext = extension_class(&d)?;
            let rep = verify_atlas_tol(&d, default_tol::<StripFn>());
            let report = json!({
                "direction": "to-algebraic",
                "extension_class": class_json(&ext.class),
                "reverify_ok": rep.ok && wronskian_check(&d).ok,
            });
            (Body::Torus(d), report)
        }
        _ => return Err(Error::Config(format!("{} file cannot be converted {:?}", spec.kind(), direction))),
    };
    Ok((DeformationSpec { body: converted, config: spec.config.clone(), kernel: spec.kernel.clone() }, report))
}

pub fn cmd_convert(spec: &DeformationSpec, direction: Direction, opts: &Options) -> Outcome {
    let run = || -> Result<Outcome> {
        let out = opts.out.as_ref().ok_or_else(|| Error::Config("convert needs --out".into()))?;
        let (out_spec, mut report) = convert_spec(spec, direction, opts)?;
        out_spec.save(out)?;
        report["out"] = json!(out.display().to_string());
        let ok = report["reverify_ok"].as_bool().unwrap_or(false);
        Ok(Outcome::new(if ok { 0 } else { 1 }, "convert", report))
    };
    run().unwrap_or_else(|e| Outcome::error("convert", &e))
}

fn equiv_algebraic<R: CechRing>(d1: &AlgebraicDeformation<R>, d2: &AlgebraicDeformation<R>, tol: Option<f64>, coeff: impl Fn(&R) -> Value) -> Result<Outcome> {
    if !d1.base.same_as(&d2.base) || d1.n() != d2.n() {
        return Err(Error::Backend("files describe different bases or parameter counts".into()));
    }
    let tol = tol.unwrap_or_else(|| if default_tol::<R>() == 0.0 { 0.0 } else { 1e-6 });
    let out = find_equivalence_tol(d1, d2, tol)?;
    let mut report = json!({ "kind": "algebraic", "class_difference": class_json(&out.class_difference), "residual": out.residual });
    let code = match &out.witness {
        Some(w) => {
            report["witness"] = gauge_json(&d1.base, w, coeff);
            0
        }
        None => {
            report["failed_order"] = json!(out.failed_order);
            1
        }
    };
    Ok(Outcome::new(code, "equiv", report))
}

pub fn cmd_equiv(s1: &DeformationSpec, s2: &DeformationSpec, opts: &Options) -> Outcome {
    let tol = opts.tol.or(s1.config.tol);
    let run = || -> Result<Outcome> {
        match (&s1.body, &s2.body) {
            (Body::P1(a), Body::P1(b)) => equiv_algebraic(a, b, tol, laurent_json),
            (Body::Torus(a), Body::Torus(b)) => equiv_algebraic(a, b, tol, strip_json),
            (Body::Analytic(a), Body::Analytic(b)) => {
                if a.ctx != b.ctx || a.n != b.n {
                    return Err(Error::Backend("analytic files differ in τ, cutoff or n".into()));
                }
                let out = find_gauge_tol(a, b, tol.unwrap_or(1e-8))?;
                let diff: serde_json::Map<String, Value> = out.difference.iter().map(|(k, v)| (k.clone(), c64_json(*v))).collect();
                let mut report = json!({ "kind": "analytic", "difference": diff, "residual": out.residual });
                let code = match &out.witness {
                    Some(nu) => {
                        report["witness"] = gauge_field_json(nu);
                        0
                    }
                    None => {
                        report["failed_order"] = json!(out.failed_order);
                        1
                    }
                };
                Ok(Outcome::new(code, "equiv", report))
            }
            _ => Err(Error::Backend("files are of different kinds or backends".into())),
        }
    };
    run().unwrap_or_else(|e| {
        let mut o = Outcome::error("equiv", &e);
        // incompatible inputs are a usage problem here
        if matches!(e, Error::Backend(_)) {
            o.code = 2;
        }
        o
    })
}

fn obstruction_algebraic<R: CechRing>(d: &AlgebraicDeformation<R>, coeff: impl Fn(&R) -> Value) -> Result<Value> {
    let omega = obstruction(d)?;
    let cls = omega.class(&d.base)?;
    let ext = extension_class(d)?;
    let verdict = split_verdict(d)?;
    let cocycle: Vec<Value> = omega
        .values
        .iter()
        .enumerate()
        .map(|(e, v)| json!({ "intersection": d.base.label(e), "value": series_json(v, &coeff) }))
        .collect();
    Ok(json!({
        "kind": "algebraic",
        "cocycle": cocycle,
        "class": class_json(&cls),
        "extension_class": class_json(&ext.class),
        "projection_residual": ext.projection_residual,
        "verdict": verdict,
    }))
}

pub fn cmd_obstruction(spec: &DeformationSpec, opts: &Options) -> Outcome {
    let run = || -> Result<Outcome> {
        let report = match &spec.body {
            Body::P1(d) => obstruction_algebraic(d, laurent_json)?,
            Body::Torus(d) => obstruction_algebraic(d, strip_json)?,
            Body::Analytic(a) => {
                let cls = analytic_classes(a)?;
                let nonzero = cls.chi.iter().any(|z| z.norm() > opts.tol(spec).unwrap_or(1e-8));
                let verdict = if nonzero { SplitVerdict::NonSplit } else { SplitVerdict::UndeterminedSplit };
                json!({ "kind": "analytic", "classes": cls, "verdict": verdict })
            }
        };
        Ok(Outcome::new(0, "obstruction", report))
    };
    run().unwrap_or_else(|e| Outcome::error("obstruction", &e))
}

/// Kernel from --kernel, the spec's kernel path, or the default spectral one.
pub fn resolve_kernel(spec: &DeformationSpec, spec_dir: Option<&Path>, opts: &Options, tau: Complex64) -> Result<PairingKernel> {
    let path = opts.kernel.clone().or_else(|| spec.kernel.as_ref().map(|k| spec_dir.map(|d| d.join(k)).unwrap_or_else(|| PathBuf::from(k))));
    match path {
        Some(p) => PairingKernel::read_from(&mut std::io::BufReader::new(std::fs::File::open(p)?)),
        None => PairingKernel::spectral(tau, opts.grid.unwrap_or(DEFAULT_KERNEL_GRID), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
    }
}

pub fn cmd_pairing(spec: &DeformationSpec, spec_dir: Option<&Path>, opts: &Options) -> Outcome {
    let run = || -> Result<Outcome> {
        let a = match &spec.body {
            Body::Analytic(a) => a.clone(),
            Body::Torus(d) => algebraic_to_analytic(&TorusCover::new(&d.base, opts.bridge(spec))?, d)?,
            Body::P1(_) => return Err(Error::Backend("the pairing needs the torus backend".into())),
        };
        let k = resolve_kernel(spec, spec_dir, opts, a.ctx.tau)?;
        let v = pairing(&a, &k)?;
        let report = json!({
            "value": c64_json(v.total),
            "first_integral": c64_json(v.first),
            "second_integral": c64_json(v.second),
            "compat_residual": k.compat_residual,
            "kernel_grid": k.m,
        });
        Ok(Outcome::new(0, "pairing", report))
    };
    run().unwrap_or_else(|e| {
        let mut o = Outcome::error("pairing", &e);
        o.code = 2;
        o
    })
}

pub fn cmd_roundtrip(spec: &DeformationSpec, opts: &Options) -> Outcome {
    let run = || -> Result<Outcome> {
        let cfg = opts.bridge(spec);
        match &spec.body {
            Body::P1(_) => Err(Error::Precondition("the ℙ¹ backend has no analytic side".into())),
            Body::Torus(d) => {
                let cover = TorusCover::new(&d.base, cfg)?;
                let a = algebraic_to_analytic(&cover, d)?;
                let d2 = analytic_to_algebraic(&cover, &a)?;
                let out = find_equivalence_tol(d, &d2, opts.tol(spec).unwrap_or(1e-6))?;
                let ok = out.witness.is_some();
                Ok(Outcome::new(
                    if ok { 0 } else { 1 },
                    "roundtrip",
                    json!({ "kind": "algebraic", "equivalent": ok, "residual": out.residual, "class_difference": class_json(&out.class_difference) }),
                ))
            }
            Body::Analytic(a) => {
                let grid = cfg.grid.max((2 * a.ctx.n + 1).next_power_of_two());
                let cover = TorusCover::new(&BaseCurve::torus(a.ctx.tau, DEFAULT_STRIP_MODES)?, BridgeConfig { grid, cutoff: a.ctx.n, delta: cfg.delta })?;
                let d = analytic_to_algebraic(&cover, a)?;
                let a2 = algebraic_to_analytic(&cover, &d)?;
                let out = find_gauge_tol(a, &a2, opts.tol(spec).unwrap_or(1e-6))?;
                let ok = out.witness.is_some();
                Ok(Outcome::new(if ok { 0 } else { 1 }, "roundtrip", json!({ "kind": "analytic", "equivalent": ok, "residual": out.residual })))
            }
        }
    };
    run().unwrap_or_else(|e| Outcome::error("roundtrip", &e))
}

fn print_outcome(o: &Outcome, as_json: bool, out: &mut dyn Write) {
    if as_json {
        let _ = writeln!(out, "{}", o.report);
        return;
    }
    let _ = writeln!(out, "status: {}", o.report["status"].as_str().unwrap_or("error"));
    if let Value::Object(map) = &o.report {
        for (k, v) in map {
            if k != "status" {
                let _ = writeln!(out, "{k}: {v}");
            }
        }
    }
}

fn load(path: &Path) -> std::result::Result<DeformationSpec, Error> {
    DeformationSpec::load(path)
}

/// Runs the driver on explicit arguments and streams; returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = write!(out, "{}", e.render());
            } else {
                let _ = write!(err, "{}", e.render());
            }
            return if code == 0 { 0 } else { 2 };
        }
    };
    let opts = Options { tol: cli.tol, grid: cli.grid, cutoff: cli.cutoff, kernel: cli.kernel.clone(), out: cli.out.clone() };
    let outcome = match &cli.cmd {
        Cmd::Verify { path } => load(path).map(|s| cmd_verify(&s, &opts)).unwrap_or_else(|e| Outcome::error("verify", &e)),
        Cmd::Convert { path, direction } => load(path).map(|s| cmd_convert(&s, *direction, &opts)).unwrap_or_else(|e| Outcome::error("convert", &e)),
        Cmd::Equiv { first, second } => match (load(first), load(second)) {
            (Ok(a), Ok(b)) => cmd_equiv(&a, &b, &opts),
            (Err(e), _) | (_, Err(e)) => Outcome::error("equiv", &e),
        },
        Cmd::Obstruction { path } => load(path).map(|s| cmd_obstruction(&s, &opts)).unwrap_or_else(|e| Outcome::error("obstruction", &e)),
        Cmd::Pairing { path } => load(path).map(|s| cmd_pairing(&s, path.parent(), &opts)).unwrap_or_else(|e| Outcome::error("pairing", &e)),
        Cmd::Roundtrip { path } => load(path).map(|s| cmd_roundtrip(&s, &opts)).unwrap_or_else(|e| Outcome::error("roundtrip", &e)),
    };
    // every path lands in {0, 1, 2}
    let code = outcome.code.clamp(0, 2);
    print_outcome(&outcome, cli.json, out);
    if code == 2 {
        if let Some(e) = outcome.report.get("error") {
            let _ = writeln!(err, "error: {}", e.as_str().unwrap_or_default());
        }
    }
    code
}

pub fn main_with_args() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
