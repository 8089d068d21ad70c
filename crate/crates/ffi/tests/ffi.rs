use std::ffi::{c_char, c_int, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr::{null, null_mut};

use srsdef_ffi::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn load(name: &str) -> *mut SrsdefSpec {
    let p = CString::new(fixture(name).to_str().unwrap()).unwrap();
    let mut h = null_mut();
    assert_eq!(unsafe { srsdef_spec_load(p.as_ptr(), &mut h) }, SRSDEF_OK, "{}", last_error());
    assert!(!h.is_null());
    h
}

fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { srsdef_string_free(s) };
    out
}

fn last_error() -> String {
    let p = srsdef_last_error_message();
    if p.is_null() {
        String::new()
    } else {
        take(p)
    }
}

fn class(h: *const SrsdefSpec, i: usize) -> (f64, f64) {
    let (mut re, mut im) = (f64::NAN, f64::NAN);
    assert_eq!(unsafe { srsdef_class(h, i, &mut re, &mut im) }, SRSDEF_OK, "{}", last_error());
    (re, im)
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(srsdef_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn verify_reports_pass_and_fail() {
    let ok = load("p1_split.json");
    let bad = load("p1_injected.json");
    let mut rep = null_mut();
    assert_eq!(unsafe { srsdef_verify(ok, 0.0, &mut rep) }, SRSDEF_OK);
    assert!(take(rep).contains("\"ok\":true"));
    assert_eq!(unsafe { srsdef_verify(bad, 0.0, &mut rep) }, SRSDEF_FAIL);
    assert!(take(rep).contains("f-zeta-psi"));
    // the report pointer is optional
    assert_eq!(unsafe { srsdef_verify(ok, 0.0, null_mut()) }, SRSDEF_OK);
    unsafe {
        srsdef_spec_free(ok);
        srsdef_spec_free(bad);
    }
}

#[test]
fn json_round_trip_and_n() {
    let h = load("p1_thickened.json");
    let mut s = null_mut();
    assert_eq!(unsafe { srsdef_spec_to_json(h, &mut s) }, SRSDEF_OK);
    let text = CString::new(take(s)).unwrap();
    let mut back = null_mut();
    assert_eq!(unsafe { srsdef_spec_from_json(text.as_ptr(), &mut back) }, SRSDEF_OK);
    let mut n = 0usize;
    assert_eq!(unsafe { srsdef_spec_n(back, &mut n) }, SRSDEF_OK);
    assert_eq!(n, 2);
    let mut found: c_int = -1;
    assert_eq!(unsafe { srsdef_equivalent(h, back, 0.0, &mut found) }, SRSDEF_OK);
    assert_eq!(found, 1);
    unsafe {
        srsdef_spec_free(h);
        srsdef_spec_free(back);
    }
}

#[test]
fn convert_preserves_the_class() {
    let h = load("torus_class1.json");
    assert!((class(h, 1).0 - 1.0).abs() < 1e-10);
    let mut an = null_mut();
    assert_eq!(unsafe { srsdef_convert(h, SRSDEF_TO_ANALYTIC, 128, 32, &mut an) }, SRSDEF_OK, "{}", last_error());
    assert_eq!(unsafe { srsdef_verify(an, 0.0, null_mut()) }, SRSDEF_OK);
    let mut alg = null_mut();
    assert_eq!(unsafe { srsdef_convert(an, SRSDEF_TO_ALGEBRAIC, 128, 32, &mut alg) }, SRSDEF_OK, "{}", last_error());
    let (re, im) = class(alg, 1);
    assert!((re - 1.0).abs() < 1e-6 && im.abs() < 1e-6, "{re} {im}");
    let mut found: c_int = -1;
    assert_eq!(unsafe { srsdef_equivalent(h, alg, 1e-6, &mut found) }, SRSDEF_OK);
    assert_eq!(found, 1);
    unsafe {
        srsdef_spec_free(h);
        srsdef_spec_free(an);
        srsdef_spec_free(alg);
    }
}

#[test]
fn distinct_classes_are_not_equivalent() {
    let (a, b) = (load("torus_class1.json"), load("torus_class2.json"));
    let mut found: c_int = -1;
    assert_eq!(unsafe { srsdef_equivalent(a, b, 0.0, &mut found) }, SRSDEF_OK);
    assert_eq!(found, 0);
    let p = load("p1_split.json");
    assert_eq!(unsafe { srsdef_equivalent(a, p, 0.0, &mut found) }, SRSDEF_ERR_BACKEND);
    unsafe {
        srsdef_spec_free(a);
        srsdef_spec_free(b);
        srsdef_spec_free(p);
    }
}

#[test]
fn pairing_of_zero_is_zero() {
    let h = load("analytic_zero.json");
    let (mut re, mut im, mut compat) = (1.0, 1.0, -1.0);
    assert_eq!(unsafe { srsdef_pairing(h, 16, &mut re, &mut im, &mut compat) }, SRSDEF_OK, "{}", last_error());
    assert_eq!((re, im), (0.0, 0.0));
    assert!(compat >= 0.0);
    let p = load("p1_split.json");
    assert_eq!(unsafe { srsdef_pairing(p, 16, &mut re, &mut im, null_mut()) }, SRSDEF_ERR_BACKEND);
    assert!(last_error().contains("torus"));
    unsafe {
        srsdef_spec_free(h);
        srsdef_spec_free(p);
    }
}

#[test]
fn errors_map_to_codes() {
    let mut h = null_mut();
    let mut re = 0.0;
    let mut im = 0.0;
    unsafe {
        assert_eq!(srsdef_spec_from_json(null(), &mut h), SRSDEF_ERR_NULL);
        assert!(last_error().contains("NULL"));
        let bad = CString::new("{\"schema\": \"srsdef/1\"").unwrap();
        assert_eq!(srsdef_spec_from_json(bad.as_ptr(), &mut h), SRSDEF_ERR_SCHEMA);
        assert!(h.is_null());
        let not_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(srsdef_spec_from_json(not_utf8.as_ptr().cast(), &mut h), SRSDEF_ERR_UTF8);
        let missing = CString::new("/nonexistent/spec.json").unwrap();
        assert_eq!(srsdef_spec_load(missing.as_ptr(), &mut h), SRSDEF_ERR_IO);
        assert_eq!(srsdef_verify(null(), 0.0, null_mut()), SRSDEF_ERR_NULL);
        assert_eq!(srsdef_class(null(), 1, &mut re, &mut im), SRSDEF_ERR_NULL);

        let t = load("torus_class1.json");
        assert_eq!(srsdef_class(t, 0, &mut re, &mut im), SRSDEF_ERR_INVALID);
        assert_eq!(srsdef_class(t, 2, &mut re, &mut im), SRSDEF_ERR_INVALID);
        assert_eq!(srsdef_class(t, 1, null_mut(), &mut im), SRSDEF_ERR_NULL);
        assert_eq!(srsdef_convert(t, 7, 0, 0, &mut h), SRSDEF_ERR_INVALID);
        assert_eq!(srsdef_convert(t, SRSDEF_TO_ALGEBRAIC, 0, 0, &mut h), SRSDEF_ERR_INVALID);
        let p = load("p1_split.json");
        assert_eq!(srsdef_convert(p, SRSDEF_TO_ANALYTIC, 0, 0, &mut h), SRSDEF_ERR_PRECONDITION);
        srsdef_spec_free(t);
        srsdef_spec_free(p);
        // freeing NULL is a no-op
        srsdef_spec_free(null_mut());
        srsdef_string_free(null_mut());
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/srsdef.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["srsdef_spec_load", "srsdef_verify", "srsdef_convert", "srsdef_equivalent", "srsdef_class", "srsdef_pairing", "srsdef_last_error_message"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile_dir();
    let src = dir.join("use.c");
    std::fs::write(&src, "#include \"srsdef.h\"\nint main(void) { SrsdefSpec *h = 0; return srsdef_spec_free(h), SRSDEF_OK; }\n").unwrap();
    let st = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
        .unwrap();
    assert!(st.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("srsdef-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
