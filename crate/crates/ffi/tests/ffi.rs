use std::ffi::{CStr, CString};
use std::ptr;

use cslw_ffi::*;

const SUPPLEMENT: &str = include_str!("../../core/models/supplement.dcp");

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = cslw_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn load_supplement() -> *mut CslwModel {
    let mut m = ptr::null_mut();
    let src = c(SUPPLEMENT);
    assert_eq!(unsafe { cslw_model_from_dcp(src.as_ptr(), &mut m) }, CslwStatus::Ok);
    m
}

#[test]
fn exact_and_sampled_inference() {
    let m = load_supplement();
    unsafe {
        assert_eq!(cslw_model_variable_count(m), 5);
        assert_eq!(cslw_model_rule_count(m), 10);
        let mut x = 0.0;
        let (method, q) = (c("exact-ve"), c("e=1"));
        assert_eq!(cslw_infer(m, method.as_ptr(), q.as_ptr(), ptr::null(), 0, 0, &mut x), CslwStatus::Ok);
        assert!((x - 0.74154).abs() < 1e-12);
        let mut y = 0.0;
        let mut z = 0.0;
        let (cslw, a, e) = (c("cslw"), c("a=1"), c("e=1"));
        assert_eq!(cslw_infer(m, cslw.as_ptr(), a.as_ptr(), e.as_ptr(), 5000, 11, &mut y), CslwStatus::Ok);
        assert_eq!(cslw_infer(m, cslw.as_ptr(), a.as_ptr(), e.as_ptr(), 5000, 11, &mut z), CslwStatus::Ok);
        assert_eq!(y.to_bits(), z.to_bits());
        assert!(cslw_last_error().is_null());
        cslw_model_free(m);
    }
}

#[test]
fn dcp_text_round_trips() {
    let m = load_supplement();
    unsafe {
        let s = cslw_model_to_dcp(m);
        assert!(!s.is_null());
        let text = CStr::from_ptr(s).to_str().unwrap().to_string();
        cslw_string_free(s);
        assert!(text.contains("a ~ bernoulli(0.10000000000000001).\n"));
        let mut again = ptr::null_mut();
        let src = c(&text);
        assert_eq!(cslw_model_from_dcp(src.as_ptr(), &mut again), CslwStatus::Ok);
        assert_eq!(cslw_model_rule_count(again), 10);
        cslw_model_free(again);
        cslw_model_free(m);
    }
}

#[test]
fn errors_have_codes_and_messages() {
    unsafe {
        let mut m = ptr::null_mut();
        let bad = c("a ~ bernoulli(1.5).\n");
        assert_eq!(cslw_model_from_dcp(bad.as_ptr(), &mut m), CslwStatus::Parse);
        assert!(m.is_null());
        assert!(last_error().contains("1:15"));

        assert_eq!(cslw_model_from_dcp(ptr::null(), &mut m), CslwStatus::NullPointer);
        let missing = c("/nonexistent/model.bif");
        assert_eq!(cslw_model_load(missing.as_ptr(), &mut m), CslwStatus::Io);

        let model = load_supplement();
        let mut x = 0.0;
        let (gibbs, q) = (c("gibbs"), c("e=1"));
        assert_eq!(cslw_infer(model, gibbs.as_ptr(), q.as_ptr(), ptr::null(), 10, 0, &mut x), CslwStatus::Unsupported);
        assert!(last_error().contains("gibbs"));
        let (lw, unknown) = (c("lw"), c("zz=1"));
        assert_eq!(cslw_infer(model, lw.as_ptr(), unknown.as_ptr(), ptr::null(), 10, 0, &mut x), CslwStatus::Failed);
        assert_eq!(cslw_infer(model, lw.as_ptr(), q.as_ptr(), ptr::null(), 10, 0, ptr::null_mut()), CslwStatus::NullPointer);
        cslw_model_free(model);
        cslw_model_free(ptr::null_mut());
        assert_eq!(cslw_model_variable_count(ptr::null()), 0);
        assert!(cslw_model_to_dcp(ptr::null()).is_null());
    }
}

#[test]
fn zero_weight_evidence() {
    unsafe {
        let mut m = ptr::null_mut();
        let src = c("a ~ bernoulli(0.5).\nb ~ bernoulli(0.0) :- a=1.\nb ~ bernoulli(0.0) :- a=0.\n");
        assert_eq!(cslw_model_from_dcp(src.as_ptr(), &mut m), CslwStatus::Ok);
        let (method, q, e) = (c("cslw"), c("a=1"), c("b=1"));
        let mut x = 0.0;
        assert_eq!(cslw_infer(m, method.as_ptr(), q.as_ptr(), e.as_ptr(), 10, 0, &mut x), CslwStatus::NoEffectiveSamples);
        cslw_model_free(m);
    }
}

#[test]
fn bif_models_load() {
    let path = c(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/models/supplement.bif"));
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(cslw_model_load(path.as_ptr(), &mut m), CslwStatus::Ok);
        let mut x = 0.0;
        let (method, q) = (c("exact-enum"), c("e=1"));
        assert_eq!(cslw_infer(m, method.as_ptr(), q.as_ptr(), ptr::null(), 0, 0, &mut x), CslwStatus::Ok);
        assert!((x - 0.74154).abs() < 1e-12);
        cslw_model_free(m);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/cslw.h");
    let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c", header]).output() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
