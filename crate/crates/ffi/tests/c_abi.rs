use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use pubbias_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(pb_last_error_message()) }.to_string_lossy().into_owned()
}

fn corticosteroids() -> *mut PbDataset {
    let name = CString::new("corticosteroids").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { pb_dataset_embedded(name.as_ptr(), &mut ds) }, PbStatus::Ok);
    ds
}

#[test]
fn embedded_fit_matches_library() {
    let ds = corticosteroids();
    assert_eq!(unsafe { pb_dataset_len(ds) }, 14);
    let mut fit = PbFit::default();
    assert_eq!(unsafe { pb_fit_ml(ds, &mut fit) }, PbStatus::Ok);
    let expect = pubbias::fit_ml(&pubbias::data::corticosteroids()).unwrap();
    assert_eq!(fit.mu_hat, expect.mu_hat);
    assert_eq!(fit.tau_hat, expect.tau_hat);
    assert_eq!((fit.ci_lower, fit.ci_upper), expect.ci_mu);
    unsafe { pb_dataset_free(ds) };
}

#[test]
fn cj_bound_from_arrays() {
    let y = [0.1, -0.3, 0.5, 0.2];
    let s = [0.2, 0.4, 0.3, 0.5];
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { pb_dataset_from_arrays(y.as_ptr(), s.as_ptr(), 4, &mut ds) }, PbStatus::Ok);
    let mut b = PbBound::default();
    assert_eq!(unsafe { pb_cj_bound(ds, 0.1, 0.6, &mut b) }, PbStatus::Ok);
    let data = pubbias::MetaDataset::from_pairs(&y, &s).unwrap();
    let expect = pubbias::cj_bound(&data, 0.1, 0.6).unwrap();
    assert_eq!((b.lower, b.upper, b.p), (expect.lower, expect.upper, 0.6));
    unsafe { pb_dataset_free(ds) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut ds = ptr::null_mut();
    let y = [0.1];
    let s = [0.2];
    assert_eq!(unsafe { pb_dataset_from_arrays(y.as_ptr(), s.as_ptr(), 1, &mut ds) }, PbStatus::InputError);
    assert!(ds.is_null());
    assert!(last_error().contains("at least 2"), "{}", last_error());

    let bad = CString::new("nope").unwrap();
    assert_eq!(unsafe { pb_dataset_embedded(bad.as_ptr(), &mut ds) }, PbStatus::InvalidArgument);
    assert!(last_error().contains("nope"));

    let mut fit = PbFit::default();
    assert_eq!(unsafe { pb_fit_ml(ptr::null(), &mut fit) }, PbStatus::NullPointer);

    let ds = corticosteroids();
    let mut b = PbBound::default();
    assert_eq!(unsafe { pb_cj_bound(ds, 0.0, 1.5, &mut b) }, PbStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { pb_cj_bound(ds, 0.0, 0.5, &mut b) }, PbStatus::Ok);
    assert!(last_error().is_empty());

    let mut cfg = PbOptConfig::from(pubbias::OptConfig::default());
    cfg.inner_mode = 9;
    let mut e = PbExtBound::default();
    assert_eq!(unsafe { pb_ext_bound(ds, 0.0, 0.0, 0.5, &cfg, &mut e) }, PbStatus::InvalidArgument);
    unsafe { pb_dataset_free(ds) };
    unsafe { pb_dataset_free(ptr::null_mut()) };
}

#[test]
fn ext_bound_matches_library() {
    let ds = corticosteroids();
    let mut cfg = PbOptConfig::from(pubbias::OptConfig::default());
    assert_eq!(unsafe { pb_opt_config_default(&mut cfg) }, PbStatus::Ok);
    cfg.k1 = 100;
    cfg.k2 = 100;
    let mut e = PbExtBound::default();
    assert_eq!(unsafe { pb_ext_bound(ds, 0.0, -0.476, 0.6, &cfg, &mut e) }, PbStatus::Ok);
    let opt = pubbias::OptConfig { k1: 100, k2: 100, ..Default::default() };
    let expect = pubbias::extended_bound(&pubbias::data::corticosteroids(), 0.0, -0.476, 0.6, &opt).unwrap();
    assert_eq!((e.lower, e.upper), (expect.bound.lower, expect.bound.upper));
    assert_eq!(e.degraded, 0);
    assert!(e.upper >= e.cj_upper && e.lower <= e.cj_lower);
    unsafe { pb_dataset_free(ds) };
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "pubbias.h"
int main(void) {
    PbDataset *ds = NULL;
    if (pb_dataset_embedded("corticosteroids", &ds) != PB_STATUS_OK) return 1;
    PbFit fit;
    if (pb_fit_ml(ds, &fit) != PB_STATUS_OK) return 2;
    PbBound b;
    if (pb_cj_bound(ds, fit.tau_hat, 2.0, &b) != PB_STATUS_INVALID_ARGUMENT) return 3;
    if (pb_last_error_message()[0] == '\0') return 4;
    printf("%.4f\n", fit.mu_hat);
    pb_dataset_free(ds);
    return 0;
}
"#;

/// Compiles against the generated header and links the static library.
#[test]
fn header_compiles_and_links_from_c() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    assert!(include.join("pubbias.h").is_file());
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libpubbias_ffi.a");
    if !lib.is_file() {
        let status = Command::new("cc").arg("-fsyntax-only").arg("-I").arg(&include).arg(&src).status().unwrap();
        assert!(status.success());
        eprintln!("static library not found at {}, checked syntax only", lib.display());
        return;
    }
    let exe = tmp.path().join("main");
    let status = Command::new("cc")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "-0.4759");
}
