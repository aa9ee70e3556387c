use std::ffi::{c_void, CStr};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use chunk_cascade_ffi::*;

fn baseline_model() -> *mut CcModel {
    let tpr = [0.85, 0.8];
    let fpr = [0.05, 0.1];
    let mut model = ptr::null_mut();
    let status = unsafe { cc_model_new(3, 0.1, tpr.as_ptr(), fpr.as_ptr(), 2, &mut model) };
    assert_eq!(status, CcStatus::Ok);
    model
}

fn last_error() -> String {
    let p = cc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn baseline_metrics() {
    let model = baseline_model();
    let mut m = CcMetrics::default();
    let mut calls = [0.0; 2];
    let status = unsafe { cc_model_metrics(model, &mut m, calls.as_mut_ptr(), 2) };
    assert_eq!(status, CcStatus::Ok);
    assert!((m.tpr - 0.68).abs() < 1e-15);
    assert!((m.fpr - 0.023_259_608_5).abs() < 1e-12);
    assert_eq!(m.precision_defined, 1);
    assert!((m.precision - 1_360_000_000.0 / 1_778_672_953.0).abs() < 1e-12);
    assert!((calls[0] - 0.498_672_953).abs() < 1e-12);
    assert!((calls[1] - 0.125).abs() < 1e-15);
    unsafe { cc_model_free(model) };
}

#[test]
fn single_level_precision_can_be_undefined() {
    let mut m = CcMetrics::default();
    assert_eq!(unsafe { cc_single_level_metrics(0.9, 0.0, 0.0, &mut m) }, CcStatus::Ok);
    assert_eq!(m.precision_defined, 0);
    assert!(m.precision.is_nan());
}

#[test]
fn invalid_rate_is_rejected_with_a_message() {
    let tpr = [0.85, 1.5];
    let fpr = [0.05, 0.1];
    let mut model = ptr::null_mut();
    let status = unsafe { cc_model_new(3, 0.1, tpr.as_ptr(), fpr.as_ptr(), 2, &mut model) };
    assert_eq!(status, CcStatus::InvalidArgument);
    assert!(model.is_null());
    assert!(last_error().contains("domain"));
}

#[test]
fn null_pointers_are_reported() {
    let mut m = CcMetrics::default();
    let status = unsafe { cc_model_metrics(ptr::null(), &mut m, ptr::null_mut(), 0) };
    assert_eq!(status, CcStatus::NullPointer);
    assert!(last_error().contains("model"));
    unsafe {
        cc_model_free(ptr::null_mut());
        cc_pyramid_free(ptr::null_mut());
        cc_report_free(ptr::null_mut());
    }
}

#[test]
fn short_calls_buffer_is_rejected() {
    let model = baseline_model();
    let mut m = CcMetrics::default();
    let mut calls = [0.0; 1];
    let status = unsafe { cc_model_metrics(model, &mut m, calls.as_mut_ptr(), 1) };
    assert_eq!(status, CcStatus::BufferTooSmall);
    unsafe { cc_model_free(model) };
}

#[test]
fn simulation_is_thread_independent() {
    let model = baseline_model();
    let mut pyramid = ptr::null_mut();
    let axes = [2usize, 2, 2];
    assert_eq!(unsafe { cc_pyramid_new(3, 2, axes.as_ptr(), &mut pyramid) }, CcStatus::Ok);
    let run = |parallel| {
        let mut s = CcSimSummary::default();
        let mut calls = [CcEstimate::default(); 2];
        let status = unsafe { cc_simulate(model, pyramid, 20_000, 7, parallel, &mut s, calls.as_mut_ptr(), 2) };
        assert_eq!(status, CcStatus::Ok);
        (s, calls)
    };
    let (seq, seq_calls) = run(0);
    let (par, par_calls) = run(1);
    assert_eq!(seq, par);
    assert_eq!(seq_calls, par_calls);
    assert_eq!(seq.trials, 20_000);
    assert!((seq.tpr.mean - 0.68).abs() < 5.0 * seq.tpr.std_error);
    assert!((seq_calls[0].mean - 0.498_672_953).abs() < 5.0 * seq_calls[0].std_error);
    unsafe {
        cc_pyramid_free(pyramid);
        cc_model_free(model);
    }
}

/// Level-0 chunks listed in `hot` are positive; a level-1 chunk is positive
/// when any of its children is.
struct Oracle {
    hot: Vec<usize>,
    visited: Vec<(usize, usize)>,
}

unsafe extern "C" fn oracle(user: *mut c_void, level: usize, linear: usize) -> u8 {
    let o = &mut *(user as *mut Oracle);
    o.visited.push((level, linear));
    // 4x4 level 0 below a 2x2 level 1, row-major.
    let hit = match level {
        0 => o.hot.contains(&linear),
        _ => o.hot.iter().any(|&h| (h / 4 / 2) * 2 + (h % 4) / 2 == linear),
    };
    hit as u8
}

fn run(o: &mut Oracle, single_level: u8) -> *mut CcReport {
    let mut pyramid = ptr::null_mut();
    let axes = [4usize, 4];
    assert_eq!(unsafe { cc_pyramid_new(2, 2, axes.as_ptr(), &mut pyramid) }, CcStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { cc_pyramid_chunk_count(pyramid, 1, &mut n) }, CcStatus::Ok);
    assert_eq!(n, 4);
    let mut report = ptr::null_mut();
    let status = unsafe { cc_run(pyramid, Some(oracle), o as *mut Oracle as *mut c_void, single_level, &mut report) };
    assert_eq!(status, CcStatus::Ok);
    unsafe { cc_pyramid_free(pyramid) };
    report
}

fn call_string(report: *const CcReport) -> String {
    let mut needed = 0;
    let status = unsafe { cc_report_call_string(report, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(status, CcStatus::BufferTooSmall);
    let mut buf = vec![0u8; needed];
    let status = unsafe { cc_report_call_string(report, buf.as_mut_ptr().cast(), needed, ptr::null_mut()) };
    assert_eq!(status, CcStatus::Ok);
    CStr::from_bytes_with_nul(&buf).unwrap().to_str().unwrap().to_string()
}

#[test]
fn cascade_through_a_callback() {
    // Chunk 5 is row 1, column 1: under level-1 chunk 0.
    let mut o = Oracle {
        hot: vec![5],
        visited: Vec::new(),
    };
    let report = run(&mut o, 0);
    assert_eq!(unsafe { cc_report_calls(report, 1) }, 4);
    assert_eq!(unsafe { cc_report_calls(report, 0) }, 4);
    assert_eq!(unsafe { cc_report_positives(report, 0) }, 1);
    assert_eq!(unsafe { cc_report_calls(report, 9) }, 0);
    assert_eq!(call_string(report), "4:4");
    assert_eq!(&o.visited[..4], &[(1, 0), (1, 1), (1, 2), (1, 3)]);
    let mut l0: Vec<usize> = o.visited[4..].iter().map(|&(_, i)| i).collect();
    l0.sort_unstable();
    assert_eq!(l0, [0, 1, 4, 5]);

    let mut preds = [9u8; 16];
    assert_eq!(unsafe { cc_report_predictions(report, preds.as_mut_ptr(), 16) }, CcStatus::Ok);
    let expected: Vec<u8> = (0..16).map(|i| (i == 5) as u8).collect();
    assert_eq!(preds.to_vec(), expected);
    let mut short = [0u8; 15];
    assert_eq!(
        unsafe { cc_report_predictions(report, short.as_mut_ptr(), 15) },
        CcStatus::BufferTooSmall
    );
    unsafe { cc_report_free(report) };
}

#[test]
fn single_level_through_a_callback() {
    let mut o = Oracle {
        hot: vec![5, 15],
        visited: Vec::new(),
    };
    let report = run(&mut o, 1);
    assert_eq!(call_string(report), "0:16");
    assert_eq!(unsafe { cc_report_positives(report, 0) }, 2);
    assert!(o.visited.iter().all(|&(level, _)| level == 0));
    unsafe { cc_report_free(report) };
}

#[test]
fn missing_callback_is_rejected() {
    let mut pyramid = ptr::null_mut();
    let axes = [2usize];
    assert_eq!(unsafe { cc_pyramid_new(1, 2, axes.as_ptr(), &mut pyramid) }, CcStatus::Ok);
    let mut report = ptr::null_mut();
    let status = unsafe { cc_run(pyramid, None, ptr::null_mut(), 0, &mut report) };
    assert_eq!(status, CcStatus::NullPointer);
    assert!(last_error().contains("classify"));
    unsafe { cc_pyramid_free(pyramid) };
}

#[test]
fn bad_pyramid_geometry_is_rejected() {
    let mut pyramid = ptr::null_mut();
    let axes = [3usize, 4];
    let status = unsafe { cc_pyramid_new(2, 2, axes.as_ptr(), &mut pyramid) };
    assert_eq!(status, CcStatus::InvalidArgument);
    assert!(pyramid.is_null());
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "chunk_cascade.h"

static uint8_t all_negative(void *user, size_t level, size_t index) {
    (void)user; (void)level; (void)index;
    return 0;
}

int main(void) {
    double tpr[2] = {0.85, 0.8}, fpr[2] = {0.05, 0.1}, calls[2];
    CcModel *model = NULL;
    CcMetrics m;
    if (cc_model_new(3, 0.1, tpr, fpr, 2, &model) != CC_STATUS_OK) return 1;
    if (cc_model_metrics(model, &m, calls, 2) != CC_STATUS_OK) return 2;
    cc_model_free(model);

    size_t axes[3] = {2, 2, 2};
    CcPyramid *pyramid = NULL;
    CcReport *report = NULL;
    if (cc_pyramid_new(3, 2, axes, &pyramid) != CC_STATUS_OK) return 3;
    if (cc_run(pyramid, all_negative, NULL, 0, &report) != CC_STATUS_OK) return 4;
    char buf[32];
    if (cc_report_call_string(report, buf, sizeof buf, NULL) != CC_STATUS_OK) return 5;
    printf("%.2f %.9f %s\n", m.tpr, calls[0], buf);
    cc_report_free(report);
    cc_pyramid_free(pyramid);
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler on PATH; skipping");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libchunk_cascade_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success());
    assert_eq!(String::from_utf8(run.stdout).unwrap(), "0.68 0.498672953 1:0\n");
}
