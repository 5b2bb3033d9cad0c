use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use dara_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = dara_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const SYNTH: &str = "source_classes = 4\ntarget_classes = 5\nitems_per_class = 8\nwidth = 2\nheight = 2\nchannels = 3\nseed = 4\n";

#[test]
fn synth_save_load_header() {
    let dir = tempfile::tempdir().unwrap();
    let (mut s, mut t) = (ptr::null_mut(), ptr::null_mut());
    let mut offset = 0.0;
    unsafe {
        assert_eq!(dara_synth(c(SYNTH).as_ptr(), &mut s, &mut t, &mut offset), DaraStatus::Ok);
        let path = c(dir.path().join("t.dfb").to_str().unwrap());
        assert_eq!(dara_bank_save(t, path.as_ptr()), DaraStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(dara_bank_load(path.as_ptr(), &mut loaded), DaraStatus::Ok);
        let mut h = DaraBankHeader::default();
        assert_eq!(dara_bank_header(loaded, &mut h), DaraStatus::Ok);
        assert_eq!(
            h,
            DaraBankHeader {
                num_items: 40,
                width: 2,
                height: 2,
                channels: 3,
                class_count: 5
            }
        );
        dara_bank_free(loaded);
        dara_bank_free(s);
        dara_bank_free(t);
    }
    assert_eq!(offset, 1.0);
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut b = ptr::null_mut();
    unsafe {
        assert_eq!(dara_bank_load(ptr::null(), &mut b), DaraStatus::NullPointer);
        assert_eq!(
            dara_bank_load(c("/nonexistent/bank.dfb").as_ptr(), &mut b),
            DaraStatus::Io
        );
        let (mut s, mut t) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            dara_synth(c("colour = blue").as_ptr(), &mut s, &mut t, ptr::null_mut()),
            DaraStatus::Config
        );
    }
    assert!(last_error().contains("colour"));
    assert!(b.is_null());
}

#[test]
fn ridge_matches_known_value() {
    // Q = [[2, 1]], P = I, lambda = 1  ->  [[1, 0.5]]
    let pool = [1.0, 0.0, 0.0, 1.0];
    let query = [2.0, 1.0];
    let mut out = [0.0; 2];
    let st = unsafe { dara_ridge_reconstruct(pool.as_ptr(), 2, query.as_ptr(), 1, 2, 1.0, out.as_mut_ptr()) };
    assert_eq!(st, DaraStatus::Ok);
    assert!((out[0] - 1.0).abs() < 1e-12 && (out[1] - 0.5).abs() < 1e-12);

    let singular = [1.0, 1.0, 1.0, 1.0];
    let st = unsafe { dara_ridge_reconstruct(singular.as_ptr(), 2, query.as_ptr(), 1, 2, 0.0, out.as_mut_ptr()) };
    assert_eq!(st, DaraStatus::Numeric);
}

#[test]
fn pretrain_evaluate_round_trip() {
    let train = "hidden = 4\nfeature_channels = 3\npretrain_epochs = 2\nfinetune_epochs = 2\nepisodes = 3\nqueries_per_class = 3\nshots = 2\nways = 2\nseed = 4\n";
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let (mut s, mut t) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(dara_synth(c(SYNTH).as_ptr(), &mut s, &mut t, ptr::null_mut()), DaraStatus::Ok);
        let mut m = ptr::null_mut();
        assert_eq!(dara_model_pretrain(s, c(train).as_ptr(), &mut m), DaraStatus::Ok);
        let path = c(dir.path().join("m.ck").to_str().unwrap());
        assert_eq!(dara_model_save(m, path.as_ptr()), DaraStatus::Ok);
        let mut m2 = ptr::null_mut();
        assert_eq!(dara_model_load(path.as_ptr(), &mut m2), DaraStatus::Ok);

        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(dara_evaluate(m, t, c(train).as_ptr(), 1, &mut a), DaraStatus::Ok);
        assert_eq!(dara_evaluate(m2, t, c(train).as_ptr(), 2, &mut b), DaraStatus::Ok);
        let (ja, jb) = (CStr::from_ptr(a).to_owned(), CStr::from_ptr(b).to_owned());
        assert_eq!(ja, jb);
        let v: serde_json::Value = serde_json::from_str(ja.to_str().unwrap()).unwrap();
        assert_eq!(v["episodes"], 3);
        dara_string_free(a);
        dara_string_free(b);
        dara_model_free(m);
        dara_model_free(m2);
        dara_bank_free(s);
        dara_bank_free(t);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/dara.h")).unwrap();
    for f in [
        "dara_last_error",
        "dara_version",
        "dara_bank_load",
        "dara_bank_save",
        "dara_bank_header",
        "dara_bank_free",
        "dara_synth",
        "dara_model_load",
        "dara_model_pretrain",
        "dara_model_save",
        "dara_model_free",
        "dara_evaluate",
        "dara_string_free",
        "dara_ridge_reconstruct",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}

/// Builds and runs a small C client against the header and static library
/// when a C compiler is available.
#[test]
fn c_client_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libdara_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "dara.h"
int main(void) {
    double pool[4] = {1, 0, 0, 1}, query[2] = {2, 1}, out[2];
    if (dara_ridge_reconstruct(pool, 2, query, 1, 2, 1.0, out) != DARA_STATUS_OK) return 1;
    DaraBank *b = NULL;
    if (dara_bank_load("/nonexistent", &b) != DARA_STATUS_IO) return 2;
    if (dara_last_error() == NULL) return 3;
    printf("%.3f %.3f %s\n", out[0], out[1], dara_version());
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("client");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("1.000 0.500 "));
}
