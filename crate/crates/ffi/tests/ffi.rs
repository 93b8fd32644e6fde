use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use rfa_doc::checkpoint;
use rfa_doc::decoding::{beam_decode, default_max_len, greedy_decode};
use rfa_doc::transformer::{Model, ModelConfig, Variant};
use rfa_doc_ffi::*;

fn tiny_checkpoint(dir: &tempfile::TempDir) -> (PathBuf, Model) {
    let config = ModelConfig {
        vocab_size: 12,
        d_model: 8,
        n_heads: 2,
        d_ff: 8,
        n_enc_layers: 1,
        n_dec_layers: 1,
        ..ModelConfig::default()
    }
    .with_variant(Variant::RfaSgate);
    let model = Model::new(config).unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&path, &model, None, false).unwrap();
    (path, model)
}

fn last_error() -> String {
    let p = rfa_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn translate_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, model) = tiny_checkpoint(&dir);
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { rfa_model_load(cpath.as_ptr(), &mut handle) }, RfaStatus::Ok);
    assert_eq!(unsafe { rfa_model_vocab_size(handle) }, 12);

    let src: Vec<u32> = vec![4, 5, 6, 3, 7];
    let src_usize: Vec<usize> = src.iter().map(|&t| t as usize).collect();
    let cap = default_max_len(src.len());
    for beam in [0usize, 1, 3] {
        let mut buf = vec![0u32; cap];
        let mut len = 0usize;
        let st = unsafe { rfa_model_translate(handle, src.as_ptr(), src.len(), beam, 0, buf.as_mut_ptr(), buf.len(), &mut len) };
        assert_eq!(st, RfaStatus::Ok);
        let want = if beam == 0 {
            greedy_decode(&model, &src_usize, cap).unwrap()
        } else {
            beam_decode(&model, &src_usize, beam, cap).unwrap()
        };
        let got: Vec<usize> = buf[..len].iter().map(|&t| t as usize).collect();
        assert_eq!(got, want, "beam {beam}");
    }

    let mut lp = 0.0;
    let tgt: Vec<u32> = vec![4, 5];
    assert_eq!(
        unsafe { rfa_model_log_prob(handle, src.as_ptr(), src.len(), tgt.as_ptr(), tgt.len(), &mut lp) },
        RfaStatus::Ok
    );
    assert!(lp < 0.0 && lp.is_finite());
    unsafe { rfa_model_free(handle) };
}

#[test]
fn errors_have_codes_and_messages() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = tiny_checkpoint(&dir);
    let mut handle = ptr::null_mut();
    let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rfa_model_load(missing.as_ptr(), &mut handle) }, RfaStatus::Io);
    assert!(handle.is_null());
    assert!(last_error().contains("nope"));

    let garbage = dir.path().join("garbage");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    let garbage = CString::new(garbage.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rfa_model_load(garbage.as_ptr(), &mut handle) }, RfaStatus::Parse);

    assert_eq!(unsafe { rfa_model_load(ptr::null(), &mut handle) }, RfaStatus::NullPointer);

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rfa_model_load(cpath.as_ptr(), &mut handle) }, RfaStatus::Ok);
    let oov: Vec<u32> = vec![4, 99];
    let mut buf = [0u32; 4];
    let mut len = 0;
    assert_eq!(
        unsafe { rfa_model_translate(handle, oov.as_ptr(), oov.len(), 0, 0, buf.as_mut_ptr(), buf.len(), &mut len) },
        RfaStatus::OutOfVocab
    );
    let src: Vec<u32> = vec![4, 5];
    let st = unsafe { rfa_model_translate(handle, src.as_ptr(), src.len(), 0, 10, ptr::null_mut(), 0, &mut len) };
    assert!(st == RfaStatus::Ok && len == 0 || st == RfaStatus::BufferTooSmall && len > 0);
    unsafe { rfa_model_free(handle) };
    unsafe { rfa_model_free(ptr::null_mut()) };
}

#[test]
fn feature_map_round_trip() {
    let mut map = ptr::null_mut();
    assert_eq!(unsafe { rfa_feature_map_new(4, 16, 1.0, 7, &mut map) }, RfaStatus::Ok);
    assert_eq!(unsafe { rfa_feature_map_output_dim(map) }, 32);
    let x = [0.3, -0.2, 0.5, 0.1];
    let mut out = [0.0; 32];
    assert_eq!(unsafe { rfa_feature_map_phi(map, x.as_ptr(), 4, out.as_mut_ptr(), 32) }, RfaStatus::Ok);
    let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 1.0).abs() < 1e-12);
    let mut k = 0.0;
    assert_eq!(unsafe { rfa_feature_map_kernel(map, x.as_ptr(), x.as_ptr(), 4, &mut k) }, RfaStatus::Ok);
    assert!((k - 1.0).abs() < 1e-12);
    assert_eq!(
        unsafe { rfa_feature_map_phi(map, x.as_ptr(), 3, out.as_mut_ptr(), 32) },
        RfaStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { rfa_feature_map_phi(map, x.as_ptr(), 4, out.as_mut_ptr(), 31) },
        RfaStatus::InvalidArgument
    );
    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { rfa_feature_map_new(0, 16, 1.0, 7, &mut bad) }, RfaStatus::InvalidArgument);
    assert!(bad.is_null());
    unsafe { rfa_feature_map_free(map) };
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(rfa_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("rfa_doc.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "rfa_last_error_message",
        "rfa_version",
        "rfa_model_load",
        "rfa_model_free",
        "rfa_model_vocab_size",
        "rfa_model_translate",
        "rfa_model_log_prob",
        "rfa_feature_map_new",
        "rfa_feature_map_free",
        "rfa_feature_map_output_dim",
        "rfa_feature_map_phi",
        "rfa_feature_map_kernel",
        "RFA_STATUS_BUFFER_TOO_SMALL",
        "typedef struct RfaModel RfaModel",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
}

/// Builds the static library, compiles a C program against it and the
/// generated header, then runs it. Skipped when no C compiler is on PATH.
#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let target_dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("c-abi");
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("Cargo.toml");
    let built = Command::new(env!("CARGO"))
        .args(["build", "--quiet", "--lib", "--manifest-path"])
        .arg(&manifest)
        .arg("--target-dir")
        .arg(&target_dir)
        .status()
        .unwrap();
    assert!(built.success(), "building the static library failed");
    let lib = target_dir.join("debug").join("librfa_doc_ffi.a");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "rfa_doc.h"

int main(void) {
    RfaFeatureMap *map = NULL;
    if (rfa_feature_map_new(3, 8, 1.0, 42, &map) != RFA_STATUS_OK) return 1;
    double x[3] = {1.0, 2.0, 3.0};
    double phi[16];
    if (rfa_feature_map_phi(map, x, 3, phi, 16) != RFA_STATUS_OK) return 2;
    double n = 0.0;
    for (int i = 0; i < 16; i++) n += phi[i] * phi[i];
    if (fabs(n - 1.0) > 1e-9) return 3;
    RfaModel *model = NULL;
    if (rfa_model_load("/nonexistent/file", &model) != RFA_STATUS_IO) return 4;
    if (rfa_last_error_message() == NULL) return 5;
    rfa_feature_map_free(map);
    printf("ok %s\n", rfa_version());
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
