//! End-to-end exercises of the C ABI surface, driven from Rust.

use std::ffi::{CStr, CString};

use attentive_nas::estimators::{fit_predictor, ForestConfig};
use attentive_nas::space::default_space;
use attentive_nas::supernet::SupernetState;
use attentive_nas_ffi::*;

fn arch_json_cstring() -> CString {
    let space = default_space();
    let arch = space.smallest_arch();
    let doc = space.to_json(&arch).unwrap();
    CString::new(serde_json::to_string(&doc).unwrap()).unwrap()
}

#[test]
fn space_and_flops_round_trip() {
    let space = nas_space_new(false);
    assert_eq!(nas_space_axis_count(space), 28);
    let arch = arch_json_cstring();
    assert_eq!(nas_arch_validate(space, arch.as_ptr()), NasStatus::Ok);
    let mut mflops = 0.0;
    assert_eq!(
        nas_arch_flops(space, arch.as_ptr(), &mut mflops),
        NasStatus::Ok
    );
    assert!(mflops > 150.0 && mflops < 250.0, "mflops = {mflops}");
    nas_space_free(space);
}

#[test]
fn invalid_inputs_set_error_message() {
    let space = nas_space_new(false);
    let bad = CString::new("{\"resolution\": 9999}").unwrap();
    let status = nas_arch_validate(space, bad.as_ptr());
    assert_ne!(status, NasStatus::Ok);
    let message = nas_last_error_message();
    assert!(!message.is_null());
    let text = unsafe { CStr::from_ptr(message) }.to_str().unwrap();
    assert!(!text.is_empty());

    let mut mflops = 0.0;
    assert_eq!(
        nas_arch_flops(std::ptr::null(), bad.as_ptr(), &mut mflops),
        NasStatus::InvalidArgument
    );
    nas_space_free(space);
}

#[test]
fn tables_build_sample_save_load() {
    let space = nas_space_new(false);
    let mut tables: *mut NasTables = std::ptr::null_mut();
    assert_eq!(
        nas_tables_build(space, 20_000, 25.0, 7, &mut tables),
        NasStatus::Ok
    );

    let mut json: *mut std::ffi::c_char = std::ptr::null_mut();
    assert_eq!(
        nas_sample_arch(space, tables, 700.0, 1, &mut json),
        NasStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    nas_string_free(json);
    let arch = CString::new(text).unwrap();
    let mut mflops = 0.0;
    assert_eq!(
        nas_arch_flops(space, arch.as_ptr(), &mut mflops),
        NasStatus::Ok
    );
    assert!((700.0..725.0).contains(&mflops), "mflops = {mflops}");

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("tables.json").to_str().unwrap()).unwrap();
    assert_eq!(nas_tables_save(space, tables, path.as_ptr()), NasStatus::Ok);
    let mut reloaded: *mut NasTables = std::ptr::null_mut();
    assert_eq!(
        nas_tables_load(space, path.as_ptr(), &mut reloaded),
        NasStatus::Ok
    );

    nas_tables_free(tables);
    nas_tables_free(reloaded);
    nas_space_free(space);
}

#[test]
fn predictor_load_and_predict() {
    let features: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64, (i % 5) as f64]).collect();
    let targets: Vec<f64> = features.iter().map(|f| f[0] / 40.0).collect();
    let predictor = fit_predictor(&features, &targets, ForestConfig::default(), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rf.json");
    predictor.save(&path).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut NasPredictor = std::ptr::null_mut();
    assert_eq!(nas_predictor_load(cpath.as_ptr(), &mut handle), NasStatus::Ok);
    let mut out = 0.0;
    let input = [16.0, 1.0];
    assert_eq!(
        nas_predictor_predict(handle, input.as_ptr(), input.len(), &mut out),
        NasStatus::Ok
    );
    assert!((0.0..=1.0).contains(&out));
    assert_eq!(
        nas_predictor_predict(handle, input.as_ptr(), 1, &mut out),
        NasStatus::InvalidArgument
    );
    nas_predictor_free(handle);
}

#[test]
fn state_load_and_eval() {
    let space = default_space();
    let state = SupernetState::new(&space, 0.30, 0.01);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    std::fs::write(&path, serde_json::to_string(&state).unwrap()).unwrap();

    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle: *mut NasState = std::ptr::null_mut();
    assert_eq!(nas_state_load(cpath.as_ptr(), &mut handle), NasStatus::Ok);

    let cspace = nas_space_new(false);
    let arch = arch_json_cstring();
    let mut score = 0.0;
    assert_eq!(
        nas_eval_arch(handle, cspace, arch.as_ptr(), &mut score),
        NasStatus::Ok
    );
    assert!(score > 0.0 && score < 1.0, "score = {score}");

    nas_state_free(handle);
    nas_space_free(cspace);
}

#[test]
fn generated_header_exists() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/attentive_nas.h");
    let text = std::fs::read_to_string(header).unwrap();
    assert!(text.contains("nas_arch_flops"));
    assert!(text.contains("NasStatus"));
}
