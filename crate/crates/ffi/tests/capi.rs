use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use affectloop_ffi::*;

fn last_error() -> String {
    let p = al_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    al_string_free(s);
    out
}

#[test]
fn update_target_matches_core() {
    let (mut v, mut a) = (0.0, 0.0);
    let st = unsafe { al_update_target(-0.4, 0.6, 0.6, -0.4, 0.5, &mut v, &mut a) };
    assert_eq!(st, AlStatus::Ok);
    assert!(al_last_error().is_null());
    assert!((v - 0.1).abs() < 1e-12 && (a - 0.1).abs() < 1e-12);

    let st = unsafe { al_update_target(0.0, 0.0, 0.5, 0.5, 1.5, &mut v, &mut a) };
    assert_eq!(st, AlStatus::InvalidArgument);
    assert!(last_error().contains("1.5"));
    let st = unsafe { al_update_target(0.0, 0.0, 0.5, 0.5, 0.5, ptr::null_mut(), &mut a) };
    assert_eq!(st, AlStatus::NullPointer);
}

#[test]
fn plan_generate_and_score() {
    unsafe {
        let mut planner = ptr::null_mut();
        assert_eq!(al_planner_new(ptr::null(), &mut planner), AlStatus::Ok);
        let mut plan = ptr::null_mut();
        assert_eq!(al_planner_plan(planner, -0.4, 0.6, 0.5, -0.3, 4, 10.0, 1.0, &mut plan), AlStatus::Ok);
        let plan_json = CString::new(take(plan)).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(plan_json.to_str().unwrap()).unwrap();
        assert_eq!(parsed["sections"], 4);

        let mut clip = ptr::null_mut();
        assert_eq!(al_generate(plan_json.as_ptr(), -0.4, 0.6, 7, 16000, &mut clip), AlStatus::Ok);
        let (mut samples, mut n, mut rate) = (ptr::null(), 0usize, 0u32);
        assert_eq!(al_clip_samples(clip, &mut samples, &mut n, &mut rate), AlStatus::Ok);
        assert_eq!((n, rate), (160_000, 16_000));
        assert!(std::slice::from_raw_parts(samples, n).iter().all(|x| x.abs() <= 1.0));

        let mut report = ptr::null_mut();
        assert_eq!(al_clip_metrics(clip, 0.5, -0.3, &mut report), AlStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(&take(report)).unwrap();
        assert!(report["plan_cons"].as_f64().unwrap() >= 0.0);

        let dir = tempfile::tempdir().unwrap();
        let wav = CString::new(dir.path().join("x.wav").to_str().unwrap()).unwrap();
        assert_eq!(al_clip_write_wav(clip, wav.as_ptr()), AlStatus::Ok);
        assert!(dir.path().join("x.wav").metadata().unwrap().len() > 44);

        al_clip_free(clip);
        al_planner_free(planner);
    }
}

#[test]
fn bad_plan_json_is_a_parse_error() {
    let mut clip = ptr::null_mut();
    let bad = CString::new("{\"sections\":").unwrap();
    assert_eq!(unsafe { al_generate(bad.as_ptr(), 0.0, 0.0, 1, 16000, &mut clip) }, AlStatus::Parse);
    assert!(clip.is_null());
    assert_eq!(unsafe { al_generate(ptr::null(), 0.0, 0.0, 1, 16000, &mut clip) }, AlStatus::NullPointer);
}

#[test]
fn decoder_reads_synthetic_eeg() {
    let rec = affectloop::signal::synth::affect_recording(0.5, -0.4, 12.0, 128.0, 0.0, 2).unwrap();
    let flat: Vec<f64> = rec.samples().concat();
    let labels: Vec<CString> = rec.channels().iter().map(|c| CString::new(c.as_str()).unwrap()).collect();
    let label_ptrs: Vec<*const c_char> = labels.iter().map(|c| c.as_ptr()).collect();
    unsafe {
        let mut d = ptr::null_mut();
        assert_eq!(al_decoder_new(ptr::null(), &mut d), AlStatus::Ok);
        let (mut v, mut a) = (0.0, 0.0);
        let st = al_decoder_decode(
            d, flat.as_ptr(), rec.n_channels(), rec.n_samples(), label_ptrs.as_ptr(), 128.0, 4.0, 2.0, &mut v, &mut a,
        );
        assert_eq!(st, AlStatus::Ok, "{}", last_error());
        assert!((v - 0.5).abs() < 0.05 && (a + 0.4).abs() < 0.05, "({v}, {a})");

        let st = al_decoder_decode(
            d, flat.as_ptr(), rec.n_channels(), rec.n_samples(), label_ptrs.as_ptr(), 128.0, 40.0, 2.0, &mut v, &mut a,
        );
        assert_eq!(st, AlStatus::Decoder);
        al_decoder_free(d);
    }
}

#[test]
fn session_runs_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new(r#"{"max_rounds":2,"alpha":1.0,"clip_affect":"ideal","sample_rate_hz":8000}"#).unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut report = ptr::null_mut();
    let st = unsafe { al_session_run(cfg.as_ptr(), 3, out.as_ptr(), &mut report) };
    assert_eq!(st, AlStatus::Ok, "{}", last_error());
    let report: serde_json::Value = serde_json::from_str(&unsafe { take(report) }).unwrap();
    assert!(report["rounds"].as_array().unwrap().len() <= 2);
    assert!(dir.path().join("report.json").exists());

    let live = CString::new(r#"{"subject":{"kind":"live","frames_per_round":1,"timeout_ms":10}}"#).unwrap();
    let mut none = ptr::null_mut();
    let st = unsafe { al_session_run(live.as_ptr(), 0, ptr::null(), &mut none) };
    assert_eq!(st, AlStatus::InvalidArgument);
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(al_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/affectloop.h")).unwrap();
    for f in ["al_last_error", "al_decoder_decode", "al_planner_plan", "al_generate", "al_clip_metrics", "al_session_run"] {
        assert!(header.contains(&format!("{f}(")), "{f} missing");
    }
    assert!(header.contains("typedef struct AlClip AlClip;"));
    let Ok(cc) = which_cc() else { return };
    let obj = tempfile::tempdir().unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-c"])
        .arg(root.join("tests/c/consumer.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg("-o")
        .arg(obj.path().join("consumer.o"))
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
