//! Exercises the C ABI end to end: handles, status codes, error messages,
//! exported arrays and the on-disk pipeline entry point.

use std::ffi::{CStr, CString};
use std::fs;
use std::ptr;

use mobaid::camera::CameraModel;
use mobaid::frameio::simulate_to_dir;
use mobaid::simulation::{render_frame, scenario_by_name};

use mobaid_ffi::*;

fn c_str(ptr: *const std::ffi::c_char) -> String {
    assert!(!ptr.is_null());
    unsafe { CStr::from_ptr(ptr) }.to_str().expect("library strings are UTF-8").to_string()
}

fn ffi_camera(cam: &CameraModel) -> MobaidCamera {
    MobaidCamera {
        fx: cam.fx,
        fy: cam.fy,
        cx: cam.cx,
        cy: cam.cy,
        width: cam.width,
        height: cam.height,
        min_depth_m: cam.min_depth,
        max_depth_m: cam.max_depth,
    }
}

#[test]
fn version_and_status_names() {
    let version = c_str(mobaid_version());
    assert!(version.contains('.'), "version '{version}' should be dotted");
    assert_eq!(c_str(mobaid_status_name(MobaidStatus::Ok)), "ok");
    assert_eq!(c_str(mobaid_status_name(MobaidStatus::Parse)), "parse_error");
}

#[test]
fn proposer_round_trip() {
    let scenario = scenario_by_name("five-class-lineup").unwrap();
    let (frame, _) = render_frame(&scenario, 0).unwrap();
    let camera = ffi_camera(&scenario.camera_model);

    let mut proposer: *mut MobaidProposer = ptr::null_mut();
    let status = unsafe { mobaid_proposer_new(&camera, ptr::null(), &mut proposer) };
    assert_eq!(status, MobaidStatus::Ok, "{}", c_str(mobaid_last_error()));
    assert!(!proposer.is_null());

    let mut boxes: *mut MobaidBox = ptr::null_mut();
    let mut count: usize = 0;
    let status = unsafe {
        mobaid_proposer_propose(
            proposer,
            frame.depth_mm.as_ptr(),
            frame.depth_mm.len(),
            frame.timestamp,
            7,
            &mut boxes,
            &mut count,
        )
    };
    assert_eq!(status, MobaidStatus::Ok, "{}", c_str(mobaid_last_error()));
    assert!(count >= 25, "five people should yield at least 25 proposals, got {count}");
    let slice = unsafe { std::slice::from_raw_parts(boxes, count) };
    for b in slice {
        assert!(b.u_max > b.u_min && b.v_max > b.v_min);
        assert!(b.template < 5);
    }

    unsafe {
        mobaid_boxes_free(boxes, count);
        mobaid_proposer_free(proposer);
    }
}

#[test]
fn proposer_reports_argument_errors() {
    let mut proposer: *mut MobaidProposer = ptr::null_mut();
    let status = unsafe { mobaid_proposer_new(ptr::null(), ptr::null(), &mut proposer) };
    assert_eq!(status, MobaidStatus::NullPointer);
    assert!(c_str(mobaid_last_error()).contains("camera"));

    let mut bad = ffi_camera(&CameraModel::simulator_default());
    bad.fx = 0.0;
    let status = unsafe { mobaid_proposer_new(&bad, ptr::null(), &mut proposer) };
    assert_eq!(status, MobaidStatus::Config);

    let camera = ffi_camera(&CameraModel::simulator_default());
    let toml = CString::new("this is [not toml").unwrap();
    let status = unsafe { mobaid_proposer_new(&camera, toml.as_ptr(), &mut proposer) };
    assert_eq!(status, MobaidStatus::Parse);

    let status = unsafe { mobaid_proposer_new(&camera, ptr::null(), &mut proposer) };
    assert_eq!(status, MobaidStatus::Ok);
    let mut boxes: *mut MobaidBox = ptr::null_mut();
    let mut count: usize = 0;
    let wrong_len = 16usize;
    let depth = vec![1000u16; wrong_len];
    let status = unsafe {
        mobaid_proposer_propose(proposer, depth.as_ptr(), wrong_len, 0.0, 1, &mut boxes, &mut count)
    };
    assert_eq!(status, MobaidStatus::Config);
    assert!(c_str(mobaid_last_error()).contains("depth_len"));
    unsafe { mobaid_proposer_free(proposer) };
}

#[test]
fn tracker_follows_an_observation() {
    let mut tracker: *mut MobaidTracker = ptr::null_mut();
    let status = unsafe { mobaid_tracker_new(ptr::null(), ptr::null(), &mut tracker) };
    assert_eq!(status, MobaidStatus::Ok, "{}", c_str(mobaid_last_error()));

    // Camera at the origin looking down +y of the ground plane; the person
    // stands two meters ahead, well inside the default cone.
    let pose = MobaidCameraPose { x: 0.0, y: 0.0, forward_x: 0.0, forward_y: 1.0 };
    let obs = MobaidObservation { x: 0.0, y: 2.0, class: 1 };
    for frame in 0..10u64 {
        let dt = if frame == 0 { 0.0 } else { 1.0 / 15.0 };
        let status = unsafe { mobaid_tracker_step(tracker, &obs, 1, dt, frame, &pose) };
        assert_eq!(status, MobaidStatus::Ok, "{}", c_str(mobaid_last_error()));
    }

    let mut tracks: *mut MobaidTrack = ptr::null_mut();
    let mut count: usize = 0;
    let status = unsafe { mobaid_tracker_tracks(tracker, &mut tracks, &mut count) };
    assert_eq!(status, MobaidStatus::Ok);
    assert_eq!(count, 1, "one persistent observation should yield one track");
    let track = unsafe { &*tracks };
    assert!((track.x - 0.0).abs() < 0.2 && (track.y - 2.0).abs() < 0.2);
    assert_eq!(track.class, 1, "belief should settle on the observed class");
    let mass: f64 = track.belief.iter().sum();
    assert!((mass - 1.0).abs() < 1e-9, "belief sums to {mass}");
    assert!(track.belief[1] > 0.8);

    unsafe {
        mobaid_tracks_free(tracks, count);
        mobaid_tracker_free(tracker);
    }
}

#[test]
fn tracker_rejects_bad_observations() {
    let mut tracker: *mut MobaidTracker = ptr::null_mut();
    assert_eq!(
        unsafe { mobaid_tracker_new(ptr::null(), ptr::null(), &mut tracker) },
        MobaidStatus::Ok
    );
    let pose = MobaidCameraPose { x: 0.0, y: 0.0, forward_x: 0.0, forward_y: 1.0 };
    let obs = MobaidObservation { x: 0.0, y: 2.0, class: 7 };
    let status = unsafe { mobaid_tracker_step(tracker, &obs, 1, 0.0, 0, &pose) };
    assert_eq!(status, MobaidStatus::Config);
    assert!(c_str(mobaid_last_error()).contains("class 7"));

    let status = unsafe { mobaid_tracker_step(tracker, ptr::null(), 3, 0.0, 0, &pose) };
    assert_eq!(status, MobaidStatus::NullPointer);

    // A bad belief model is rejected at construction.
    let mut other: *mut MobaidTracker = ptr::null_mut();
    let hmm = CString::new("hidden a b\nobserved a b\nprior\n0.5 0.5\n").unwrap();
    let status = unsafe { mobaid_tracker_new(ptr::null(), hmm.as_ptr(), &mut other) };
    assert_ne!(status, MobaidStatus::Ok);

    unsafe { mobaid_tracker_free(tracker) };
}

#[test]
fn run_writes_logs_and_is_deterministic() {
    let scenario = scenario_by_name("five-class-lineup").unwrap();
    let root = tempfile::tempdir().unwrap();
    let seq_dir = root.path().join("seq");
    simulate_to_dir(&scenario, &seq_dir).unwrap();

    let seq = CString::new(seq_dir.to_str().unwrap()).unwrap();
    let out_a = root.path().join("a");
    let out_b = root.path().join("b");
    for out in [&out_a, &out_b] {
        let out_c = CString::new(out.to_str().unwrap()).unwrap();
        let status = unsafe { mobaid_run(seq.as_ptr(), out_c.as_ptr(), ptr::null(), 99) };
        assert_eq!(status, MobaidStatus::Ok, "{}", c_str(mobaid_last_error()));
    }
    for name in ["detections.jsonl", "tracks.jsonl", "guidance.jsonl", "stats.json"] {
        assert!(out_a.join(name).exists(), "missing {name}");
    }
    for name in ["detections.jsonl", "tracks.jsonl", "guidance.jsonl"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identically seeded runs");
    }

    let missing = CString::new(root.path().join("nope").to_str().unwrap()).unwrap();
    let out_c = CString::new(out_a.to_str().unwrap()).unwrap();
    let status = unsafe { mobaid_run(missing.as_ptr(), out_c.as_ptr(), ptr::null(), 1) };
    assert_eq!(status, MobaidStatus::Io);
    assert!(!c_str(mobaid_last_error()).is_empty());
}

#[test]
fn frees_accept_null() {
    unsafe {
        mobaid_proposer_free(ptr::null_mut());
        mobaid_tracker_free(ptr::null_mut());
        mobaid_boxes_free(ptr::null_mut(), 0);
        mobaid_tracks_free(ptr::null_mut(), 3);
    }
}
