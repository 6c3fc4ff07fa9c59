//! C ABI for the people-perception pipeline.
//!
//! The surface follows the usual C library conventions:
//!
//! - Opaque handles are created by `_new` functions and released by the
//!   matching `_free`; every `_free` accepts null.
//! - Functions return a [`MobaidStatus`] code instead of unwinding; panics
//!   are caught and reported as [`MobaidStatus::Panic`].
//! - The message for the most recent failure on the current thread is
//!   readable via [`mobaid_last_error`].
//! - Arrays handed to the caller are allocated by this library and must be
//!   returned to it (`mobaid_boxes_free`, `mobaid_tracks_free`).
//! - Configuration is TOML text in the same schema the CLI uses; a null
//!   config pointer means defaults.
//!
//! The generated header lands in `include/mobaid.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mobaid::camera::{CameraModel, DepthFrame, Pose};
use mobaid::config::PipelineConfig;
use mobaid::frameio::Sequence;
use mobaid::pipeline;
use mobaid::proposals::{frame_proposals, ProposerConfig};
use mobaid::tracking::{FieldOfView, TrackObservation, Tracker};
use mobaid::{ClassId, Error, NUM_CLASSES};

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MobaidStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Inconsistent configuration or mismatched inputs.
    Config = 3,
    /// Not enough data to run an estimator.
    InsufficientData = 4,
    /// RANSAC could not find a supported ground plane.
    NoPlaneFound = 5,
    /// A metric box center was too close to (or behind) the camera.
    DegenerateProjection = 6,
    /// A projected box lies entirely outside the image.
    NothingVisible = 7,
    /// A matrix that must be invertible was numerically singular.
    Numeric = 8,
    /// A belief update produced all-zero mass.
    ModelDegenerate = 9,
    /// The classifier failed on a frame.
    Scorer = 10,
    /// Malformed TOML, JSONL or model text.
    Parse = 11,
    /// File system failure.
    Io = 12,
    /// An internal panic was caught at the boundary.
    Panic = 13,
}

fn status_for(e: &Error) -> MobaidStatus {
    match e {
        Error::Config(_) => MobaidStatus::Config,
        Error::InsufficientData(_) => MobaidStatus::InsufficientData,
        Error::NoPlaneFound { .. } => MobaidStatus::NoPlaneFound,
        Error::DegenerateProjection { .. } => MobaidStatus::DegenerateProjection,
        Error::NothingVisible => MobaidStatus::NothingVisible,
        Error::Numeric(_) => MobaidStatus::Numeric,
        Error::ModelDegenerate => MobaidStatus::ModelDegenerate,
        Error::Scorer(_) => MobaidStatus::Scorer,
        Error::Parse(_) => MobaidStatus::Parse,
        Error::Io(_) => MobaidStatus::Io,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

type Failure = (MobaidStatus, String);
type FfiResult = std::result::Result<(), Failure>;

fn store_error(message: &str) {
    let owned = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
}

fn lib_err(e: Error) -> Failure {
    (status_for(&e), e.to_string())
}

/// Runs an entry-point body, translating errors and panics into a status.
fn guarded(body: impl FnOnce() -> FfiResult) -> MobaidStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MobaidStatus::Ok,
        Ok(Err((status, message))) => {
            store_error(&message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            store_error(&format!("internal panic: {message}"));
            MobaidStatus::Panic
        }
    }
}

unsafe fn require<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| (MobaidStatus::NullPointer, format!("{what} is null")))
}

unsafe fn require_mut<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| (MobaidStatus::NullPointer, format!("{what} is null")))
}

/// Reads a nullable C string; null means "not provided".
unsafe fn optional_text<'a>(ptr: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if ptr.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(Some)
        .map_err(|_| (MobaidStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn required_text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    optional_text(ptr, what)?.ok_or_else(|| (MobaidStatus::NullPointer, format!("{what} is null")))
}

fn parse_config(text: Option<&str>) -> Result<PipelineConfig, Failure> {
    match text {
        Some(toml) => PipelineConfig::from_toml(toml).map_err(lib_err),
        None => Ok(PipelineConfig::default()),
    }
}

/// Hands a vector to the caller as a malloc-style (pointer, length) pair.
unsafe fn export_vec<T>(items: Vec<T>, out_ptr: *mut *mut T, out_len: *mut usize) {
    let boxed = items.into_boxed_slice();
    *out_len = boxed.len();
    *out_ptr = Box::into_raw(boxed).cast::<T>();
}

unsafe fn free_exported<T>(ptr: *mut T, len: usize) {
    if ptr.is_null() {
        return;
    }
    drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(ptr, len)));
}

/// Library version as a static null-terminated string.
#[no_mangle]
pub extern "C" fn mobaid_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast::<c_char>()
}

/// Message for the most recent failure on the calling thread, or an empty
/// string. The pointer stays valid until the next failing call on the same
/// thread.
#[no_mangle]
pub extern "C" fn mobaid_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Short name of a status code (e.g. "ok", "parse_error").
#[no_mangle]
pub extern "C" fn mobaid_status_name(status: MobaidStatus) -> *const c_char {
    let name: &'static str = match status {
        MobaidStatus::Ok => "ok\0",
        MobaidStatus::NullPointer => "null_pointer\0",
        MobaidStatus::InvalidUtf8 => "invalid_utf8\0",
        MobaidStatus::Config => "config_error\0",
        MobaidStatus::InsufficientData => "insufficient_data\0",
        MobaidStatus::NoPlaneFound => "no_plane_found\0",
        MobaidStatus::DegenerateProjection => "degenerate_projection\0",
        MobaidStatus::NothingVisible => "nothing_visible\0",
        MobaidStatus::Numeric => "numeric_error\0",
        MobaidStatus::ModelDegenerate => "model_degenerate\0",
        MobaidStatus::Scorer => "scorer_error\0",
        MobaidStatus::Parse => "parse_error\0",
        MobaidStatus::Io => "io_error\0",
        MobaidStatus::Panic => "panic\0",
    };
    name.as_ptr().cast::<c_char>()
}

/// Pinhole camera intrinsics and the valid depth range.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MobaidCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub min_depth_m: f64,
    pub max_depth_m: f64,
}

impl MobaidCamera {
    fn to_model(self) -> CameraModel {
        CameraModel {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            min_depth: self.min_depth_m,
            max_depth: self.max_depth_m,
        }
    }
}

/// One region proposal: a pixel box plus the segment and template that
/// produced it. Box edges are half open, `[u_min, u_max) x [v_min, v_max)`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MobaidBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    pub segment: u32,
    pub template: u32,
}

/// Proposal front end bound to one camera: ground removal, clustering and
/// per-segment template sliding.
pub struct MobaidProposer {
    camera: CameraModel,
    config: ProposerConfig,
}

/// Creates a proposer for one camera. `config_toml` is pipeline
/// configuration TOML (the `[detector.proposer]` tables apply); pass null
/// for defaults. On success writes the handle to `out`.
///
/// # Safety
/// `camera` and `out` must be valid pointers; `config_toml` must be null or
/// a null-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mobaid_proposer_new(
    camera: *const MobaidCamera,
    config_toml: *const c_char,
    out: *mut *mut MobaidProposer,
) -> MobaidStatus {
    guarded(|| {
        let camera = require(camera, "camera")?;
        let out = require_mut(out, "out")?;
        let config = parse_config(optional_text(config_toml, "config_toml")?)?;
        let model = camera.to_model();
        model.validate().map_err(lib_err)?;
        *out = Box::into_raw(Box::new(MobaidProposer {
            camera: model,
            config: config.detector.proposer,
        }));
        Ok(())
    })
}

/// Releases a proposer. Null is a no-op.
///
/// # Safety
/// `proposer` must be null or a pointer from [`mobaid_proposer_new`] that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn mobaid_proposer_free(proposer: *mut MobaidProposer) {
    if !proposer.is_null() {
        drop(Box::from_raw(proposer));
    }
}

/// Generates proposals for one depth frame.
///
/// `depth_mm` is row-major depth in millimeters (0 = invalid) and must hold
/// exactly `width * height` samples for the proposer's camera. `seed`
/// drives the RANSAC plane fit. On success `*out_boxes`/`*out_count`
/// receive an array owned by the library; release it with
/// [`mobaid_boxes_free`]. The array is empty (possibly null) when nothing
/// was found.
///
/// # Safety
/// `proposer`, `depth_mm`, `out_boxes` and `out_count` must be valid
/// pointers and `depth_mm` must span `depth_len` readable samples.
#[no_mangle]
pub unsafe extern "C" fn mobaid_proposer_propose(
    proposer: *const MobaidProposer,
    depth_mm: *const u16,
    depth_len: usize,
    timestamp_s: f64,
    seed: u64,
    out_boxes: *mut *mut MobaidBox,
    out_count: *mut usize,
) -> MobaidStatus {
    guarded(|| {
        let proposer = require(proposer, "proposer")?;
        let out_boxes = require_mut(out_boxes, "out_boxes")?;
        let out_count = require_mut(out_count, "out_count")?;
        if depth_mm.is_null() {
            return Err((MobaidStatus::NullPointer, "depth_mm is null".into()));
        }
        let expected = proposer.camera.width as usize * proposer.camera.height as usize;
        if depth_len != expected {
            return Err((
                MobaidStatus::Config,
                format!("depth_len {depth_len} does not match the camera grid {expected}"),
            ));
        }
        let depth = std::slice::from_raw_parts(depth_mm, depth_len).to_vec();
        let frame = DepthFrame::new(
            proposer.camera.width,
            proposer.camera.height,
            depth,
            timestamp_s,
            Pose::identity(),
        )
        .map_err(lib_err)?;
        let front =
            frame_proposals(&frame, &proposer.camera, &proposer.config, seed).map_err(lib_err)?;
        let boxes: Vec<MobaidBox> = front
            .proposals
            .iter()
            .map(|p| MobaidBox {
                u_min: p.box_px.u_min,
                v_min: p.box_px.v_min,
                u_max: p.box_px.u_max,
                v_max: p.box_px.v_max,
                segment: p.segment as u32,
                template: p.template as u32,
            })
            .collect();
        export_vec(boxes, out_boxes, out_count);
        Ok(())
    })
}

/// Releases an array from [`mobaid_proposer_propose`]. Null is a no-op.
///
/// # Safety
/// `boxes`/`count` must be exactly the pair a successful call produced.
#[no_mangle]
pub unsafe extern "C" fn mobaid_boxes_free(boxes: *mut MobaidBox, count: usize) {
    free_exported(boxes, count);
}

/// One classified ground-plane observation fed to the tracker.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MobaidObservation {
    /// World ground-plane position, meters.
    pub x: f64,
    pub y: f64,
    /// Person class index: 0 pedestrian, 1 wheelchair, 2 push_wheelchair,
    /// 3 crutches, 4 walker.
    pub class: u32,
}

/// The camera's ground-plane pose, for field-of-view tests.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MobaidCameraPose {
    /// Camera position on the ground plane, meters.
    pub x: f64,
    pub y: f64,
    /// Unit-ish forward direction on the ground plane (normalized inside).
    pub forward_x: f64,
    pub forward_y: f64,
}

/// One track snapshot.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MobaidTrack {
    pub id: u64,
    /// Ground-plane position estimate, meters.
    pub x: f64,
    pub y: f64,
    /// Ground-plane velocity estimate, meters per second.
    pub vx: f64,
    pub vy: f64,
    /// Positional uncertainty (root mean marginal variance), meters.
    pub sigma_pos: f64,
    /// Belief argmax: person class index 0-4, or 5 for clutter.
    pub class: u32,
    /// Class belief, ordered as the class indices above; sums to one.
    pub belief: [f64; 6],
    /// Consecutive frames since the last matched detection.
    pub frames_since_observation: u32,
}

/// Multi-person tracker: Kalman position/velocity filters plus a per-track
/// class belief.
pub struct MobaidTracker {
    tracker: Tracker,
    fov: FieldOfView,
}

/// Creates a tracker. `config_toml` is pipeline configuration TOML (the
/// `[tracker]` and `[fov]` tables apply; null for defaults). `hmm_text` is
/// a belief model in the library's text format; null for the built-in
/// person model. On success writes the handle to `out`.
///
/// # Safety
/// `out` must be a valid pointer; the strings must be null or
/// null-terminated.
#[no_mangle]
pub unsafe extern "C" fn mobaid_tracker_new(
    config_toml: *const c_char,
    hmm_text: *const c_char,
    out: *mut *mut MobaidTracker,
) -> MobaidStatus {
    guarded(|| {
        let out = require_mut(out, "out")?;
        let config = parse_config(optional_text(config_toml, "config_toml")?)?;
        let hmm = match optional_text(hmm_text, "hmm_text")? {
            Some(text) => mobaid::belief::HmmModel::from_text(text).map_err(lib_err)?,
            None => mobaid::belief::HmmModel::people_default(),
        };
        let tracker = Tracker::new(config.tracker, hmm).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(MobaidTracker { tracker, fov: config.fov }));
        Ok(())
    })
}

/// Releases a tracker. Null is a no-op.
///
/// # Safety
/// `tracker` must be null or a pointer from [`mobaid_tracker_new`] that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn mobaid_tracker_free(tracker: *mut MobaidTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}

/// Advances the tracker by one frame.
///
/// `observations` may be null when `count` is zero. `dt_s` is the elapsed
/// time since the previous step (0 for the first). `pose` is the camera's
/// current ground pose; tracks outside its viewing cone receive no implicit
/// background evidence.
///
/// # Safety
/// `tracker` and `pose` must be valid pointers; `observations` must span
/// `count` readable elements (or be null with `count` zero).
#[no_mangle]
pub unsafe extern "C" fn mobaid_tracker_step(
    tracker: *mut MobaidTracker,
    observations: *const MobaidObservation,
    count: usize,
    dt_s: f64,
    frame: u64,
    pose: *const MobaidCameraPose,
) -> MobaidStatus {
    guarded(|| {
        let handle = require_mut(tracker, "tracker")?;
        let pose = require(pose, "pose")?;
        if observations.is_null() && count > 0 {
            return Err((MobaidStatus::NullPointer, "observations is null".into()));
        }
        let raw: &[MobaidObservation] = if count == 0 {
            &[]
        } else {
            std::slice::from_raw_parts(observations, count)
        };
        let mut converted = Vec::with_capacity(raw.len());
        for (i, obs) in raw.iter().enumerate() {
            let class = ClassId::from_index(obs.class as usize)
                .filter(|c| c.is_foreground())
                .ok_or_else(|| {
                    (
                        MobaidStatus::Config,
                        format!(
                            "observation {i} has class {}, expected 0..{}",
                            obs.class,
                            NUM_CLASSES - 1
                        ),
                    )
                })?;
            converted.push(TrackObservation { position: [obs.x, obs.y], class });
        }
        let camera = [pose.x, pose.y];
        let forward = [pose.forward_x, pose.forward_y];
        let fov = handle.fov.clone();
        handle
            .tracker
            .step(&converted, dt_s, frame, |p| fov.contains(camera, forward, p))
            .map_err(lib_err)
    })
}

/// Snapshots the live tracks, ascending by id. On success the array is
/// owned by the library; release it with [`mobaid_tracks_free`]. The array
/// is empty (possibly null) when no tracks are alive.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mobaid_tracker_tracks(
    tracker: *const MobaidTracker,
    out_tracks: *mut *mut MobaidTrack,
    out_count: *mut usize,
) -> MobaidStatus {
    guarded(|| {
        let handle = require(tracker, "tracker")?;
        let out_tracks = require_mut(out_tracks, "out_tracks")?;
        let out_count = require_mut(out_count, "out_count")?;
        let mut tracks: Vec<MobaidTrack> = handle
            .tracker
            .tracks()
            .iter()
            .map(|t| {
                let mut belief = [0.0; NUM_CLASSES];
                belief.copy_from_slice(t.belief.probs());
                MobaidTrack {
                    id: t.id,
                    x: t.state.position()[0],
                    y: t.state.position()[1],
                    vx: t.state.velocity()[0],
                    vy: t.state.velocity()[1],
                    sigma_pos: t.state.sigma_pos(),
                    class: t.belief.argmax() as u32,
                    belief,
                    frames_since_observation: t.frames_since_observation,
                }
            })
            .collect();
        tracks.sort_by_key(|t| t.id);
        export_vec(tracks, out_tracks, out_count);
        Ok(())
    })
}

/// Releases an array from [`mobaid_tracker_tracks`]. Null is a no-op.
///
/// # Safety
/// `tracks`/`count` must be exactly the pair a successful call produced.
#[no_mangle]
pub unsafe extern "C" fn mobaid_tracks_free(tracks: *mut MobaidTrack, count: usize) {
    free_exported(tracks, count);
}

/// Runs the full pipeline over an on-disk sequence directory, writing
/// detections/tracks/guidance logs and stats into `out_dir` (created if
/// missing). `config_toml` is configuration TOML text (null for defaults);
/// `seed` drives the proposal front end and the scorer.
///
/// # Safety
/// `seq_dir` and `out_dir` must be null-terminated strings; `config_toml`
/// must be null or null-terminated.
#[no_mangle]
pub unsafe extern "C" fn mobaid_run(
    seq_dir: *const c_char,
    out_dir: *const c_char,
    config_toml: *const c_char,
    seed: u64,
) -> MobaidStatus {
    guarded(|| {
        let seq_dir = required_text(seq_dir, "seq_dir")?;
        let out_dir = required_text(out_dir, "out_dir")?;
        let config = parse_config(optional_text(config_toml, "config_toml")?)?;
        let seq = Sequence::open(Path::new(seq_dir)).map_err(lib_err)?;
        pipeline::run(&seq, &config, seed, Some(Path::new(out_dir)))
            .map(|_| ())
            .map_err(lib_err)
    })
}
