//! C ABI over the kpsample pipeline.
//!
//! Every fallible function returns a [`KpsStatus`]; on failure the message is
//! available from [`kps_last_error`] on the same thread. Handles are opaque
//! and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use kpsample::config::RunConfig;
use kpsample::evaluation::{ape, EvaluationConfig};
use kpsample::ingest::{load_trajectory, Dataset};
use kpsample::pipeline::{write_report, FrameProcessor};
use kpsample::synth::{make_dataset, Scenario, SynthSpec};
use kpsample::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KpsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    NotFound = 4,
    Io = 5,
    Corrupt = 6,
    DimensionMismatch = 7,
    Degenerate = 8,
    External = 9,
    Panic = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> KpsStatus {
    match err {
        Error::Pipeline { source, .. } => status_of(source),
        Error::InvalidArgument(_) | Error::OutOfBounds { .. } | Error::UnknownCombination(_) => {
            KpsStatus::InvalidArgument
        }
        Error::Config(_) => KpsStatus::Config,
        Error::NotFound(_) => KpsStatus::NotFound,
        Error::Io { .. } => KpsStatus::Io,
        Error::Corrupt { .. } | Error::Parse { .. } | Error::Image(_) | Error::Json(_) => KpsStatus::Corrupt,
        Error::DimensionMismatch(_) | Error::Consistency(_) | Error::DescriptorMismatch(_) => {
            KpsStatus::DimensionMismatch
        }
        Error::Degenerate(_) | Error::DegenerateGeometry(_) => KpsStatus::Degenerate,
        Error::External { .. } => KpsStatus::External,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), KpsStatus>) -> KpsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KpsStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            KpsStatus::Panic
        }
    }
}

fn fail(err: Error) -> KpsStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null(what: &str) -> KpsStatus {
    set_error(format!("{what} is null"));
    KpsStatus::NullPointer
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, KpsStatus> {
    if ptr.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(format!("{what} is not UTF-8"));
        KpsStatus::InvalidArgument
    })
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next kpsample call on the same thread.
#[no_mangle]
pub extern "C" fn kps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opaque dataset handle.
pub struct KpsDataset {
    inner: Dataset,
}

/// Opaque per-frame pipeline handle (tracker and odometry state).
pub struct KpsPipeline {
    inner: FrameProcessor,
}

/// Opens a dataset directory.
///
/// # Safety
/// `path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kps_dataset_open(path: *const c_char, out: *mut *mut KpsDataset) -> KpsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let inner = Dataset::open(path).map_err(fail)?;
        *out = Box::into_raw(Box::new(KpsDataset { inner }));
        Ok(())
    })
}

/// Number of frames, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a handle from [`kps_dataset_open`].
#[no_mangle]
pub unsafe extern "C" fn kps_dataset_frame_count(dataset: *const KpsDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `dataset` must be null or a handle from [`kps_dataset_open`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kps_dataset_free(dataset: *mut KpsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Creates a pipeline from TOML config text; null means all defaults.
///
/// # Safety
/// `config_toml` must be null or a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kps_pipeline_new(config_toml: *const c_char, out: *mut *mut KpsPipeline) -> KpsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = if config_toml.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_toml(str_arg(config_toml, "config_toml")?).map_err(fail)?
        };
        let inner = FrameProcessor::new(&cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(KpsPipeline { inner }));
        Ok(())
    })
}

/// Processes frame `index` of `dataset`. Frames must be fed in order.
/// `pose_out` receives `tx ty tz qx qy qz qw`; `sampled_out` (optional)
/// the number of registered points.
///
/// # Safety
/// Handles must be live; `pose_out` must hold 7 doubles; `sampled_out`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn kps_pipeline_process_frame(
    pipeline: *mut KpsPipeline,
    dataset: *const KpsDataset,
    index: usize,
    pose_out: *mut f64,
    sampled_out: *mut usize,
) -> KpsStatus {
    guard(|| {
        let pipeline = pipeline.as_mut().ok_or_else(|| null("pipeline"))?;
        let dataset = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        if pose_out.is_null() {
            return Err(null("pose_out"));
        }
        let frame = dataset.inner.load_frame(index).map_err(fail)?;
        let out = pipeline.inner.process(index, &frame).map_err(fail)?;
        let t = out.pose.translation();
        let q = out.pose.rotation().quaternion();
        let pose = std::slice::from_raw_parts_mut(pose_out, 7);
        pose.copy_from_slice(&[t.x, t.y, t.z, q.i, q.j, q.k, q.w]);
        if !sampled_out.is_null() {
            *sampled_out = out.record.sampled_points;
        }
        Ok(())
    })
}

/// # Safety
/// `pipeline` must be null or a handle from [`kps_pipeline_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kps_pipeline_free(pipeline: *mut KpsPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}

/// Runs a whole config file and writes the reports into `out_dir`.
///
/// # Safety
/// Arguments must be valid C strings.
#[no_mangle]
pub unsafe extern "C" fn kps_run(config_path: *const c_char, out_dir: *const c_char) -> KpsStatus {
    guard(|| {
        let cfg = RunConfig::load(&PathBuf::from(str_arg(config_path, "config_path")?)).map_err(fail)?;
        let out = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let report = kpsample::pipeline::run(&cfg).map_err(fail)?;
        write_report(&report, &out).map_err(fail)
    })
}

/// Absolute pose error between two TUM files.
///
/// # Safety
/// Paths must be valid C strings; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn kps_eval_tum(
    est_path: *const c_char,
    gt_path: *const c_char,
    align: bool,
    max_dt: f64,
    trans_mean: *mut f64,
    trans_rmse: *mut f64,
    rot_mean_deg: *mut f64,
) -> KpsStatus {
    guard(|| {
        if trans_mean.is_null() || trans_rmse.is_null() || rot_mean_deg.is_null() {
            return Err(null("output pointer"));
        }
        let est = load_trajectory(str_arg(est_path, "est_path")?.as_ref()).map_err(fail)?;
        let gt = load_trajectory(str_arg(gt_path, "gt_path")?.as_ref()).map_err(fail)?;
        let cfg = EvaluationConfig { align, max_dt };
        cfg.validate().map_err(fail)?;
        let r = ape(&est, &gt, &cfg).map_err(fail)?;
        *trans_mean = r.translation.mean;
        *trans_rmse = r.translation.rmse;
        *rot_mean_deg = r.rotation.mean;
        Ok(())
    })
}

/// Renders a synthetic dataset (`room`, `corridor` or `open`).
///
/// # Safety
/// Strings must be valid C strings.
#[no_mangle]
pub unsafe extern "C" fn kps_synth(
    scenario: *const c_char,
    frames: usize,
    seed: u64,
    out_dir: *const c_char,
) -> KpsStatus {
    guard(|| {
        let scenario = Scenario::parse(str_arg(scenario, "scenario")?).map_err(fail)?;
        let out = PathBuf::from(str_arg(out_dir, "out_dir")?);
        make_dataset(&SynthSpec::new(scenario, frames, seed), &out).map_err(fail)?;
        Ok(())
    })
}
