//! C ABI surface for the attentive-nas crate.
//!
//! All handles are opaque pointers created and destroyed by this library.
//! Every fallible call returns a [`NasStatus`]; on failure a thread-local
//! message is available from [`nas_last_error_message`] until the next
//! failing call on the same thread. Strings returned through out-pointers
//! are owned by the caller and must be released with [`nas_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

use attentive_nas::error::Error;
use attentive_nas::estimators::{AccuracyPredictor, OracleParams};
use attentive_nas::flops::arch_flops;
use attentive_nas::rng::substream;
use attentive_nas::sampler::{
    rejection_sample, FlopsBinning, SamplerTables, FACTORIZED_MAX_TRIALS,
};
use attentive_nas::space::{default_space_with, ArchJson, SearchSpace};
use attentive_nas::supernet::{eval_subnet, SupernetState};
use attentive_nas::Mflops;

/// Result code for every fallible FFI call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NasStatus {
    Ok = 0,
    /// A pointer argument was null or a scalar argument was out of range.
    InvalidArgument = 1,
    /// The architecture failed validation against the search space.
    InvalidArchitecture = 2,
    /// Sampling failed (empty prior, unpopulated bin, or trial budget hit).
    Sampling = 3,
    Io = 4,
    Json = 5,
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: NasStatus, message: impl Into<Vec<u8>>) -> NasStatus {
    let message = CString::new(message).unwrap_or_else(|_| CString::new("invalid message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
    status
}

fn fail_error(e: Error) -> NasStatus {
    let status = match &e {
        Error::InvalidArchitecture(_) => NasStatus::InvalidArchitecture,
        Error::EmptyPrior | Error::UnpopulatedBin { .. } | Error::MaxTrialsExceeded { .. } => {
            NasStatus::Sampling
        }
        Error::Io(_) => NasStatus::Io,
        Error::Json(_) => NasStatus::Json,
        Error::EmptyInput(_) | Error::DimensionMismatch { .. } | Error::Config(_) => {
            NasStatus::InvalidArgument
        }
        _ => NasStatus::Internal,
    };
    fail(status, e.to_string())
}

/// Message for the most recent failure on this thread, or null if the last
/// call succeeded. The pointer is valid until the next failing call.
#[no_mangle]
pub extern "C" fn nas_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |s| s.as_ptr())
    })
}

/// Opaque search-space handle.
pub struct NasSpace {
    inner: SearchSpace,
}

/// Opaque sampler-tables handle (empirical prior + conditionals).
pub struct NasTables {
    inner: SamplerTables,
}

/// Opaque random-forest accuracy-predictor handle.
pub struct NasPredictor {
    inner: AccuracyPredictor,
}

/// Opaque simulated-supernet state handle.
pub struct NasState {
    inner: SupernetState,
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, NasStatus> {
    if path.is_null() {
        return Err(fail(NasStatus::InvalidArgument, "path is null"));
    }
    match CStr::from_ptr(path).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(NasStatus::InvalidArgument, "path is not valid UTF-8")),
    }
}

unsafe fn arch_arg(
    space: &SearchSpace,
    arch_json: *const c_char,
) -> Result<attentive_nas::ArchitectureConfig, NasStatus> {
    if arch_json.is_null() {
        return Err(fail(NasStatus::InvalidArgument, "arch_json is null"));
    }
    let text = CStr::from_ptr(arch_json)
        .to_str()
        .map_err(|_| fail(NasStatus::InvalidArgument, "arch_json is not valid UTF-8"))?;
    let doc: ArchJson =
        serde_json::from_str(text).map_err(|e| fail(NasStatus::Json, e.to_string()))?;
    space.from_json(&doc).map_err(fail_error)
}

macro_rules! deref_or_invalid {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => return fail(NasStatus::InvalidArgument, concat!($name, " is null")),
        }
    };
}

/// Create the default search space. `couple_stem_width` ties the stem width
/// to the first stage width. Never fails; release with [`nas_space_free`].
#[no_mangle]
pub extern "C" fn nas_space_new(couple_stem_width: bool) -> *mut NasSpace {
    Box::into_raw(Box::new(NasSpace {
        inner: default_space_with(couple_stem_width),
    }))
}

/// Release a space handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn nas_space_free(space: *mut NasSpace) {
    if !space.is_null() {
        drop(unsafe { Box::from_raw(space) });
    }
}

/// Number of decision axes in the space.
#[no_mangle]
pub extern "C" fn nas_space_axis_count(space: *const NasSpace) -> usize {
    unsafe { space.as_ref() }.map_or(0, |s| s.inner.axis_count())
}

/// Validate an architecture JSON document against the space.
#[no_mangle]
pub extern "C" fn nas_arch_validate(
    space: *const NasSpace,
    arch_json: *const c_char,
) -> NasStatus {
    let space = deref_or_invalid!(space, "space");
    match unsafe { arch_arg(&space.inner, arch_json) } {
        Ok(_) => NasStatus::Ok,
        Err(status) => status,
    }
}

/// Compute an architecture's multiply-accumulate cost in MFLOPs.
#[no_mangle]
pub extern "C" fn nas_arch_flops(
    space: *const NasSpace,
    arch_json: *const c_char,
    out_mflops: *mut f64,
) -> NasStatus {
    let space = deref_or_invalid!(space, "space");
    if out_mflops.is_null() {
        return fail(NasStatus::InvalidArgument, "out_mflops is null");
    }
    let arch = match unsafe { arch_arg(&space.inner, arch_json) } {
        Ok(a) => a,
        Err(status) => return status,
    };
    match arch_flops(&space.inner, &arch) {
        Ok(mflops) => {
            unsafe { *out_mflops = mflops.0 };
            NasStatus::Ok
        }
        Err(e) => fail_error(e),
    }
}

/// Build sampler tables from `m` uniform draws binned every `step` MFLOPs.
#[no_mangle]
pub extern "C" fn nas_tables_build(
    space: *const NasSpace,
    m: u64,
    step: f64,
    seed: u64,
    out_tables: *mut *mut NasTables,
) -> NasStatus {
    let space = deref_or_invalid!(space, "space");
    if out_tables.is_null() {
        return fail(NasStatus::InvalidArgument, "out_tables is null");
    }
    let binning = match FlopsBinning::new(step) {
        Ok(b) => b,
        Err(e) => return fail_error(e),
    };
    match SamplerTables::build(&space.inner, m, binning, seed) {
        Ok(tables) => {
            unsafe { *out_tables = Box::into_raw(Box::new(NasTables { inner: tables })) };
            NasStatus::Ok
        }
        Err(e) => fail_error(e),
    }
}

/// Persist sampler tables as JSON.
#[no_mangle]
pub extern "C" fn nas_tables_save(
    space: *const NasSpace,
    tables: *const NasTables,
    path: *const c_char,
) -> NasStatus {
    let space = deref_or_invalid!(space, "space");
    let tables = deref_or_invalid!(tables, "tables");
    let path = match unsafe { path_arg(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match tables.inner.save(&space.inner, &path) {
        Ok(()) => NasStatus::Ok,
        Err(e) => fail_error(e),
    }
}

/// Load sampler tables previously written by [`nas_tables_save`].
#[no_mangle]
pub extern "C" fn nas_tables_load(
    space: *const NasSpace,
    path: *const c_char,
    out_tables: *mut *mut NasTables,
) -> NasStatus {
    let space = deref_or_invalid!(space, "space");
    if out_tables.is_null() {
        return fail(NasStatus::InvalidArgument, "out_tables is null");
    }
    let path = match unsafe { path_arg(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match SamplerTables::load(&space.inner, &path) {
        Ok(tables) => {
            unsafe { *out_tables = Box::into_raw(Box::new(NasTables { inner: tables })) };
            NasStatus::Ok
        }
        Err(e) => fail_error(e),
    }
}

/// Release a tables handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn nas_tables_free(tables: *mut NasTables) {
    if !tables.is_null() {
        drop(unsafe { Box::from_raw(tables) });
    }
}

/// Draw one architecture whose FLOPs fall in the bin containing
/// `target_mflops`, returning it as a JSON string in `out_json`.
#[no_mangle]
pub extern "C" fn nas_sample_arch(
    space: *const NasSpace,
    tables: *const NasTables,
    target_mflops: f64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> NasStatus {
    let space = deref_or_invalid!(space, "space");
    let tables = deref_or_invalid!(tables, "tables");
    if out_json.is_null() {
        return fail(NasStatus::InvalidArgument, "out_json is null");
    }
    let bin = tables.inner.prior.binning.bin(Mflops(target_mflops));
    let mut rng = substream(seed, "ffi.sample");
    let sample = match rejection_sample(
        &space.inner,
        &tables.inner.conditional,
        bin,
        FACTORIZED_MAX_TRIALS,
        &mut rng,
    ) {
        Ok(s) => s,
        Err(e) => return fail_error(e),
    };
    let doc = match space.inner.to_json(&sample.arch) {
        Ok(d) => d,
        Err(e) => return fail_error(e),
    };
    let text = match serde_json::to_string(&doc) {
        Ok(t) => t,
        Err(e) => return fail(NasStatus::Json, e.to_string()),
    };
    match CString::new(text) {
        Ok(s) => {
            unsafe { *out_json = s.into_raw() };
            NasStatus::Ok
        }
        Err(_) => fail(NasStatus::Internal, "interior NUL in JSON output"),
    }
}

/// Release a string returned by this library. Null is a no-op.
#[no_mangle]
pub extern "C" fn nas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Load a random-forest predictor from its JSON file.
#[no_mangle]
pub extern "C" fn nas_predictor_load(
    path: *const c_char,
    out_predictor: *mut *mut NasPredictor,
) -> NasStatus {
    if out_predictor.is_null() {
        return fail(NasStatus::InvalidArgument, "out_predictor is null");
    }
    let path = match unsafe { path_arg(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match AccuracyPredictor::load(&path) {
        Ok(predictor) => {
            unsafe {
                *out_predictor = Box::into_raw(Box::new(NasPredictor { inner: predictor }))
            };
            NasStatus::Ok
        }
        Err(e) => fail_error(e),
    }
}

/// Release a predictor handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn nas_predictor_free(predictor: *mut NasPredictor) {
    if !predictor.is_null() {
        drop(unsafe { Box::from_raw(predictor) });
    }
}

/// Predict accuracy from a feature vector of length `len`.
#[no_mangle]
pub extern "C" fn nas_predictor_predict(
    predictor: *const NasPredictor,
    features: *const f64,
    len: usize,
    out_accuracy: *mut f64,
) -> NasStatus {
    let predictor = deref_or_invalid!(predictor, "predictor");
    if features.is_null() || out_accuracy.is_null() {
        return fail(NasStatus::InvalidArgument, "features or out_accuracy is null");
    }
    let features = unsafe { std::slice::from_raw_parts(features, len) };
    match predictor.inner.predict(features) {
        Ok(v) => {
            unsafe { *out_accuracy = v };
            NasStatus::Ok
        }
        Err(e) => fail_error(e),
    }
}

/// Load a trained simulated-supernet state from its JSON file.
#[no_mangle]
pub extern "C" fn nas_state_load(
    path: *const c_char,
    out_state: *mut *mut NasState,
) -> NasStatus {
    if out_state.is_null() {
        return fail(NasStatus::InvalidArgument, "out_state is null");
    }
    let path = match unsafe { path_arg(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return fail(NasStatus::Io, e.to_string()),
    };
    match serde_json::from_str::<SupernetState>(&text) {
        Ok(state) => {
            unsafe { *out_state = Box::into_raw(Box::new(NasState { inner: state })) };
            NasStatus::Ok
        }
        Err(e) => fail(NasStatus::Json, e.to_string()),
    }
}

/// Release a state handle. Null is a no-op.
#[no_mangle]
pub extern "C" fn nas_state_free(state: *mut NasState) {
    if !state.is_null() {
        drop(unsafe { Box::from_raw(state) });
    }
}

/// Score an architecture with a trained supernet state under the default
/// synthetic oracle parameters.
#[no_mangle]
pub extern "C" fn nas_eval_arch(
    state: *const NasState,
    space: *const NasSpace,
    arch_json: *const c_char,
    out_score: *mut f64,
) -> NasStatus {
    let state = deref_or_invalid!(state, "state");
    let space = deref_or_invalid!(space, "space");
    if out_score.is_null() {
        return fail(NasStatus::InvalidArgument, "out_score is null");
    }
    let arch = match unsafe { arch_arg(&space.inner, arch_json) } {
        Ok(a) => a,
        Err(status) => return status,
    };
    match eval_subnet(&state.inner, &OracleParams::default(), &space.inner, &arch) {
        Ok(v) => {
            unsafe { *out_score = v };
            NasStatus::Ok
        }
        Err(e) => fail_error(e),
    }
}
