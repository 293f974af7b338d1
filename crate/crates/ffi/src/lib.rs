//! C ABI over the relpose solver.
//!
//! Keypoint sets and match results cross the boundary as opaque handles that
//! the caller releases with the matching `*_free`. Every fallible call returns
//! an [`RpStatus`]; the message of the last failure on the calling thread is
//! available from [`rp_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use relpose::geometry::rotation_error;
use relpose::nalgebra::{Matrix3, Vector3};
use relpose::{
    solve, ConsistencyParams, Keypoint, KeypointSet, MatchResult, Mode, SolveError, SolverConfig,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// No candidate correspondence survived pruning.
    Unmatchable = 3,
    /// Too few usable candidates or a rank-deficient fit.
    Degenerate = 4,
    ParseError = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpMode {
    Nr = 0,
    R = 1,
    Sm = 2,
    RSm = 3,
}

impl From<RpMode> for Mode {
    fn from(m: RpMode) -> Self {
        match m {
            RpMode::Nr => Mode::Nr,
            RpMode::R => Mode::R,
            RpMode::Sm => Mode::Sm,
            RpMode::RSm => Mode::RSm,
        }
    }
}

impl From<Mode> for RpMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Nr => RpMode::Nr,
            Mode::R => RpMode::R,
            Mode::Sm => RpMode::Sm,
            Mode::RSm => RpMode::RSm,
        }
    }
}

/// Scales of the five consistency measures.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpGamma {
    pub gamma: [f64; 5],
}

/// Solver settings; start from [`rp_solver_config_default`]. Per-round
/// scales are not exposed here.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpSolverConfig {
    pub delta: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub outer_iters: u32,
    pub irls_iters: u32,
    pub power_iters: u32,
    pub power_tol: f64,
    pub prune_threshold: f64,
    pub max_candidates: u32,
    pub select_ratio: f64,
    /// An `RpMode` value.
    pub mode: u32,
}

impl From<&SolverConfig> for RpSolverConfig {
    fn from(c: &SolverConfig) -> Self {
        Self {
            delta: c.delta,
            alpha: c.alpha,
            epsilon: c.epsilon,
            outer_iters: c.outer_iters as u32,
            irls_iters: c.irls_iters as u32,
            power_iters: c.power_iters as u32,
            power_tol: c.power_tol,
            prune_threshold: c.prune_threshold,
            max_candidates: c.max_candidates as u32,
            select_ratio: c.select_ratio,
            mode: RpMode::from(c.mode) as u32,
        }
    }
}

impl TryFrom<&RpSolverConfig> for SolverConfig {
    type Error = String;

    fn try_from(c: &RpSolverConfig) -> Result<Self, String> {
        let mode = match c.mode {
            0 => RpMode::Nr,
            1 => RpMode::R,
            2 => RpMode::Sm,
            3 => RpMode::RSm,
            other => return Err(format!("unknown mode {other}")),
        };
        Ok(SolverConfig {
            delta: c.delta,
            alpha: c.alpha,
            epsilon: c.epsilon,
            outer_iters: c.outer_iters as usize,
            irls_iters: c.irls_iters as usize,
            power_iters: c.power_iters as usize,
            power_tol: c.power_tol,
            prune_threshold: c.prune_threshold,
            max_candidates: c.max_candidates as usize,
            select_ratio: c.select_ratio,
            mode: mode.into(),
            per_iter_gammas: None,
        })
    }
}

/// Opaque keypoint set.
pub struct RpKeypointSet(KeypointSet);

/// Opaque solver output.
pub struct RpMatchResult(MatchResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: RpStatus, msg: impl Into<String>) -> RpStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into [`RpStatus::Panic`].
fn guard(f: impl FnOnce() -> RpStatus) -> RpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(RpStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn solve_status(e: &SolveError) -> RpStatus {
    match e {
        SolveError::Invalid(_) => RpStatus::InvalidArgument,
        SolveError::Unmatchable(_) => RpStatus::Unmatchable,
        SolveError::Degenerate(_) => RpStatus::Degenerate,
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn rp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a keypoint set from row-major arrays: `positions` and `normals`
/// hold `3 * n` values, `descriptors` holds `k * n`.
///
/// # Safety
/// The arrays must be valid for the lengths above and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rp_keypoint_set_new(
    positions: *const f64,
    normals: *const f64,
    descriptors: *const f64,
    n: usize,
    k: usize,
    out: *mut *mut RpKeypointSet,
) -> RpStatus {
    guard(|| {
        if out.is_null() || (n > 0 && (positions.is_null() || normals.is_null() || (k > 0 && descriptors.is_null()))) {
            return fail(RpStatus::NullPointer, "null argument");
        }
        let (Some(n3), Some(nk)) = (n.checked_mul(3), n.checked_mul(k)) else {
            return fail(RpStatus::InvalidArgument, "array sizes overflow");
        };
        let (p, nr, f) = if n == 0 {
            (&[][..], &[][..], &[][..])
        } else {
            // SAFETY: caller guarantees the lengths.
            unsafe {
                (
                    slice::from_raw_parts(positions, n3),
                    slice::from_raw_parts(normals, n3),
                    if nk == 0 { &[][..] } else { slice::from_raw_parts(descriptors, nk) },
                )
            }
        };
        let points: Result<Vec<Keypoint>, _> = (0..n)
            .map(|i| {
                Keypoint::new(
                    Vector3::from_column_slice(&p[3 * i..3 * i + 3]),
                    Vector3::from_column_slice(&nr[3 * i..3 * i + 3]),
                    f[k * i..k * i + k].to_vec(),
                )
            })
            .collect();
        match points.and_then(|pts| KeypointSet::new("ffi", k, pts)) {
            Ok(set) => {
                // SAFETY: checked non-null above.
                unsafe { *out = Box::into_raw(Box::new(RpKeypointSet(set))) };
                RpStatus::Ok
            }
            Err(e) => fail(RpStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Parses a keypoint set from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rp_keypoint_set_from_json(
    json: *const c_char,
    out: *mut *mut RpKeypointSet,
) -> RpStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(RpStatus::NullPointer, "null argument");
        }
        // SAFETY: caller guarantees a NUL-terminated string.
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(t) => t,
            Err(e) => return fail(RpStatus::ParseError, format!("not UTF-8: {e}")),
        };
        match serde_json::from_str::<KeypointSet>(text) {
            Ok(set) => {
                // SAFETY: checked non-null above.
                unsafe { *out = Box::into_raw(Box::new(RpKeypointSet(set))) };
                RpStatus::Ok
            }
            Err(e) => fail(RpStatus::ParseError, e.to_string()),
        }
    })
}

/// Number of keypoints; 0 for NULL.
///
/// # Safety
/// `set` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rp_keypoint_set_len(set: *const RpKeypointSet) -> usize {
    // SAFETY: caller guarantees a live handle.
    unsafe { set.as_ref() }.map_or(0, |s| s.0.len())
}

/// # Safety
/// `set` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rp_keypoint_set_free(set: *mut RpKeypointSet) {
    if !set.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(set) });
    }
}

#[no_mangle]
pub extern "C" fn rp_gamma_default() -> RpGamma {
    RpGamma {
        gamma: ConsistencyParams::default().as_array(),
    }
}

#[no_mangle]
pub extern "C" fn rp_solver_config_default() -> RpSolverConfig {
    (&SolverConfig::default()).into()
}

/// Estimates the pose mapping `source` onto `target`.
///
/// # Safety
/// Handles must be live; `gamma` and `config` readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rp_solve(
    source: *const RpKeypointSet,
    target: *const RpKeypointSet,
    gamma: *const RpGamma,
    config: *const RpSolverConfig,
    out: *mut *mut RpMatchResult,
) -> RpStatus {
    guard(|| {
        // SAFETY: caller guarantees validity of non-null pointers.
        let (Some(q1), Some(q2), Some(g), Some(c)) = (unsafe {
            (source.as_ref(), target.as_ref(), gamma.as_ref(), config.as_ref())
        }) else {
            return fail(RpStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(RpStatus::NullPointer, "null argument");
        }
        let gamma = match ConsistencyParams::new(g.gamma) {
            Ok(g) => g,
            Err(e) => return fail(RpStatus::InvalidArgument, e.to_string()),
        };
        let config = match SolverConfig::try_from(c) {
            Ok(c) => c,
            Err(e) => return fail(RpStatus::InvalidArgument, e),
        };
        match solve(&q1.0, &q2.0, &gamma, &config) {
            Ok(r) => {
                // SAFETY: checked non-null above.
                unsafe { *out = Box::into_raw(Box::new(RpMatchResult(r))) };
                RpStatus::Ok
            }
            Err(e) => fail(solve_status(&e), e.to_string()),
        }
    })
}

/// Copies the rotation (row-major) and translation out of a result.
///
/// # Safety
/// `result` must be live; `rotation` writable for 9 values, `translation` for 3.
#[no_mangle]
pub unsafe extern "C" fn rp_match_result_transform(
    result: *const RpMatchResult,
    rotation: *mut f64,
    translation: *mut f64,
) -> RpStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle.
        let Some(r) = (unsafe { result.as_ref() }) else {
            return fail(RpStatus::NullPointer, "null result");
        };
        if rotation.is_null() || translation.is_null() {
            return fail(RpStatus::NullPointer, "null output buffer");
        }
        let m = r.0.transform.rotation();
        // SAFETY: caller guarantees buffer sizes.
        let (rot, t) = unsafe { (slice::from_raw_parts_mut(rotation, 9), slice::from_raw_parts_mut(translation, 3)) };
        for i in 0..3 {
            for j in 0..3 {
                rot[3 * i + j] = m[(i, j)];
            }
            t[i] = r.0.transform.translation()[i];
        }
        RpStatus::Ok
    })
}

/// Number of surviving candidates, which is also the indicator length.
///
/// # Safety
/// `result` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn rp_match_result_candidate_count(result: *const RpMatchResult) -> usize {
    // SAFETY: caller guarantees a live handle.
    unsafe { result.as_ref() }.map_or(0, |r| r.0.candidates.len())
}

/// Writes candidate pairs as `(source, target)` index pairs into `pairs`
/// (`2 * len` entries) and their indicator values into `indicator` (`len`
/// entries, may be NULL). `len` must equal the candidate count.
///
/// # Safety
/// `result` must be live and the buffers sized as described.
#[no_mangle]
pub unsafe extern "C" fn rp_match_result_candidates(
    result: *const RpMatchResult,
    pairs: *mut usize,
    indicator: *mut f64,
    len: usize,
) -> RpStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle.
        let Some(r) = (unsafe { result.as_ref() }) else {
            return fail(RpStatus::NullPointer, "null result");
        };
        if len != r.0.candidates.len() {
            return fail(
                RpStatus::InvalidArgument,
                format!("buffer length {len} but {} candidates", r.0.candidates.len()),
            );
        }
        if len == 0 {
            return RpStatus::Ok;
        }
        if pairs.is_null() {
            return fail(RpStatus::NullPointer, "null pair buffer");
        }
        // SAFETY: caller guarantees buffer sizes.
        let out = unsafe { slice::from_raw_parts_mut(pairs, 2 * len) };
        for (i, c) in r.0.candidates.iter().enumerate() {
            out[2 * i] = c.source;
            out[2 * i + 1] = c.target;
        }
        if !indicator.is_null() {
            // SAFETY: caller guarantees buffer sizes.
            unsafe { slice::from_raw_parts_mut(indicator, len) }.copy_from_slice(&r.0.indicator);
        }
        RpStatus::Ok
    })
}

/// Number of selected correspondences.
///
/// # Safety
/// `result` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn rp_match_result_selected_count(result: *const RpMatchResult) -> usize {
    // SAFETY: caller guarantees a live handle.
    unsafe { result.as_ref() }.map_or(0, |r| r.0.selected.len())
}

/// Writes the selected correspondences as index pairs (`2 * len` entries).
///
/// # Safety
/// `result` must be live and `pairs` sized as described.
#[no_mangle]
pub unsafe extern "C" fn rp_match_result_selected(
    result: *const RpMatchResult,
    pairs: *mut usize,
    len: usize,
) -> RpStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle.
        let Some(r) = (unsafe { result.as_ref() }) else {
            return fail(RpStatus::NullPointer, "null result");
        };
        if len != r.0.selected.len() {
            return fail(
                RpStatus::InvalidArgument,
                format!("buffer length {len} but {} selected", r.0.selected.len()),
            );
        }
        if len == 0 {
            return RpStatus::Ok;
        }
        if pairs.is_null() {
            return fail(RpStatus::NullPointer, "null pair buffer");
        }
        // SAFETY: caller guarantees buffer sizes.
        let out = unsafe { slice::from_raw_parts_mut(pairs, 2 * len) };
        for (i, c) in r.0.selected.iter().enumerate() {
            out[2 * i] = c.source;
            out[2 * i + 1] = c.target;
        }
        RpStatus::Ok
    })
}

/// Serializes a result to JSON. Release the string with [`rp_string_free`].
///
/// # Safety
/// `result` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rp_match_result_to_json(result: *const RpMatchResult, out: *mut *mut c_char) -> RpStatus {
    guard(|| {
        // SAFETY: caller guarantees a live handle.
        let Some(r) = (unsafe { result.as_ref() }) else {
            return fail(RpStatus::NullPointer, "null result");
        };
        if out.is_null() {
            return fail(RpStatus::NullPointer, "null output");
        }
        let text = match serde_json::to_string(&r.0) {
            Ok(t) => t,
            Err(e) => return fail(RpStatus::InvalidArgument, e.to_string()),
        };
        match CString::new(text) {
            Ok(s) => {
                // SAFETY: checked non-null above.
                unsafe { *out = s.into_raw() };
                RpStatus::Ok
            }
            Err(e) => fail(RpStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `result` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rp_match_result_free(result: *mut RpMatchResult) {
    if !result.is_null() {
        // SAFETY: handle came from Box::into_raw.
        drop(unsafe { Box::from_raw(result) });
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rp_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: string came from CString::into_raw.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Geodesic distance in degrees between two row-major rotation matrices.
///
/// # Safety
/// `a` and `b` must be readable for 9 values and `out_deg` writable.
#[no_mangle]
pub unsafe extern "C" fn rp_rotation_error_deg(a: *const f64, b: *const f64, out_deg: *mut f64) -> RpStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out_deg.is_null() {
            return fail(RpStatus::NullPointer, "null argument");
        }
        // SAFETY: caller guarantees 9 readable values each.
        let (a, b) = unsafe { (slice::from_raw_parts(a, 9), slice::from_raw_parts(b, 9)) };
        match rotation_error(&Matrix3::from_row_slice(a), &Matrix3::from_row_slice(b)) {
            Ok(deg) => {
                // SAFETY: checked non-null above.
                unsafe { *out_deg = deg };
                RpStatus::Ok
            }
            Err(e) => fail(RpStatus::InvalidArgument, e.to_string()),
        }
    })
}
