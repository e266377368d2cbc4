//! C ABI for the orbsplit planner, simulator, and activation codec.
//!
//! Conventions:
//! - Every fallible call returns an [`OrbStatus`]; `ORB_STATUS_OK` (0) means
//!   success. On failure a thread-local message is set and can be read with
//!   [`orb_last_error`].
//! - Handles (`OrbScenario`, `OrbResult`) are opaque; free them with the
//!   matching `*_free` function exactly once. Passing NULL to a `*_free` is a
//!   no-op.
//! - Strings returned as `char*` are heap-allocated and must be released with
//!   [`orb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use orbsplit::codec::{decode, encode, ActivationBlock, BinaryMask};
use orbsplit::delay::{evaluate_plan, Plan};
use orbsplit::error::Error;
use orbsplit::optimizer::{astar_split, OptimizerResult};
use orbsplit::scenario::{load_scenario, parse_scenario, ScenarioSpec};
use orbsplit::sim::{compare, simulate};

/// Result codes for every fallible FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// File could not be read.
    Io = 3,
    /// Scenario or plan JSON failed to parse.
    Parse = 4,
    /// A field violated a scenario invariant.
    Validation = 5,
    /// Inputs were structurally valid but outside the model's domain.
    Domain = 6,
    /// A compressed blob failed to decode.
    Decode = 7,
    /// The requested quantity only exists for feasible plans.
    Infeasible = 8,
    /// Any other internal failure.
    Internal = 9,
}

/// A loaded, validated scenario document.
pub struct OrbScenario {
    inner: ScenarioSpec,
}

/// The outcome of a planner run.
pub struct OrbResult {
    inner: OptimizerResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> OrbStatus {
    match err {
        Error::Io { .. } => OrbStatus::Io,
        Error::Parse(_) => OrbStatus::Parse,
        Error::Validation { .. } => OrbStatus::Validation,
        Error::Domain(_) => OrbStatus::Domain,
        Error::Decode { .. } => OrbStatus::Decode,
        _ => OrbStatus::Internal,
    }
}

fn fail(err: &Error) -> OrbStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn fail_with(status: OrbStatus, msg: &str) -> OrbStatus {
    set_error(msg);
    status
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string.
unsafe fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, OrbStatus> {
    if ptr.is_null() {
        return Err(fail_with(
            OrbStatus::NullPointer,
            &format!("{name} is NULL"),
        ));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        fail_with(
            OrbStatus::InvalidUtf8,
            &format!("{name} is not valid UTF-8"),
        )
    })
}

/// # Safety
/// The plan arrays must be valid for the given lengths.
unsafe fn plan_arg(
    layer_counts: *const usize,
    num_stages: usize,
    ratios: *const f64,
    num_ratios: usize,
) -> Result<Plan, OrbStatus> {
    if layer_counts.is_null() {
        return Err(fail_with(OrbStatus::NullPointer, "layer_counts is NULL"));
    }
    if ratios.is_null() && num_ratios > 0 {
        return Err(fail_with(
            OrbStatus::NullPointer,
            "compression_ratios is NULL",
        ));
    }
    let counts = std::slice::from_raw_parts(layer_counts, num_stages).to_vec();
    let q = if num_ratios == 0 {
        Vec::new()
    } else {
        std::slice::from_raw_parts(ratios, num_ratios).to_vec()
    };
    Ok(Plan::new(counts, q))
}

fn string_out(s: String) -> *mut c_char {
    match CString::new(s) {
        Ok(c) => c.into_raw(),
        Err(_) => {
            set_error("output string contained an interior NUL");
            ptr::null_mut()
        }
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing FFI call on the same thread.
#[no_mangle]
pub extern "C" fn orb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must originate from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn orb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a scenario from a JSON string.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn orb_scenario_parse(
    json: *const c_char,
    out: *mut *mut OrbScenario,
) -> OrbStatus {
    if out.is_null() {
        return fail_with(OrbStatus::NullPointer, "out is NULL");
    }
    let text = match utf8_arg(json, "json") {
        Ok(t) => t,
        Err(s) => return s,
    };
    match parse_scenario(text) {
        Ok(scn) => {
            *out = Box::into_raw(Box::new(OrbScenario { inner: scn }));
            OrbStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Loads and validates a scenario from a JSON file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn orb_scenario_load(
    path: *const c_char,
    out: *mut *mut OrbScenario,
) -> OrbStatus {
    if out.is_null() {
        return fail_with(OrbStatus::NullPointer, "out is NULL");
    }
    let path = match utf8_arg(path, "path") {
        Ok(p) => p,
        Err(s) => return s,
    };
    match load_scenario(Path::new(path)) {
        Ok(scn) => {
            *out = Box::into_raw(Box::new(OrbScenario { inner: scn }));
            OrbStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Releases a scenario handle. NULL is a no-op.
///
/// # Safety
/// `scn` must originate from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn orb_scenario_free(scn: *mut OrbScenario) {
    if !scn.is_null() {
        drop(Box::from_raw(scn));
    }
}

/// Number of compute satellites K in the chain.
///
/// # Safety
/// `scn` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn orb_scenario_num_compute(
    scn: *const OrbScenario,
    out: *mut usize,
) -> OrbStatus {
    if scn.is_null() || out.is_null() {
        return fail_with(OrbStatus::NullPointer, "scn or out is NULL");
    }
    *out = (*scn).inner.num_compute();
    OrbStatus::Ok
}

/// Runs the A* planner. Succeeds even when no feasible plan exists; check
/// feasibility with `orb_result_is_feasible`.
///
/// # Safety
/// `scn` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn orb_optimize(
    scn: *const OrbScenario,
    out: *mut *mut OrbResult,
) -> OrbStatus {
    if scn.is_null() || out.is_null() {
        return fail_with(OrbStatus::NullPointer, "scn or out is NULL");
    }
    match astar_split(&(*scn).inner) {
        Ok(res) => {
            *out = Box::into_raw(Box::new(OrbResult { inner: res }));
            OrbStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Releases a planner result. NULL is a no-op.
///
/// # Safety
/// `res` must originate from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn orb_result_free(res: *mut OrbResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Whether the planner found a plan meeting every constraint.
///
/// # Safety
/// `res` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn orb_result_is_feasible(
    res: *const OrbResult,
    out: *mut bool,
) -> OrbStatus {
    if res.is_null() || out.is_null() {
        return fail_with(OrbStatus::NullPointer, "res or out is NULL");
    }
    *out = (*res).inner.feasible;
    OrbStatus::Ok
}

/// Objective value (pipeline delay excluding the fixed uplink constant) of a
/// feasible result.
///
/// # Safety
/// `res` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn orb_result_objective(res: *const OrbResult, out: *mut f64) -> OrbStatus {
    if res.is_null() || out.is_null() {
        return fail_with(OrbStatus::NullPointer, "res or out is NULL");
    }
    match (*res).inner.objective {
        Some(v) => {
            *out = v;
            OrbStatus::Ok
        }
        None => fail_with(OrbStatus::Infeasible, "result has no feasible plan"),
    }
}

/// End-to-end delay (including the uplink constant) of a feasible result.
///
/// # Safety
/// `res` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn orb_result_total_delay(res: *const OrbResult, out: *mut f64) -> OrbStatus {
    if res.is_null() || out.is_null() {
        return fail_with(OrbStatus::NullPointer, "res or out is NULL");
    }
    match &(*res).inner.breakdown {
        Some(bd) => {
            *out = bd.total;
            OrbStatus::Ok
        }
        None => fail_with(OrbStatus::Infeasible, "result has no feasible plan"),
    }
}

/// Copies the stage layer counts of a feasible result into `out` (capacity
/// `cap`); writes the stage count to `len`.
///
/// # Safety
/// `out` must point to at least `cap` writable elements.
#[no_mangle]
pub unsafe extern "C" fn orb_result_layer_counts(
    res: *const OrbResult,
    out: *mut usize,
    cap: usize,
    len: *mut usize,
) -> OrbStatus {
    if res.is_null() || out.is_null() || len.is_null() {
        return fail_with(OrbStatus::NullPointer, "res, out, or len is NULL");
    }
    match &(*res).inner.plan {
        Some(plan) => {
            *len = plan.layer_counts.len();
            if plan.layer_counts.len() > cap {
                return fail_with(OrbStatus::Domain, "output capacity too small");
            }
            for (i, &c) in plan.layer_counts.iter().enumerate() {
                *out.add(i) = c;
            }
            OrbStatus::Ok
        }
        None => fail_with(OrbStatus::Infeasible, "result has no feasible plan"),
    }
}

/// Serializes a planner result to JSON. Returns NULL on failure; free with
/// `orb_string_free`.
///
/// # Safety
/// `res` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn orb_result_json(res: *const OrbResult) -> *mut c_char {
    if res.is_null() {
        set_error("res is NULL");
        return ptr::null_mut();
    }
    match serde_json::to_string(&(*res).inner.to_json()) {
        Ok(s) => string_out(s),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// Evaluates a plan with the analytic delay model; writes the end-to-end
/// delay in seconds.
///
/// # Safety
/// Array arguments must be valid for the given lengths; `out_total` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn orb_evaluate(
    scn: *const OrbScenario,
    layer_counts: *const usize,
    num_stages: usize,
    compression_ratios: *const f64,
    num_ratios: usize,
    out_total: *mut f64,
) -> OrbStatus {
    if scn.is_null() || out_total.is_null() {
        return fail_with(OrbStatus::NullPointer, "scn or out_total is NULL");
    }
    let plan = match plan_arg(layer_counts, num_stages, compression_ratios, num_ratios) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match evaluate_plan(&(*scn).inner, &plan) {
        Ok(bd) => {
            *out_total = bd.total;
            OrbStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Runs the discrete-event simulation for a plan; writes the simulated
/// end-to-end delay in seconds.
///
/// # Safety
/// Array arguments must be valid for the given lengths; `out_total` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn orb_simulate(
    scn: *const OrbScenario,
    layer_counts: *const usize,
    num_stages: usize,
    compression_ratios: *const f64,
    num_ratios: usize,
    out_total: *mut f64,
) -> OrbStatus {
    if scn.is_null() || out_total.is_null() {
        return fail_with(OrbStatus::NullPointer, "scn or out_total is NULL");
    }
    let plan = match plan_arg(layer_counts, num_stages, compression_ratios, num_ratios) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match simulate(&(*scn).inner, &plan) {
        Ok(trace) => {
            *out_total = trace.total;
            OrbStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Compares the analytic model against the simulation for a plan and returns
/// the report as JSON. Returns NULL on failure; free with `orb_string_free`.
///
/// # Safety
/// Array arguments must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn orb_compare_json(
    scn: *const OrbScenario,
    layer_counts: *const usize,
    num_stages: usize,
    compression_ratios: *const f64,
    num_ratios: usize,
) -> *mut c_char {
    if scn.is_null() {
        set_error("scn is NULL");
        return ptr::null_mut();
    }
    let plan = match plan_arg(layer_counts, num_stages, compression_ratios, num_ratios) {
        Ok(p) => p,
        Err(_) => return ptr::null_mut(),
    };
    match compare(&(*scn).inner, &plan)
        .and_then(|report| serde_json::to_string(&report).map_err(|e| Error::Parse(e.to_string())))
    {
        Ok(s) => string_out(s),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// Encodes a batch of activations with a binary mask and `bits`-wide uniform
/// quantization, then decodes it again. Writes the reconstruction to
/// `out_values` (length `n * s * d`) and the compressed size in bits to
/// `out_compressed_bits`.
///
/// `mask` holds `s * d` bytes, nonzero meaning the position is kept.
///
/// # Safety
/// All array arguments must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn orb_codec_roundtrip(
    values: *const f32,
    n: usize,
    s: usize,
    d: usize,
    mask: *const u8,
    bits: u32,
    out_values: *mut f32,
    out_compressed_bits: *mut u64,
) -> OrbStatus {
    if values.is_null() || mask.is_null() || out_values.is_null() || out_compressed_bits.is_null() {
        return fail_with(OrbStatus::NullPointer, "an array argument is NULL");
    }
    let total = match n.checked_mul(s).and_then(|v| v.checked_mul(d)) {
        Some(t) => t,
        None => return fail_with(OrbStatus::Domain, "n * s * d overflows"),
    };
    let vals = std::slice::from_raw_parts(values, total).to_vec();
    let bits_vec: Vec<bool> = std::slice::from_raw_parts(mask, s * d)
        .iter()
        .map(|&b| b != 0)
        .collect();

    let result = (|| {
        let block = ActivationBlock::new(n, s, d, vals)?;
        let mask = BinaryMask::new(s, d, bits_vec)?;
        let blob = encode(&block, &mask, bits)?;
        let compressed_bits = blob.to_bytes().len() as u64 * 8;
        let restored = decode(&blob)?;
        Ok::<_, Error>((restored, compressed_bits))
    })();
    match result {
        Ok((restored, compressed_bits)) => {
            for (i, &v) in restored.values.iter().enumerate() {
                *out_values.add(i) = v;
            }
            *out_compressed_bits = compressed_bits;
            OrbStatus::Ok
        }
        Err(e) => fail(&e),
    }
}
