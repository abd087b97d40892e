//! C ABI over the silcheck pipeline.
//!
//! Every entry point returns a [`SilStatus`]; on failure the message is
//! available from [`sil_last_error`] on the same thread. Strings handed out
//! must be released with [`sil_string_free`], handles with their `*_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use silcheck::episode::{passive_controller, run_closed_loop, Trace};
use silcheck::function::{FunctionId, TcId};
use silcheck::generation::{extract_code, sha256_hex, CandidateCode, CandidateMeta, ExtractOptions};
use silcheck::oracle::compute_ttc;
use silcheck::orchestrator::{compute_pass_at_k, evaluate_candidate, EvalConfig};
use silcheck::report::render_record;
use silcheck::sandbox::CandidateAdapter;
use silcheck::scenario::{instantiate_tc, load_scenario, serialize_scenario, Scenario, TcOverrides};
use silcheck::sim::{VehicleState, DT};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SilStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    ParseError = 3,
    EvaluationError = 4,
    /// Index past the end of a trace.
    OutOfRange = 5,
    Panic = 6,
}

/// Scenario handle.
pub struct SilScenario(Scenario);

/// Trace handle.
pub struct SilTrace(Trace);

/// Ego state at one tick of a trace.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SilEgoState {
    pub tick: u64,
    pub t: f64,
    pub s: f64,
    pub lane_id: i32,
    pub lat_offset: f64,
    pub speed: f64,
}

/// Longitudinal state of a vehicle for TTC queries. `oncoming` vehicles
/// move toward decreasing `s`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilVehicle {
    pub s: f64,
    pub speed: f64,
    pub length: f64,
    pub oncoming: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes replaced"));
}

struct Fail(SilStatus, String);

impl Fail {
    fn invalid(msg: impl Into<String>) -> Self {
        Fail(SilStatus::InvalidArgument, msg.into())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SilStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SilStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SilStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(SilStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::invalid(format!("`{name}` is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(SilStatus::NullArgument, format!("`{name}` is null")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(SilStatus::NullArgument, format!("`{name}` is null")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes replaced")
        .into_raw()
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; never null.
#[no_mangle]
pub extern "C" fn sil_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn sil_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sil_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a catalogued test case (`"TC1"`..`"TC7"`, `"S1"`, `"S2"`). A NaN
/// `ego_speed_kph` keeps the catalogue speed.
///
/// # Safety
/// `tc_id` must be a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sil_scenario_instantiate(
    tc_id: *const c_char,
    ego_speed_kph: f64,
    out: *mut *mut SilScenario,
) -> SilStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let tc: TcId = str_arg(tc_id, "tc_id")?
            .parse()
            .map_err(|e| Fail::invalid(format!("{e}")))?;
        let overrides = TcOverrides {
            ego_speed: (!ego_speed_kph.is_nan()).then_some(ego_speed_kph / 3.6),
            ..TcOverrides::default()
        };
        let sc = instantiate_tc(tc, &overrides).map_err(|e| Fail::invalid(e.to_string()))?;
        *out = Box::into_raw(Box::new(SilScenario(sc)));
        Ok(())
    })
}

/// Parses scenario file text.
///
/// # Safety
/// `text` must be a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sil_scenario_load(text: *const c_char, out: *mut *mut SilScenario) -> SilStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let loaded = load_scenario(str_arg(text, "text")?).map_err(|e| Fail(SilStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(SilScenario(loaded.scenario)));
        Ok(())
    })
}

/// Scenario file text; free with [`sil_string_free`].
///
/// # Safety
/// `scenario` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sil_scenario_serialize(scenario: *const SilScenario, out: *mut *mut c_char) -> SilStatus {
    guard(|| {
        let sc = ref_arg(scenario, "scenario")?;
        *out_arg(out, "out")? = into_c_string(serialize_scenario(&sc.0));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sil_scenario_free(scenario: *mut SilScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the scenario with a controller that never sends anything.
///
/// # Safety
/// `scenario` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sil_run_passive(scenario: *const SilScenario, out: *mut *mut SilTrace) -> SilStatus {
    guard(|| {
        let sc = ref_arg(scenario, "scenario")?;
        let out = out_arg(out, "out")?;
        let trace = run_closed_loop(&sc.0, &mut passive_controller());
        *out = Box::into_raw(Box::new(SilTrace(trace)));
        Ok(())
    })
}

/// Parses a JSONL trace.
///
/// # Safety
/// `jsonl` must be a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sil_trace_load(jsonl: *const c_char, out: *mut *mut SilTrace) -> SilStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let trace =
            Trace::from_jsonl(str_arg(jsonl, "jsonl")?).map_err(|e| Fail(SilStatus::ParseError, e.to_string()))?;
        *out = Box::into_raw(Box::new(SilTrace(trace)));
        Ok(())
    })
}

/// # Safety
/// `trace` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sil_trace_to_jsonl(trace: *const SilTrace, out: *mut *mut c_char) -> SilStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        *out_arg(out, "out")? = into_c_string(t.0.to_jsonl());
        Ok(())
    })
}

/// Number of recorded ticks; 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sil_trace_tick_count(trace: *const SilTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.snapshots.len())
}

/// Name of the terminal condition, e.g. `"completed"` or `"collision"`.
///
/// # Safety
/// `trace` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sil_trace_terminal(trace: *const SilTrace, out: *mut *mut c_char) -> SilStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        *out_arg(out, "out")? = into_c_string(t.0.terminal.name().to_owned());
        Ok(())
    })
}

/// Hex SHA-256 of the canonical trace encoding.
///
/// # Safety
/// `trace` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sil_trace_hash(trace: *const SilTrace, out: *mut *mut c_char) -> SilStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        *out_arg(out, "out")? = into_c_string(t.0.hash());
        Ok(())
    })
}

/// # Safety
/// `trace` must be a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sil_trace_ego_at(trace: *const SilTrace, index: usize, out: *mut SilEgoState) -> SilStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        let out = out_arg(out, "out")?;
        let snap = t.0.snapshots.get(index).ok_or_else(|| {
            Fail(
                SilStatus::OutOfRange,
                format!("index {index} past {} ticks", t.0.snapshots.len()),
            )
        })?;
        let ego = snap.ego();
        *out = SilEgoState {
            tick: snap.tick,
            t: snap.t,
            s: ego.s,
            lane_id: ego.lane_id,
            lat_offset: ego.lat_offset,
            speed: ego.speed,
        };
        Ok(())
    })
}

/// # Safety
/// `trace` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sil_trace_free(trace: *mut SilTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

fn vehicle(v: &SilVehicle, id: &str) -> Result<VehicleState, Fail> {
    if !(v.s.is_finite() && v.speed.is_finite() && v.speed >= 0.0 && v.length.is_finite() && v.length > 0.0) {
        return Err(Fail::invalid(format!(
            "{id}: s and length must be finite, speed >= 0 and length > 0"
        )));
    }
    let mut state = VehicleState::new(id, v.s, 0, v.speed);
    state.length = v.length;
    state.oncoming = v.oncoming;
    Ok(state)
}

/// Time to collision of `ego` with `lead` along the road. `*has_value` is
/// false when the gap is not closing.
///
/// # Safety
/// `ego` and `lead` must be readable, `out` and `has_value` writable.
#[no_mangle]
pub unsafe extern "C" fn sil_compute_ttc(
    ego: *const SilVehicle,
    lead: *const SilVehicle,
    out: *mut f64,
    has_value: *mut bool,
) -> SilStatus {
    guard(|| {
        let ego = vehicle(ref_arg(ego, "ego")?, "ego")?;
        let lead = vehicle(ref_arg(lead, "lead")?, "lead")?;
        let out = out_arg(out, "out")?;
        let has_value = out_arg(has_value, "has_value")?;
        let ttc = compute_ttc(&ego, &lead);
        *has_value = ttc.is_some();
        *out = ttc.unwrap_or(0.0);
        Ok(())
    })
}

/// Unbiased pass@k estimate for `c` passing out of `n` samples.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sil_pass_at_k(n: u64, c: u64, k: u64, out: *mut f64) -> SilStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = compute_pass_at_k(n, c, k).map_err(|e| Fail::invalid(e.to_string()))?;
        Ok(())
    })
}

/// Code extracted from a model response. Fails with `EvaluationError` when
/// the response holds no code.
///
/// # Safety
/// `response` must be a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sil_extract_code(response: *const c_char, out: *mut *mut c_char) -> SilStatus {
    guard(|| {
        let text = str_arg(response, "response")?;
        let out = out_arg(out, "out")?;
        let code =
            extract_code(text, &ExtractOptions::default()).map_err(|e| Fail(SilStatus::EvaluationError, e.reason))?;
        *out = into_c_string(code);
        Ok(())
    })
}

/// Evaluates candidate source for `function` (`"F1"`..`"F4"`) and returns
/// the JSON evaluation record. A null `adapter_toml_path` selects the
/// built-in Python adapter. Blocks until every test case has run.
///
/// # Safety
/// String arguments must be NUL-terminated (or null where allowed), `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sil_evaluate_source(
    source: *const c_char,
    function: *const c_char,
    adapter_toml_path: *const c_char,
    out: *mut *mut c_char,
) -> SilStatus {
    guard(|| {
        let source = str_arg(source, "source")?;
        let function: FunctionId = str_arg(function, "function")?
            .parse()
            .map_err(|e| Fail::invalid(format!("{e}")))?;
        let out = out_arg(out, "out")?;
        let adapter = if adapter_toml_path.is_null() {
            CandidateAdapter::python()
        } else {
            let path = str_arg(adapter_toml_path, "adapter_toml_path")?;
            CandidateAdapter::load(Path::new(path)).map_err(|e| Fail::invalid(e.to_string()))?
        };
        let candidate = CandidateCode {
            source: source.to_owned(),
            meta: CandidateMeta {
                model: "ffi".into(),
                function,
                attempt: 1,
                prompt_hash: String::new(),
                response_hash: sha256_hex(source.as_bytes()),
            },
        };
        let outcome = evaluate_candidate(&candidate, &EvalConfig::new(adapter))
            .map_err(|e| Fail(SilStatus::EvaluationError, e.to_string()))?;
        let record = render_record(&outcome).map_err(|e| Fail(SilStatus::EvaluationError, e.to_string()))?;
        *out = into_c_string(record);
        Ok(())
    })
}

/// Simulation step in seconds.
#[no_mangle]
pub extern "C" fn sil_time_step() -> f64 {
    DT
}
