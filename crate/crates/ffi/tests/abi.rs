use std::ffi::{c_char, CStr, CString};
use std::ptr;

use silcheck_ffi::*;

fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { sil_string_free(s) };
    out
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(sil_last_error()) }.to_str().unwrap().to_owned()
}

fn scenario(tc: &str) -> *mut SilScenario {
    let tc = CString::new(tc).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(
        unsafe { sil_scenario_instantiate(tc.as_ptr(), f64::NAN, &mut sc) },
        SilStatus::Ok
    );
    sc
}

#[test]
fn passive_run_through_handles() {
    let sc = scenario("TC1");
    let mut trace = ptr::null_mut();
    assert_eq!(unsafe { sil_run_passive(sc, &mut trace) }, SilStatus::Ok);
    let n = unsafe { sil_trace_tick_count(trace) };
    assert!(n > 100 && n < 600, "{n}");

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { sil_trace_terminal(trace, &mut s) }, SilStatus::Ok);
    assert_eq!(take(s), "collision");

    let mut ego = SilEgoState::default();
    assert_eq!(unsafe { sil_trace_ego_at(trace, 0, &mut ego) }, SilStatus::Ok);
    assert_eq!((ego.tick, ego.lane_id), (0, -3));
    assert!((ego.speed - 120.0 / 3.6).abs() < 1e-9);
    assert_eq!(unsafe { sil_trace_ego_at(trace, n, &mut ego) }, SilStatus::OutOfRange);
    assert!(last_error().contains("past"));

    let mut hash = ptr::null_mut();
    assert_eq!(unsafe { sil_trace_hash(trace, &mut hash) }, SilStatus::Ok);
    let hash = take(hash);
    let mut jsonl = ptr::null_mut();
    assert_eq!(unsafe { sil_trace_to_jsonl(trace, &mut jsonl) }, SilStatus::Ok);
    let jsonl = CString::new(take(jsonl)).unwrap();
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { sil_trace_load(jsonl.as_ptr(), &mut again) }, SilStatus::Ok);
    let mut hash2 = ptr::null_mut();
    assert_eq!(unsafe { sil_trace_hash(again, &mut hash2) }, SilStatus::Ok);
    assert_eq!(take(hash2), hash);

    unsafe {
        sil_trace_free(again);
        sil_trace_free(trace);
        sil_scenario_free(sc);
    }
}

#[test]
fn scenario_text_round_trip() {
    let sc = scenario("TC4");
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { sil_scenario_serialize(sc, &mut text) }, SilStatus::Ok);
    let text = take(text);
    let c = CString::new(text.clone()).unwrap();
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { sil_scenario_load(c.as_ptr(), &mut loaded) }, SilStatus::Ok);
    let mut text2 = ptr::null_mut();
    assert_eq!(unsafe { sil_scenario_serialize(loaded, &mut text2) }, SilStatus::Ok);
    assert_eq!(take(text2), text);
    unsafe {
        sil_scenario_free(loaded);
        sil_scenario_free(sc);
    }
}

#[test]
fn errors_are_codes_not_crashes() {
    let mut sc = ptr::null_mut();
    assert_eq!(
        unsafe { sil_scenario_instantiate(ptr::null(), f64::NAN, &mut sc) },
        SilStatus::NullArgument
    );
    let bad = CString::new("TC9").unwrap();
    assert_eq!(
        unsafe { sil_scenario_instantiate(bad.as_ptr(), f64::NAN, &mut sc) },
        SilStatus::InvalidArgument
    );
    assert!(sc.is_null());
    let junk = CString::new("not a scenario").unwrap();
    assert_eq!(
        unsafe { sil_scenario_load(junk.as_ptr(), &mut sc) },
        SilStatus::ParseError
    );
    let junk = CString::new("{\"record\":\"tick\"}\n").unwrap();
    let mut trace = ptr::null_mut();
    assert_eq!(
        unsafe { sil_trace_load(junk.as_ptr(), &mut trace) },
        SilStatus::ParseError
    );
    assert!(last_error().contains("line 1"));
    assert_eq!(unsafe { sil_trace_tick_count(ptr::null()) }, 0);
    unsafe {
        sil_trace_free(ptr::null_mut());
        sil_scenario_free(ptr::null_mut());
        sil_string_free(ptr::null_mut());
    }
}

#[test]
fn numeric_helpers() {
    let mut p = 0.0;
    assert_eq!(unsafe { sil_pass_at_k(20, 18, 1, &mut p) }, SilStatus::Ok);
    assert!((p - 0.9).abs() < 1e-12);
    assert_eq!(unsafe { sil_pass_at_k(5, 1, 6, &mut p) }, SilStatus::InvalidArgument);

    let ego = SilVehicle {
        s: 0.0,
        speed: 20.0,
        length: 5.0,
        oncoming: false,
    };
    let lead = SilVehicle {
        s: 25.0,
        speed: 10.0,
        length: 5.0,
        oncoming: false,
    };
    let (mut ttc, mut has) = (0.0, false);
    assert_eq!(
        unsafe { sil_compute_ttc(&ego, &lead, &mut ttc, &mut has) },
        SilStatus::Ok
    );
    assert!(has && (ttc - 2.0).abs() < 1e-12);
    assert_eq!(
        unsafe { sil_compute_ttc(&lead, &ego, &mut ttc, &mut has) },
        SilStatus::Ok
    );
    assert!(!has);
    let broken = SilVehicle { speed: f64::NAN, ..ego };
    assert_eq!(
        unsafe { sil_compute_ttc(&broken, &lead, &mut ttc, &mut has) },
        SilStatus::InvalidArgument
    );
    assert!(sil_time_step() > 0.0);
    assert!(!unsafe { CStr::from_ptr(sil_version()) }.to_bytes().is_empty());
}

#[test]
fn extraction_and_evaluation() {
    let response = CString::new("Here you go:\n```python\nprint('ready')\n```\n").unwrap();
    let mut code = ptr::null_mut();
    assert_eq!(unsafe { sil_extract_code(response.as_ptr(), &mut code) }, SilStatus::Ok);
    assert_eq!(take(code), "print('ready')\n");
    let prose = CString::new("No code today.").unwrap();
    assert_eq!(
        unsafe { sil_extract_code(prose.as_ptr(), &mut code) },
        SilStatus::EvaluationError
    );

    let golden = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/fixtures/controllers/golden_f1.py"
    ))
    .unwrap();
    let source = CString::new(golden).unwrap();
    let function = CString::new("F1").unwrap();
    let mut record = ptr::null_mut();
    assert_eq!(
        unsafe { sil_evaluate_source(source.as_ptr(), function.as_ptr(), ptr::null(), &mut record) },
        SilStatus::Ok
    );
    let record: serde_json::Value = serde_json::from_str(&take(record)).unwrap();
    assert_eq!(record["stage"], "passed");
    assert_eq!(record["per_tc"][0]["tc_id"], "S1");
}

#[test]
fn header_declares_every_entry_point() {
    let header = include_str!("../include/silcheck.h");
    for name in [
        "sil_last_error",
        "sil_version",
        "sil_string_free",
        "sil_scenario_instantiate",
        "sil_scenario_load",
        "sil_scenario_serialize",
        "sil_scenario_free",
        "sil_run_passive",
        "sil_trace_load",
        "sil_trace_to_jsonl",
        "sil_trace_tick_count",
        "sil_trace_terminal",
        "sil_trace_hash",
        "sil_trace_ego_at",
        "sil_trace_free",
        "sil_compute_ttc",
        "sil_pass_at_k",
        "sil_extract_code",
        "sil_evaluate_source",
        "sil_time_step",
    ] {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct SilScenario SilScenario;"));
}
