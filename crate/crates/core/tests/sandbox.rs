mod support;

use std::time::{Duration, Instant};

use silcheck::function::FunctionId;
use silcheck::oracle::VerdictStage;
use silcheck::orchestrator::{evaluate_candidate, EvalConfig};
use silcheck::sandbox::{
    compile_candidate, compile_in, live_group_members, spawn_candidate, CandidateAdapter, SandboxLimits, Workdir,
};
use silcheck::sim::RoadSpec;
use support::{candidate, controller, describe};

#[test]
fn chatty_stderr_does_not_stall_the_episode() {
    let o = evaluate_candidate(
        &candidate("fuzz/stderr_flood.py", FunctionId::F1),
        &EvalConfig::new(CandidateAdapter::python()),
    )
    .unwrap();
    assert_eq!(o.stage, VerdictStage::Passed, "{}", describe(&o));
}

#[test]
fn compile_step_reports_syntax_errors() {
    assert!(!compile_candidate(&controller("golden_f1.py"), &CandidateAdapter::python()).is_failure());
    let bad = compile_candidate(&controller("syntax_f1.py"), &CandidateAdapter::python());
    assert!(bad.is_failure());
    assert!(bad.diagnostics.contains("SyntaxError"), "{}", bad.diagnostics);
}

#[test]
fn terminate_reaps_the_process_group() {
    let adapter = CandidateAdapter::python();
    let limits = SandboxLimits::default();
    let dir = Workdir::temporary().unwrap();
    assert!(!compile_in(&controller("fuzz/hang.py"), &adapter, &dir, &limits).is_failure());
    let mut child = spawn_candidate(&adapter, &dir, &limits).unwrap();
    child.handshake(&RoadSpec::highway()).unwrap();
    let pgid = child.pid();
    assert!(!live_group_members(pgid).is_empty());
    let started = Instant::now();
    let exit = child.terminate();
    assert!(exit.forced);
    assert!(started.elapsed() < limits.kill_grace + Duration::from_secs(2));
    assert!(live_group_members(pgid).is_empty());
    assert_eq!(child.terminate(), exit);
}

#[test]
fn environment_is_scrubbed() {
    std::env::set_var("SILCHECK_SECRET", "leak");
    let mut adapter = CandidateAdapter::python();
    adapter.env_set.insert("VISIBLE".into(), "1".into());
    let dir = Workdir::temporary().unwrap();
    let limits = SandboxLimits::default();
    let probe = r#"import os, sys
print("ready" if "SILCHECK_SECRET" not in os.environ and os.environ.get("VISIBLE") == "1" else "leaked", flush=True)
sys.stdin.readline()
"#;
    assert!(!compile_in(probe, &adapter, &dir, &limits).is_failure());
    let mut child = spawn_candidate(&adapter, &dir, &limits).unwrap();
    child.handshake(&RoadSpec::highway()).unwrap();
    child.terminate();
}
