#![allow(dead_code)]

use std::path::PathBuf;

use silcheck::function::FunctionId;
use silcheck::generation::{sha256_hex, CandidateCode, CandidateMeta};
use silcheck::orchestrator::{evaluate_candidate, EvalConfig, EvaluationOutcome};
use silcheck::sandbox::CandidateAdapter;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn controller(name: &str) -> String {
    std::fs::read_to_string(fixture(&format!("controllers/{name}"))).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn candidate(name: &str, function: FunctionId) -> CandidateCode {
    let source = controller(name);
    CandidateCode {
        meta: CandidateMeta {
            model: "fixture".into(),
            function,
            attempt: 1,
            prompt_hash: String::new(),
            response_hash: sha256_hex(source.as_bytes()),
        },
        source,
    }
}

pub fn evaluate(name: &str, function: FunctionId) -> EvaluationOutcome {
    let cfg = EvalConfig::new(CandidateAdapter::python());
    evaluate_candidate(&candidate(name, function), &cfg).expect("evaluation infrastructure")
}

pub fn describe(o: &EvaluationOutcome) -> String {
    let mut s = format!("stage {} modes {:?}\n", o.stage, o.failure_modes);
    for t in &o.per_tc {
        s += &format!(
            "  {} {} ticks={} overall={} goal={:?}\n",
            t.tc_id, t.terminal, t.ticks, t.verdict.overall, t.verdict.goal
        );
        for (r, c) in &t.verdict.requirements {
            if let Some(c) = c.as_ref().filter(|c| !c.passed) {
                s += &format!("    {r:?} {c:?}\n");
            }
        }
    }
    s
}
