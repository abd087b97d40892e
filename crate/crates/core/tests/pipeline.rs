mod support;

use silcheck::function::FunctionId;
use silcheck::oracle::VerdictStage;
use support::{describe, evaluate};

#[test]
fn golden_controllers_pass_every_test_case() {
    for (name, f) in [
        ("golden_f1.py", FunctionId::F1),
        ("golden_f2.py", FunctionId::F2),
        ("golden_f3.py", FunctionId::F3),
        ("golden_f4.py", FunctionId::F4),
    ] {
        let o = evaluate(name, f);
        assert_eq!(o.stage, VerdictStage::Passed, "{name}: {}", describe(&o));
        assert_eq!(o.per_tc.len(), f.test_cases().len());
        assert!(o.failure_modes.is_empty());
    }
}

#[test]
fn faulty_controllers_get_their_primary_mode() {
    use silcheck::orchestrator::FailureMode::*;
    let cases = [
        ("syntax_f1.py", FunctionId::F1, SyntaxError, VerdictStage::NonCompilable),
        (
            "bad_interface_f1.py",
            FunctionId::F1,
            BadInterfaceAccess,
            VerdictStage::NonExecutable,
        ),
        (
            "extraneous_f1.py",
            FunctionId::F1,
            ExtraneousCode,
            VerdictStage::NonExecutable,
        ),
        (
            "alternative_f1.py",
            FunctionId::F1,
            AlternativeStrategy,
            VerdictStage::ExecutedFailed,
        ),
        (
            "bad_threshold_f1.py",
            FunctionId::F1,
            BadThreshold,
            VerdictStage::ExecutedFailed,
        ),
        (
            "excess_f2.py",
            FunctionId::F2,
            ExcessLaneChange,
            VerdictStage::ExecutedFailed,
        ),
        (
            "div0_f3.py",
            FunctionId::F3,
            DivisionByZero,
            VerdictStage::ExecutedFailed,
        ),
        (
            "wrong_target_f3.py",
            FunctionId::F3,
            WrongTargetSelection,
            VerdictStage::ExecutedFailed,
        ),
        (
            "no_action_f3.py",
            FunctionId::F3,
            NoAction,
            VerdictStage::ExecutedFailed,
        ),
        (
            "bad_threshold_f4.py",
            FunctionId::F4,
            BadThreshold,
            VerdictStage::ExecutedFailed,
        ),
    ];
    let mut wrong = Vec::new();
    for (name, f, mode, stage) in cases {
        let o = evaluate(name, f);
        if o.primary_mode() != Some(mode) || o.stage != stage {
            wrong.push(format!("{name}: want {mode} / {stage}\n{}", describe(&o)));
        }
    }
    assert!(wrong.is_empty(), "{}", wrong.join("\n"));
}
