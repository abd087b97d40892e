use std::cmp::Reverse;

use super::EvaluationOutcome;
use crate::oracle::VerdictStage;

/// Sort key, smaller is better: stage, test cases passed, number of failure
/// modes, source length, then attempt index and model name as tie breakers.
pub fn rank_key(o: &EvaluationOutcome) -> (Reverse<VerdictStage>, Reverse<usize>, usize, usize, usize, String) {
    (
        Reverse(o.stage),
        Reverse(o.tcs_passed()),
        o.failure_modes.len(),
        o.source_len,
        o.meta.attempt,
        o.meta.model.clone(),
    )
}

/// Best candidate first. Stable and total for distinct (model, attempt).
pub fn rank_candidates(outcomes: &mut [EvaluationOutcome]) {
    outcomes.sort_by_cached_key(rank_key);
}
