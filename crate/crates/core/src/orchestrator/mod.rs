//! Per-candidate evaluation pipeline and everything built on top of it:
//! failure classification, ranking, pass@k and the experiment matrix.

mod classify;
mod matrix;
mod passk;
mod rank;

pub use classify::{classify_failure, latest_safe_onset, ClassifierInput, FailureEvidence, FailureMode, PROTOCOL_KEYS};
pub use matrix::{
    build_report, load_journal, report_from_dir, run_matrix, CellKey, CellStatus, CellSummary, JournalEntry,
    MatrixConfig, MatrixError, MatrixReport, ModelRow, RunManifest, JOURNAL_FILE, MANIFEST_FILE, REPORT_SCHEMA_VERSION,
};
pub use passk::{compute_pass_at_k, PassAtKError};
pub use rank::{rank_candidates, rank_key};

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{run_closed_loop, Trace};
use crate::function::{FunctionId, TcId};
use crate::generation::{extract_code, CandidateCode, CandidateMeta, ExtractOptions};
use crate::oracle::{evaluate_trace, verdict_stage, GoalThresholds, Verdict, VerdictStage};
use crate::sandbox::{compile_in, spawn_candidate, CandidateAdapter, SandboxLimits, Stage, StageResult, Workdir};
use crate::scenario::{instantiate_tc, ScenarioError, TcOverrides};

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub adapter: CandidateAdapter,
    pub limits: SandboxLimits,
    pub thresholds: GoalThresholds,
    pub overrides: TcOverrides,
    /// Restricts the test cases run; `None` runs all of the function's.
    pub tc_filter: Option<Vec<TcId>>,
    /// Keeps the candidate's working directory here instead of a temporary
    /// one.
    pub artifact_dir: Option<PathBuf>,
    pub extract: ExtractOptions,
}

impl EvalConfig {
    pub fn new(adapter: CandidateAdapter) -> Self {
        Self {
            adapter,
            limits: SandboxLimits::default(),
            thresholds: GoalThresholds::default(),
            overrides: TcOverrides::default(),
            tc_filter: None,
            artifact_dir: None,
            extract: ExtractOptions::default(),
        }
    }

    pub fn test_cases(&self, function: FunctionId) -> Vec<TcId> {
        function
            .test_cases()
            .iter()
            .copied()
            .filter(|tc| self.tc_filter.as_ref().is_none_or(|f| f.contains(tc)))
            .collect()
    }
}

/// Problems with the harness itself, as opposed to the candidate.
#[derive(Debug, Error)]
pub enum InfraError {
    #[error("cannot start the candidate runtime: {0}")]
    Spawn(String),
    #[error("working directory: {0}")]
    Workdir(#[from] std::io::Error),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error("no test cases selected for {0}")]
    NoTestCases(FunctionId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcOutcome {
    pub tc_id: TcId,
    pub verdict: Verdict,
    pub terminal: String,
    pub ticks: usize,
    pub trace_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutcome {
    pub meta: CandidateMeta,
    pub stage: VerdictStage,
    pub compile: StageResult,
    pub per_tc: Vec<TcOutcome>,
    /// Primary mode first.
    pub failure_modes: Vec<FailureEvidence>,
    pub source_len: usize,
    /// Set when the provider failed to deliver this attempt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_error: Option<String>,
    pub wall_time_ms: u64,
    #[serde(skip)]
    pub traces: Vec<Trace>,
    #[serde(skip)]
    pub source: String,
}

impl EvaluationOutcome {
    pub fn tcs_passed(&self) -> usize {
        self.per_tc.iter().filter(|t| t.verdict.overall).count()
    }

    pub fn primary_mode(&self) -> Option<FailureMode> {
        self.failure_modes.first().map(|f| f.mode)
    }

    fn without_code(
        meta: CandidateMeta,
        reason: &str,
        modes: Vec<FailureEvidence>,
        generation_error: Option<String>,
    ) -> Self {
        Self {
            meta,
            stage: VerdictStage::NonCompilable,
            compile: StageResult {
                stage: Stage::CompileFailed,
                diagnostics: reason.to_owned(),
            },
            per_tc: Vec::new(),
            failure_modes: modes,
            source_len: 0,
            generation_error,
            wall_time_ms: 0,
            traces: Vec::new(),
            source: String::new(),
        }
    }

    /// Attempt whose response held no usable code.
    pub fn no_code(meta: CandidateMeta, reason: &str) -> Self {
        let modes = classify_failure(&ClassifierInput {
            function: meta.function,
            extraction_failed: true,
            compile: None,
            source: "",
            episodes: &[],
            overrides: &TcOverrides::default(),
            thresholds: &GoalThresholds::default(),
        });
        Self::without_code(meta, reason, modes, None)
    }

    /// Attempt the provider never delivered. Counted, but not classified.
    pub fn generation_failed(meta: CandidateMeta, error: &str) -> Self {
        Self::without_code(meta, "no response", Vec::new(), Some(error.to_owned()))
    }
}

fn run_episodes(
    candidate: &CandidateCode,
    cfg: &EvalConfig,
    workdir: &Workdir,
) -> Result<Vec<(TcId, Trace, Verdict)>, InfraError> {
    let function = candidate.meta.function;
    let tcs = cfg.test_cases(function);
    if tcs.is_empty() {
        return Err(InfraError::NoTestCases(function));
    }
    let mut out = Vec::with_capacity(tcs.len());
    for tc in tcs {
        let scenario = instantiate_tc(tc, &cfg.overrides)?;
        let mut proc =
            spawn_candidate(&cfg.adapter, workdir, &cfg.limits).map_err(|e| InfraError::Spawn(e.diagnostics))?;
        let trace = match proc.handshake(&scenario.road) {
            Ok(()) => run_closed_loop(&scenario, &mut proc),
            Err(e) => {
                let tail = crate::episode::ControllerLink::stderr_tail(&proc);
                Trace::handshake_failed(&scenario, e.to_string(), tail)
            }
        };
        proc.terminate();
        let verdict = evaluate_trace(&trace, function, tc, &cfg.thresholds)?;
        out.push((tc, trace, verdict));
    }
    Ok(out)
}

/// Compile gate, every test case of the function, verdicts, stage and
/// failure classification. Test cases never short-circuit each other.
pub fn evaluate_candidate(candidate: &CandidateCode, cfg: &EvalConfig) -> Result<EvaluationOutcome, InfraError> {
    let started = Instant::now();
    let workdir = match &cfg.artifact_dir {
        Some(dir) => Workdir::persistent(dir)?,
        None => Workdir::temporary()?,
    };
    let compile = compile_in(&candidate.source, &cfg.adapter, &workdir, &cfg.limits);
    let episodes = if compile.is_failure() {
        Vec::new()
    } else {
        run_episodes(candidate, cfg, &workdir)?
    };
    let refs: Vec<(TcId, &Trace, &Verdict)> = episodes.iter().map(|(tc, t, v)| (*tc, t, v)).collect();
    let stage = verdict_stage(&compile, &refs);
    let failure_modes = if stage == VerdictStage::Passed {
        Vec::new()
    } else {
        classify_failure(&ClassifierInput {
            function: candidate.meta.function,
            extraction_failed: false,
            compile: Some(&compile),
            source: &candidate.source,
            episodes: &refs,
            overrides: &cfg.overrides,
            thresholds: &cfg.thresholds,
        })
    };
    let per_tc = episodes
        .iter()
        .map(|(tc, trace, verdict)| TcOutcome {
            tc_id: *tc,
            verdict: verdict.clone(),
            terminal: trace.terminal.name().to_owned(),
            ticks: trace.snapshots.len(),
            trace_hash: trace.hash(),
        })
        .collect();
    Ok(EvaluationOutcome {
        meta: candidate.meta.clone(),
        stage,
        compile,
        per_tc,
        failure_modes,
        source_len: candidate.source.len(),
        generation_error: None,
        wall_time_ms: started.elapsed().as_millis() as u64,
        traces: episodes.into_iter().map(|(_, t, _)| t).collect(),
        source: candidate.source.clone(),
    })
}

/// Extraction followed by evaluation.
pub fn evaluate_response(
    response: &str,
    meta: CandidateMeta,
    cfg: &EvalConfig,
) -> Result<EvaluationOutcome, InfraError> {
    match extract_code(response, &cfg.extract) {
        Ok(source) => evaluate_candidate(&CandidateCode { source, meta }, cfg),
        Err(failure) => Ok(EvaluationOutcome::no_code(meta, &failure.reason)),
    }
}
