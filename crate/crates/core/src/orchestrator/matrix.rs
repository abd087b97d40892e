//! Models x functions x repeats, with a resumable journal and a
//! deterministic summary.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{evaluate_response, EvalConfig, EvaluationOutcome, FailureMode, InfraError};
use crate::function::{FunctionId, TcId};
use crate::generation::{render_prompt, request_completions, sha256_hex, CandidateMeta, ProviderConfig, ProviderKind};
use crate::oracle::VerdictStage;

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const MANIFEST_FILE: &str = "run.json";
const OUTAGES_FILE: &str = "outages.json";
pub const REPORT_SCHEMA_VERSION: u32 = 1;
const PASS_AT: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone)]
pub struct MatrixConfig {
    pub run_id: String,
    /// Parent of the run directory.
    pub runs_root: PathBuf,
    pub providers: Vec<ProviderConfig>,
    pub functions: Vec<FunctionId>,
    pub repeats: usize,
    pub template: String,
    pub eval: EvalConfig,
    /// Worker threads; `None` lets the pool decide.
    pub threads: Option<usize>,
    /// Keeps source, record and traces of every candidate under the run
    /// directory.
    pub keep_artifacts: bool,
}

impl MatrixConfig {
    pub fn run_dir(&self) -> PathBuf {
        self.runs_root.join(&self.run_id)
    }

    /// Hash over everything that changes results. Resuming with a different
    /// hash is refused.
    pub fn config_hash(&self) -> String {
        let e = &self.eval;
        let providers: Vec<String> = self
            .providers
            .iter()
            .map(|p| serde_json::to_string(p).unwrap_or_default())
            .collect();
        let canon = format!(
            "{providers:?}|{:?}|{}|{}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}",
            self.functions,
            self.repeats,
            sha256_hex(self.template.as_bytes()),
            e.adapter,
            e.limits,
            e.thresholds,
            e.overrides,
            e.tc_filter,
            e.extract,
        );
        sha256_hex(canon.as_bytes())
    }
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("run directory {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("journal line {line}: {message}")]
    Journal { line: usize, message: String },
    #[error("run `{0}` was started with a different configuration")]
    ConfigMismatch(String),
    #[error(transparent)]
    Prompt(#[from] crate::generation::PromptError),
    #[error("evaluation infrastructure: {0}")]
    Infra(#[from] InfraError),
    #[error(transparent)]
    Record(#[from] crate::report::ReportError),
    #[error("{0} is not a run directory")]
    NotARun(PathBuf),
    #[error("thread pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> MatrixError + '_ {
    move |source| MatrixError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub model: String,
    pub function: FunctionId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub model: String,
    pub function: FunctionId,
    pub attempt: usize,
    pub outcome: EvaluationOutcome,
}

/// Reads a journal. A torn final line from an interrupted run is dropped;
/// damage anywhere else is an error.
pub fn load_journal(path: &Path) -> Result<Vec<JournalEntry>, MatrixError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<JournalEntry>(line) {
            Ok(e) => out.push(e),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                log::warn!("dropping torn journal line {}", i + 1);
            }
            Err(e) => {
                return Err(MatrixError::Journal {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CellStatus {
    Complete,
    Incomplete { missing: Vec<usize>, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub model: String,
    pub function: FunctionId,
    pub status: CellStatus,
    pub attempts: usize,
    pub generation_failures: usize,
    pub compiled: usize,
    pub executed: usize,
    pub passed: usize,
    pub stages: BTreeMap<VerdictStage, usize>,
    pub tc_passes: BTreeMap<TcId, usize>,
    /// Primary failure mode counts.
    pub failure_modes: BTreeMap<FailureMode, usize>,
    /// Keyed `pass@k`, for every k up to the attempt count.
    pub pass_at_k: BTreeMap<String, f64>,
    pub best_attempt: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub passed: usize,
    pub attempts: usize,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub schema_version: u32,
    pub run_id: String,
    pub config_hash: String,
    pub repeats: usize,
    pub functions: Vec<FunctionId>,
    /// Most passing candidates first.
    pub rows: Vec<ModelRow>,
}

fn summarize_cell(key: &CellKey, repeats: usize, entries: &[&JournalEntry], reason: Option<&str>) -> CellSummary {
    let mut outcomes: Vec<EvaluationOutcome> = entries.iter().map(|e| e.outcome.clone()).collect();
    super::rank_candidates(&mut outcomes);
    let mut stages: BTreeMap<VerdictStage, usize> = VerdictStage::ALL.iter().map(|s| (*s, 0)).collect();
    let mut tc_passes: BTreeMap<TcId, usize> = key.function.test_cases().iter().map(|t| (*t, 0)).collect();
    let mut failure_modes = BTreeMap::new();
    let mut generation_failures = 0;
    for o in &outcomes {
        if o.generation_error.is_some() {
            generation_failures += 1;
        } else {
            *stages.entry(o.stage).or_default() += 1;
        }
        for t in o.per_tc.iter().filter(|t| t.verdict.overall) {
            *tc_passes.entry(t.tc_id).or_default() += 1;
        }
        if let Some(m) = o.primary_mode() {
            *failure_modes.entry(m).or_default() += 1;
        }
    }
    let n = outcomes.len();
    let c = stages[&VerdictStage::Passed];
    let executed = c + stages[&VerdictStage::ExecutedFailed];
    let compiled = executed + stages[&VerdictStage::NonExecutable];
    let pass_at_k = PASS_AT
        .iter()
        .filter(|&&k| k <= n)
        .filter_map(|&k| {
            super::compute_pass_at_k(n as u64, c as u64, k as u64)
                .ok()
                .map(|p| (format!("pass@{k}"), p))
        })
        .collect();
    let have: BTreeSet<usize> = entries.iter().map(|e| e.attempt).collect();
    let missing: Vec<usize> = (1..=repeats).filter(|a| !have.contains(a)).collect();
    let status = if missing.is_empty() {
        CellStatus::Complete
    } else {
        CellStatus::Incomplete {
            missing,
            reason: reason.unwrap_or("not yet evaluated").to_owned(),
        }
    };
    CellSummary {
        model: key.model.clone(),
        function: key.function,
        status,
        attempts: n,
        generation_failures,
        compiled,
        executed,
        passed: c,
        stages,
        tc_passes,
        failure_modes,
        pass_at_k,
        best_attempt: outcomes
            .first()
            .filter(|o| o.generation_error.is_none())
            .map(|o| o.meta.attempt),
    }
}

/// Identity of a run, stored next to its journal so the summary can be
/// rebuilt from the directory alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub models: Vec<String>,
    pub functions: Vec<FunctionId>,
    pub repeats: usize,
}

impl RunManifest {
    pub fn of(cfg: &MatrixConfig) -> Self {
        Self {
            run_id: cfg.run_id.clone(),
            config_hash: cfg.config_hash(),
            models: cfg.providers.iter().map(|p| p.model.clone()).collect(),
            functions: cfg.functions.clone(),
            repeats: cfg.repeats,
        }
    }
}

/// Deterministic summary of journal entries. Duplicated attempts keep the
/// first entry.
pub fn build_report(
    manifest: &RunManifest,
    entries: &[JournalEntry],
    outages: &BTreeMap<String, String>,
) -> MatrixReport {
    let mut by_cell: BTreeMap<CellKey, BTreeMap<usize, &JournalEntry>> = BTreeMap::new();
    for e in entries {
        let key = CellKey {
            model: e.model.clone(),
            function: e.function,
        };
        by_cell.entry(key).or_default().entry(e.attempt).or_insert(e);
    }
    let mut rows: Vec<ModelRow> = manifest
        .models
        .iter()
        .map(|model| {
            let cells: Vec<CellSummary> = manifest
                .functions
                .iter()
                .map(|&function| {
                    let key = CellKey {
                        model: model.clone(),
                        function,
                    };
                    let found: Vec<&JournalEntry> = by_cell
                        .get(&key)
                        .map(|m| m.values().filter(|e| e.attempt <= manifest.repeats).copied().collect())
                        .unwrap_or_default();
                    let outage = outages.get(&outage_key(&key)).map(String::as_str);
                    summarize_cell(&key, manifest.repeats, &found, outage)
                })
                .collect();
            ModelRow {
                model: model.clone(),
                passed: cells.iter().map(|c| c.passed).sum(),
                attempts: cells.iter().map(|c| c.attempts).sum(),
                cells,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.passed.cmp(&a.passed).then_with(|| a.model.cmp(&b.model)));
    MatrixReport {
        schema_version: REPORT_SCHEMA_VERSION,
        run_id: manifest.run_id.clone(),
        config_hash: manifest.config_hash.clone(),
        repeats: manifest.repeats,
        functions: manifest.functions.clone(),
        rows,
    }
}

fn outage_key(key: &CellKey) -> String {
    format!("{}/{}", key.model, key.function)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, MatrixError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| MatrixError::Journal {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), MatrixError> {
    let body = serde_json::to_string_pretty(value).expect("plain data serializes");
    fs::write(path, body + "\n").map_err(io_err(path))
}

/// Summary of a finished or interrupted run directory.
pub fn report_from_dir(run_dir: &Path) -> Result<MatrixReport, MatrixError> {
    let manifest_path = run_dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(MatrixError::NotARun(run_dir.to_owned()));
    }
    let manifest: RunManifest = read_json(&manifest_path)?;
    let entries = load_journal(&run_dir.join(JOURNAL_FILE))?;
    let outages_path = run_dir.join(OUTAGES_FILE);
    let outages = if outages_path.is_file() {
        read_json(&outages_path)?
    } else {
        BTreeMap::new()
    };
    Ok(build_report(&manifest, &entries, &outages))
}

fn check_manifest(cfg: &MatrixConfig, dir: &Path) -> Result<RunManifest, MatrixError> {
    let path = dir.join(MANIFEST_FILE);
    let want = RunManifest::of(cfg);
    if path.is_file() {
        let have: RunManifest = read_json(&path)?;
        if have != want {
            return Err(MatrixError::ConfigMismatch(cfg.run_id.clone()));
        }
    } else {
        write_json(&path, &want)?;
    }
    Ok(want)
}

struct Job {
    meta: CandidateMeta,
    response: Result<String, String>,
}

fn candidate_dir(run_dir: &Path, meta: &CandidateMeta) -> PathBuf {
    run_dir
        .join("candidates")
        .join(&meta.model)
        .join(meta.function.name())
        .join(format!("attempt_{:03}", meta.attempt))
}

fn write_artifacts(dir: &Path, outcome: &EvaluationOutcome) -> Result<(), MatrixError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let record = dir.join("record.json");
    crate::report::write_record(&record, outcome)?;
    for (tc, trace) in outcome.per_tc.iter().zip(&outcome.traces) {
        let path = dir.join(format!("{}.trace.jsonl", tc.tc_id.name()));
        fs::write(&path, trace.to_jsonl()).map_err(io_err(&path))?;
    }
    Ok(())
}

fn evaluate_job(job: Job, cfg: &MatrixConfig, run_dir: &Path) -> Result<EvaluationOutcome, MatrixError> {
    let Job { meta, response } = job;
    let dir = candidate_dir(run_dir, &meta);
    let outcome = match response {
        Err(e) => EvaluationOutcome::generation_failed(meta, &e),
        Ok(text) => {
            let mut eval = cfg.eval.clone();
            if cfg.keep_artifacts {
                fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                let raw = dir.join("response.txt");
                fs::write(&raw, &text).map_err(io_err(&raw))?;
                eval.artifact_dir = Some(dir.join("work"));
            }
            evaluate_response(&text, meta, &eval)?
        }
    };
    if cfg.keep_artifacts {
        write_artifacts(&dir, &outcome)?;
    }
    Ok(outcome)
}

/// Runs every missing (model, function, attempt) cell, appending each result
/// to the journal as soon as it is known, and summarizes the whole journal.
///
/// Provider failures for a cell leave it incomplete and are reported in the
/// summary; other cells still run.
pub fn run_matrix(cfg: &MatrixConfig) -> Result<MatrixReport, MatrixError> {
    let run_dir = cfg.run_dir();
    fs::create_dir_all(&run_dir).map_err(io_err(&run_dir))?;
    let manifest = check_manifest(cfg, &run_dir)?;
    let journal_path = run_dir.join(JOURNAL_FILE);
    let existing = load_journal(&journal_path)?;
    let done: BTreeSet<(String, FunctionId, usize)> = existing
        .iter()
        .map(|e| (e.model.clone(), e.function, e.attempt))
        .collect();

    let mut jobs = Vec::new();
    let mut outages = BTreeMap::new();
    for provider in &cfg.providers {
        for &function in &cfg.functions {
            let missing: Vec<usize> = (1..=cfg.repeats)
                .filter(|a| !done.contains(&(provider.model.clone(), function, *a)))
                .collect();
            if missing.is_empty() {
                continue;
            }
            let prompt = render_prompt(&cfg.template, function.description())?;
            // Replayed responses are addressed by attempt number, live ones
            // are only requested for the attempts still missing.
            let responses = match &provider.kind {
                ProviderKind::ReplayDir { .. } => request_completions(provider, function, &prompt, cfg.repeats)
                    .map(|all| missing.iter().map(|a| all[a - 1].clone()).collect::<Vec<_>>()),
                ProviderKind::HttpChat { .. } => request_completions(provider, function, &prompt, missing.len()),
            };
            let responses = match responses {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("{} {function}: {e}", provider.model);
                    let key = CellKey {
                        model: provider.model.clone(),
                        function,
                    };
                    outages.insert(outage_key(&key), e.to_string());
                    continue;
                }
            };
            for (attempt, response) in missing.into_iter().zip(responses) {
                let response_hash = match &response {
                    Ok(text) => sha256_hex(text.as_bytes()),
                    Err(_) => String::new(),
                };
                jobs.push(Job {
                    meta: CandidateMeta {
                        model: provider.model.clone(),
                        function,
                        attempt,
                        prompt_hash: prompt.hash.clone(),
                        response_hash,
                    },
                    response,
                });
            }
        }
    }

    let journal = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&journal_path)
        .map_err(io_err(&journal_path))?;
    let journal = Mutex::new(journal);
    let append = |outcome: &EvaluationOutcome| -> Result<JournalEntry, MatrixError> {
        let entry = JournalEntry {
            model: outcome.meta.model.clone(),
            function: outcome.meta.function,
            attempt: outcome.meta.attempt,
            outcome: outcome.clone(),
        };
        let line = serde_json::to_string(&entry).expect("journal entry serializes") + "\n";
        let mut f: std::sync::MutexGuard<'_, File> = journal.lock().expect("journal lock");
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(io_err(&journal_path))?;
        Ok(entry)
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| MatrixError::Pool(e.to_string()))?;
    let fresh: Vec<JournalEntry> = pool.install(|| {
        jobs.into_par_iter()
            .map(|job| evaluate_job(job, cfg, &run_dir).and_then(|o| append(&o)))
            .collect::<Result<_, _>>()
    })?;

    let mut all = existing;
    all.extend(fresh);
    let outages_path = run_dir.join(OUTAGES_FILE);
    if outages.is_empty() {
        if outages_path.exists() {
            fs::remove_file(&outages_path).map_err(io_err(&outages_path))?;
        }
    } else {
        write_json(&outages_path, &outages)?;
    }
    Ok(build_report(&manifest, &all, &outages))
}
