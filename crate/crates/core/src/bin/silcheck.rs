use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use silcheck::config::RunConfig;
use silcheck::episode::Trace;
use silcheck::function::{FunctionId, TcId};
use silcheck::generation::{extract_code, render_prompt, request_completions, sha256_hex, CandidateMeta};
use silcheck::oracle::VerdictStage;
use silcheck::orchestrator::{
    evaluate_candidate, evaluate_response, report_from_dir, run_matrix, CellStatus, EvalConfig, EvaluationOutcome,
    MatrixReport,
};
use silcheck::report::{render_matrix_table, render_timeline, render_trace_csv, write_record};
use silcheck::sandbox::CandidateAdapter;
use silcheck::scenario::{instantiate_tc, serialize_scenario, TcOverrides};

const EXIT_CANDIDATE_FAILURES: u8 = 1;
const EXIT_INFRA: u8 = 2;

#[derive(Parser)]
#[command(
    name = "silcheck",
    version,
    about = "Closed-loop evaluation of generated driving controllers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Request completions and store them in replay layout under the run directory.
    Generate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate candidate sources (or raw model responses with --raw).
    Evaluate {
        #[arg(long, value_parser = parse_function)]
        function: FunctionId,
        /// Run configuration for adapter, limits, thresholds and overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Adapter TOML file; the built-in Python adapter by default.
        #[arg(long, conflicts_with = "config")]
        adapter: Option<PathBuf>,
        /// Only these test cases.
        #[arg(long = "tc", value_parser = parse_tc)]
        tcs: Vec<TcId>,
        /// Inputs are model responses; extract the code first.
        #[arg(long)]
        raw: bool,
        /// Write records and traces here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Generate, evaluate and summarize every (model, function) cell.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Summarize a run directory.
    Report {
        run_dir: PathBuf,
        /// Print the JSON summary instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Render a trace as a per-tick timeline or CSV.
    ReplayTrace {
        trace: PathBuf,
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the scenario file of a test case.
    Scenario {
        #[arg(value_parser = parse_tc)]
        tc: TcId,
        #[arg(long)]
        ego_speed_kph: Option<f64>,
    },
}

fn parse_function(s: &str) -> Result<FunctionId, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_tc(s: &str) -> Result<TcId, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct ExtractionRecord {
    attempt: usize,
    extracted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    source_len: usize,
    response_hash: String,
}

fn cmd_generate(config: &Path) -> Result<u8> {
    let cfg = RunConfig::load(config)?;
    if cfg.providers.is_empty() {
        bail!("{}: at least one provider is needed", config.display());
    }
    let template = cfg.template()?;
    let extract = cfg.eval_config()?.extract;
    let root = cfg.run_dir().join("responses");
    let mut failures = 0;
    for provider in &cfg.providers {
        for &function in &cfg.functions {
            let prompt = render_prompt(&template, function.description())?;
            let responses = request_completions(provider, function, &prompt, cfg.repeats)
                .with_context(|| format!("{} {function}", provider.model))?;
            let dir = root.join(&provider.model).join(function.name());
            let mut records = String::new();
            for (i, response) in responses.iter().enumerate() {
                let attempt = i + 1;
                let record = match response {
                    Ok(text) => {
                        write_file(&dir.join(format!("attempt_{attempt:03}.txt")), text)?;
                        let extracted = extract_code(text, &extract);
                        if extracted.is_err() {
                            failures += 1;
                        }
                        ExtractionRecord {
                            attempt,
                            extracted: extracted.is_ok(),
                            reason: extracted.as_ref().err().map(|e| e.reason.clone()),
                            source_len: extracted.as_ref().map_or(0, String::len),
                            response_hash: sha256_hex(text.as_bytes()),
                        }
                    }
                    Err(e) => {
                        failures += 1;
                        write_file(&dir.join(format!("attempt_{attempt:03}.failed.json")), format!("{e}\n"))?;
                        ExtractionRecord {
                            attempt,
                            extracted: false,
                            reason: Some(format!("generation failed: {e}")),
                            source_len: 0,
                            response_hash: String::new(),
                        }
                    }
                };
                records += &(serde_json::to_string(&record)? + "\n");
            }
            write_file(&dir.join("extraction.jsonl"), records)?;
            println!("{} {function}: {} responses", provider.model, responses.len());
        }
    }
    println!("stored under {}", root.display());
    Ok(if failures > 0 { EXIT_CANDIDATE_FAILURES } else { 0 })
}

fn attempt_from_name(path: &Path) -> usize {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("attempt_"))
        .and_then(|s| s.split('.').next())
        .and_then(|s| s.parse().ok())
        .filter(|&a| a > 0)
        .unwrap_or(1)
}

fn summary_line(name: &str, o: &EvaluationOutcome) -> String {
    let modes: Vec<&str> = o.failure_modes.iter().map(|f| f.mode.name()).collect();
    let mut line = format!(
        "{name}: {} ({}/{} test cases passed)",
        o.stage,
        o.tcs_passed(),
        o.per_tc.len()
    );
    if !modes.is_empty() {
        line += &format!(" [{}]", modes.join(", "));
    } else if o.stage != VerdictStage::Passed {
        line += " [unclassified]";
    }
    line
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    function: FunctionId,
    config: Option<&Path>,
    adapter: Option<&Path>,
    tcs: Vec<TcId>,
    raw: bool,
    out: Option<&Path>,
    files: &[PathBuf],
) -> Result<u8> {
    let mut eval = match (config, adapter) {
        (Some(c), _) => RunConfig::load(c)?.eval_config()?,
        (None, Some(a)) => EvalConfig::new(CandidateAdapter::load(a)?),
        (None, None) => EvalConfig::new(CandidateAdapter::python()),
    };
    if !tcs.is_empty() {
        eval.tc_filter = Some(tcs);
    }
    let mut failing = 0;
    for file in files {
        let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
        let meta = CandidateMeta {
            model: "local".into(),
            function,
            attempt: attempt_from_name(file),
            prompt_hash: String::new(),
            response_hash: sha256_hex(text.as_bytes()),
        };
        let outcome = if raw {
            evaluate_response(&text, meta, &eval)?
        } else {
            evaluate_candidate(&silcheck::generation::CandidateCode { source: text, meta }, &eval)?
        };
        let name = file.display().to_string();
        println!("{}", summary_line(&name, &outcome));
        if outcome.stage != VerdictStage::Passed {
            failing += 1;
        }
        if let Some(dir) = out {
            let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("candidate");
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            write_record(&dir.join(format!("{stem}.record.json")), &outcome)?;
            for (tc, trace) in outcome.per_tc.iter().zip(&outcome.traces) {
                write_file(
                    &dir.join(format!("{stem}.{}.trace.jsonl", tc.tc_id.name())),
                    trace.to_jsonl(),
                )?;
            }
        }
    }
    Ok(if failing > 0 { EXIT_CANDIDATE_FAILURES } else { 0 })
}

fn report_exit(report: &MatrixReport) -> u8 {
    let clean = report
        .rows
        .iter()
        .flat_map(|r| &r.cells)
        .all(|c| c.status == CellStatus::Complete && c.passed == c.attempts);
    if clean {
        0
    } else {
        EXIT_CANDIDATE_FAILURES
    }
}

fn write_report(run_dir: &Path, report: &MatrixReport) -> Result<String> {
    let table = render_matrix_table(report);
    write_file(
        &run_dir.join("report.json"),
        serde_json::to_string_pretty(report)? + "\n",
    )?;
    write_file(&run_dir.join("report.txt"), &table)?;
    Ok(table)
}

fn cmd_matrix(config: &Path, threads: Option<usize>) -> Result<u8> {
    let cfg = RunConfig::load(config)?;
    let mut matrix = cfg.matrix_config()?;
    if threads.is_some() {
        matrix.threads = threads;
    }
    let report = run_matrix(&matrix)?;
    print!("{}", write_report(&matrix.run_dir(), &report)?);
    Ok(report_exit(&report))
}

fn cmd_report(run_dir: &Path, json: bool) -> Result<u8> {
    let report = report_from_dir(run_dir)?;
    let table = write_report(run_dir, &report)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{table}");
    }
    Ok(report_exit(&report))
}

fn cmd_replay_trace(path: &Path, csv: bool, out: Option<&Path>) -> Result<u8> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trace = Trace::from_jsonl(&text).with_context(|| format!("parsing {}", path.display()))?;
    let rendered = if csv {
        render_trace_csv(&trace)
    } else {
        render_timeline(&trace)
    };
    match out {
        Some(p) => write_file(p, rendered)?,
        None => print!("{rendered}"),
    }
    Ok(0)
}

fn cmd_scenario(tc: TcId, ego_speed_kph: Option<f64>) -> Result<u8> {
    let overrides = TcOverrides {
        ego_speed: ego_speed_kph.map(|v| v / 3.6),
        ..TcOverrides::default()
    };
    print!("{}", serialize_scenario(&instantiate_tc(tc, &overrides)?));
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Generate { config } => cmd_generate(&config),
        Command::Evaluate {
            function,
            config,
            adapter,
            tcs,
            raw,
            out,
            files,
        } => cmd_evaluate(
            function,
            config.as_deref(),
            adapter.as_deref(),
            tcs,
            raw,
            out.as_deref(),
            &files,
        ),
        Command::Matrix { config, threads } => cmd_matrix(&config, threads),
        Command::Report { run_dir, json } => cmd_report(&run_dir, json),
        Command::ReplayTrace { trace, csv, out } => cmd_replay_trace(&trace, csv, out.as_deref()),
        Command::Scenario { tc, ego_speed_kph } => cmd_scenario(tc, ego_speed_kph),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INFRA)
        }
    }
}
