//! Runs candidate controllers as child processes: a compile gate, then one
//! process per episode talking the tick protocol over stdio.
//!
//! Each child gets its own process group, a scrubbed environment and a
//! private working directory. Reads and writes happen on helper threads so a
//! misbehaving child can never block the harness; every wait has a deadline.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::episode::{ControllerLink, LinkError};
use crate::protocol::{check_ready, encode_road, END_LINE, MAX_LINE_BYTES};
use crate::sim::RoadSpec;

pub const DIAGNOSTICS_LIMIT: usize = 64 * 1024;
pub const STDERR_TAIL_BYTES: usize = 8 * 1024;
const SOURCE_PLACEHOLDER: &str = "{source}";
const WORKDIR_PLACEHOLDER: &str = "{workdir}";

/// How to compile and run candidates written in one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateAdapter {
    pub name: String,
    /// File name the candidate source is written to inside the workdir.
    pub source_file: String,
    /// Syntax check or compiler invocation. `{source}` and `{workdir}` are
    /// substituted.
    #[serde(default)]
    pub compile_cmd: Option<Vec<String>>,
    pub run_cmd: Vec<String>,
    /// Variables copied from the harness environment when set.
    #[serde(default)]
    pub env_allowlist: Vec<String>,
    /// Variables set to fixed values.
    #[serde(default)]
    pub env_set: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("adapter `{0}`: run_cmd is empty")]
    EmptyRunCmd(String),
    #[error("adapter `{0}`: compile_cmd is empty")]
    EmptyCompileCmd(String),
    #[error("adapter `{0}`: source_file must be a plain file name")]
    SourceFile(String),
    #[error("cannot read adapter file {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid adapter file {path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
}

impl CandidateAdapter {
    pub fn validate(&self) -> Result<(), AdapterError> {
        if self.run_cmd.is_empty() {
            return Err(AdapterError::EmptyRunCmd(self.name.clone()));
        }
        if self.compile_cmd.as_ref().is_some_and(|c| c.is_empty()) {
            return Err(AdapterError::EmptyCompileCmd(self.name.clone()));
        }
        let p = Path::new(&self.source_file);
        if self.source_file.is_empty() || p.file_name() != Some(p.as_os_str()) {
            return Err(AdapterError::SourceFile(self.name.clone()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self, AdapterError> {
        let adapter: Self = toml::from_str(text).map_err(|source| AdapterError::Toml {
            path: path.to_owned(),
            source,
        })?;
        adapter.validate()?;
        Ok(adapter)
    }

    pub fn load(path: &Path) -> Result<Self, AdapterError> {
        let text = std::fs::read_to_string(path).map_err(|source| AdapterError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    /// Python 3 candidates.
    pub fn python() -> Self {
        Self {
            name: "python".into(),
            source_file: "candidate.py".into(),
            compile_cmd: Some(vec![
                "python3".into(),
                "-m".into(),
                "py_compile".into(),
                SOURCE_PLACEHOLDER.into(),
            ]),
            run_cmd: vec!["python3".into(), "-u".into(), SOURCE_PLACEHOLDER.into()],
            env_allowlist: vec!["PATH".into(), "LANG".into(), "LC_ALL".into()],
            env_set: BTreeMap::from([("PYTHONDONTWRITEBYTECODE".into(), "1".into())]),
        }
    }

    fn command(&self, template: &[String], workdir: &Workdir) -> Command {
        let source = workdir.source_path(self);
        let subst = |arg: &String| {
            arg.replace(SOURCE_PLACEHOLDER, &source.to_string_lossy())
                .replace(WORKDIR_PLACEHOLDER, &workdir.path().to_string_lossy())
        };
        let mut cmd = Command::new(subst(&template[0]));
        cmd.args(template[1..].iter().map(subst));
        cmd.current_dir(workdir.path());
        cmd.env_clear();
        for key in &self.env_allowlist {
            if let Some(val) = std::env::var_os(key) {
                cmd.env(key, val);
            }
        }
        cmd.envs(&self.env_set);
        cmd.process_group(0);
        cmd
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandboxLimits {
    pub tick_timeout: Duration,
    pub handshake_timeout: Duration,
    pub compile_timeout: Duration,
    pub kill_grace: Duration,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self {
            tick_timeout: Duration::from_millis(100),
            handshake_timeout: Duration::from_secs(5),
            compile_timeout: Duration::from_secs(30),
            kill_grace: Duration::from_secs(2),
        }
    }
}

/// Private directory holding the candidate source. Removed on drop unless
/// created as persistent.
#[derive(Debug)]
pub struct Workdir {
    path: PathBuf,
    _temp: Option<tempfile::TempDir>,
}

impl Workdir {
    pub fn temporary() -> io::Result<Self> {
        let temp = tempfile::Builder::new().prefix("silcheck-").tempdir()?;
        Ok(Self {
            path: temp.path().to_owned(),
            _temp: Some(temp),
        })
    }

    pub fn persistent(path: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(path)?;
        Ok(Self {
            // The candidate runs with the workdir as cwd, so relative paths
            // would resolve twice.
            path: std::fs::canonicalize(path)?,
            _temp: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn source_path(&self, adapter: &CandidateAdapter) -> PathBuf {
        self.path.join(&adapter.source_file)
    }

    pub fn write_source(&self, adapter: &CandidateAdapter, source: &str) -> io::Result<()> {
        std::fs::write(self.source_path(adapter), source)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Compiled,
    CompileFailed,
    Spawned,
    SpawnFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: Stage,
    pub diagnostics: String,
}

impl StageResult {
    fn failed(stage: Stage, diagnostics: impl Into<String>) -> Self {
        let mut diagnostics = diagnostics.into();
        if diagnostics.trim().is_empty() {
            diagnostics = "failed without output".into();
        }
        Self {
            stage,
            diagnostics: truncate_utf8(diagnostics, DIAGNOSTICS_LIMIT),
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self.stage, Stage::CompileFailed | Stage::SpawnFailed)
    }
}

fn truncate_utf8(mut s: String, limit: usize) -> String {
    if s.len() > limit {
        let mut cut = limit;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
    s
}

fn kill_group(pid: u32) {
    // SAFETY: plain syscall; a stale or empty group just yields ESRCH.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

fn drain<R: Read + Send + 'static>(mut r: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 8192];
        while let Ok(n) = r.read(&mut chunk) {
            if n == 0 {
                break;
            }
            if buf.len() < DIAGNOSTICS_LIMIT {
                buf.extend_from_slice(&chunk[..n]);
            }
        }
        buf
    })
}

/// Writes `source` into `workdir` and runs the adapter's compile step.
pub fn compile_in(source: &str, adapter: &CandidateAdapter, workdir: &Workdir, limits: &SandboxLimits) -> StageResult {
    if source.trim().is_empty() {
        return StageResult::failed(Stage::CompileFailed, "empty source");
    }
    if let Err(e) = workdir.write_source(adapter, source) {
        return StageResult::failed(Stage::CompileFailed, format!("cannot write source: {e}"));
    }
    let Some(template) = adapter.compile_cmd.as_ref().filter(|c| !c.is_empty()) else {
        return StageResult {
            stage: Stage::Compiled,
            diagnostics: String::new(),
        };
    };
    let mut cmd = adapter.command(template, workdir);
    cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => return StageResult::failed(Stage::CompileFailed, format!("cannot start `{}`: {e}", template[0])),
    };
    let out = drain(child.stdout.take().expect("piped"));
    let err = drain(child.stderr.take().expect("piped"));
    let status = match child.wait_timeout(limits.compile_timeout) {
        Ok(Some(s)) => Some(s),
        _ => {
            kill_group(child.id());
            let _ = child.wait();
            None
        }
    };
    kill_group(child.id());
    let mut diag = out.join().unwrap_or_default();
    diag.extend(err.join().unwrap_or_default());
    let diag = String::from_utf8_lossy(&diag).into_owned();
    match status {
        Some(s) if s.success() => StageResult {
            stage: Stage::Compiled,
            diagnostics: truncate_utf8(diag, DIAGNOSTICS_LIMIT),
        },
        Some(s) => StageResult::failed(
            Stage::CompileFailed,
            if diag.trim().is_empty() { s.to_string() } else { diag },
        ),
        None => StageResult::failed(
            Stage::CompileFailed,
            format!("compile step exceeded {:?}\n{diag}", limits.compile_timeout),
        ),
    }
}

/// Compile gate in a throwaway workdir.
pub fn compile_candidate(source: &str, adapter: &CandidateAdapter) -> StageResult {
    match Workdir::temporary() {
        Ok(wd) => compile_in(source, adapter, &wd, &SandboxLimits::default()),
        Err(e) => StageResult::failed(Stage::CompileFailed, format!("cannot create workdir: {e}")),
    }
}

enum OutMsg {
    Line(Vec<u8>),
    TooLong,
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitRecord {
    /// Exit code, or `None` when ended by a signal.
    pub code: Option<i32>,
    /// The child ignored the stop request and was killed.
    pub forced: bool,
}

/// A running candidate.
pub struct CandidateProcess {
    child: Child,
    pgid: u32,
    to_stdin: Option<Sender<Vec<u8>>>,
    from_stdout: Receiver<OutMsg>,
    stderr: Arc<Mutex<Vec<u8>>>,
    stderr_done: Receiver<()>,
    limits: SandboxLimits,
    exit: Option<ExitRecord>,
    stdout_closed: bool,
}

/// Starts the candidate from a workdir prepared by [`compile_in`].
pub fn spawn_candidate(
    adapter: &CandidateAdapter,
    workdir: &Workdir,
    limits: &SandboxLimits,
) -> Result<CandidateProcess, StageResult> {
    let mut cmd = adapter.command(&adapter.run_cmd, workdir);
    cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = cmd.spawn().map_err(|e| {
        StageResult::failed(
            Stage::SpawnFailed,
            format!("cannot start `{}`: {e}", adapter.run_cmd[0]),
        )
    })?;
    let pgid = child.id();

    let mut stdin = child.stdin.take().expect("piped");
    let (to_stdin, stdin_rx) = mpsc::channel::<Vec<u8>>();
    thread::spawn(move || {
        for chunk in stdin_rx {
            if stdin.write_all(&chunk).and_then(|_| stdin.flush()).is_err() {
                break;
            }
        }
    });

    let stdout = child.stdout.take().expect("piped");
    let (out_tx, from_stdout) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(stdout);
        loop {
            let mut line = Vec::new();
            match reader
                .by_ref()
                .take(MAX_LINE_BYTES as u64 + 1)
                .read_until(b'\n', &mut line)
            {
                Ok(0) | Err(_) => {
                    let _ = out_tx.send(OutMsg::Eof);
                    return;
                }
                Ok(_) if line.last() != Some(&b'\n') && line.len() > MAX_LINE_BYTES => {
                    let _ = out_tx.send(OutMsg::TooLong);
                    return;
                }
                Ok(_) => {
                    if out_tx.send(OutMsg::Line(line)).is_err() {
                        return;
                    }
                }
            }
        }
    });

    let mut stderr_pipe = child.stderr.take().expect("piped");
    let stderr = Arc::new(Mutex::new(Vec::new()));
    let (done_tx, stderr_done) = mpsc::channel();
    let sink = Arc::clone(&stderr);
    thread::spawn(move || {
        let mut chunk = [0u8; 4096];
        while let Ok(n) = stderr_pipe.read(&mut chunk) {
            if n == 0 {
                break;
            }
            let mut buf = sink.lock().expect("stderr buffer");
            buf.extend_from_slice(&chunk[..n]);
            if buf.len() > STDERR_TAIL_BYTES {
                let excess = buf.len() - STDERR_TAIL_BYTES;
                buf.drain(..excess);
            }
        }
        let _ = done_tx.send(());
    });

    Ok(CandidateProcess {
        child,
        pgid,
        to_stdin: Some(to_stdin),
        from_stdout,
        stderr,
        stderr_done,
        limits: *limits,
        exit: None,
        stdout_closed: false,
    })
}

fn strip_newline(mut line: Vec<u8>) -> Vec<u8> {
    if line.last() == Some(&b'\n') {
        line.pop();
        if line.last() == Some(&b'\r') {
            line.pop();
        }
    }
    line
}

impl CandidateProcess {
    pub fn pid(&self) -> u32 {
        self.pgid
    }

    fn send(&self, bytes: &[u8]) {
        if let Some(tx) = &self.to_stdin {
            let _ = tx.send(bytes.to_vec());
        }
    }

    /// Waits briefly for stderr to drain once the child is gone.
    fn settle_stderr(&self) {
        let _ = self.stderr_done.recv_timeout(Duration::from_millis(500));
    }

    fn exited(&mut self) -> Option<ExitStatus> {
        self.child.try_wait().ok().flatten()
    }

    fn crash(&mut self, status: ExitStatus) -> LinkError {
        kill_group(self.pgid);
        self.settle_stderr();
        LinkError::Crash {
            exit: status.code(),
            stderr_tail: self.stderr_tail(),
        }
    }

    /// Next stdout line within `timeout`.
    fn read_line(&mut self, timeout: Duration) -> Result<Vec<u8>, LinkError> {
        if self.stdout_closed {
            return Err(self.closed_stdout());
        }
        match self.from_stdout.recv_timeout(timeout) {
            Ok(OutMsg::Line(line)) => Ok(strip_newline(line)),
            Ok(OutMsg::TooLong) => Err(LinkError::Protocol(format!("line longer than {MAX_LINE_BYTES} bytes"))),
            Ok(OutMsg::Eof) | Err(RecvTimeoutError::Disconnected) => {
                self.stdout_closed = true;
                Err(self.closed_stdout())
            }
            Err(RecvTimeoutError::Timeout) => match self.exited() {
                Some(status) => Err(self.crash(status)),
                None => Err(LinkError::Timeout),
            },
        }
    }

    fn closed_stdout(&mut self) -> LinkError {
        match self.child.wait_timeout(Duration::from_secs(1)) {
            Ok(Some(status)) => self.crash(status),
            _ => LinkError::Protocol("controller closed its output".into()),
        }
    }

    /// Waits for the `ready` line and answers with the road description.
    pub fn handshake(&mut self, road: &RoadSpec) -> Result<(), LinkError> {
        let line = match self.read_line(self.limits.handshake_timeout) {
            Ok(l) => l,
            Err(LinkError::Timeout) => {
                return Err(LinkError::Protocol(format!(
                    "no `ready` within {:?}",
                    self.limits.handshake_timeout
                )))
            }
            Err(e) => return Err(e),
        };
        check_ready(&line).map_err(|e| LinkError::Protocol(e.0))?;
        self.send(encode_road(road).as_bytes());
        Ok(())
    }

    /// Stops the child: end message, closed stdin, then a forced kill of the
    /// whole process group after the grace period. Safe to call repeatedly.
    pub fn terminate(&mut self) -> ExitRecord {
        if let Some(rec) = &self.exit {
            return rec.clone();
        }
        self.send(END_LINE.as_bytes());
        self.to_stdin = None;
        let (status, forced) = match self.child.wait_timeout(self.limits.kill_grace) {
            Ok(Some(s)) => (Some(s), false),
            _ => (None, true),
        };
        kill_group(self.pgid);
        let status = status.or_else(|| self.child.wait().ok());
        let rec = ExitRecord {
            code: status.and_then(|s| s.code()),
            forced,
        };
        self.exit = Some(rec.clone());
        rec
    }
}

impl ControllerLink for CandidateProcess {
    fn exchange(&mut self, observation: &str) -> Result<String, LinkError> {
        // Strict alternation: anything already waiting is unsolicited.
        if let Ok(msg) = self.from_stdout.try_recv() {
            return Err(match msg {
                OutMsg::Line(_) | OutMsg::TooLong => LinkError::Protocol("unsolicited output between ticks".into()),
                OutMsg::Eof => {
                    self.stdout_closed = true;
                    self.closed_stdout()
                }
            });
        }
        let start = Instant::now();
        self.send(observation.as_bytes());
        let line = self.read_line(self.limits.tick_timeout.saturating_sub(start.elapsed()))?;
        String::from_utf8(line).map_err(|_| LinkError::Protocol("reply is not valid UTF-8".into()))
    }

    fn stderr_tail(&self) -> String {
        let buf = self.stderr.lock().expect("stderr buffer");
        String::from_utf8_lossy(&buf).into_owned()
    }
}

impl Drop for CandidateProcess {
    fn drop(&mut self) {
        if self.exit.is_none() {
            kill_group(self.pgid);
            let _ = self.child.wait();
        }
    }
}

/// Pids of live (non-zombie) processes in a process group, from `/proc`.
pub fn live_group_members(pgid: u32) -> Vec<u32> {
    let Ok(entries) = std::fs::read_dir("/proc") else {
        return Vec::new();
    };
    entries
        .filter_map(|e| e.ok()?.file_name().to_str()?.parse::<u32>().ok())
        .filter(|pid| {
            let Ok(stat) = std::fs::read_to_string(format!("/proc/{pid}/stat")) else {
                return false;
            };
            // Fields after the parenthesised command name: state ppid pgrp ...
            let Some(rest) = stat.rfind(')').map(|i| &stat[i + 1..]) else {
                return false;
            };
            let fields: Vec<&str> = rest.split_whitespace().collect();
            fields.len() > 2 && fields[0] != "Z" && fields[2].parse::<u32>().ok() == Some(pgid)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh_adapter() -> CandidateAdapter {
        CandidateAdapter {
            name: "sh".into(),
            source_file: "candidate.sh".into(),
            compile_cmd: Some(vec!["sh".into(), "-n".into(), "{source}".into()]),
            run_cmd: vec!["sh".into(), "{source}".into()],
            env_allowlist: vec!["PATH".into()],
            env_set: BTreeMap::new(),
        }
    }

    fn start(script: &str) -> (CandidateProcess, Workdir) {
        let adapter = sh_adapter();
        let wd = Workdir::temporary().unwrap();
        let st = compile_in(script, &adapter, &wd, &SandboxLimits::default());
        assert_eq!(st.stage, Stage::Compiled, "{}", st.diagnostics);
        let limits = SandboxLimits {
            handshake_timeout: Duration::from_secs(2),
            kill_grace: Duration::from_millis(300),
            ..Default::default()
        };
        (
            spawn_candidate(&adapter, &wd, &limits)
                .map_err(|e| e.diagnostics)
                .unwrap(),
            wd,
        )
    }

    #[test]
    fn empty_source_fails_compile() {
        let st = compile_candidate("  \n", &sh_adapter());
        assert_eq!(st.stage, Stage::CompileFailed);
        assert_eq!(st.diagnostics, "empty source");
    }

    #[test]
    fn syntax_error_fails_compile() {
        let st = compile_candidate("if then fi (", &sh_adapter());
        assert_eq!(st.stage, Stage::CompileFailed);
        assert!(!st.diagnostics.is_empty());
    }

    #[test]
    fn missing_run_binary_is_spawn_failed() {
        let mut adapter = sh_adapter();
        adapter.run_cmd = vec!["/nonexistent/interpreter".into()];
        let wd = Workdir::temporary().unwrap();
        let err = spawn_candidate(&adapter, &wd, &SandboxLimits::default()).err().unwrap();
        assert_eq!(err.stage, Stage::SpawnFailed);
    }

    #[test]
    fn environment_is_scrubbed() {
        std::env::set_var("SILCHECK_SECRET_TEST", "hunter2");
        let (mut p, _wd) =
            start("echo ready\nread road\nread obs\necho \"{\\\"x\\\":\\\"${SILCHECK_SECRET_TEST}\\\"}\"\n");
        p.handshake(&RoadSpec::highway()).unwrap();
        assert_eq!(p.exchange("{}\n").unwrap(), "{\"x\":\"\"}");
        p.terminate();
    }

    #[test]
    fn echo_round_trip_and_clean_exit() {
        let (mut p, _wd) = start(
            "echo ready\nread road\nwhile read line; do\n  case \"$line\" in *end*) exit 0;; esac\n  echo '{}'\ndone\n",
        );
        p.handshake(&RoadSpec::highway()).unwrap();
        for _ in 0..20 {
            assert_eq!(p.exchange("{\"type\":\"obs\"}\n").unwrap(), "{}");
        }
        let rec = p.terminate();
        assert_eq!(
            rec,
            ExitRecord {
                code: Some(0),
                forced: false
            }
        );
        assert_eq!(p.terminate(), rec);
    }

    #[test]
    fn silent_candidate_fails_handshake() {
        let (mut p, _wd) = start("sleep 10\n");
        let err = p.handshake(&RoadSpec::highway()).unwrap_err();
        assert!(
            matches!(err, LinkError::Protocol(ref d) if d.contains("ready")),
            "{err:?}"
        );
        assert!(p.terminate().forced);
    }

    #[test]
    fn prose_fails_handshake() {
        let (mut p, _wd) = start("echo 'Here is how you could write the controller.'\n");
        assert!(p.handshake(&RoadSpec::highway()).is_err());
        p.terminate();
    }

    #[test]
    fn hang_is_timeout() {
        let (mut p, _wd) = start("echo ready\nread road\nsleep 5\n");
        p.handshake(&RoadSpec::highway()).unwrap();
        let t0 = Instant::now();
        assert_eq!(p.exchange("{}\n"), Err(LinkError::Timeout));
        assert!(t0.elapsed() < Duration::from_millis(500));
        let pid = p.pid();
        assert!(p.terminate().forced);
        assert!(live_group_members(pid).is_empty());
    }

    #[test]
    fn crash_keeps_stderr() {
        let (mut p, _wd) =
            start("echo ready\nread road\nread obs\necho 'ZeroDivisionError: division by zero' >&2\nexit 3\n");
        p.handshake(&RoadSpec::highway()).unwrap();
        match p.exchange("{}\n") {
            Err(LinkError::Crash { exit, stderr_tail }) => {
                assert_eq!(exit, Some(3));
                assert!(stderr_tail.contains("division by zero"));
            }
            other => panic!("{other:?}"),
        }
        p.terminate();
    }

    #[test]
    fn spam_is_protocol_error() {
        let (mut p, _wd) = start("echo ready\nread road\nwhile true; do echo '{}'; done\n");
        p.handshake(&RoadSpec::highway()).unwrap();
        thread::sleep(Duration::from_millis(50));
        assert!(matches!(p.exchange("{}\n"), Err(LinkError::Protocol(_))));
        let pid = p.pid();
        p.terminate();
        assert!(live_group_members(pid).is_empty());
    }

    #[test]
    fn grandchildren_are_killed() {
        let (mut p, _wd) = start("echo ready\nread road\nfor i in 1 2 3 4 5 6 7 8; do sleep 30 & done\ntrap '' TERM\nwhile true; do sleep 1; done\n");
        p.handshake(&RoadSpec::highway()).unwrap();
        let pid = p.pid();
        thread::sleep(Duration::from_millis(100));
        assert!(live_group_members(pid).len() > 1);
        assert!(p.terminate().forced);
        assert!(live_group_members(pid).is_empty());
    }

    #[test]
    fn adapter_toml() {
        let text = r#"
name = "python"
source_file = "candidate.py"
compile_cmd = ["python3", "-m", "py_compile", "{source}"]
run_cmd = ["python3", "-u", "{source}"]
env_allowlist = ["PATH"]
"#;
        let a = CandidateAdapter::from_toml_str(text, Path::new("x.toml")).unwrap();
        assert_eq!(a.run_cmd[0], "python3");
        assert!(CandidateAdapter::from_toml_str("name='x'\nsource_file='a'\nrun_cmd=[]\n", Path::new("x")).is_err());
        assert!(
            CandidateAdapter::from_toml_str("name='x'\nsource_file='../a'\nrun_cmd=['sh']\n", Path::new("x")).is_err()
        );
    }
}
