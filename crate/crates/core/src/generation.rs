//! Prompt rendering, completion providers and code extraction.

use std::path::{Path, PathBuf};
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::function::FunctionId;

pub const DESCRIPTION_MARKER: &str = "{{FUNCTION_DESCRIPTION}}";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub hash: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template has no {DESCRIPTION_MARKER} marker")]
    MissingMarker,
    #[error("template has {0} {DESCRIPTION_MARKER} markers, expected one")]
    DuplicateMarker(usize),
    #[error("{DESCRIPTION_MARKER} must be the last thing in the template")]
    MarkerNotAtEnd,
}

/// Appends the function description at the template's marker.
pub fn render_prompt(template: &str, description: &str) -> Result<Prompt, PromptError> {
    match template.matches(DESCRIPTION_MARKER).count() {
        0 => return Err(PromptError::MissingMarker),
        1 => {}
        n => return Err(PromptError::DuplicateMarker(n)),
    }
    let (head, tail) = template.split_once(DESCRIPTION_MARKER).expect("counted above");
    if !tail.trim().is_empty() {
        return Err(PromptError::MarkerNotAtEnd);
    }
    let text = format!("{head}{}{tail}", description.trim());
    let hash = sha256_hex(text.as_bytes());
    Ok(Prompt { text, hash })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderKind {
    /// OpenAI-style chat completions endpoint.
    HttpChat {
        endpoint: String,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default = "default_max_tokens")]
        max_tokens: u32,
        /// Name of the environment variable holding the API key.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
        #[serde(default = "default_retries")]
        max_retries: u32,
        #[serde(default = "default_backoff")]
        backoff_ms: u64,
    },
    /// Canned responses at `<root>/<model>/<function>/attempt_###.txt`.
    ReplayDir { root: PathBuf },
}

fn default_temperature() -> f64 {
    0.8
}
fn default_max_tokens() -> u32 {
    2048
}
fn default_timeout() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub model: String,
    #[serde(flatten)]
    pub kind: ProviderKind,
}

impl ProviderConfig {
    pub fn replay(model: impl Into<String>, root: impl Into<PathBuf>) -> Self {
        Self {
            model: model.into(),
            kind: ProviderKind::ReplayDir { root: root.into() },
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.model.is_empty() || self.model.contains(['/', '\\']) || self.model.starts_with('.') {
            return Err(GenerationError::Config(format!("invalid model name `{}`", self.model)));
        }
        if let ProviderKind::HttpChat {
            temperature, timeout_s, ..
        } = &self.kind
        {
            if !(0.0..=2.0).contains(temperature) {
                return Err(GenerationError::Config(format!(
                    "temperature {temperature} outside [0, 2]"
                )));
            }
            if timeout_s.is_nan() || *timeout_s <= 0.0 {
                return Err(GenerationError::Config("timeout_s must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("environment variable `{0}` with the API key is not set")]
    MissingCredential(String),
    #[error("replay directory {dir} is missing attempt(s) {missing:?}")]
    MissingReplay { dir: PathBuf, missing: Vec<usize> },
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// One sampled response, or why sampling it failed.
pub type RawResponse = Result<String, String>;

fn replay_file(dir: &Path, attempt: usize, suffix: &str) -> PathBuf {
    dir.join(format!("attempt_{attempt:03}{suffix}"))
}

/// Requests `n` completions. Failed attempts stay in the list so attempt
/// numbering is dense.
pub fn request_completions(
    cfg: &ProviderConfig,
    function: FunctionId,
    prompt: &Prompt,
    n: usize,
) -> Result<Vec<RawResponse>, GenerationError> {
    cfg.validate()?;
    if n == 0 {
        return Err(GenerationError::Config(
            "number of completions must be at least 1".into(),
        ));
    }
    match &cfg.kind {
        ProviderKind::ReplayDir { root } => {
            let dir = root.join(&cfg.model).join(function.name());
            let missing: Vec<usize> = (1..=n)
                .filter(|&i| !replay_file(&dir, i, ".txt").is_file() && !replay_file(&dir, i, ".failed.json").is_file())
                .collect();
            if !missing.is_empty() {
                return Err(GenerationError::MissingReplay { dir, missing });
            }
            (1..=n)
                .map(|i| {
                    let path = replay_file(&dir, i, ".txt");
                    if path.is_file() {
                        std::fs::read_to_string(&path)
                            .map(Ok)
                            .map_err(|source| GenerationError::Io { path, source })
                    } else {
                        let path = replay_file(&dir, i, ".failed.json");
                        let text =
                            std::fs::read_to_string(&path).map_err(|source| GenerationError::Io { path, source })?;
                        Ok(Err(text.trim().to_owned()))
                    }
                })
                .collect()
        }
        ProviderKind::HttpChat {
            endpoint,
            temperature,
            max_tokens,
            api_key_env,
            timeout_s,
            max_retries,
            backoff_ms,
        } => {
            let key = match api_key_env {
                Some(var) => Some(std::env::var(var).map_err(|_| GenerationError::MissingCredential(var.clone()))?),
                None => None,
            };
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs_f64(*timeout_s)))
                .build()
                .into();
            let body = serde_json::json!({
                "model": cfg.model,
                "temperature": temperature,
                "max_tokens": max_tokens,
                "messages": [{"role": "user", "content": prompt.text}],
            });
            Ok((0..n)
                .map(|_| {
                    let mut last_err = String::new();
                    for attempt in 0..=*max_retries {
                        if attempt > 0 {
                            std::thread::sleep(Duration::from_millis(backoff_ms << (attempt - 1)));
                        }
                        match chat_once(&agent, endpoint, key.as_deref(), &body) {
                            Ok(text) => return Ok(text),
                            Err(e) => last_err = e,
                        }
                    }
                    Err(format!("gave up after {} tries: {last_err}", max_retries + 1))
                })
                .collect())
        }
    }
}

fn chat_once(
    agent: &ureq::Agent,
    endpoint: &str,
    key: Option<&str>,
    body: &serde_json::Value,
) -> Result<String, String> {
    let mut req = agent.post(endpoint);
    if let Some(k) = key {
        req = req.header("Authorization", &format!("Bearer {k}"));
    }
    let resp = req.send_json(body).map_err(|e| e.to_string())?;
    let value: serde_json::Value = resp.into_body().read_json().map_err(|e| e.to_string())?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_owned)
        .ok_or_else(|| "response has no choices[0].message.content".to_owned())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateMeta {
    pub model: String,
    pub function: FunctionId,
    /// 1-based.
    pub attempt: usize,
    pub prompt_hash: String,
    pub response_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateCode {
    pub source: String,
    pub meta: CandidateMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{reason}")]
pub struct ExtractionFailure {
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    /// Accept an unfenced response when at least this share of its
    /// non-empty lines looks like code. `None` disables the fallback.
    pub code_line_ratio: Option<f64>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            code_line_ratio: Some(0.5),
        }
    }
}

/// Fenced blocks in order of appearance.
pub fn fenced_blocks(response: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<(String, String)> = None;
    for line in response.lines() {
        let trimmed = line.trim_start();
        match current.as_mut() {
            None => {
                if let Some(fence) = ["```", "~~~"].into_iter().find(|f| trimmed.starts_with(f)) {
                    let run = trimmed.chars().take_while(|&c| fence.starts_with(c)).count();
                    current = Some((trimmed[..run].to_owned(), String::new()));
                }
            }
            Some((fence, body)) => {
                if trimmed.starts_with(fence.as_str()) && trimmed.trim_end().chars().all(|c| fence.starts_with(c)) {
                    blocks.push(std::mem::take(body));
                    current = None;
                } else {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
    }
    if let Some((_, body)) = current {
        blocks.push(body);
    }
    blocks
}

static CODE_START: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(import|from|def|class|if|elif|else|for|while|return|try|except|finally|with|print|pass|break|continue|raise|global|async|await|fn|let|use|pub|const|struct|impl|int|void|#include|#!)\b",
    )
    .unwrap()
});
static CODE_SHAPE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(^\w[\w.\[\]]*\s*\(.*\)$|[;{}]$|^[}\])]|\s=\s|==|\+=|-=)").unwrap());

fn looks_like_code(line: &str) -> bool {
    let t = line.trim();
    t.starts_with('#') || line.starts_with([' ', '\t']) || CODE_START.is_match(t) || CODE_SHAPE.is_match(t)
}

/// Picks the candidate source out of a model response.
///
/// The largest fenced block wins (the first on ties). Without fences the
/// whole response is taken if enough of it looks like code.
pub fn extract_code(response: &str, opts: &ExtractOptions) -> Result<String, ExtractionFailure> {
    let no_code = || ExtractionFailure {
        reason: "no code emitted".into(),
    };
    let blocks = fenced_blocks(response);
    if !blocks.is_empty() {
        let mut best: Option<&String> = None;
        for b in &blocks {
            if b.trim().is_empty() {
                continue;
            }
            if best.is_none_or(|cur| b.len() > cur.len()) {
                best = Some(b);
            }
        }
        return best.cloned().ok_or_else(no_code);
    }
    let Some(ratio) = opts.code_line_ratio else {
        return Err(no_code());
    };
    let lines: Vec<&str> = response.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() {
        return Err(no_code());
    }
    let code = lines.iter().filter(|l| looks_like_code(l)).count();
    if code as f64 >= ratio * lines.len() as f64 {
        let mut out = response.trim_matches('\n').to_owned();
        out.push('\n');
        Ok(out)
    } else {
        Err(no_code())
    }
}
