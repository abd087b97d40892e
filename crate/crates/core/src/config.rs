//! TOML run configuration shared by the CLI commands.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::function::{FunctionId, TcId};
use crate::generation::{ExtractOptions, ProviderConfig, ProviderKind};
use crate::oracle::GoalThresholds;
use crate::orchestrator::{EvalConfig, MatrixConfig};
use crate::sandbox::{AdapterError, CandidateAdapter, SandboxLimits};
use crate::scenario::TcOverrides;

pub const DEFAULT_PROMPT_TEMPLATE: &str = include_str!("../assets/prompt_template.md");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
}

/// Either the name of a built-in adapter, a path to an adapter TOML file or
/// an inline adapter table.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AdapterRef {
    Named(String),
    Inline(CandidateAdapter),
}

impl Default for AdapterRef {
    fn default() -> Self {
        AdapterRef::Named("python".into())
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub tick_timeout_ms: u64,
    pub handshake_timeout_ms: u64,
    pub compile_timeout_ms: u64,
    pub kill_grace_ms: u64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        let d = SandboxLimits::default();
        Self {
            tick_timeout_ms: d.tick_timeout.as_millis() as u64,
            handshake_timeout_ms: d.handshake_timeout.as_millis() as u64,
            compile_timeout_ms: d.compile_timeout.as_millis() as u64,
            kill_grace_ms: d.kill_grace.as_millis() as u64,
        }
    }
}

impl From<LimitsConfig> for SandboxLimits {
    fn from(c: LimitsConfig) -> Self {
        SandboxLimits {
            tick_timeout: Duration::from_millis(c.tick_timeout_ms),
            handshake_timeout: Duration::from_millis(c.handshake_timeout_ms),
            compile_timeout: Duration::from_millis(c.compile_timeout_ms),
            kill_grace: Duration::from_millis(c.kill_grace_ms),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub ego_speed_kph: Option<f64>,
    /// Time to brake at the moment the cut-in completes (s).
    pub ttb: Option<f64>,
    pub horizon: Option<f64>,
}

impl From<&ScenarioConfig> for TcOverrides {
    fn from(c: &ScenarioConfig) -> Self {
        TcOverrides {
            ego_speed: c.ego_speed_kph.map(|v| v / 3.6),
            ttb: c.ttb,
            horizon: c.horizon,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub functions: Vec<FunctionId>,
    /// Restricts every function to these test cases.
    #[serde(default)]
    pub test_cases: Option<Vec<TcId>>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub keep_artifacts: bool,
    #[serde(default)]
    pub prompt_template: Option<PathBuf>,
    #[serde(default)]
    pub code_line_ratio: Option<f64>,
    #[serde(default)]
    pub adapter: AdapterRef,
    #[serde(default)]
    pub providers: Vec<ProviderConfig>,
    #[serde(default)]
    pub limits: LimitsConfig,
    #[serde(default)]
    pub thresholds: GoalThresholds,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_repeats() -> usize {
    1
}

impl RunConfig {
    /// Parses and validates; relative paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path, origin: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|source| ConfigError::Toml {
            path: origin.to_owned(),
            source,
        })?;
        cfg.base_dir = base_dir.to_owned();
        cfg.output_dir = cfg.resolve(&cfg.output_dir);
        cfg.prompt_template = cfg.prompt_template.as_ref().map(|p| cfg.resolve(p));
        let base = cfg.base_dir.clone();
        for p in &mut cfg.providers {
            if let ProviderKind::ReplayDir { root } = &mut p.kind {
                *root = base.join(&*root);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base, path)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            return bad(format!("run_id `{}` is not a plain directory name", self.run_id));
        }
        if self.functions.is_empty() {
            return bad("functions must not be empty".into());
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if let Some(tcs) = &self.test_cases {
            for f in &self.functions {
                if !f.test_cases().iter().any(|tc| tcs.contains(tc)) {
                    return bad(format!("test_cases leaves nothing to run for {f}"));
                }
            }
        }
        if let Some(r) = self.code_line_ratio {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("code_line_ratio {r} outside [0, 1]"));
            }
        }
        let mut models: Vec<&str> = self.providers.iter().map(|p| p.model.as_str()).collect();
        models.sort_unstable();
        if models.windows(2).any(|w| w[0] == w[1]) {
            return bad("provider models must be unique".into());
        }
        for p in &self.providers {
            p.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn adapter(&self) -> Result<CandidateAdapter, ConfigError> {
        let adapter = match &self.adapter {
            AdapterRef::Named(n) if n == "python" => CandidateAdapter::python(),
            AdapterRef::Named(path) => CandidateAdapter::load(&self.resolve(Path::new(path)))?,
            AdapterRef::Inline(a) => a.clone(),
        };
        adapter.validate()?;
        Ok(adapter)
    }

    pub fn template(&self) -> Result<String, ConfigError> {
        match &self.prompt_template {
            None => Ok(DEFAULT_PROMPT_TEMPLATE.to_owned()),
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.clone(),
                source,
            }),
        }
    }

    pub fn eval_config(&self) -> Result<EvalConfig, ConfigError> {
        let mut eval = EvalConfig::new(self.adapter()?);
        eval.limits = self.limits.into();
        eval.thresholds = self.thresholds.clone();
        eval.overrides = (&self.scenario).into();
        eval.tc_filter = self.test_cases.clone();
        eval.extract = ExtractOptions {
            code_line_ratio: self.code_line_ratio.or(ExtractOptions::default().code_line_ratio),
        };
        Ok(eval)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.run_id)
    }

    pub fn matrix_config(&self) -> Result<MatrixConfig, ConfigError> {
        if self.providers.is_empty() {
            return Err(ConfigError::Invalid("at least one provider is needed".into()));
        }
        Ok(MatrixConfig {
            run_id: self.run_id.clone(),
            runs_root: self.output_dir.clone(),
            providers: self.providers.clone(),
            functions: self.functions.clone(),
            repeats: self.repeats,
            template: self.template()?,
            eval: self.eval_config()?,
            threads: self.threads,
            keep_artifacts: self.keep_artifacts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
run_id = "demo"
functions = ["F1", "F3"]
repeats = 3
test_cases = ["S1", "TC1"]

[[providers]]
model = "alpha"
kind = "replay_dir"
root = "responses"

[limits]
tick_timeout_ms = 250

[scenario]
ego_speed_kph = 90.0
"#;

    #[test]
    fn parses_and_resolves_paths() {
        let cfg = RunConfig::from_toml_str(SAMPLE, Path::new("/cfg"), Path::new("run.toml")).unwrap();
        assert_eq!(cfg.run_dir(), Path::new("/cfg/runs/demo"));
        let ProviderKind::ReplayDir { root } = &cfg.providers[0].kind else {
            panic!()
        };
        assert_eq!(root, Path::new("/cfg/responses"));
        let eval = cfg.eval_config().unwrap();
        assert_eq!(eval.limits.tick_timeout, Duration::from_millis(250));
        assert_eq!(eval.limits.kill_grace, SandboxLimits::default().kill_grace);
        assert!((eval.overrides.ego_speed.unwrap() - 25.0).abs() < 1e-12);
        assert_eq!(eval.test_cases(FunctionId::F3), vec![TcId::Tc1]);
        assert_eq!(cfg.matrix_config().unwrap().template, DEFAULT_PROMPT_TEMPLATE);
    }

    #[test]
    fn rejects_bad_selections() {
        let base = Path::new("/cfg");
        let origin = Path::new("run.toml");
        let no_fn = SAMPLE.replace(r#"functions = ["F1", "F3"]"#, "functions = []");
        assert!(matches!(
            RunConfig::from_toml_str(&no_fn, base, origin),
            Err(ConfigError::Invalid(_))
        ));
        let no_tc = SAMPLE.replace(r#"test_cases = ["S1", "TC1"]"#, r#"test_cases = ["TC1"]"#);
        assert!(matches!(
            RunConfig::from_toml_str(&no_tc, base, origin),
            Err(ConfigError::Invalid(_))
        ));
        let typo = SAMPLE.replace("repeats", "repeat");
        assert!(matches!(
            RunConfig::from_toml_str(&typo, base, origin),
            Err(ConfigError::Toml { .. })
        ));
    }
}
