use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{BackendError, Result};

/// Environment variable holding the bearer token for HTTP backends unless a
/// spec names its own via `api_key_env`.
pub const API_KEY_ENV: &str = "CE_OCR_API_KEY";

pub const DEFAULT_OCR_PROMPT: &str =
    "Transcribe all text in this image exactly as it appears. Output only the transcription.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Fixture,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    pub model_name: String,
    /// Full URL of the chat-completions (or embeddings) endpoint.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Root of the `<sample_id>/<model_name>.txt` tree. Defaults to `fixtures`.
    #[serde(default)]
    pub fixture_dir: Option<PathBuf>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// First backoff delay; doubles on every retry.
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
    #[serde(default)]
    pub temperature: f64,
    /// Overrides [`API_KEY_ENV`] for this backend.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Every call appends one tab-separated line here.
    #[serde(default)]
    pub call_log: Option<PathBuf>,
    /// Candidate prompt; [`DEFAULT_OCR_PROMPT`] when absent.
    #[serde(default)]
    pub prompt: Option<String>,
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_max_in_flight() -> usize {
    4
}

fn default_backoff_base_ms() -> u64 {
    1000
}

impl BackendSpec {
    pub fn fixture(model_name: impl Into<String>, fixture_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Fixture,
            model_name: model_name.into(),
            endpoint: None,
            fixture_dir: Some(fixture_dir.into()),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_in_flight: default_max_in_flight(),
            backoff_base_ms: default_backoff_base_ms(),
            temperature: 0.0,
            api_key_env: None,
            call_log: None,
            prompt: None,
        }
    }

    pub fn http(model_name: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint: Some(endpoint.into()),
            fixture_dir: None,
            ..Self::fixture(model_name, PathBuf::new())
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn fixture_root(&self) -> PathBuf {
        self.fixture_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("fixtures"))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| {
            Err(BackendError::Config(format!(
                "backend `{}`: {msg}",
                self.model_name
            )))
        };
        if self.model_name.trim().is_empty() {
            return Err(BackendError::Config("model_name must not be empty".into()));
        }
        if self.kind == BackendKind::Fixture && !is_plain_component(&self.model_name) {
            return fail(
                "model_name is used as a file name and must not contain path separators".into(),
            );
        }
        if self.kind == BackendKind::Http
            && self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty())
        {
            return fail("http backends need an endpoint".into());
        }
        if self.max_in_flight < 1 {
            return fail("max_in_flight must be at least 1".into());
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return fail(format!(
                "timeout_secs must be positive, got {}",
                self.timeout_secs
            ));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return fail(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            ));
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if self.kind == BackendKind::Fixture {
            let mut dir = self.fixture_root();
            fix(&mut dir);
            self.fixture_dir = Some(dir);
        }
        if let Some(p) = self.call_log.as_mut() {
            fix(p);
        }
    }
}

/// True for a single, non-special path component.
pub(crate) fn is_plain_component(s: &str) -> bool {
    !s.is_empty() && s != "." && s != ".." && !s.contains(['/', '\\', '\0'])
}

/// The `[[candidates]]`, `[expert]` and `[embedding]` tables of a backend
/// config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub candidates: Vec<BackendSpec>,
    #[serde(default)]
    pub expert: Option<BackendSpec>,
    #[serde(default)]
    pub embedding: Option<BackendSpec>,
}

impl BackendConfig {
    /// Reads a TOML file. Relative `fixture_dir` and `call_log` paths are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| BackendError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            BackendError::Config(msg) => BackendError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config: Self =
            toml::from_str(text).map_err(|e| BackendError::Config(e.to_string()))?;
        for spec in config.all_mut() {
            spec.resolve_paths(base_dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for spec in &self.candidates {
            spec.validate()?;
            if !seen.insert(spec.model_name.as_str()) {
                return Err(BackendError::Config(format!(
                    "candidate model `{}` listed twice",
                    spec.model_name
                )));
            }
        }
        if !self.candidates.is_empty() && self.candidates.len() < 2 {
            return Err(BackendError::Config(
                "at least 2 candidate backends are needed".into(),
            ));
        }
        self.expert
            .iter()
            .chain(&self.embedding)
            .try_for_each(BackendSpec::validate)
    }

    fn all_mut(&mut self) -> impl Iterator<Item = &mut BackendSpec> {
        self.candidates
            .iter_mut()
            .chain(self.expert.as_mut())
            .chain(self.embedding.as_mut())
    }
}
