use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use crate::config::is_plain_component;
use crate::error::{BackendError, Result};

fn fixture_path(root: &Path, sample_id: &str, model_name: &str, ext: &str) -> Result<PathBuf> {
    if !is_plain_component(sample_id) {
        return Err(BackendError::Config(format!(
            "sample id `{sample_id}` cannot be used as a fixture directory name"
        )));
    }
    Ok(root.join(sample_id).join(format!("{model_name}.{ext}")))
}

fn read(root: &Path, sample_id: &str, model_name: &str, ext: &str) -> Result<(PathBuf, String)> {
    let path = fixture_path(root, sample_id, model_name, ext)?;
    match fs::read_to_string(&path) {
        Ok(text) => Ok((path, text)),
        Err(e) if e.kind() == ErrorKind::NotFound => Err(BackendError::FixtureMiss {
            sample_id: sample_id.to_string(),
            model_name: model_name.to_string(),
            path,
        }),
        Err(source) => Err(BackendError::Io { path, source }),
    }
}

/// Recorded text with a single trailing newline removed, since editors add one.
pub(crate) fn read_text(root: &Path, sample_id: &str, model_name: &str) -> Result<String> {
    let (_, mut text) = read(root, sample_id, model_name, "txt")?;
    if text.ends_with('\n') {
        text.pop();
        if text.ends_with('\r') {
            text.pop();
        }
    }
    Ok(text)
}

/// One real per non-blank line.
pub(crate) fn read_embedding(root: &Path, sample_id: &str, model_name: &str) -> Result<Vec<f64>> {
    let (path, text) = read(root, sample_id, model_name, "emb")?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| BackendError::BadFixture {
            path: path.clone(),
            message: format!("line {}: `{line}` is not a number", k + 1),
        })?;
        if !v.is_finite() {
            return Err(BackendError::BadFixture {
                path,
                message: format!("line {}: non-finite value", k + 1),
            });
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(BackendError::BadFixture {
            path,
            message: "empty embedding".into(),
        });
    }
    Ok(out)
}
