use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ce_core::{Candidate, Sample};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Good,
    Bad,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Good => "good",
            Label::Bad => "bad",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "good" => Ok(Label::Good),
            "bad" => Ok(Label::Bad),
            _ => Err(format!("unknown label `{s}` (expected good or bad)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateRecord {
    pub model: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    /// Binary verification label, used by F1 and sweeps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    /// Pre-recorded outputs. When absent, candidates are fetched from the
    /// configured backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<CandidateRecord>>,
}

impl CorpusRecord {
    pub fn to_sample(&self) -> Option<Sample> {
        let cands = self.candidates.as_ref()?;
        let mut sample = Sample::new(
            self.sample_id.clone(),
            cands
                .iter()
                .map(|c| Candidate {
                    model_id: c.model.clone(),
                    text: c.text.clone(),
                    embedding: c.embedding.clone(),
                })
                .collect(),
        );
        sample.image_ref = self.image_path.clone();
        sample.truth = self.truth.clone();
        Some(sample)
    }

    fn validate(&self, backends_configured: bool) -> std::result::Result<(), String> {
        if self.sample_id.trim().is_empty() {
            return Err("sample_id must not be empty".into());
        }
        match &self.candidates {
            Some(c) if c.len() >= 2 => {
                let mut seen = HashMap::new();
                for (k, cand) in c.iter().enumerate() {
                    if cand.model.trim().is_empty() {
                        return Err(format!("candidates[{k}].model must not be empty"));
                    }
                    if let Some(prev) = seen.insert(cand.model.as_str(), k) {
                        return Err(format!(
                            "candidates[{prev}] and candidates[{k}] share model `{}`",
                            cand.model
                        ));
                    }
                }
                Ok(())
            }
            Some(_) | None if backends_configured => Ok(()),
            Some(c) => Err(format!(
                "sample `{}` has {} candidate(s) and no backends are configured; need at least 2",
                self.sample_id,
                c.len()
            )),
            None => Err(format!(
                "sample `{}` has no candidates and no backends are configured",
                self.sample_id
            )),
        }
    }
}

/// Parses JSONL. Blank lines are skipped; every error names its line.
pub fn parse_corpus(text: &str, backends_configured: bool) -> Result<Vec<CorpusRecord>> {
    let mut out: Vec<CorpusRecord> = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(line)
            .map_err(|e| EvalError::Data(format!("line {lineno}: {e}")))?;
        record
            .validate(backends_configured)
            .map_err(|e| EvalError::Data(format!("line {lineno}: {e}")))?;
        if let Some(prev) = first_line.insert(record.sample_id.clone(), lineno) {
            return Err(EvalError::Data(format!(
                "line {lineno}: duplicate sample_id `{}` (first seen on line {prev})",
                record.sample_id
            )));
        }
        out.push(record);
    }
    Ok(out)
}

/// Reads a corpus file. Relative `image_path`s are resolved against the
/// file's directory.
pub fn load_corpus(path: &Path, backends_configured: bool) -> Result<Vec<CorpusRecord>> {
    let text = fs::read_to_string(path).map_err(EvalError::io(path))?;
    let mut records = parse_corpus(&text, backends_configured).map_err(|e| match e {
        EvalError::Data(msg) => EvalError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    for r in &mut records {
        if let Some(img) = r.image_path.as_mut() {
            let p = PathBuf::from(&*img);
            if p.is_relative() && !base.as_os_str().is_empty() {
                *img = base.join(p).to_string_lossy().into_owned();
            }
        }
    }
    Ok(records)
}

pub fn write_corpus(
    records: &[CorpusRecord],
    out: &mut impl std::io::Write,
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
