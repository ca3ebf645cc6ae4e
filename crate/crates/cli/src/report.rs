use std::fmt;
use std::io::{BufRead, Write};

use ce_backends::CandidateFailure;
use ce_core::Route;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::Label;
use crate::error::{EvalError, Result};
use crate::metrics::{verification_f1, SweepInput, Verification};

/// `model -> value` as a JSON object in candidate order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerModel(pub Vec<(String, f64)>);

impl PerModel {
    pub fn zip<'a>(models: impl IntoIterator<Item = &'a str>, values: &[f64]) -> Self {
        Self(
            models
                .into_iter()
                .map(str::to_string)
                .zip(values.iter().copied())
                .collect(),
        )
    }

    pub fn get(&self, model: &str) -> Option<f64> {
        self.0.iter().find(|(m, _)| m == model).map(|(_, v)| *v)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|(_, v)| *v)
    }
}

impl Serialize for PerModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for PerModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = PerModel;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from model name to number")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<PerModel, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = access.next_entry::<String, f64>()? {
                    out.push(entry);
                }
                Ok(PerModel(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub candidates: PerModel,
    pub ensemble: f64,
    pub rover: f64,
    #[serde(rename = "final")]
    pub final_score: f64,
    /// Present when the final text came from the expert.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub sample_id: String,
    pub delta: f64,
    pub decision: Route,
    pub theta: f64,
    pub e_bar: PerModel,
    pub weights: PerModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rover_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_text: Option<String>,
    #[serde(default)]
    pub expert_used: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    /// Against the truth, when the corpus has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Scores>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<CandidateFailure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<f64>,
}

impl ReportRecord {
    pub fn sweep_input(&self) -> SweepInput {
        SweepInput {
            delta: self.delta,
            label: self.label,
            ensemble_score: self.scores.as_ref().map(|s| s.ensemble),
            expert_score: self.scores.as_ref().and_then(|s| s.expert),
        }
    }
}

/// Written in place of a report when a sample fails under `--keep-going`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailedRecord {
    pub sample_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportLine {
    Failed(FailedRecord),
    Ok(Box<ReportRecord>),
}

pub fn write_line(line: &ReportLine, out: &mut impl Write) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")
}

pub fn read_reports(input: impl BufRead) -> Result<Vec<ReportLine>> {
    let mut out = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| EvalError::Data(format!("report line {}: {e}", idx + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| EvalError::Data(format!("report line {}: {e}", idx + 1)))?,
        );
    }
    Ok(out)
}

/// Corpus-level view of an `eval` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub samples: usize,
    pub routed_fraction: f64,
    pub expert_used: usize,
    /// Mean score per candidate model, in first-seen order.
    pub mean_candidate: PerModel,
    pub mean_candidate_score: f64,
    pub mean_ensemble_score: f64,
    pub mean_rover_score: f64,
    pub mean_final_score: f64,
    /// Share of samples whose ensemble scores at least as well as their worst
    /// candidate.
    pub ensemble_not_worst: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<Verification>,
}

pub fn summarize(records: &[ReportRecord], theta: f64) -> Result<EvalSummary> {
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    let mut per_model: Vec<(String, f64, usize)> = Vec::new();
    let (mut cand_sum, mut cand_n) = (0.0, 0usize);
    let (mut ens, mut rover, mut fin, mut not_worst, mut scored) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for s in records.iter().filter_map(|r| r.scores.as_ref()) {
        scored += 1;
        ens += s.ensemble;
        rover += s.rover;
        fin += s.final_score;
        let worst = s.candidates.values().fold(f64::INFINITY, f64::min);
        not_worst += usize::from(s.ensemble >= worst);
        for (model, v) in &s.candidates.0 {
            cand_sum += v;
            cand_n += 1;
            match per_model.iter_mut().find(|(m, _, _)| m == model) {
                Some(e) => {
                    e.1 += v;
                    e.2 += 1;
                }
                None => per_model.push((model.clone(), *v, 1)),
            }
        }
    }

    let labeled: Vec<(f64, Label)> = records
        .iter()
        .filter_map(|r| r.label.map(|l| (r.delta, l)))
        .collect();
    let verification = if labeled.is_empty() {
        None
    } else {
        let (d, l): (Vec<f64>, Vec<Label>) = labeled.into_iter().unzip();
        Some(verification_f1(&d, &l, theta)?)
    };
    let routed = records
        .iter()
        .filter(|r| r.decision == Route::Expert)
        .count();
    Ok(EvalSummary {
        samples: records.len(),
        routed_fraction: mean(routed as f64, records.len()),
        expert_used: records.iter().filter(|r| r.expert_used).count(),
        mean_candidate: PerModel(
            per_model
                .into_iter()
                .map(|(m, s, n)| (m, mean(s, n)))
                .collect(),
        ),
        mean_candidate_score: mean(cand_sum, cand_n),
        mean_ensemble_score: mean(ens, scored),
        mean_rover_score: mean(rover, scored),
        mean_final_score: mean(fin, scored),
        ensemble_not_worst: mean(not_worst as f64, scored),
        verification,
    })
}
