//! Threshold gate and expert routing.
//!
//! A sample whose consensus entropy is at most `theta` keeps the ensemble
//! text. Anything above goes to an expert model together with every candidate
//! and the draft ensemble, in a single call.

use std::error::Error as StdError;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ensemble::{ensemble_text, EnsembleOutput, TokenizeMode};
use crate::entropy::{consensus_report, ConsensusConfig, ConsensusReport};
use crate::error::{CeError, Result};
use crate::similarity::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub theta: f64,
}

impl GateConfig {
    pub fn new(theta: f64) -> Result<Self> {
        check_unit("theta", theta)?;
        Ok(Self { theta })
    }
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { theta: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Ensemble,
    Expert,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Route::Ensemble => "ensemble",
            Route::Expert => "expert",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub route: Route,
    pub delta: f64,
    pub theta: f64,
}

impl RoutingDecision {
    pub fn is_expert(&self) -> bool {
        self.route == Route::Expert
    }

    /// 0 for the ensemble, 1 for the expert.
    pub fn flag(&self) -> u8 {
        u8::from(self.is_expert())
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(CeError::OutOfRange {
            name,
            value,
            min: 0.0,
            max: 1.0,
        });
    }
    Ok(())
}

/// Ensemble when `delta <= theta`, expert otherwise.
pub fn gate(delta: f64, theta: f64) -> Result<RoutingDecision> {
    check_unit("delta", delta)?;
    check_unit("theta", theta)?;
    let route = if delta <= theta {
        Route::Ensemble
    } else {
        Route::Expert
    };
    Ok(RoutingDecision {
        route,
        delta,
        theta,
    })
}

pub const DEFAULT_TEMPLATE: &str =
    "You are given {n} candidate transcriptions of the same image and a draft consensus. \
Produce the single most faithful transcription.\n\n\
Candidates:\n{candidates}\n\
Draft consensus:\n{ensemble}\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertRequest {
    pub sample_id: String,
    pub image_ref: Option<String>,
    /// `(model_id, text)` in sample order.
    pub candidates: Vec<(String, String)>,
    pub ensemble_text: String,
    pub prompt: String,
}

/// Fills `{candidates}`, `{ensemble}` and `{n}` in a single left-to-right
/// pass over the template, so braces inside candidate texts are never
/// re-expanded. Other `{...}` sequences are copied literally.
pub fn build_expert_request(
    sample: &Sample,
    ensemble_text: &str,
    template: &str,
) -> Result<ExpertRequest> {
    for required in ["candidates", "ensemble"] {
        if !template.contains(&format!("{{{required}}}")) {
            return Err(CeError::MissingPlaceholder(required));
        }
    }
    let listing: String = sample
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| format!("[{}] {}:\n{}\n", i + 1, c.model_id, c.text))
        .collect();

    let count = sample.len().to_string();
    let mut prompt = String::with_capacity(template.len() + listing.len() + ensemble_text.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        prompt.push_str(&rest[..open]);
        let tail = &rest[open..];
        let replaced = [
            ("{candidates}", listing.as_str()),
            ("{ensemble}", ensemble_text),
            ("{n}", count.as_str()),
        ]
        .into_iter()
        .find(|(key, _)| tail.starts_with(key));
        match replaced {
            Some((key, value)) => {
                prompt.push_str(value);
                rest = &tail[key.len()..];
            }
            None => {
                prompt.push('{');
                rest = &tail[1..];
            }
        }
    }
    prompt.push_str(rest);

    Ok(ExpertRequest {
        sample_id: sample.sample_id.clone(),
        image_ref: sample.image_ref.clone(),
        candidates: sample
            .candidates
            .iter()
            .map(|c| (c.model_id.clone(), c.text.clone()))
            .collect(),
        ensemble_text: ensemble_text.to_string(),
        prompt,
    })
}

pub type ExpertError = Box<dyn StdError + Send + Sync>;

/// A stronger model that rewrites a low-agreement sample.
pub trait Expert: Send + Sync {
    fn name(&self) -> &str;

    fn rephrase(&self, request: &ExpertRequest) -> std::result::Result<String, ExpertError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub consensus: ConsensusConfig,
    pub tokenize: TokenizeMode,
    pub template: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            consensus: ConsensusConfig::default(),
            tokenize: TokenizeMode::default(),
            template: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalOutput {
    pub text: String,
    pub report: ConsensusReport,
    pub ensemble: EnsembleOutput,
    pub decision: RoutingDecision,
    pub expert_used: bool,
    pub warnings: Vec<String>,
}

/// Scores, ensembles and (when the gate says so) routes one sample.
///
/// The expert is called at most once. If it fails, or none is configured,
/// the ensemble text is kept and the reason is recorded in `warnings`.
pub fn run_sample(
    sample: &Sample,
    config: &PipelineConfig,
    expert: Option<&dyn Expert>,
) -> Result<FinalOutput> {
    let report = consensus_report(sample, &config.consensus)?;
    let texts: Vec<&str> = sample.texts().collect();
    let ensemble = ensemble_text(&texts, &report.profile.e_bar, config.tokenize)?;
    let decision = report.decision;

    let mut warnings = Vec::new();
    let mut text = ensemble.text.clone();
    let mut expert_used = false;
    if decision.is_expert() {
        let request = build_expert_request(sample, &ensemble.text, &config.template)?;
        match expert {
            Some(e) => match e.rephrase(&request) {
                Ok(reply) => {
                    text = reply;
                    expert_used = true;
                }
                Err(err) => warnings.push(format!(
                    "expert `{}` failed, kept ensemble: {err}",
                    e.name()
                )),
            },
            None => warnings.push("no expert configured, kept ensemble".to_string()),
        }
    }

    Ok(FinalOutput {
        text,
        report,
        ensemble,
        decision,
        expert_used,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::Candidate;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn gate_examples() {
        assert_eq!(gate(0.5, 0.5).unwrap().route, Route::Ensemble);
        assert_eq!(gate(0.6, 0.5).unwrap().route, Route::Expert);
        assert_eq!(gate(0.0, 0.0).unwrap().route, Route::Ensemble);
        assert!(gate(1.2, 0.5).is_err());
        assert!(gate(0.5, -0.1).is_err());
        assert!(gate(f64::NAN, 0.5).is_err());
        assert!(GateConfig::new(1.5).is_err());
    }

    #[test]
    fn gate_monotone_in_theta() {
        for d in 0..=20 {
            let delta = d as f64 / 20.0;
            let mut seen_ensemble = false;
            for t in 0..=20 {
                let r = gate(delta, t as f64 / 20.0).unwrap();
                if seen_ensemble {
                    assert!(!r.is_expert());
                }
                seen_ensemble |= !r.is_expert();
            }
            assert!(!gate(delta, 1.0).unwrap().is_expert());
            assert_eq!(gate(delta, 0.0).unwrap().is_expert(), delta > 0.0);
        }
    }

    fn sample(texts: &[&str]) -> Sample {
        let mut s = Sample::new(
            "s1",
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Candidate::new(format!("m{i}"), *t))
                .collect(),
        );
        s.image_ref = Some("img/s1.png".into());
        s
    }

    #[test]
    fn request_embeds_everything_verbatim() {
        let s = sample(&["first {ensemble} text", "second\n  text"]);
        let r = build_expert_request(&s, "draft", DEFAULT_TEMPLATE).unwrap();
        assert!(r.prompt.contains("first {ensemble} text"));
        assert!(r.prompt.contains("second\n  text"));
        assert!(r.prompt.contains("draft"));
        assert!(r.prompt.starts_with("You are given 2 candidate"));
        assert_eq!(r.image_ref.as_deref(), Some("img/s1.png"));
        assert_eq!(
            build_expert_request(&s, "draft", "only {candidates}").unwrap_err(),
            CeError::MissingPlaceholder("ensemble")
        );
    }

    #[test]
    fn unknown_braces_are_literal() {
        let s = sample(&["a", "b"]);
        let r = build_expert_request(&s, "e", "{x} {candidates}{ensemble} {").unwrap();
        assert!(r.prompt.starts_with("{x} [1] m0:\na\n"));
        assert!(r.prompt.ends_with("e {"));
    }

    struct Canned {
        reply: std::result::Result<String, String>,
        calls: AtomicUsize,
    }

    impl Expert for Canned {
        fn name(&self) -> &str {
            "canned"
        }

        fn rephrase(&self, _: &ExpertRequest) -> std::result::Result<String, ExpertError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.reply.clone().map_err(Into::into)
        }
    }

    #[test]
    fn run_sample_paths() {
        let ok = Canned {
            reply: Ok("expert answer".into()),
            calls: AtomicUsize::new(0),
        };
        let cfg = PipelineConfig::default();

        let out = run_sample(&sample(&["same", "same", "same"]), &cfg, Some(&ok)).unwrap();
        assert_eq!(out.text, "same");
        assert!(!out.expert_used);
        assert_eq!(ok.calls.load(Ordering::SeqCst), 0);

        let out = run_sample(&sample(&["aaaa", "bbbb", "cccc"]), &cfg, Some(&ok)).unwrap();
        assert_eq!(out.report.delta(), 1.0);
        assert_eq!(out.text, "expert answer");
        assert!(out.expert_used);
        assert_eq!(ok.calls.load(Ordering::SeqCst), 1);

        let failing = Canned {
            reply: Err("503 from upstream".into()),
            calls: AtomicUsize::new(0),
        };
        let out = run_sample(&sample(&["aaaa", "bbbb", "cccc"]), &cfg, Some(&failing)).unwrap();
        assert_eq!(out.text, out.ensemble.text);
        assert!(!out.expert_used);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("503"));
        assert_eq!(failing.calls.load(Ordering::SeqCst), 1);
    }
}
