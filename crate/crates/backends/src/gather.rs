use std::path::PathBuf;
use std::thread;

use ce_core::{Candidate, Sample};
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, EmbeddingRequest, GenerationRequest, ImageInput};
use crate::error::{BackendError, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleDescriptor {
    pub sample_id: String,
    pub image_ref: Option<String>,
    pub truth: Option<String>,
}

impl SampleDescriptor {
    pub fn new(sample_id: impl Into<String>) -> Self {
        Self {
            sample_id: sample_id.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateFailure {
    pub model: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gathered {
    pub sample: Sample,
    pub failures: Vec<CandidateFailure>,
}

/// Asks every backend for a transcription at once and assembles the sample
/// in backend order. Individual failures are recorded; at least two
/// candidates must succeed.
pub fn gather_candidates(desc: &SampleDescriptor, backends: &[Backend]) -> Result<Gathered> {
    if backends.len() < 2 {
        return Err(BackendError::Config(format!(
            "{} candidate backend(s) configured, need at least 2",
            backends.len()
        )));
    }
    let image = match &desc.image_ref {
        Some(p) => ImageInput::Path(PathBuf::from(p)),
        None => ImageInput::None,
    };

    let results: Vec<Result<String>> = thread::scope(|scope| {
        let handles: Vec<_> = backends
            .iter()
            .map(|b| {
                let mut req =
                    GenerationRequest::new(desc.sample_id.clone(), image.clone(), b.prompt());
                req.temperature = b.spec().temperature;
                scope.spawn(move || b.generate(&req).map(|r| r.text))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("backend worker panicked"))
            .collect()
    });

    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for (b, r) in backends.iter().zip(results) {
        match r {
            Ok(text) => candidates.push(Candidate::new(b.model_name(), text)),
            Err(e) => failures.push(CandidateFailure {
                model: b.model_name().to_string(),
                error: e.to_string(),
            }),
        }
    }
    if candidates.len() < 2 {
        return Err(BackendError::InsufficientCandidates {
            sample_id: desc.sample_id.clone(),
            succeeded: candidates.len(),
            failures,
        });
    }

    let mut sample = Sample::new(desc.sample_id.clone(), candidates);
    sample.image_ref = desc.image_ref.clone();
    sample.truth = desc.truth.clone();
    Ok(Gathered { sample, failures })
}

/// Fills every candidate's `embedding` from one batched request.
pub fn attach_embeddings(sample: &mut Sample, embedder: &Backend) -> Result<()> {
    let request = EmbeddingRequest {
        sample_id: sample.sample_id.clone(),
        items: sample
            .candidates
            .iter()
            .map(|c| (c.model_id.clone(), c.text.clone()))
            .collect(),
    };
    let vectors = embedder.embed(&request)?;
    for (c, v) in sample.candidates.iter_mut().zip(vectors) {
        c.embedding = Some(v);
    }
    Ok(())
}
