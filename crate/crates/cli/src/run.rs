use std::time::Instant;

use ce_backends::{
    attach_embeddings, gather_candidates, Backend, BackendConfig, CandidateFailure,
    SampleDescriptor,
};
use ce_core::{consensus_report, ensemble_text, run_sample, Estimator, Expert, Sample};
use rayon::prelude::*;

use crate::config::Resolved;
use crate::corpus::CorpusRecord;
use crate::error::{EvalError, Result};
use crate::metrics::text_score;
use crate::report::{PerModel, ReportRecord, Scores};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Entropy only.
    Score,
    /// Entropy plus the weighted-vote text.
    Ensemble,
    /// Full pipeline with the expert for high-entropy samples.
    Route,
    /// As `Route`, with truth required and the ROVER baseline reported.
    Eval,
}

/// Processes corpus records on a bounded worker pool.
pub struct Runner {
    settings: Resolved,
    candidates: Vec<Backend>,
    expert: Option<Backend>,
    embedder: Option<Backend>,
    pool: rayon::ThreadPool,
}

impl Runner {
    pub fn new(settings: Resolved) -> Result<Self> {
        let config = match &settings.backend_config {
            Some(path) => BackendConfig::load(path)?,
            None => BackendConfig::default(),
        };
        let candidates = config
            .candidates
            .into_iter()
            .map(Backend::new)
            .collect::<ce_backends::Result<Vec<_>>>()?;
        let expert = config.expert.map(Backend::new).transpose()?;
        let embedder = config.embedding.map(Backend::new).transpose()?;

        // More workers than the tightest backend admits would only queue.
        let backend_cap = candidates
            .iter()
            .chain(&expert)
            .map(|b| b.spec().max_in_flight)
            .min();
        let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
        let threads = match (settings.concurrency, backend_cap) {
            (Some(c), _) => c,
            (None, Some(cap)) => cpus.min(cap),
            (None, None) => cpus,
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| EvalError::Usage(format!("cannot start worker pool: {e}")))?;

        Ok(Self {
            settings,
            candidates,
            expert,
            embedder,
            pool,
        })
    }

    pub fn settings(&self) -> &Resolved {
        &self.settings
    }

    pub fn backends_configured(&self) -> bool {
        !self.candidates.is_empty()
    }

    pub fn expert(&self) -> Option<&Backend> {
        self.expert.as_ref()
    }

    /// One result per record, in record order.
    pub fn run(&self, records: &[CorpusRecord], mode: Mode) -> Vec<Result<ReportRecord>> {
        self.pool
            .install(|| records.par_iter().map(|r| self.process(r, mode)).collect())
    }

    fn sample_for(&self, record: &CorpusRecord) -> Result<(Sample, Vec<CandidateFailure>)> {
        if let Some(sample) = record.to_sample() {
            return Ok((sample, Vec::new()));
        }
        if !self.backends_configured() {
            return Err(EvalError::Data(format!(
                "sample `{}` has no candidates and no backends are configured",
                record.sample_id
            )));
        }
        let desc = SampleDescriptor {
            sample_id: record.sample_id.clone(),
            image_ref: record.image_path.clone(),
            truth: record.truth.clone(),
        };
        let g = gather_candidates(&desc, &self.candidates)?;
        Ok((g.sample, g.failures))
    }

    pub fn process(&self, record: &CorpusRecord, mode: Mode) -> Result<ReportRecord> {
        let start = Instant::now();
        let pipeline = &self.settings.pipeline;
        if mode == Mode::Eval && record.truth.is_none() {
            return Err(EvalError::Data(format!(
                "sample `{}` has no truth to evaluate against",
                record.sample_id
            )));
        }
        let (mut sample, failures) = self.sample_for(record)?;

        let consensus = &pipeline.consensus;
        let needs_embeddings =
            consensus.metric.needs_embeddings() || consensus.estimator == Estimator::Grid;
        if needs_embeddings && sample.candidates.iter().any(|c| c.embedding.is_none()) {
            match &self.embedder {
                Some(e) => attach_embeddings(&mut sample, e)?,
                None => {
                    return Err(EvalError::Data(format!(
                        "sample `{}` lacks embeddings and no [embedding] backend is configured",
                        sample.sample_id
                    )))
                }
            }
        }

        let models: Vec<&str> = sample
            .candidates
            .iter()
            .map(|c| c.model_id.as_str())
            .collect();
        let texts: Vec<&str> = sample.texts().collect();
        let (report, ensemble, final_text, expert_used, warnings) = match mode {
            Mode::Score => (
                consensus_report(&sample, consensus)?,
                None,
                None,
                false,
                Vec::new(),
            ),
            Mode::Ensemble => {
                let report = consensus_report(&sample, consensus)?;
                let ens = ensemble_text(&texts, &report.profile.e_bar, pipeline.tokenize)?;
                let text = ens.text.clone();
                (report, Some(ens), Some(text), false, Vec::new())
            }
            Mode::Route | Mode::Eval => {
                let expert = self.expert.as_ref().map(|e| e as &dyn Expert);
                let out = run_sample(&sample, pipeline, expert)?;
                (
                    out.report,
                    Some(out.ensemble),
                    Some(out.text),
                    out.expert_used,
                    out.warnings,
                )
            }
        };

        let scores = match (&record.truth, &ensemble, &final_text) {
            (Some(truth), Some(ens), Some(fin)) => {
                let final_score = text_score(fin, truth);
                Some(Scores {
                    candidates: PerModel::zip(
                        models.iter().copied(),
                        &texts
                            .iter()
                            .map(|t| text_score(t, truth))
                            .collect::<Vec<_>>(),
                    ),
                    ensemble: text_score(&ens.text, truth),
                    rover: text_score(&ens.rover_text, truth),
                    final_score,
                    expert: expert_used.then_some(final_score),
                })
            }
            _ => None,
        };

        Ok(ReportRecord {
            sample_id: sample.sample_id.clone(),
            delta: report.delta(),
            decision: report.decision.route,
            theta: report.decision.theta,
            e_bar: PerModel::zip(models.iter().copied(), &report.profile.e_bar),
            weights: PerModel::zip(models.iter().copied(), report.weights.as_slice()),
            rover_text: ensemble
                .as_ref()
                .filter(|_| mode == Mode::Eval)
                .map(|e| e.rover_text.clone()),
            ensemble_text: ensemble.map(|e| e.text),
            final_text,
            expert_used,
            label: record.label,
            scores,
            failures,
            warnings,
            timing_ms: (!self.settings.no_timing).then(|| start.elapsed().as_secs_f64() * 1000.0),
        })
    }
}
