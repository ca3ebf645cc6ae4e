//! Corpus ingestion, evaluation metrics and the `ce-ocr` command line.
//!
//! A corpus is JSONL with one [`CorpusRecord`] per line. Each record either
//! carries its candidate transcriptions or is filled from the backends named
//! in a backend config. Reports are JSONL too, one [`ReportRecord`] per
//! sample, in corpus order.

pub mod app;
pub mod config;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod report;
pub mod run;
pub mod synth;

pub use corpus::{load_corpus, parse_corpus, CandidateRecord, CorpusRecord, Label};
pub use error::{EvalError, Result};
pub use metrics::{
    best_f1, text_score, theta_grid, threshold_sweep, verification_f1, SweepInput, SweepPoint,
    Verification,
};
pub use report::{EvalSummary, PerModel, ReportLine, ReportRecord, Scores};
pub use run::{Mode, Runner};
pub use synth::{corrupt, synth_corpus, SynthConfig};
