//! # ce-core
//!
//! Training-free reliability scoring for several candidate transcriptions of
//! the same input.
//!
//! The pipeline:
//! 1. [`similarity`] builds a symmetric matrix of pairwise divergences between
//!    candidates (normalized Levenshtein over characters, or cosine over
//!    embeddings).
//! 2. [`entropy`] turns the matrix into per-candidate average divergences
//!    and a single consensus entropy `delta` in `[0, 1]`, either from the
//!    pairwise distances directly or from a weighted 2-D grid KDE.
//! 3. [`ensemble`] aligns the candidates token by token and votes with
//!    inverse-divergence weights.
//! 4. [`router`] accepts the ensemble when `delta <= theta` and otherwise
//!    prepares a rephrase request for a stronger expert model.
//!
//! ```
//! use ce_core::{consensus_report, Candidate, ConsensusConfig, Sample};
//!
//! let sample = Sample::new(
//!     "demo",
//!     vec![
//!         Candidate::new("m1", "ab"),
//!         Candidate::new("m2", "ab"),
//!         Candidate::new("m3", "cd"),
//!     ],
//! );
//! let report = consensus_report(&sample, &ConsensusConfig::default()).unwrap();
//! assert!((report.profile.delta - 2.0 / 3.0).abs() < 1e-9);
//! assert!(report.decision.is_expert());
//! ```

pub mod ensemble;
pub mod entropy;
pub mod error;
pub mod router;
pub mod similarity;

pub use ensemble::{
    ensemble_text, ensemble_weights, pairwise_align, pivot_index, progressive_alignment,
    rover_vote, tokenize, weighted_vote, AlignmentColumns, EnsembleOutput, EnsembleWeights,
    TokenizeMode,
};
pub use entropy::{
    aggregate_delta, average_entropy_distances, consensus_report, grid_kde_delta, project_to_plane,
    Aggregator, ConsensusConfig, ConsensusReport, EntropyProfile, Estimator, GridConfig,
    GridDensity, EPSILON,
};
pub use error::{CeError, Result};
pub use router::{
    build_expert_request, gate, run_sample, Expert, ExpertError, ExpertRequest, FinalOutput,
    GateConfig, PipelineConfig, Route, RoutingDecision, DEFAULT_TEMPLATE,
};
pub use similarity::{
    cosine_divergence, divergence_matrix, euclidean_divergence, levenshtein, levenshtein_dp,
    normalized_edit_divergence, Candidate, DivergenceMatrix, Metric, Sample,
};
