//! Candidate and expert backends.
//!
//! Every model sits behind a [`Backend`] built from a [`BackendSpec`]:
//!
//! - `fixture` replays recorded outputs from `fixtures/<sample_id>/<model_name>.txt`
//!   (and `.emb` for embeddings, one real per line). Fully offline.
//! - `http` speaks the OpenAI-compatible chat-completions and embeddings wire
//!   formats, with bearer auth from the environment, per-attempt timeouts,
//!   exponential backoff on transport errors, 429 and 5xx, and an admission
//!   limit on requests in flight.
//!
//! [`gather_candidates`] queries several backends for one sample and keeps the
//! candidates in configuration order.

mod admission;
mod backend;
mod config;
mod error;
mod fixture;
mod gather;
mod http;

pub use backend::{Backend, EmbeddingRequest, GenerationRequest, GenerationResult, ImageInput};
pub use config::{BackendConfig, BackendKind, BackendSpec, API_KEY_ENV, DEFAULT_OCR_PROMPT};
pub use error::{BackendError, Result};
pub use gather::{
    attach_embeddings, gather_candidates, CandidateFailure, Gathered, SampleDescriptor,
};
