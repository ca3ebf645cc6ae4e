use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use ce_core::{Expert, ExpertError, ExpertRequest};
use reqwest::blocking::Client;

use crate::admission::Admission;
use crate::config::{BackendKind, BackendSpec, DEFAULT_OCR_PROMPT};
use crate::error::{BackendError, Result};
use crate::{fixture, http};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageInput {
    None,
    Path(PathBuf),
    Bytes { mime: String, data: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    /// Fixture lookup key; also written to the call log.
    pub sample_id: String,
    pub image: ImageInput,
    pub prompt: String,
    pub temperature: f64,
}

impl GenerationRequest {
    pub fn new(sample_id: impl Into<String>, image: ImageInput, prompt: impl Into<String>) -> Self {
        Self {
            sample_id: sample_id.into(),
            image,
            prompt: prompt.into(),
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub text: String,
    pub latency: Duration,
    pub model_name: String,
    pub attempts: u32,
}

/// Texts to embed. Fixture backends look vectors up by
/// `(sample_id, source_model)`, so each text carries the candidate model that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRequest {
    pub sample_id: String,
    /// `(source_model, text)` pairs.
    pub items: Vec<(String, String)>,
}

/// One configured model. Shareable across threads; the admission limit is
/// per backend.
pub struct Backend {
    spec: BackendSpec,
    admission: Admission,
    client: Option<Client>,
    calls: AtomicUsize,
    log_lock: Mutex<()>,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend")
            .field("spec", &self.spec)
            .field("calls", &self.calls())
            .finish()
    }
}

impl Backend {
    pub fn new(spec: BackendSpec) -> Result<Self> {
        spec.validate()?;
        let client = match spec.kind {
            BackendKind::Http => Some(http::build_client(&spec)?),
            BackendKind::Fixture => None,
        };
        Ok(Self {
            admission: Admission::new(spec.max_in_flight),
            spec,
            client,
            calls: AtomicUsize::new(0),
            log_lock: Mutex::new(()),
        })
    }

    pub fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    pub fn model_name(&self) -> &str {
        &self.spec.model_name
    }

    pub fn prompt(&self) -> &str {
        self.spec.prompt.as_deref().unwrap_or(DEFAULT_OCR_PROMPT)
    }

    /// Calls made through this handle (fixture misses included).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn record_call(&self, op: &str, sample_id: &str) -> Result<()> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let Some(path) = &self.spec.call_log else {
            return Ok(());
        };
        let _guard = self.log_lock.lock().unwrap_or_else(|e| e.into_inner());
        let io = |source| BackendError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        writeln!(f, "{op}\t{sample_id}\t{}", self.spec.model_name).map_err(io)
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult> {
        let _permit = self.admission.acquire();
        self.record_call("generate", &request.sample_id)?;
        let start = Instant::now();
        let (text, attempts) = match &self.client {
            None => (
                fixture::read_text(
                    &self.spec.fixture_root(),
                    &request.sample_id,
                    &self.spec.model_name,
                )?,
                1,
            ),
            Some(client) => {
                let image = load_image(&request.image)?;
                let body = http::chat_body(
                    &self.spec,
                    &request.prompt,
                    image.as_ref(),
                    request.temperature,
                );
                let (value, attempts) = http::post_json(client, &self.spec, &body)?;
                (http::parse_chat(&self.spec, &value)?, attempts)
            }
        };
        Ok(GenerationResult {
            text,
            latency: start.elapsed(),
            model_name: self.spec.model_name.clone(),
            attempts,
        })
    }

    /// One vector per item, all of the same dimension. Repeated texts are
    /// embedded once, so duplicates always get identical vectors.
    pub fn embed(&self, request: &EmbeddingRequest) -> Result<Vec<Vec<f64>>> {
        if request.items.is_empty() {
            return Err(BackendError::Config("nothing to embed".into()));
        }
        let _permit = self.admission.acquire();
        self.record_call("embed", &request.sample_id)?;

        let mut first_of: HashMap<&str, usize> = HashMap::new();
        let mut unique: Vec<usize> = Vec::new();
        let slot: Vec<usize> = request
            .items
            .iter()
            .enumerate()
            .map(|(i, (_, text))| {
                *first_of.entry(text.as_str()).or_insert_with(|| {
                    unique.push(i);
                    unique.len() - 1
                })
            })
            .collect();

        let vectors = match &self.client {
            None => unique
                .iter()
                .map(|&i| {
                    fixture::read_embedding(
                        &self.spec.fixture_root(),
                        &request.sample_id,
                        &request.items[i].0,
                    )
                })
                .collect::<Result<Vec<_>>>()?,
            Some(client) => {
                let texts: Vec<&str> = unique
                    .iter()
                    .map(|&i| request.items[i].1.as_str())
                    .collect();
                let body = http::embed_body(&self.spec, &texts);
                let (value, _) = http::post_json(client, &self.spec, &body)?;
                http::parse_embeddings(&self.spec, &value, texts.len())?
            }
        };

        let dim = vectors[0].len();
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
            return Err(BackendError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(slot.into_iter().map(|k| vectors[k].clone()).collect())
    }
}

fn load_image(image: &ImageInput) -> Result<Option<http::InlineImage>> {
    Ok(match image {
        ImageInput::None => None,
        ImageInput::Bytes { mime, data } => Some(http::InlineImage {
            mime: mime.clone(),
            bytes: data.clone(),
        }),
        ImageInput::Path(path) => Some(http::InlineImage {
            mime: http::guess_mime(path).to_string(),
            bytes: fs::read(path).map_err(|source| BackendError::Io {
                path: path.clone(),
                source,
            })?,
        }),
    })
}

impl Expert for Backend {
    fn name(&self) -> &str {
        self.model_name()
    }

    fn rephrase(&self, request: &ExpertRequest) -> std::result::Result<String, ExpertError> {
        let image = match &request.image_ref {
            Some(p) => ImageInput::Path(PathBuf::from(p)),
            None => ImageInput::None,
        };
        let mut req =
            GenerationRequest::new(request.sample_id.clone(), image, request.prompt.clone());
        req.temperature = self.spec.temperature;
        Ok(self.generate(&req)?.text)
    }
}
