use std::thread;
use std::time::Duration;

use base64::Engine;
use rand::Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use crate::config::{BackendSpec, API_KEY_ENV};
use crate::error::{BackendError, Result};

/// Inline image as a `data:` URL part.
pub(crate) struct InlineImage {
    pub mime: String,
    pub bytes: Vec<u8>,
}

pub(crate) fn chat_body(
    spec: &BackendSpec,
    prompt: &str,
    image: Option<&InlineImage>,
    temperature: f64,
) -> Value {
    let mut content = vec![json!({ "type": "text", "text": prompt })];
    if let Some(img) = image {
        let data = base64::engine::general_purpose::STANDARD.encode(&img.bytes);
        content.push(json!({
            "type": "image_url",
            "image_url": { "url": format!("data:{};base64,{data}", img.mime) },
        }));
    }
    json!({
        "model": spec.model_name,
        "messages": [{ "role": "user", "content": content }],
        "temperature": temperature,
    })
}

pub(crate) fn embed_body(spec: &BackendSpec, texts: &[&str]) -> Value {
    json!({ "model": spec.model_name, "input": texts })
}

fn protocol(spec: &BackendSpec, message: impl Into<String>) -> BackendError {
    BackendError::Protocol {
        model_name: spec.model_name.clone(),
        message: message.into(),
    }
}

/// `choices[0].message.content`, either a string or a list of text parts.
pub(crate) fn parse_chat(spec: &BackendSpec, body: &Value) -> Result<String> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or_else(|| protocol(spec, "missing choices[0].message.content"))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect()),
        _ => Err(protocol(
            spec,
            "message content is neither text nor a list of parts",
        )),
    }
}

/// `data[].embedding`, reordered by each entry's `index` when present.
pub(crate) fn parse_embeddings(
    spec: &BackendSpec,
    body: &Value,
    expected: usize,
) -> Result<Vec<Vec<f64>>> {
    let data = body
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| protocol(spec, "missing `data` array"))?;
    if data.len() != expected {
        return Err(protocol(
            spec,
            format!("expected {expected} embeddings, got {}", data.len()),
        ));
    }
    let mut out: Vec<Option<Vec<f64>>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let idx = item
            .get("index")
            .and_then(Value::as_u64)
            .map_or(pos, |i| i as usize);
        let vec = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| protocol(spec, format!("data[{pos}] has no embedding")))?
            .iter()
            .map(|v| v.as_f64().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| protocol(spec, format!("data[{pos}] holds a non-numeric value")))?;
        match out.get_mut(idx) {
            Some(slot @ None) => *slot = Some(vec),
            _ => {
                return Err(protocol(
                    spec,
                    format!("bad or repeated embedding index {idx}"),
                ))
            }
        }
    }
    Ok(out.into_iter().map(|v| v.unwrap_or_default()).collect())
}

pub(crate) fn build_client(spec: &BackendSpec) -> Result<Client> {
    Client::builder()
        .timeout(spec.timeout())
        .build()
        .map_err(|e| BackendError::Config(format!("backend `{}`: {e}", spec.model_name)))
}

fn api_key(spec: &BackendSpec) -> Option<String> {
    let var = spec.api_key_env.as_deref().unwrap_or(API_KEY_ENV);
    std::env::var(var).ok().filter(|k| !k.is_empty())
}

fn is_retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

/// `base * 2^(attempt-1)`, stretched by up to 25% of random jitter.
pub(crate) fn backoff(base_ms: u64, attempt: u32) -> Duration {
    let nominal = base_ms.saturating_mul(1u64 << (attempt - 1).min(20));
    let jitter = rand::rng().random_range(0.0..0.25);
    Duration::from_millis(nominal).mul_f64(1.0 + jitter)
}

/// POSTs `body`, retrying transport failures, 429 and 5xx up to
/// `max_retries` times. Returns the parsed JSON and the attempt count.
pub(crate) fn post_json(client: &Client, spec: &BackendSpec, body: &Value) -> Result<(Value, u32)> {
    let endpoint = spec.endpoint.as_deref().ok_or_else(|| {
        BackendError::Config(format!("backend `{}` has no endpoint", spec.model_name))
    })?;
    let key = api_key(spec);
    let total = spec.max_retries + 1;
    let mut last_error = String::new();

    for attempt in 1..=total {
        if attempt > 1 {
            thread::sleep(backoff(spec.backoff_base_ms, attempt - 1));
        }
        let mut req = client.post(endpoint).json(body);
        if let Some(k) = &key {
            req = req.bearer_auth(k);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => {
                last_error = e.to_string();
                continue;
            }
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => {
                last_error = e.to_string();
                continue;
            }
        };
        if status.is_success() {
            let value = serde_json::from_str(&text)
                .map_err(|e| protocol(spec, format!("invalid JSON: {e}")))?;
            return Ok((value, attempt));
        }
        if !is_retryable(status) {
            return Err(BackendError::Status {
                model_name: spec.model_name.clone(),
                status: status.as_u16(),
                body: truncate(&text, 500),
            });
        }
        last_error = format!("HTTP {}: {}", status.as_u16(), truncate(&text, 200));
    }

    Err(BackendError::Transport {
        model_name: spec.model_name.clone(),
        attempts: total,
        message: last_error,
    })
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

pub(crate) fn guess_mime(path: &std::path::Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "png" => "image/png",
        "jpg" | "jpeg" => "image/jpeg",
        "gif" => "image/gif",
        "webp" => "image/webp",
        "bmp" => "image/bmp",
        "tif" | "tiff" => "image/tiff",
        _ => "application/octet-stream",
    }
}
