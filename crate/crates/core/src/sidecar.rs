//! Client for an external model server, plus a conformance suite that can
//! be pointed at any implementation of the protocol.
//!
//! Endpoints (all JSON, versioned with `v`):
//! `GET /info`, `POST /embed`, `POST /generate`, `POST /ocr`,
//! `POST /transcribe`. Binary payloads travel base64-encoded. An endpoint
//! the server does not implement answers 501 with
//! `{"v":1,"error":{"code":"unsupported","message":..}}`.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::extract::{OcrBackend, TranscriptionBackend};
use crate::index::{EmbedError, Embedder};
use crate::rag::{GenerationInput, Generator, GeneratorError};

pub const SIDECAR_PROTOCOL_VERSION: u32 = 1;
/// Unit-norm tolerance for returned vectors.
pub const NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("sidecar unreachable: {0}")]
    Transport(String),
    #[error("sidecar does not support {0}")]
    Unsupported(String),
    #[error("sidecar returned {status}: {message}")]
    Status { status: u16, message: String },
    #[error("sidecar protocol violation: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarInfo {
    pub identity: String,
    pub capabilities: Vec<String>,
    #[serde(default)]
    pub dim: Option<usize>,
}

impl SidecarInfo {
    pub fn supports(&self, capability: &str) -> bool {
        self.capabilities.iter().any(|c| c == capability)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Debug, Clone)]
pub struct SidecarClient {
    base: String,
    agent: ureq::Agent,
}

impl SidecarClient {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build();
        Self { base: base_url.trim_end_matches('/').to_string(), agent: ureq::Agent::new_with_config(config) }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn decode(status: u16, body: String, capability: &str) -> Result<Value, SidecarError> {
        let parsed: Option<Value> = serde_json::from_str(&body).ok();
        if (200..300).contains(&status) {
            return parsed.ok_or_else(|| SidecarError::Protocol(format!("non-JSON body: {body:.80}")));
        }
        if status == 501 {
            return Err(SidecarError::Unsupported(capability.to_string()));
        }
        let message = parsed
            .as_ref()
            .and_then(|v| v.pointer("/error/message"))
            .and_then(Value::as_str)
            .map_or(body.clone(), str::to_string);
        Err(SidecarError::Status { status, message })
    }

    fn post(&self, path: &str, mut body: Value) -> Result<Value, SidecarError> {
        body["v"] = json!(SIDECAR_PROTOCOL_VERSION);
        let mut resp = self
            .agent
            .post(format!("{}{path}", self.base))
            .send_json(&body)
            .map_err(|e| SidecarError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| SidecarError::Transport(e.to_string()))?;
        Self::decode(status, text, path.trim_start_matches('/'))
    }

    pub fn info(&self) -> Result<SidecarInfo, SidecarError> {
        let mut resp =
            self.agent.get(format!("{}/info", self.base)).call().map_err(|e| SidecarError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| SidecarError::Transport(e.to_string()))?;
        let v = Self::decode(status, text, "info")?;
        serde_json::from_value(v).map_err(|e| SidecarError::Protocol(format!("/info: {e}")))
    }

    pub fn embed(&self, texts: &[&str]) -> Result<EmbedResponse, SidecarError> {
        let v = self.post("/embed", json!({ "texts": texts }))?;
        let r: EmbedResponse = serde_json::from_value(v).map_err(|e| SidecarError::Protocol(format!("/embed: {e}")))?;
        if r.vectors.len() != texts.len() {
            return Err(SidecarError::Protocol(format!("{} vectors for {} texts", r.vectors.len(), texts.len())));
        }
        Ok(r)
    }

    fn text_of(v: Value, endpoint: &str) -> Result<String, SidecarError> {
        v.get("text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| SidecarError::Protocol(format!("{endpoint}: missing text")))
    }

    pub fn generate(&self, prompt: &str, max_tokens: usize, seed: u64) -> Result<String, SidecarError> {
        let v = self.post("/generate", json!({ "prompt": prompt, "max_tokens": max_tokens, "seed": seed }))?;
        Self::text_of(v, "/generate")
    }

    pub fn ocr(&self, image: &[u8]) -> Result<String, SidecarError> {
        let b64 = base64::engine::general_purpose::STANDARD.encode(image);
        Self::text_of(self.post("/ocr", json!({ "image_bytes_b64": b64 }))?, "/ocr")
    }

    pub fn transcribe(&self, audio: &[u8]) -> Result<String, SidecarError> {
        let b64 = base64::engine::general_purpose::STANDARD.encode(audio);
        Self::text_of(self.post("/transcribe", json!({ "audio_bytes_b64": b64 }))?, "/transcribe")
    }
}

/// Embedder backed by the sidecar. Its identity embeds the server's model
/// identity, so indexes built with one model refuse another.
#[derive(Debug, Clone)]
pub struct SidecarEmbedder {
    client: SidecarClient,
    identity: String,
    dim: usize,
}

impl SidecarEmbedder {
    /// Queries `/info` once to learn identity and dimension.
    pub fn connect(client: SidecarClient) -> Result<Self, SidecarError> {
        let info = client.info()?;
        if !info.supports("embed") {
            return Err(SidecarError::Unsupported("embed".into()));
        }
        let dim = match info.dim {
            Some(d) => d,
            None => client.embed(&["dimension probe"])?.dim,
        };
        Ok(Self { identity: format!("sidecar:{}/d{dim}", info.identity), dim, client })
    }
}

impl Embedder for SidecarEmbedder {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        self.embed_batch(&[text]).map(|mut v| v.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let r = self.client.embed(texts).map_err(|e| EmbedError::Backend(e.to_string()))?;
        for v in &r.vectors {
            if v.len() != self.dim {
                return Err(EmbedError::Dimension { expected: self.dim, got: v.len() });
            }
        }
        Ok(r.vectors)
    }
}

#[derive(Debug, Clone)]
pub struct SidecarGenerator {
    client: SidecarClient,
    identity: String,
    pub max_tokens: usize,
}

impl SidecarGenerator {
    pub fn connect(client: SidecarClient, max_tokens: usize) -> Result<Self, SidecarError> {
        let info = client.info()?;
        if !info.supports("generate") {
            return Err(SidecarError::Unsupported("generate".into()));
        }
        Ok(Self { identity: format!("sidecar:{}", info.identity), client, max_tokens })
    }
}

impl Generator for SidecarGenerator {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn generate(&self, input: &GenerationInput<'_>) -> Result<String, GeneratorError> {
        self.client
            .generate(input.prompt, self.max_tokens, input.seed)
            .map_err(|e| GeneratorError::Backend(e.to_string()))
    }
}

/// OCR and transcription hooks for the extractors.
#[derive(Debug, Clone)]
pub struct SidecarModels {
    client: SidecarClient,
    identity: String,
}

impl SidecarModels {
    pub fn connect(client: SidecarClient) -> Result<(Self, SidecarInfo), SidecarError> {
        let info = client.info()?;
        Ok((Self { identity: format!("sidecar:{}", info.identity), client }, info))
    }
}

impl OcrBackend for SidecarModels {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn ocr(&self, image: &[u8]) -> Result<String, String> {
        self.client.ocr(image).map_err(|e| e.to_string())
    }
}

impl TranscriptionBackend for SidecarModels {
    fn identity(&self) -> String {
        self.identity.clone()
    }

    fn transcribe(&self, media: &[u8]) -> Result<String, String> {
        self.client.transcribe(media).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConformanceCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConformanceReport {
    pub checks: Vec<ConformanceCheck>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, result: Result<(), String>) {
        let (passed, detail) = match result {
            Ok(()) => (true, String::new()),
            Err(d) => (false, d),
        };
        self.checks.push(ConformanceCheck { name, passed, detail });
    }
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Exercises a sidecar against the protocol contract: identity and
/// capabilities, unit norms, dimension agreement with `/info`, empty
/// batches, determinism, and 501 errors for unadvertised capabilities.
pub fn run_conformance(client: &SidecarClient) -> ConformanceReport {
    let mut report = ConformanceReport::default();
    let info = match client.info() {
        Ok(i) => i,
        Err(e) => {
            report.push("info", Err(e.to_string()));
            return report;
        }
    };
    report.push(
        "info",
        if info.identity.trim().is_empty() {
            Err("empty identity".into())
        } else if !info.supports("embed") {
            Err(format!("capabilities {:?} lack embed", info.capabilities))
        } else {
            Ok(())
        },
    );

    let single = client.embed(&["hello"]);
    report.push(
        "embed_single",
        match &single {
            Ok(r) if r.vectors.len() != 1 => Err(format!("{} vectors", r.vectors.len())),
            Ok(r) if (norm(&r.vectors[0]) - 1.0).abs() > NORM_TOLERANCE => {
                Err(format!("norm {}", norm(&r.vectors[0])))
            }
            Ok(r) if info.dim.is_some_and(|d| d != r.dim || d != r.vectors[0].len()) => Err(format!(
                "advertised dim {:?}, response dim {}, vector length {}",
                info.dim,
                r.dim,
                r.vectors[0].len()
            )),
            Ok(r) if r.vectors[0].len() != r.dim => Err(format!("dim {} but vector length {}", r.dim, r.vectors[0].len())),
            Ok(_) => Ok(()),
            Err(e) => Err(e.to_string()),
        },
    );

    report.push(
        "embed_empty",
        match client.embed(&[]) {
            Ok(r) if r.vectors.is_empty() => Ok(()),
            Ok(r) => Err(format!("{} vectors for empty batch", r.vectors.len())),
            Err(e) => Err(e.to_string()),
        },
    );

    let texts = ["the quick brown fox", "", "numbers 1 2 3", "hello"];
    report.push(
        "embed_batch",
        match client.embed(&texts) {
            Ok(r) => {
                let bad: Vec<String> = r
                    .vectors
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.len() != r.dim || (norm(v) - 1.0).abs() > NORM_TOLERANCE)
                    .map(|(i, v)| format!("#{i}: len {} norm {:.6}", v.len(), norm(v)))
                    .collect();
                let consistent = single.as_ref().map_or(true, |s| s.vectors.first() == r.vectors.get(3));
                if !bad.is_empty() {
                    Err(bad.join(", "))
                } else if !consistent {
                    Err("batched vector differs from single-text vector".into())
                } else {
                    Ok(())
                }
            }
            Err(e) => Err(e.to_string()),
        },
    );

    report.push(
        "embed_deterministic",
        match (client.embed(&texts), client.embed(&texts)) {
            (Ok(a), Ok(b)) if a == b => Ok(()),
            (Ok(_), Ok(_)) => Err("repeated calls returned different vectors".into()),
            (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
        },
    );

    let probes: [(&'static str, &'static str, Box<dyn Fn() -> Result<String, SidecarError>>); 3] = [
        ("generate", "generate_contract", Box::new(|| client.generate("ping", 4, 0))),
        ("ocr", "ocr_contract", Box::new(|| client.ocr(b"\x89PNG"))),
        ("transcribe", "transcribe_contract", Box::new(|| client.transcribe(b"RIFF"))),
    ];
    for (cap, name, call) in probes {
        let advertised = info.supports(cap);
        report.push(
            name,
            match (advertised, call()) {
                (true, Ok(_)) | (false, Err(SidecarError::Unsupported(_))) => Ok(()),
                (true, Err(e)) => Err(format!("advertised but failed: {e}")),
                (false, Ok(_)) => Err("not advertised but answered".into()),
                (false, Err(e)) => Err(format!("expected a 501 error, got: {e}")),
            },
        );
    }
    report
}
