//! Retrieval-augmented answering: retrieve top-k chunks, render them into a
//! prompt template, hand the prompt to a generator.

mod batch;
mod generate;
#[cfg(feature = "net")]
mod service;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{Embedder, HybridIndex, IndexError, RetrievalMode};

pub use batch::{run_batch, run_batch_files, BatchError, BatchInput, BatchOutput, BatchReport};
pub use generate::{EchoGenerator, ExtractiveGenerator, GenerationInput, Generator, GeneratorError};
#[cfg(feature = "net")]
pub use service::{serve, ServiceConfig, ServiceError, ServiceHandle, SharedIndex};

/// Version tag carried by every JSON schema the RAG surfaces emit.
pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_TEMPLATE: &str = "Context:\n{context}\n\nQuestion: {question}\nAnswer:";
pub const DEFAULT_TEMPLATE_ID: &str = "default";

#[derive(Debug, Error)]
pub enum RagError {
    #[error("no index is loaded")]
    IndexUnavailable,
    #[error("retrieval failed: {0}")]
    Retrieval(#[from] IndexError),
    #[error("generation failed: {0}")]
    GeneratorFailure(#[from] GeneratorError),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
}

impl RagError {
    /// Pipeline stage the error originated in.
    pub fn stage(&self) -> &'static str {
        match self {
            RagError::IndexUnavailable | RagError::Retrieval(_) => "retrieve",
            RagError::GeneratorFailure(_) => "generate",
            RagError::UnknownTemplate(_) | RagError::InvalidTemplate(_) => "render",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    template: String,
}

impl PromptTemplate {
    /// Both `{context}` and `{question}` must occur exactly once.
    pub fn new(template: impl Into<String>) -> Result<Self, RagError> {
        let template = template.into();
        for slot in ["{context}", "{question}"] {
            let n = template.matches(slot).count();
            if n != 1 {
                return Err(RagError::InvalidTemplate(format!("slot {slot} appears {n} times, expected once")));
            }
        }
        Ok(Self { template })
    }

    pub fn as_str(&self) -> &str {
        &self.template
    }

    pub fn render(&self, context: &str, question: &str) -> String {
        // Split first so slot-like text inside the context is never expanded.
        let (before_q, after_q) = self.template.split_once("{question}").expect("validated");
        let fill = |part: &str| part.replacen("{context}", context, 1);
        format!("{}{}{}", fill(before_q), question, fill(after_q))
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPLATE).expect("default template is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagRequest {
    pub query: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub mode: RetrievalMode,
    #[serde(default)]
    pub template_id: Option<String>,
}

fn default_k() -> usize {
    3
}

impl RagRequest {
    pub fn new(query: impl Into<String>, k: usize) -> Self {
        Self { query: query.into(), k, mode: RetrievalMode::default(), template_id: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRef {
    pub chunk_id: String,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub retrieve_ms: f64,
    pub generate_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagResponse {
    pub answer: String,
    /// Ordered by rank.
    pub sources: Vec<SourceRef>,
    pub timing: StageTiming,
}

/// Fixed seed handed to generators so repeated requests agree.
pub const GENERATION_SEED: u64 = 0;

pub fn answer(
    req: &RagRequest,
    index: &HybridIndex,
    embedder: &dyn Embedder,
    generator: &dyn Generator,
    template: &PromptTemplate,
) -> Result<RagResponse, RagError> {
    let start = Instant::now();
    let hits = if req.k == 0 { Vec::new() } else { index.search(&req.query, req.k, req.mode, embedder)? };
    let sources: Vec<SourceRef> = hits
        .into_iter()
        .map(|h| SourceRef {
            text: index.chunk(&h.chunk_id).map(|c| c.text.clone()).unwrap_or_default(),
            chunk_id: h.chunk_id,
            score: h.score,
        })
        .collect();
    let retrieved = start.elapsed();

    let passages: Vec<&str> = sources.iter().map(|s| s.text.as_str()).collect();
    let prompt = if req.k == 0 { req.query.clone() } else { template.render(&passages.join("\n\n"), &req.query) };
    let input = GenerationInput { prompt: &prompt, question: &req.query, passages: &passages, seed: GENERATION_SEED };
    let answer = generator.generate(&input)?;
    let total = start.elapsed();

    Ok(RagResponse {
        answer,
        sources,
        timing: StageTiming {
            retrieve_ms: retrieved.as_secs_f64() * 1e3,
            generate_ms: (total - retrieved).as_secs_f64() * 1e3,
            total_ms: total.as_secs_f64() * 1e3,
        },
    })
}

/// Index snapshot plus the components needed to answer against it.
#[derive(Clone)]
pub struct RagEngine {
    pub index: Arc<HybridIndex>,
    pub embedder: Arc<dyn Embedder>,
    pub generator: Arc<dyn Generator>,
    pub templates: BTreeMap<String, PromptTemplate>,
}

impl RagEngine {
    pub fn new(index: Arc<HybridIndex>, embedder: Arc<dyn Embedder>, generator: Arc<dyn Generator>) -> Self {
        let mut templates = BTreeMap::new();
        templates.insert(DEFAULT_TEMPLATE_ID.to_string(), PromptTemplate::default());
        Self { index, embedder, generator, templates }
    }

    /// Replaces the template used when a request names none.
    pub fn with_default_template(mut self, template: PromptTemplate) -> Self {
        self.templates.insert(DEFAULT_TEMPLATE_ID.to_string(), template);
        self
    }

    pub fn template(&self, id: Option<&str>) -> Result<&PromptTemplate, RagError> {
        let id = id.unwrap_or(DEFAULT_TEMPLATE_ID);
        self.templates.get(id).ok_or_else(|| RagError::UnknownTemplate(id.to_string()))
    }

    pub fn answer(&self, req: &RagRequest) -> Result<RagResponse, RagError> {
        let template = self.template(req.template_id.as_deref())?;
        answer(req, &self.index, self.embedder.as_ref(), self.generator.as_ref(), template)
    }
}
