//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain strings and returns JSON text so the page needs
//! no generated type glue. The `*_json` functions hold the logic and are
//! what the native tests call.

use mmore_core::eval::score_texts;
use mmore_core::index::{HashEmbedder, HybridIndex, RetrievalMode};
use mmore_core::postproc::{chunk, Chunk};
use mmore_core::{derive_doc_id, ExtractionMode, MultimodalSample, PlaceholderConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Scores {
    bleu: f64,
    rouge_l: f64,
    cer: f64,
    edit_distance: usize,
}

pub fn score_json(extracted: &str, truth: &str) -> Result<String, String> {
    let s = score_texts(extracted, truth)?;
    let out = Scores { bleu: s.bleu.bleu, rouge_l: s.rouge_l.f, cer: s.cer.cer, edit_distance: s.cer.distance };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

fn sample_of(text: &str) -> MultimodalSample {
    let mut s = MultimodalSample::new(text, vec![]);
    s.doc_id = derive_doc_id(text.as_bytes(), ExtractionMode::Fast);
    s
}

pub fn chunk_json(text: &str, size: usize, overlap: usize) -> Result<String, String> {
    let chunks = chunk(&sample_of(text), size, overlap, &PlaceholderConfig::default()).map_err(|e| e.to_string())?;
    serde_json::to_string(&chunks).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Hit<'a> {
    rank: usize,
    score: f64,
    paragraph: usize,
    text: &'a str,
}

/// Indexes the blank-line separated paragraphs of `corpus` and answers
/// `query` with `mode` (`sparse`, `dense`, `rrf` or `weighted:<alpha>`).
pub fn search_json(corpus: &str, query: &str, k: usize, mode: &str) -> Result<String, String> {
    let mode: RetrievalMode = mode.parse()?;
    let paragraphs: Vec<&str> = corpus.split("\n\n").map(str::trim).filter(|p| !p.is_empty()).collect();
    let chunks: Vec<Chunk> = paragraphs
        .iter()
        .enumerate()
        .map(|(i, p)| Chunk {
            chunk_id: format!("p{i:04}"),
            doc_id: "demo".into(),
            text: (*p).to_string(),
            token_span: (0, p.split_whitespace().count()),
            tags: vec![],
            modal_refs: vec![],
        })
        .collect();
    let embedder = HashEmbedder::default();
    let mut index = HybridIndex::new();
    index.add_chunks(&chunks, &embedder).map_err(|e| e.to_string())?;
    let hits = index.search(query, k, mode, &embedder).map_err(|e| e.to_string())?;
    let out: Vec<Hit> = hits
        .iter()
        .map(|h| {
            let paragraph: usize = h.chunk_id[1..].parse().unwrap_or(0);
            Hit { rank: h.rank, score: h.score, paragraph: paragraph + 1, text: paragraphs[paragraph] }
        })
        .collect();
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn score(extracted: &str, truth: &str) -> Result<String, JsError> {
    score_json(extracted, truth).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = chunkText)]
pub fn chunk_text(text: &str, size: usize, overlap: usize) -> Result<String, JsError> {
    chunk_json(text, size, overlap).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn search(corpus: &str, query: &str, k: usize, mode: &str) -> Result<String, JsError> {
    search_json(corpus, query, k, mode).map_err(|e| JsError::new(&e))
}
