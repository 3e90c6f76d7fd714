//! Turns samples into retrieval-ready chunks through a configurable
//! sequence of filter, tagger and chunker stages.
//!
//! Stages run in the configured order. Before the chunker they see whole
//! samples; after it they see chunks, which inherit the tags accumulated on
//! their sample.

use std::io::{self, BufRead, Write};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::{MultimodalSample, PlaceholderConfig};

pub const DEFAULT_CHUNK_SIZE: usize = 256;
pub const DEFAULT_CHUNK_OVERLAP: usize = 32;
pub const DEFAULT_MIN_CHARS: usize = 20;

#[derive(Debug, Error)]
pub enum PostprocError {
    #[error("invalid chunk window: size {size}, overlap {overlap} (need 0 <= overlap < size)")]
    InvalidWindow { size: usize, overlap: usize },
    #[error("unknown or malformed stage: {0}")]
    UnknownStage(String),
    #[error("bad regex in stage: {0}")]
    BadPattern(#[from] regex::Error),
    #[error("pipeline has {0} chunker stages; at most one is allowed")]
    MultipleChunkers(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub text: String,
    /// Half-open `[start, end)` token offsets into the parent sample.
    pub token_span: (usize, usize),
    #[serde(default)]
    pub tags: Vec<String>,
    /// Indices into the parent's modality list whose placeholders fall
    /// inside the span.
    #[serde(default)]
    pub modal_refs: Vec<usize>,
}

pub fn chunk_id(doc_id: &str, index: usize) -> String {
    format!("{doc_id}#{index:05}")
}

/// A whitespace token, with placeholders always standing alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Token<'a> {
    text: &'a str,
    modality: Option<usize>,
}

fn tokenize<'a>(text: &'a str, placeholder: &PlaceholderConfig) -> Vec<Token<'a>> {
    let mut out = Vec::new();
    let mut next_modality = 0;
    let ph = placeholder.token.as_str();
    for word in text.split_whitespace() {
        let mut rest = word;
        while let Some(pos) = rest.find(ph) {
            if pos > 0 {
                out.push(Token { text: &rest[..pos], modality: None });
            }
            out.push(Token { text: &rest[pos..pos + ph.len()], modality: Some(next_modality) });
            next_modality += 1;
            rest = &rest[pos + ph.len()..];
        }
        if !rest.is_empty() {
            out.push(Token { text: rest, modality: None });
        }
    }
    out
}

/// Number of chunker tokens in a sample.
pub fn token_count(sample: &MultimodalSample, placeholder: &PlaceholderConfig) -> usize {
    tokenize(&sample.text, placeholder).len()
}

/// Window start offsets for `n` tokens: stride `size - overlap`, stopping once
/// a window reaches the end.
pub fn window_spans(n: usize, size: usize, overlap: usize) -> Result<Vec<(usize, usize)>, PostprocError> {
    if size == 0 || overlap >= size {
        return Err(PostprocError::InvalidWindow { size, overlap });
    }
    let stride = size - overlap;
    let mut spans = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + size).min(n);
        spans.push((start, end));
        if end >= n {
            break;
        }
        start += stride;
    }
    Ok(spans)
}

pub fn chunk(
    sample: &MultimodalSample,
    size: usize,
    overlap: usize,
    placeholder: &PlaceholderConfig,
) -> Result<Vec<Chunk>, PostprocError> {
    let tokens = tokenize(&sample.text, placeholder);
    let spans = window_spans(tokens.len(), size, overlap)?;
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(i, (start, end))| {
            let window = &tokens[start..end];
            Chunk {
                chunk_id: chunk_id(&sample.doc_id, i),
                doc_id: sample.doc_id.clone(),
                text: window.iter().map(|t| t.text).collect::<Vec<_>>().join(" "),
                token_span: (start, end),
                tags: Vec::new(),
                modal_refs: window.iter().filter_map(|t| t.modality).collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StageConfig {
    /// Drops units whose character count falls outside the bounds.
    /// `min-chars` defaults to the pipeline's `min-chunk-chars`.
    #[serde(rename_all = "kebab-case")]
    LengthFilter {
        #[serde(default)]
        min_chars: Option<usize>,
        #[serde(default)]
        max_chars: Option<usize>,
    },
    /// Drops units whose text matches `pattern`.
    RegexFilter { pattern: String },
    /// Adds `tag` to units whose text matches `pattern`.
    RegexTagger { pattern: String, tag: String },
    Chunker,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct PipelineConfig {
    pub stages: Vec<StageConfig>,
    pub chunk_size: usize,
    pub chunk_overlap: usize,
    pub min_chunk_chars: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stages: vec![StageConfig::LengthFilter { min_chars: None, max_chars: None }, StageConfig::Chunker],
            chunk_size: DEFAULT_CHUNK_SIZE,
            chunk_overlap: DEFAULT_CHUNK_OVERLAP,
            min_chunk_chars: DEFAULT_MIN_CHARS,
        }
    }
}

impl PipelineConfig {
    pub fn chunker_only(size: usize, overlap: usize) -> Self {
        Self { stages: vec![StageConfig::Chunker], chunk_size: size, chunk_overlap: overlap, ..Self::default() }
    }

    pub fn from_json(text: &str) -> Result<Self, PostprocError> {
        serde_json::from_str(text).map_err(|e| PostprocError::UnknownStage(e.to_string()))
    }
}

#[derive(Debug)]
enum Stage {
    Length { min: usize, max: Option<usize> },
    Reject(Regex),
    Tag(Regex, String),
    Chunk,
}

impl Stage {
    /// Returns false when the unit is dropped.
    fn apply(&self, text: &str, tags: &mut Vec<String>) -> bool {
        match self {
            Stage::Length { min, max } => {
                let n = text.chars().count();
                n >= *min && max.is_none_or(|m| n <= m)
            }
            Stage::Reject(re) => !re.is_match(text),
            Stage::Tag(re, tag) => {
                if re.is_match(text) && !tags.contains(tag) {
                    tags.push(tag.clone());
                }
                true
            }
            Stage::Chunk => true,
        }
    }
}

#[derive(Debug)]
pub struct Pipeline {
    stages: Vec<Stage>,
    chunk_at: usize,
    size: usize,
    overlap: usize,
    placeholder: PlaceholderConfig,
}

impl Pipeline {
    /// Compiles a config. A pipeline without a chunker gets one appended.
    pub fn compile(config: &PipelineConfig, placeholder: PlaceholderConfig) -> Result<Self, PostprocError> {
        window_spans(0, config.chunk_size, config.chunk_overlap)?;
        let chunkers = config.stages.iter().filter(|s| matches!(s, StageConfig::Chunker)).count();
        if chunkers > 1 {
            return Err(PostprocError::MultipleChunkers(chunkers));
        }
        let mut stages = Vec::with_capacity(config.stages.len() + 1);
        for s in &config.stages {
            stages.push(match s {
                StageConfig::LengthFilter { min_chars, max_chars } => Stage::Length {
                    min: min_chars.unwrap_or(config.min_chunk_chars),
                    max: *max_chars,
                },
                StageConfig::RegexFilter { pattern } => Stage::Reject(Regex::new(pattern)?),
                StageConfig::RegexTagger { pattern, tag } => Stage::Tag(Regex::new(pattern)?, tag.clone()),
                StageConfig::Chunker => Stage::Chunk,
            });
        }
        if chunkers == 0 {
            stages.push(Stage::Chunk);
        }
        let chunk_at = stages.iter().position(|s| matches!(s, Stage::Chunk)).expect("chunker present");
        Ok(Self { stages, chunk_at, size: config.chunk_size, overlap: config.chunk_overlap, placeholder })
    }

    pub fn run_sample(&self, sample: &MultimodalSample) -> Vec<Chunk> {
        let mut tags = Vec::new();
        for stage in &self.stages[..self.chunk_at] {
            if !stage.apply(&sample.text, &mut tags) {
                return Vec::new();
            }
        }
        let chunks = chunk(sample, self.size, self.overlap, &self.placeholder).expect("window validated at compile");
        chunks
            .into_iter()
            .filter_map(|mut c| {
                c.tags = tags.clone();
                for stage in &self.stages[self.chunk_at + 1..] {
                    if !stage.apply(&c.text, &mut c.tags) {
                        return None;
                    }
                }
                Some(c)
            })
            .collect()
    }

    pub fn run(&self, samples: &[MultimodalSample]) -> Vec<Chunk> {
        samples.iter().flat_map(|s| self.run_sample(s)).collect()
    }
}

pub fn apply_pipeline(
    samples: &[MultimodalSample],
    config: &PipelineConfig,
    placeholder: &PlaceholderConfig,
) -> Result<Vec<Chunk>, PostprocError> {
    Ok(Pipeline::compile(config, placeholder.clone())?.run(samples))
}

pub fn write_chunks<W: Write>(mut w: W, chunks: &[Chunk]) -> io::Result<()> {
    for c in chunks {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_chunks<R: BufRead>(r: R) -> io::Result<Vec<Chunk>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}
