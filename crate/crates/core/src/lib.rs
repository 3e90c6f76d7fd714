//! Multimodal document ingestion, hybrid retrieval and retrieval-augmented
//! answering.
//!
//! The pipeline runs `extract` → `postproc` → `index` → `rag`, with
//! `dispatch` fanning extraction out over local threads or remote workers and
//! `eval` scoring extraction fidelity.

pub mod eval;
#[cfg(feature = "io")]
pub mod dispatch;
#[cfg(feature = "io")]
pub mod extract;
#[cfg(feature = "io")]
pub mod fixtures;
pub mod index;
pub mod postproc;
pub mod rag;
pub mod sample;
#[cfg(feature = "net")]
pub mod sidecar;
pub mod text;

pub use sample::{
    derive_doc_id, deserialize_sample, serialize_sample, validate_sample, ExtractionMode, Modality, ModalityKind,
    MultimodalSample, PlaceholderConfig, ValidationReport, Violation, DEFAULT_PLACEHOLDER,
};
