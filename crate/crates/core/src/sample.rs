//! The unified extraction record shared by every stage of the pipeline.
//!
//! A [`MultimodalSample`] is plain text interleaved with placeholder tokens,
//! plus an ordered list of the non-text assets those placeholders stand for.
//! The i-th placeholder (left to right) refers to `modalities[i]`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Default marker inserted where an embedded medium occurred.
pub const DEFAULT_PLACEHOLDER: &str = "<attachment>";

/// Inserted after the first character of a literal placeholder found in
/// document text, so it no longer matches the token.
const ESCAPE_MARK: char = '\u{2060}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionMode {
    /// Accuracy profile: pages without a text layer are routed to OCR.
    Default,
    /// Speed profile: text layers only, no OCR.
    Fast,
}

impl ExtractionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtractionMode::Default => "default",
            ExtractionMode::Fast => "fast",
        }
    }
}

impl Default for ExtractionMode {
    fn default() -> Self {
        ExtractionMode::Default
    }
}

impl fmt::Display for ExtractionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExtractionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "default" => Ok(ExtractionMode::Default),
            "fast" => Ok(ExtractionMode::Fast),
            other => Err(format!("unknown extraction mode `{other}` (expected default|fast)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityKind {
    Image,
    Table,
    Audio,
    Video,
    Other,
    /// Anything a foreign producer wrote that we do not recognise.
    #[serde(other)]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modality {
    #[serde(rename = "type")]
    pub kind: ModalityKind,
    /// Path of the extracted asset on disk.
    pub value: String,
}

impl Modality {
    pub fn new(kind: ModalityKind, value: impl Into<String>) -> Self {
        Self { kind, value: value.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultimodalSample {
    pub text: String,
    pub modalities: Vec<Modality>,
    #[serde(default)]
    pub source_path: String,
    #[serde(default)]
    pub doc_id: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl MultimodalSample {
    pub fn new(text: impl Into<String>, modalities: Vec<Modality>) -> Self {
        Self {
            text: text.into(),
            modalities,
            source_path: String::new(),
            doc_id: String::new(),
            metadata: BTreeMap::new(),
        }
    }

    /// Text with every placeholder removed and whitespace runs around the
    /// removed tokens collapsed. This is what extraction-fidelity metrics see.
    pub fn plain_text(&self, placeholder: &PlaceholderConfig) -> String {
        placeholder.strip(&self.text)
    }

    pub fn is_partial(&self) -> bool {
        self.metadata.get("partial").map(String::as_str) == Some("true")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderConfig {
    pub token: String,
}

impl Default for PlaceholderConfig {
    fn default() -> Self {
        Self { token: DEFAULT_PLACEHOLDER.to_string() }
    }
}

impl PlaceholderConfig {
    pub fn new(token: impl Into<String>) -> Self {
        let token = token.into();
        assert!(!token.is_empty(), "placeholder token must be non-empty");
        Self { token }
    }

    pub fn count_in(&self, text: &str) -> usize {
        text.matches(self.token.as_str()).count()
    }

    /// Neutralises literal occurrences of the token inside document text.
    pub fn escape(&self, text: &str) -> String {
        if !text.contains(self.token.as_str()) {
            return text.to_string();
        }
        let mut chars = self.token.chars();
        let first = chars.next().expect("non-empty token");
        let escaped = format!("{first}{ESCAPE_MARK}{}", chars.as_str());
        text.replace(self.token.as_str(), &escaped)
    }

    pub fn strip(&self, text: &str) -> String {
        if !text.contains(self.token.as_str()) {
            return text.to_string();
        }
        let mut out = String::with_capacity(text.len());
        for (i, line) in text.split('\n').enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let pieces: Vec<&str> = line
                .split(self.token.as_str())
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .collect();
            if line.contains(self.token.as_str()) {
                out.push_str(&pieces.join(" "));
            } else {
                out.push_str(line);
            }
        }
        // Drop lines that only ever held placeholders.
        let mut lines: Vec<&str> = out.split('\n').collect();
        while lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        while lines.first().is_some_and(|l| l.is_empty()) {
            lines.remove(0);
        }
        lines.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    CountMismatch { placeholders: usize, modalities: usize },
    EmptyAssetPath { index: usize },
    UnknownKind { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CountMismatch { placeholders, modalities } => {
                write!(f, "count mismatch {placeholders}≠{modalities}")
            }
            Violation::EmptyAssetPath { index } => write!(f, "empty asset path (modality {index})"),
            Violation::UnknownKind { index } => write!(f, "unknown modality kind (modality {index})"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("pass");
        }
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&msgs.join("; "))
    }
}

pub fn validate_sample(sample: &MultimodalSample, placeholder: &PlaceholderConfig) -> ValidationReport {
    let mut violations = Vec::new();
    let placeholders = placeholder.count_in(&sample.text);
    if placeholders != sample.modalities.len() {
        violations.push(Violation::CountMismatch { placeholders, modalities: sample.modalities.len() });
    }
    for (index, m) in sample.modalities.iter().enumerate() {
        if m.value.is_empty() {
            violations.push(Violation::EmptyAssetPath { index });
        }
        if m.kind == ModalityKind::Unknown {
            violations.push(Violation::UnknownKind { index });
        }
    }
    ValidationReport { violations }
}

/// One JSON object, no trailing newline.
pub fn serialize_sample(sample: &MultimodalSample) -> Vec<u8> {
    serde_json::to_vec(sample).expect("sample is always representable as JSON")
}

pub fn deserialize_sample(bytes: &[u8]) -> Result<MultimodalSample, serde_json::Error> {
    serde_json::from_slice(bytes)
}

/// Hex SHA-256 of `mode tag || 0x00 || source bytes`.
///
/// Empty input in default mode gives
/// `bb9a03f3423c2a644548ee5be69db77f3e2537b93e0f79e6787c39435bacc386`.
pub fn derive_doc_id(source_bytes: &[u8], mode: ExtractionMode) -> String {
    let mut hasher = Sha256::new();
    hasher.update(mode.as_str().as_bytes());
    hasher.update([0u8]);
    hasher.update(source_bytes);
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn appendix_sample() -> MultimodalSample {
        MultimodalSample::new(
            "A report containing a cool image <attachment> and a chart <attachment>...",
            vec![
                Modality::new(ModalityKind::Image, "chart_url_2.png"),
                Modality::new(ModalityKind::Image, "chart_url_1.png"),
            ],
        )
    }

    #[test]
    fn serialized_record_uses_text_and_modalities_fields() {
        let bytes = serialize_sample(&appendix_sample());
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(
            v["text"],
            "A report containing a cool image <attachment> and a chart <attachment>..."
        );
        let mods = v["modalities"].as_array().unwrap();
        assert_eq!(mods.len(), 2);
        assert_eq!(mods[0]["type"], "image");
        assert_eq!(mods[0]["value"], "chart_url_2.png");
        assert_eq!(mods[1]["value"], "chart_url_1.png");
    }

    #[test]
    fn no_modality_record() {
        let bytes = serialize_sample(&MultimodalSample::new("hello", vec![]));
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(v["modalities"], serde_json::json!([]));
    }

    #[test]
    fn appendix_record_parses() {
        let raw = r#"{
          "text": "A report containing a cool image <attachment> and a chart <attachment>...",
          "modalities": [
            {"type": "image", "value": "chart_url_2.png"},
            {"type": "image", "value": "chart_url_1.png"}
          ]
        }"#;
        let s = deserialize_sample(raw.as_bytes()).unwrap();
        assert_eq!(s, appendix_sample());
        assert!(validate_sample(&s, &PlaceholderConfig::default()).is_ok());
    }

    #[test]
    fn validation_reports() {
        let ph = PlaceholderConfig::default();
        assert!(validate_sample(&appendix_sample(), &ph).is_ok());

        let bad = MultimodalSample::new("x <attachment>", vec![]);
        let report = validate_sample(&bad, &ph);
        assert_eq!(report.violations, vec![Violation::CountMismatch { placeholders: 1, modalities: 0 }]);
        assert_eq!(report.to_string(), "count mismatch 1≠0");

        let empty = MultimodalSample::new("<attachment>", vec![Modality::new(ModalityKind::Image, "")]);
        let report = validate_sample(&empty, &ph);
        assert_eq!(report.violations, vec![Violation::EmptyAssetPath { index: 0 }]);
        assert!(report.to_string().starts_with("empty asset path"));
    }

    #[test]
    fn unknown_kind_is_flagged() {
        let raw = r#"{"text":"<attachment>","modalities":[{"type":"hologram","value":"a.bin"}]}"#;
        let s = deserialize_sample(raw.as_bytes()).unwrap();
        let report = validate_sample(&s, &PlaceholderConfig::default());
        assert_eq!(report.violations, vec![Violation::UnknownKind { index: 0 }]);
    }

    #[test]
    fn doc_id_is_content_and_mode_keyed() {
        let a = derive_doc_id(b"same bytes", ExtractionMode::Default);
        assert_eq!(a, derive_doc_id(b"same bytes", ExtractionMode::Default));
        assert_ne!(a, derive_doc_id(b"same bytes", ExtractionMode::Fast));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn empty_input_doc_ids_are_pinned() {
        // sha256(b"default\x00") and sha256(b"fast\x00"), computed with hashlib.
        assert_eq!(derive_doc_id(b"", ExtractionMode::Default), EMPTY_DEFAULT_ID);
        assert_eq!(derive_doc_id(b"", ExtractionMode::Fast), EMPTY_FAST_ID);
    }

    const EMPTY_DEFAULT_ID: &str = "bb9a03f3423c2a644548ee5be69db77f3e2537b93e0f79e6787c39435bacc386";
    const EMPTY_FAST_ID: &str = "b21c758cf6e05dcbcc2f6d0e2d3e81bc811aa2ca069eb98805cc5b95e4ff461b";

    #[test]
    fn doc_ids_do_not_collide() {
        let mut seen = std::collections::HashSet::new();
        for i in 0u32..10_000 {
            let bytes = i.to_le_bytes();
            let mode = if i % 2 == 0 { ExtractionMode::Default } else { ExtractionMode::Fast };
            assert!(seen.insert(derive_doc_id(&bytes, mode)));
        }
    }

    #[test]
    fn escape_and_strip() {
        let ph = PlaceholderConfig::default();
        let escaped = ph.escape("literal <attachment> in prose");
        assert_eq!(ph.count_in(&escaped), 0);
        assert_eq!(ph.strip("a <attachment> b\n<attachment>\nc"), "a b\n\nc");
        assert_eq!(ph.strip("<attachment>"), "");
        assert_eq!(ph.strip("<attachment> <attachment>"), "");
    }

    fn arb_sample() -> impl Strategy<Value = MultimodalSample> {
        let piece = "[a-zA-Z0-9 .,\n\"\\\\é漢]{0,12}";
        (
            proptest::collection::vec((piece, proptest::option::of("[a-z0-9_/]{1,10}\\.(png|jpg|csv)")), 0..6),
            "[a-z0-9/._]{0,16}",
            proptest::collection::btree_map("[a-z_]{1,8}", "[ -~]{0,8}", 0..4),
        )
            .prop_map(|(parts, source_path, metadata)| {
                let ph = PlaceholderConfig::default();
                let mut text = String::new();
                let mut modalities = Vec::new();
                for (txt, asset) in parts {
                    text.push_str(&txt);
                    if let Some(asset) = asset {
                        text.push_str(&ph.token);
                        modalities.push(Modality::new(ModalityKind::Image, asset));
                    }
                }
                MultimodalSample {
                    doc_id: derive_doc_id(text.as_bytes(), ExtractionMode::Fast),
                    text,
                    modalities,
                    source_path,
                    metadata,
                }
            })
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(sample in arb_sample()) {
            prop_assert!(validate_sample(&sample, &PlaceholderConfig::default()).is_ok());
            let back = deserialize_sample(&serialize_sample(&sample)).unwrap();
            prop_assert_eq!(back, sample);
        }
    }
}
