//! File-type specific extractors behind one interface.
//!
//! Every extractor turns the bytes of one file into a [`MultimodalSample`]:
//! text in reading order, with a placeholder wherever an embedded medium
//! occurred and the medium itself written to
//! `<assets_root>/<doc_id>/<n>.<ext>`.

mod markup;
mod office;
mod pdf;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::{
    derive_doc_id, validate_sample, ExtractionMode, Modality, ModalityKind, MultimodalSample, PlaceholderConfig,
};

pub use markup::{CsvExtractor, EmlExtractor, HtmlExtractor, MarkdownExtractor, TxtExtractor};
pub use office::{DocxExtractor, PptxExtractor, XlsxExtractor};
pub use pdf::{encode_png, PdfExtractor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Pdf,
    Docx,
    Pptx,
    Xlsx,
    Csv,
    Txt,
    Md,
    Html,
    Eml,
    Media,
    Unknown,
}

impl FileKind {
    pub const TEXT_BEARING: [FileKind; 9] = [
        FileKind::Pdf,
        FileKind::Docx,
        FileKind::Pptx,
        FileKind::Xlsx,
        FileKind::Csv,
        FileKind::Txt,
        FileKind::Md,
        FileKind::Html,
        FileKind::Eml,
    ];

    /// Maps a lowercase extension (without the dot).
    pub fn from_extension(ext: &str) -> FileKind {
        match ext {
            "pdf" => FileKind::Pdf,
            "docx" => FileKind::Docx,
            "pptx" => FileKind::Pptx,
            "xlsx" => FileKind::Xlsx,
            "csv" | "tsv" => FileKind::Csv,
            "txt" | "text" | "log" => FileKind::Txt,
            "md" | "markdown" | "mdown" => FileKind::Md,
            "html" | "htm" | "xhtml" => FileKind::Html,
            "eml" => FileKind::Eml,
            "mp3" | "wav" | "flac" | "m4a" | "ogg" | "aac" | "mp4" | "mov" | "mkv" | "avi" | "webm" => {
                FileKind::Media
            }
            _ => FileKind::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FileKind::Pdf => "pdf",
            FileKind::Docx => "docx",
            FileKind::Pptx => "pptx",
            FileKind::Xlsx => "xlsx",
            FileKind::Csv => "csv",
            FileKind::Txt => "txt",
            FileKind::Md => "md",
            FileKind::Html => "html",
            FileKind::Eml => "eml",
            FileKind::Media => "media",
            FileKind::Unknown => "unknown",
        }
    }
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn detect_kind(path: &Path) -> FileKind {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| FileKind::from_extension(&e.to_ascii_lowercase()))
        .unwrap_or(FileKind::Unknown)
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile { path: PathBuf, source: io::Error },
    #[error("malformed {kind} document {path}: {reason}")]
    MalformedDocument { path: PathBuf, kind: FileKind, reason: String },
    #[error("unsupported file kind for {path}")]
    UnsupportedKind { path: PathBuf },
}

/// Parse failure reported by an individual extractor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Malformed(pub String);

impl Malformed {
    pub fn new(msg: impl fmt::Display) -> Self {
        Malformed(msg.to_string())
    }
}

impl From<io::Error> for Malformed {
    fn from(e: io::Error) -> Self {
        Malformed(format!("asset write failed: {e}"))
    }
}

/// Text recognition for pages without a text layer.
pub trait OcrBackend: Send + Sync {
    fn identity(&self) -> String;
    fn ocr(&self, image: &[u8]) -> Result<String, String>;
}

/// Speech transcription for audio/video assets.
pub trait TranscriptionBackend: Send + Sync {
    fn identity(&self) -> String;
    fn transcribe(&self, media: &[u8]) -> Result<String, String>;
}

pub struct ExtractContext<'a> {
    pub path: &'a Path,
    pub bytes: &'a [u8],
    pub mode: ExtractionMode,
    pub kind: FileKind,
    pub ocr: Option<&'a dyn OcrBackend>,
    pub transcriber: Option<&'a dyn TranscriptionBackend>,
}

pub trait Extractor: Send + Sync {
    fn extract(&self, cx: &ExtractContext<'_>, out: &mut SampleBuilder) -> Result<(), Malformed>;
}

enum Segment {
    Text(String),
    Placeholder,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Accumulates text and assets for one document.
pub struct SampleBuilder {
    segments: Vec<Segment>,
    modalities: Vec<Modality>,
    placeholder: PlaceholderConfig,
    asset_dir: PathBuf,
    metadata: BTreeMap<String, String>,
}

impl SampleBuilder {
    pub fn new(placeholder: PlaceholderConfig, asset_dir: PathBuf) -> Self {
        Self { segments: Vec::new(), modalities: Vec::new(), placeholder, asset_dir, metadata: BTreeMap::new() }
    }

    fn tail(&self) -> Option<char> {
        for seg in self.segments.iter().rev() {
            match seg {
                Segment::Text(t) => {
                    if let Some(c) = t.chars().last() {
                        return Some(c);
                    }
                }
                Segment::Placeholder => return Some('>'),
            }
        }
        None
    }

    pub fn is_empty(&self) -> bool {
        self.tail().is_none()
    }

    pub fn has_content(&self) -> bool {
        !self.modalities.is_empty()
            || self.segments.iter().any(|s| matches!(s, Segment::Text(t) if !t.trim().is_empty()))
    }

    pub fn ends_with_whitespace(&self) -> bool {
        self.tail().is_none_or(char::is_whitespace)
    }

    /// Appends raw document text. Literal placeholder tokens in it are
    /// escaped when the sample is finished.
    pub fn push_text(&mut self, text: &str) {
        if text.is_empty() {
            return;
        }
        if let Some(Segment::Text(t)) = self.segments.last_mut() {
            t.push_str(text);
        } else {
            self.segments.push(Segment::Text(text.to_string()));
        }
    }

    pub fn push_char(&mut self, c: char) {
        let mut buf = [0u8; 4];
        self.push_text(c.encode_utf8(&mut buf));
    }

    /// Ends the current line unless already at a line start.
    pub fn newline(&mut self) {
        if !self.is_empty() && self.tail() != Some('\n') {
            self.trim_end_spaces();
            self.push_char('\n');
        }
    }

    /// Ensures a blank line separates what follows.
    pub fn blank_line(&mut self) {
        if self.is_empty() {
            return;
        }
        self.newline();
        let ends_blank = matches!(self.segments.last(), Some(Segment::Text(t)) if t.ends_with("\n\n"));
        if !ends_blank {
            self.push_char('\n');
        }
    }

    /// Inserts a space unless at a boundary already.
    pub fn space(&mut self) {
        if !self.ends_with_whitespace() {
            self.push_char(' ');
        }
    }

    pub fn trim_end_spaces(&mut self) {
        if let Some(Segment::Text(t)) = self.segments.last_mut() {
            let trimmed = t.trim_end_matches([' ', '\t']).len();
            t.truncate(trimmed);
        }
    }

    pub fn set_meta(&mut self, key: &str, value: impl Into<String>) {
        self.metadata.insert(key.to_string(), value.into());
    }

    pub fn modality_count(&self) -> usize {
        self.modalities.len()
    }

    /// Writes an embedded asset and inserts its placeholder at the current
    /// position.
    pub fn attach(&mut self, kind: ModalityKind, ext: &str, bytes: &[u8]) -> io::Result<()> {
        let ext: String = ext.chars().filter(char::is_ascii_alphanumeric).collect::<String>().to_ascii_lowercase();
        let ext = if ext.is_empty() { "bin".to_string() } else { ext };
        let path = self.asset_dir.join(format!("{}.{ext}", self.modalities.len()));
        write_asset(&path, bytes)?;
        self.space();
        self.segments.push(Segment::Placeholder);
        self.modalities.push(Modality::new(kind, path.to_string_lossy().into_owned()));
        Ok(())
    }

    pub fn finish(self, source_path: &Path, doc_id: String) -> MultimodalSample {
        let mut text = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => text.push_str(&self.placeholder.escape(t)),
                Segment::Placeholder => text.push_str(&self.placeholder.token),
            }
        }
        MultimodalSample {
            text: normalize_layout(&text),
            modalities: self.modalities,
            source_path: source_path.to_string_lossy().into_owned(),
            doc_id,
            metadata: self.metadata,
        }
    }
}

/// Trims trailing spaces per line, caps blank-line runs at one, trims the
/// ends of the text.
fn normalize_layout(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut blank_run = 0;
    for line in text.split('\n') {
        let line = line.trim_end();
        if line.is_empty() {
            blank_run += 1;
            if blank_run > 1 {
                continue;
            }
        } else {
            blank_run = 0;
        }
        out.push_str(line);
        out.push('\n');
    }
    out.trim_matches('\n').to_string()
}

/// Content-addressed paths make rewrites idempotent; the temp-and-rename
/// keeps concurrent writers from observing half-written files.
fn write_asset(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Ok(existing) = fs::read(path) {
        if existing == bytes {
            return Ok(());
        }
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = path.with_extension(format!("tmp{}-{n}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Media files become a single asset, optionally preceded by a transcript.
#[derive(Debug, Default, Clone, Copy)]
pub struct MediaExtractor;

impl Extractor for MediaExtractor {
    fn extract(&self, cx: &ExtractContext<'_>, out: &mut SampleBuilder) -> Result<(), Malformed> {
        let ext = cx.path.extension().and_then(|e| e.to_str()).unwrap_or("bin").to_ascii_lowercase();
        let kind = match ext.as_str() {
            "mp4" | "mov" | "mkv" | "avi" | "webm" => ModalityKind::Video,
            _ => ModalityKind::Audio,
        };
        match cx.transcriber {
            Some(t) => match t.transcribe(cx.bytes) {
                Ok(text) => {
                    out.push_text(&text);
                    out.newline();
                    out.set_meta("transcriber", t.identity());
                }
                Err(e) => out.set_meta("transcription_error", e),
            },
            None => out.set_meta("transcription", "unavailable"),
        }
        out.attach(kind, &ext, cx.bytes)?;
        Ok(())
    }
}

/// Maps file kinds to extractors and owns the shared extraction settings.
#[derive(Clone)]
pub struct ExtractorRegistry {
    extractors: HashMap<FileKind, Arc<dyn Extractor>>,
    placeholder: PlaceholderConfig,
    assets_root: PathBuf,
    ocr: Option<Arc<dyn OcrBackend>>,
    transcriber: Option<Arc<dyn TranscriptionBackend>>,
}

impl fmt::Debug for ExtractorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut kinds: Vec<_> = self.extractors.keys().collect();
        kinds.sort();
        f.debug_struct("ExtractorRegistry")
            .field("kinds", &kinds)
            .field("placeholder", &self.placeholder.token)
            .field("assets_root", &self.assets_root)
            .field("ocr", &self.ocr.as_ref().map(|o| o.identity()))
            .finish()
    }
}

impl ExtractorRegistry {
    /// Registry with every built-in extractor; assets go under
    /// `assets_root`.
    pub fn with_defaults(assets_root: impl Into<PathBuf>) -> Self {
        let mut r = Self {
            extractors: HashMap::new(),
            placeholder: PlaceholderConfig::default(),
            assets_root: assets_root.into(),
            ocr: None,
            transcriber: None,
        };
        r.register(FileKind::Pdf, Arc::new(PdfExtractor));
        r.register(FileKind::Docx, Arc::new(DocxExtractor));
        r.register(FileKind::Pptx, Arc::new(PptxExtractor));
        r.register(FileKind::Xlsx, Arc::new(XlsxExtractor));
        r.register(FileKind::Csv, Arc::new(CsvExtractor));
        r.register(FileKind::Txt, Arc::new(TxtExtractor));
        r.register(FileKind::Md, Arc::new(MarkdownExtractor));
        r.register(FileKind::Html, Arc::new(HtmlExtractor));
        r.register(FileKind::Eml, Arc::new(EmlExtractor));
        r.register(FileKind::Media, Arc::new(MediaExtractor));
        r
    }

    pub fn register(&mut self, kind: FileKind, extractor: Arc<dyn Extractor>) {
        self.extractors.insert(kind, extractor);
    }

    pub fn with_placeholder(mut self, placeholder: PlaceholderConfig) -> Self {
        self.placeholder = placeholder;
        self
    }

    pub fn with_ocr(mut self, ocr: Arc<dyn OcrBackend>) -> Self {
        self.ocr = Some(ocr);
        self
    }

    pub fn with_transcriber(mut self, t: Arc<dyn TranscriptionBackend>) -> Self {
        self.transcriber = Some(t);
        self
    }

    pub fn placeholder(&self) -> &PlaceholderConfig {
        &self.placeholder
    }

    pub fn assets_root(&self) -> &Path {
        &self.assets_root
    }

    pub fn supports(&self, kind: FileKind) -> bool {
        self.extractors.contains_key(&kind)
    }

    pub fn extract(&self, path: &Path, mode: ExtractionMode) -> Result<MultimodalSample, ExtractError> {
        let kind = detect_kind(path);
        let extractor = self
            .extractors
            .get(&kind)
            .ok_or_else(|| ExtractError::UnsupportedKind { path: path.to_path_buf() })?;
        let bytes = fs::read(path).map_err(|source| ExtractError::UnreadableFile { path: path.to_path_buf(), source })?;
        let doc_id = derive_doc_id(&bytes, mode);
        let mut out = SampleBuilder::new(self.placeholder.clone(), self.assets_root.join(&doc_id));
        out.set_meta("file_type", kind.as_str());
        out.set_meta("mode", mode.as_str());

        let cx = ExtractContext {
            path,
            bytes: &bytes,
            mode,
            kind,
            ocr: self.ocr.as_deref(),
            transcriber: self.transcriber.as_deref(),
        };
        if let Err(Malformed(reason)) = extractor.extract(&cx, &mut out) {
            if !out.has_content() {
                return Err(ExtractError::MalformedDocument { path: path.to_path_buf(), kind, reason });
            }
            out.set_meta("partial", "true");
            out.set_meta("error", reason);
        }
        let sample = out.finish(path, doc_id);
        debug_assert!(validate_sample(&sample, &self.placeholder).is_ok());
        Ok(sample)
    }
}

/// Resolves a relationship target against the part that references it,
/// following zip-internal path rules.
pub(crate) fn resolve_part(base_part: &str, target: &str) -> String {
    if let Some(abs) = target.strip_prefix('/') {
        return abs.to_string();
    }
    let mut parts: Vec<&str> = base_part.split('/').collect();
    parts.pop();
    for piece in target.split('/') {
        match piece {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            p => parts.push(p),
        }
    }
    parts.join("/")
}

/// Best-effort extension for an embedded asset.
pub(crate) fn extension_of(name: &str) -> &str {
    Path::new(name).extension().and_then(|e| e.to_str()).unwrap_or("bin")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_table() {
        assert_eq!(detect_kind(Path::new("report.docx")), FileKind::Docx);
        assert_eq!(detect_kind(Path::new("notes.markdown")), FileKind::Md);
        assert_eq!(detect_kind(Path::new("blob.xyz")), FileKind::Unknown);
        assert_eq!(detect_kind(Path::new("UPPER.PDF")), FileKind::Pdf);
        assert_eq!(detect_kind(Path::new("noext")), FileKind::Unknown);
        assert_eq!(detect_kind(Path::new("talk.mp3")), FileKind::Media);
    }

    #[test]
    fn every_kind_but_unknown_is_registered() {
        let r = ExtractorRegistry::with_defaults("/tmp/unused");
        for kind in FileKind::TEXT_BEARING.iter().chain([FileKind::Media].iter()) {
            assert!(r.supports(*kind), "{kind} missing");
        }
        assert!(!r.supports(FileKind::Unknown));
    }

    #[test]
    fn part_resolution() {
        assert_eq!(resolve_part("word/document.xml", "media/image1.png"), "word/media/image1.png");
        assert_eq!(resolve_part("xl/worksheets/sheet1.xml", "../drawings/drawing1.xml"), "xl/drawings/drawing1.xml");
        assert_eq!(resolve_part("ppt/slides/slide1.xml", "/ppt/media/a.jpeg"), "ppt/media/a.jpeg");
    }

    #[test]
    fn layout_normalization() {
        assert_eq!(normalize_layout("\n\na  \n\n\n\nb\n\n"), "a\n\nb");
    }

    #[test]
    fn builder_escapes_literal_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = SampleBuilder::new(PlaceholderConfig::default(), dir.path().to_path_buf());
        b.push_text("the token <attach");
        b.push_text("ment> appears literally");
        b.attach(ModalityKind::Image, "png", b"fake").unwrap();
        let s = b.finish(Path::new("x.txt"), "id".into());
        assert_eq!(PlaceholderConfig::default().count_in(&s.text), 1);
        assert_eq!(s.modalities.len(), 1);
        assert!(validate_sample(&s, &PlaceholderConfig::default()).is_ok());
    }
}
