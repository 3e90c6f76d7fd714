//! Plain text, Markdown, HTML, e-mail and CSV extraction.

use std::borrow::Cow;
use std::fs;
use std::path::Path;

use base64::Engine;
use mail_parser::{MessageParser, MimeHeaders};
use pulldown_cmark::{Event, Options, Parser, Tag, TagEnd};
use scraper::{Html, Node};

use super::{extension_of, ExtractContext, Extractor, Malformed, SampleBuilder};
use crate::sample::ModalityKind;

fn decode_utf8(bytes: &[u8], out: &mut SampleBuilder) -> String {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let text = match String::from_utf8_lossy(bytes) {
        Cow::Borrowed(s) => s.to_string(),
        Cow::Owned(s) => {
            out.set_meta("lossy_utf8", "true");
            s
        }
    };
    text.replace("\r\n", "\n").replace('\r', "\n")
}

/// Reads an image referenced from a document: a `data:` URI or a path
/// relative to the document. Remote URLs are not fetched.
fn load_reference(src: &str, base: &Path) -> Option<(String, Vec<u8>)> {
    if let Some(rest) = src.strip_prefix("data:") {
        let (meta, payload) = rest.split_once(',')?;
        let mime = meta.split(';').next().unwrap_or("");
        let ext = mime.rsplit('/').next().filter(|e| !e.is_empty()).unwrap_or("bin").to_string();
        let bytes = if meta.ends_with(";base64") {
            base64::engine::general_purpose::STANDARD.decode(payload.trim()).ok()?
        } else {
            payload.as_bytes().to_vec()
        };
        return Some((ext, bytes));
    }
    if src.contains("://") || src.starts_with("//") {
        return None;
    }
    let path = src.split(['?', '#']).next()?;
    let full = base.parent().unwrap_or(Path::new(".")).join(path);
    let bytes = fs::read(&full).ok()?;
    Some((extension_of(path).to_string(), bytes))
}

#[derive(Debug, Default, Clone, Copy)]
pub struct TxtExtractor;

impl Extractor for TxtExtractor {
    fn extract(&self, cx: &ExtractContext<'_>, out: &mut SampleBuilder) -> Result<(), Malformed> {
        let text = decode_utf8(cx.bytes, out);
        out.push_text(&text);
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct MarkdownExtractor;

impl Extractor for MarkdownExtractor {
    fn extract(&self, cx: &ExtractContext<'_>, out: &mut SampleBuilder) -> Result<(), Malformed> {
        let text = decode_utf8(cx.bytes, out);
        let mut suppress_alt = false;
        let mut cell = 0usize;
        for event in Parser::new_ext(&text, Options::ENABLE_TABLES | Options::ENABLE_STRIKETHROUGH) {
            match event {
                Event::Start(Tag::Image { dest_url, .. }) => {
                    if let Some((ext, bytes)) = load_reference(&dest_url, cx.path) {
                        out.attach(ModalityKind::Image, &ext, &bytes)?;
                        suppress_alt = true;
                    }
                }
                Event::End(TagEnd::Image) => suppress_alt = false,
                Event::Start(Tag::TableRow | Tag::TableHead) => cell = 0,
                Event::Start(Tag::TableCell) => {
                    if cell > 0 {
                        out.push_text(" | ");
                    }
                    cell += 1;
                }
                Event::Start(Tag::Item) => out.newline(),
                Event::End(
                    TagEnd::Heading(_)
                    | TagEnd::Paragraph
                    | TagEnd::Item
                    | TagEnd::CodeBlock
                    | TagEnd::TableRow
                    | TagEnd::TableHead
                    | TagEnd::BlockQuote(_),
                )
                | Event::Rule
                | Event::HardBreak => out.newline(),
                Event::SoftBreak => out.newline(),
                Event::Text(t) | Event::Code(t) if !suppress_alt => out.push_text(&t),
                _ => {}
            }
        }
        Ok(())
    }
}

/// Whitespace-collapsing writer for HTML flow content.
struct Flow<'o> {
    out: &'o mut SampleBuilder,
    pending_space: bool,
    missing: usize,
}

const SKIPPED: [&str; 7] = ["script", "style", "head", "noscript", "template", "svg", "iframe"];
const BLOCKS: [&str; 28] = [
    "p", "div", "h1", "h2", "h3", "h4", "h5", "h6", "li", "ul", "ol", "section", "article", "header", "footer",
    "nav", "aside", "main", "table", "thead", "tbody", "blockquote", "pre", "figure", "figcaption", "dl", "dt",
    "dd",
];

impl Flow<'_> {
    fn text(&mut self, t: &str, pre: bool) {
        if pre {
            self.out.push_text(t);
            self.pending_space = false;
            return;
        }
        if t.starts_with(char::is_whitespace) {
            self.pending_space = true;
        }
        for (i, word) in t.split_whitespace().enumerate() {
            if (i > 0 || self.pending_space) && !self.out.ends_with_whitespace() {
                self.out.push_char(' ');
            }
            self.out.push_text(word);
            self.pending_space = false;
        }
        if t.ends_with(char::is_whitespace) {
            self.pending_space = true;
        }
    }

    fn block_break(&mut self) {
        self.out.newline();
        self.pending_space = false;
    }

    fn walk(&mut self, node: ego_tree::NodeRef<'_, Node>, base: Option<&Path>, pre: bool) -> Result<(), Malformed> {
        match node.value() {
            Node::Text(t) => self.text(t, pre),
            Node::Element(el) => {
                let name = el.name();
                if SKIPPED.contains(&name) {
                    return Ok(());
                }
                match name {
                    "br" => self.block_break(),
                    "hr" => self.block_break(),
                    "img" => {
                        let loaded = base.zip(el.attr("src")).and_then(|(b, src)| load_reference(src, b));
                        match loaded {
                            Some((ext, bytes)) => {
                                self.out.attach(ModalityKind::Image, &ext, &bytes)?;
                                self.pending_space = true;
                            }
                            None => self.missing += 1,
                        }
                    }
                    "td" | "th" => {
                        let prior_cell = node.prev_siblings().any(|s| {
                            s.value().as_element().is_some_and(|e| matches!(e.name(), "td" | "th"))
                        });
                        if prior_cell {
                            self.out.trim_end_spaces();
                            self.out.push_text(" | ");
                        }
                        self.pending_space = false;
                        self.walk_children(node, base, pre)?;
                    }
                    "tr" => {
                        self.block_break();
                        self.walk_children(node, base, pre)?;
                        self.block_break();
                    }
                    _ if BLOCKS.contains(&name) => {
                        self.block_break();
                        self.walk_children(node, base, pre || name == "pre")?;
                        self.block_break();
                    }
                    _ => self.walk_children(node, base, pre)?,
                }
            }
            Node::Document | Node::Fragment => self.walk_children(node, base, pre)?,
            _ => {}
        }
        Ok(())
    }

    fn walk_children(
        &mut self,
        node: ego_tree::NodeRef<'_, Node>,
        base: Option<&Path>,
        pre: bool,
    ) -> Result<(), Malformed> {
        for c in node.children() {
            self.walk(c, base, pre)?;
        }
        Ok(())
    }
}

/// Renders HTML into `out`. Images resolve against `base` when given.
fn html_into(source: &str, base: Option<&Path>, out: &mut SampleBuilder) -> Result<usize, Malformed> {
    let doc = Html::parse_document(source);
    if let Some(title) = doc
        .tree
        .root()
        .descendants()
        .find(|n| n.value().as_element().is_some_and(|e| e.name() == "title"))
        .and_then(|n| n.first_child())
        .and_then(|t| t.value().as_text().map(|t| t.trim().to_string()))
        .filter(|t| !t.is_empty())
    {
        out.set_meta("title", title);
    }
    let mut flow = Flow { out, pending_space: false, missing: 0 };
    flow.walk(doc.tree.root(), base, false)?;
    Ok(flow.missing)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct HtmlExtractor;

impl Extractor for HtmlExtractor {
    fn extract(&self, cx: &ExtractContext<'_>, out: &mut SampleBuilder) -> Result<(), Malformed> {
        let text = decode_utf8(cx.bytes, out);
        let missing = html_into(&text, Some(cx.path), out)?;
        if missing > 0 {
            out.set_meta("missing_assets", missing.to_string());
        }
        Ok(())
    }
}

fn header_block_end(bytes: &[u8]) -> Option<usize> {
    let lf = bytes.windows(2).position(|w| w == b"\n\n");
    let crlf = bytes.windows(4).position(|w| w == b"\r\n\r\n");
    match (lf, crlf) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

fn looks_like_header(line: &[u8]) -> bool {
    match line.iter().position(|&b| b == b':') {
        Some(0) | None => false,
        Some(i) => line[..i].iter().all(|&b| b.is_ascii_graphic()),
    }
}

fn modality_for(ctype: &str) -> ModalityKind {
    match ctype {
        "image" => ModalityKind::Image,
        "audio" => ModalityKind::Audio,
        "video" => ModalityKind::Video,
        _ => ModalityKind::Other,
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct EmlExtractor;

impl Extractor for EmlExtractor {
    fn extract(&self, cx: &ExtractContext<'_>, out: &mut SampleBuilder) -> Result<(), Malformed> {
        let first_line = cx.bytes.split(|&b| b == b'\n').next().unwrap_or_default();
        if !looks_like_header(first_line) {
            return Err(Malformed::new("message does not start with a header field"));
        }
        if header_block_end(cx.bytes).is_none() {
            return Err(Malformed::new("no blank line between headers and body"));
        }
        let msg = MessageParser::default().parse(cx.bytes).ok_or_else(|| Malformed::new("unparseable message"))?;
        for (key, header) in [("subject", "Subject"), ("from", "From"), ("to", "To"), ("date", "Date")] {
            if let Some(raw) = msg.header_raw(header) {
                let v = raw.split_whitespace().collect::<Vec<_>>().join(" ");
                out.set_meta(key, v);
            }
        }
        for i in 0..msg.text_body_count() {
            if let Some(body) = msg.body_text(i) {
                out.push_text(&body.replace("\r\n", "\n"));
                out.newline();
            }
        }
        for att in msg.attachments() {
            let (ctype, subtype) = att
                .content_type()
                .map(|c| (c.ctype().to_ascii_lowercase(), c.subtype().map(str::to_ascii_lowercase)))
                .unwrap_or_else(|| ("application".into(), None));
            let ext = att
                .attachment_name()
                .map(|n| extension_of(n).to_string())
                .or(subtype)
                .unwrap_or_else(|| "bin".into());
            out.attach(modality_for(&ctype), &ext, att.contents())?;
            out.newline();
        }
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CsvExtractor;

impl Extractor for CsvExtractor {
    fn extract(&self, cx: &ExtractContext<'_>, out: &mut SampleBuilder) -> Result<(), Malformed> {
        let tsv = cx.path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv"));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .delimiter(if tsv { b'\t' } else { b',' })
            .from_reader(cx.bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(cx.bytes));
        let mut rows = 0usize;
        for record in reader.records() {
            let record = record.map_err(|e| Malformed::new(format!("row {}: {e}", rows + 1)))?;
            let cells: Vec<String> = record.iter().map(|c| c.split_whitespace().collect::<Vec<_>>().join(" ")).collect();
            out.push_text(&cells.join(" | "));
            out.newline();
            rows += 1;
        }
        out.set_meta("rows", rows.to_string());
        Ok(())
    }
}
