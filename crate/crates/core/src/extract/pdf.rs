//! PDF text-layer extraction with a small content-stream interpreter.
//!
//! Text spans and image draws are positioned in user space, then ordered
//! top-to-bottom (lines merged within a small vertical tolerance) and
//! left-to-right. Pages without any text layer are handed to OCR in default
//! mode; fast mode never runs OCR.

use std::collections::HashMap;

use lopdf::content::Content;
use lopdf::Encoding;
use lopdf::{Dictionary, Document, Object, ObjectId, Stream};

use super::{ExtractContext, Extractor, Malformed, SampleBuilder};
use crate::sample::{ExtractionMode, ModalityKind};

/// Vertical distance (points) under which two spans share a line.
const LINE_TOLERANCE: f64 = 2.0;
/// TJ adjustments more negative than this (thousandths of an em) are a
/// word gap.
const TJ_SPACE_THRESHOLD: f64 = -200.0;
const MAX_FORM_DEPTH: usize = 8;

type Matrix = [f64; 6];

const IDENTITY: Matrix = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];

/// `a` applied first, then `b`.
fn mul(a: &Matrix, b: &Matrix) -> Matrix {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
        a[4] * b[0] + a[5] * b[2] + b[4],
        a[4] * b[1] + a[5] * b[3] + b[5],
    ]
}

fn translate(tx: f64, ty: f64) -> Matrix {
    [1.0, 0.0, 0.0, 1.0, tx, ty]
}

#[derive(Debug, Clone)]
pub(crate) struct ImageAsset {
    pub ext: &'static str,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
enum ItemKind {
    Text { text: String, end_x: f64, size: f64 },
    Image(ImageAsset),
}

#[derive(Debug, Clone)]
struct Item {
    x: f64,
    y: f64,
    seq: usize,
    kind: ItemKind,
}

struct FontInfo<'a> {
    encoding: Option<Encoding<'a>>,
    two_byte: bool,
    first_char: i64,
    widths: Vec<f64>,
}

impl FontInfo<'_> {
    fn decode(&self, bytes: &[u8]) -> String {
        if let Some(enc) = &self.encoding {
            if let Ok(s) = Document::decode_text(enc, bytes) {
                return s;
            }
        }
        bytes.iter().map(|&b| b as char).collect()
    }

    /// Glyph advances in text space units (thousandths of an em).
    fn advances(&self, bytes: &[u8]) -> Vec<(f64, bool)> {
        if self.two_byte {
            return bytes.chunks(2).map(|_| (500.0, false)).collect();
        }
        bytes
            .iter()
            .map(|&b| {
                let w = usize::try_from(i64::from(b) - self.first_char)
                    .ok()
                    .and_then(|i| self.widths.get(i).copied())
                    .unwrap_or(500.0);
                (w, b == b' ')
            })
            .collect()
    }
}

fn font_info<'a>(doc: &'a Document, dict: &'a Dictionary) -> FontInfo<'a> {
    let two_byte = matches!(dict.get(b"Subtype").and_then(Object::as_name), Ok(b"Type0"));
    let first_char = dict.get(b"FirstChar").and_then(Object::as_i64).unwrap_or(0);
    let widths = dict
        .get_deref(b"Widths", doc)
        .and_then(Object::as_array)
        .map(|a| a.iter().map(|w| num(doc, w).unwrap_or(500.0)).collect())
        .unwrap_or_default();
    FontInfo { encoding: dict.get_font_encoding(doc).ok(), two_byte, first_char, widths }
}

fn num(doc: &Document, o: &Object) -> Option<f64> {
    let o = doc.dereference(o).ok()?.1;
    match o {
        Object::Integer(i) => Some(*i as f64),
        Object::Real(r) => Some(f64::from(*r)),
        _ => None,
    }
}

fn deref_dict<'a>(doc: &'a Document, o: &'a Object) -> Option<&'a Dictionary> {
    doc.dereference(o).ok()?.1.as_dict().ok()
}

/// Resource dictionaries visible at one point, innermost first.
#[derive(Clone)]
struct Resources<'a> {
    dicts: Vec<&'a Dictionary>,
}

impl<'a> Resources<'a> {
    fn for_page(doc: &'a Document, page_id: ObjectId) -> Self {
        let mut dicts = Vec::new();
        if let Ok((inline, ids)) = doc.get_page_resources(page_id) {
            dicts.extend(inline);
            dicts.extend(ids.into_iter().filter_map(|id| doc.get_dictionary(id).ok()));
        }
        Self { dicts }
    }

    fn nested(&self, doc: &'a Document, stream: &'a Stream) -> Self {
        let mut dicts = Vec::new();
        if let Ok(r) = stream.dict.get(b"Resources") {
            dicts.extend(deref_dict(doc, r));
        }
        dicts.extend(self.dicts.iter().copied());
        Self { dicts }
    }

    fn lookup(&self, doc: &'a Document, category: &[u8], name: &[u8]) -> Option<&'a Object> {
        self.dicts.iter().find_map(|d| {
            let cat = deref_dict(doc, d.get(category).ok()?)?;
            let entry = cat.get(name).ok()?;
            Some(doc.dereference(entry).ok()?.1)
        })
    }
}

#[derive(Clone, Copy)]
struct TextState {
    size: f64,
    leading: f64,
    char_spacing: f64,
    word_spacing: f64,
    h_scale: f64,
}

impl Default for TextState {
    fn default() -> Self {
        Self { size: 0.0, leading: 0.0, char_spacing: 0.0, word_spacing: 0.0, h_scale: 1.0 }
    }
}

struct Interpreter<'a> {
    doc: &'a Document,
    fonts: HashMap<Vec<u8>, FontInfo<'a>>,
    items: Vec<Item>,
    seq: usize,
}

struct Frame<'a> {
    ctm: Matrix,
    res: Resources<'a>,
}

impl<'a> Interpreter<'a> {
    fn font(&mut self, res: &Resources<'a>, name: &[u8]) -> Option<&FontInfo<'a>> {
        if !self.fonts.contains_key(name) {
            let dict = res.lookup(self.doc, b"Font", name)?.as_dict().ok()?;
            self.fonts.insert(name.to_vec(), font_info(self.doc, dict));
        }
        self.fonts.get(name)
    }

    fn push(&mut self, x: f64, y: f64, kind: ItemKind) {
        self.items.push(Item { x, y, seq: self.seq, kind });
        self.seq += 1;
    }

    fn run(&mut self, content: &[u8], frame: Frame<'a>, depth: usize) -> Result<(), Malformed> {
        let ops = Content::decode(content).map_err(|e| Malformed::new(format!("content stream: {e}")))?;
        let mut ctm = frame.ctm;
        let res = frame.res;
        let mut stack: Vec<Matrix> = Vec::new();
        let mut ts = TextState::default();
        let mut font: Option<Vec<u8>> = None;
        let mut tm = IDENTITY;
        let mut tlm = IDENTITY;
        let doc = self.doc;

        for op in &ops.operations {
            let f = |i: usize| op.operands.get(i).and_then(|o| num(doc, o)).unwrap_or(0.0);
            match op.operator.as_str() {
                "q" => stack.push(ctm),
                "Q" => ctm = stack.pop().unwrap_or(frame.ctm),
                "cm" => ctm = mul(&[f(0), f(1), f(2), f(3), f(4), f(5)], &ctm),
                "BT" => {
                    tm = IDENTITY;
                    tlm = IDENTITY;
                }
                "Tf" => {
                    font = op.operands.first().and_then(|o| o.as_name().ok()).map(<[u8]>::to_vec);
                    ts.size = f(1);
                }
                "TL" => ts.leading = f(0),
                "Tc" => ts.char_spacing = f(0),
                "Tw" => ts.word_spacing = f(0),
                "Tz" => ts.h_scale = f(0) / 100.0,
                "Td" => {
                    tlm = mul(&translate(f(0), f(1)), &tlm);
                    tm = tlm;
                }
                "TD" => {
                    ts.leading = -f(1);
                    tlm = mul(&translate(f(0), f(1)), &tlm);
                    tm = tlm;
                }
                "Tm" => {
                    tlm = [f(0), f(1), f(2), f(3), f(4), f(5)];
                    tm = tlm;
                }
                "T*" => {
                    tlm = mul(&translate(0.0, -ts.leading), &tlm);
                    tm = tlm;
                }
                "Tj" | "'" | "\"" => {
                    if op.operator != "Tj" {
                        if op.operator == "\"" {
                            ts.word_spacing = f(0);
                            ts.char_spacing = f(1);
                        }
                        tlm = mul(&translate(0.0, -ts.leading), &tlm);
                        tm = tlm;
                    }
                    if let Some(Object::String(bytes, _)) = op.operands.last() {
                        self.show(&res, font.as_deref(), &ts, &mut tm, &ctm, &[Shown::Str(bytes)]);
                    }
                }
                "TJ" => {
                    if let Some(Object::Array(arr)) = op.operands.first() {
                        let parts: Vec<Shown<'_>> = arr
                            .iter()
                            .filter_map(|o| match o {
                                Object::String(b, _) => Some(Shown::Str(b)),
                                other => num(self.doc, other).map(Shown::Adjust),
                            })
                            .collect();
                        self.show(&res, font.as_deref(), &ts, &mut tm, &ctm, &parts);
                    }
                }
                "Do" => {
                    let Some(name) = op.operands.first().and_then(|o| o.as_name().ok()) else { continue };
                    let Some(stream) = res.lookup(self.doc, b"XObject", name).and_then(|o| o.as_stream().ok())
                    else {
                        continue;
                    };
                    match stream.dict.get(b"Subtype").and_then(Object::as_name) {
                        Ok(b"Image") => {
                            if let Some(asset) = export_image(stream) {
                                // Top-left corner of the unit square in device space.
                                let (x, y) = (ctm[4].min(ctm[4] + ctm[2]), ctm[5].max(ctm[5] + ctm[3]));
                                self.push(x, y, ItemKind::Image(asset));
                            }
                        }
                        Ok(b"Form") if depth < MAX_FORM_DEPTH => {
                            let m = stream
                                .dict
                                .get(b"Matrix")
                                .and_then(Object::as_array)
                                .ok()
                                .filter(|a| a.len() == 6)
                                .map(|a| {
                                    let v: Vec<f64> = a.iter().map(|o| num(self.doc, o).unwrap_or(0.0)).collect();
                                    [v[0], v[1], v[2], v[3], v[4], v[5]]
                                })
                                .unwrap_or(IDENTITY);
                            let body = stream.decompressed_content().unwrap_or_else(|_| stream.content.clone());
                            let nested = Frame { ctm: mul(&m, &ctm), res: res.nested(self.doc, stream) };
                            self.run(&body, nested, depth + 1)?;
                        }
                        _ => {}
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn show(
        &mut self,
        res: &Resources<'a>,
        font: Option<&[u8]>,
        ts: &TextState,
        tm: &mut Matrix,
        ctm: &Matrix,
        parts: &[Shown<'_>],
    ) {
        let Some(font_name) = font else { return };
        let Some(info) = self.font(res, font_name) else { return };
        let start = mul(tm, ctm);
        let mut text = String::new();
        let mut advance = 0.0;
        for part in parts {
            match part {
                Shown::Str(bytes) => {
                    text.push_str(&info.decode(bytes));
                    for (w, is_space) in info.advances(bytes) {
                        let ws = if is_space { ts.word_spacing } else { 0.0 };
                        advance += (w / 1000.0 * ts.size + ts.char_spacing + ws) * ts.h_scale;
                    }
                }
                Shown::Adjust(n) => {
                    advance -= n / 1000.0 * ts.size * ts.h_scale;
                    if *n < TJ_SPACE_THRESHOLD && !text.is_empty() && !text.ends_with(' ') {
                        text.push(' ');
                    }
                }
            }
        }
        *tm = mul(&translate(advance, 0.0), tm);
        let end = mul(tm, ctm);
        let size = ts.size * (start[2].powi(2) + start[3].powi(2)).sqrt();
        let text: String = text.chars().filter(|c| !c.is_control() || *c == '\t').collect();
        if !text.trim().is_empty() {
            self.push(start[4], start[5], ItemKind::Text { text, end_x: end[4], size });
        }
    }
}

enum Shown<'b> {
    Str(&'b [u8]),
    Adjust(f64),
}

fn name_of(o: &Object) -> Option<&[u8]> {
    match o {
        Object::Name(n) => Some(n),
        Object::Array(a) => a.first().and_then(|f| f.as_name().ok()),
        _ => None,
    }
}

/// Encoded images are copied verbatim; raw 8-bit gray/RGB rasters are
/// re-encoded as PNG; anything else is kept as decoded bytes.
pub(crate) fn export_image(stream: &Stream) -> Option<ImageAsset> {
    let filters = stream.filters().unwrap_or_default();
    match filters.last().copied() {
        Some(b"DCTDecode") if filters.len() == 1 => {
            return Some(ImageAsset { ext: "jpg", bytes: stream.content.clone() });
        }
        Some(b"JPXDecode") if filters.len() == 1 => {
            return Some(ImageAsset { ext: "jp2", bytes: stream.content.clone() });
        }
        _ => {}
    }
    let raw = if filters.is_empty() { stream.content.clone() } else { stream.decompressed_content().ok()? };
    let dict = &stream.dict;
    let width = dict.get(b"Width").and_then(Object::as_i64).ok()?;
    let height = dict.get(b"Height").and_then(Object::as_i64).ok()?;
    let bpc = dict.get(b"BitsPerComponent").and_then(Object::as_i64).unwrap_or(8);
    let channels = match dict.get(b"ColorSpace").ok().and_then(name_of) {
        Some(b"DeviceRGB") => Some(3u32),
        Some(b"DeviceGray") => Some(1u32),
        _ => None,
    };
    if let (Some(ch), 8, Ok(w), Ok(h)) = (channels, bpc, u32::try_from(width), u32::try_from(height)) {
        if raw.len() == (w as usize) * (h as usize) * (ch as usize) {
            if let Some(png) = encode_png(w, h, ch, &raw) {
                return Some(ImageAsset { ext: "png", bytes: png });
            }
        }
    }
    Some(ImageAsset { ext: "bin", bytes: raw })
}

/// Encodes 8-bit grayscale (1 channel) or RGB (3 channels) pixels.
pub fn encode_png(width: u32, height: u32, channels: u32, pixels: &[u8]) -> Option<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(if channels == 3 { png::ColorType::Rgb } else { png::ColorType::Grayscale });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().ok()?;
        writer.write_image_data(pixels).ok()?;
    }
    Some(out)
}

/// Groups items into lines (top to bottom) and orders each line left to
/// right.
fn layout(mut items: Vec<Item>) -> Vec<Vec<Item>> {
    items.sort_by(|a, b| b.y.total_cmp(&a.y).then(a.x.total_cmp(&b.x)).then(a.seq.cmp(&b.seq)));
    let mut lines: Vec<Vec<Item>> = Vec::new();
    let mut line_y = f64::NAN;
    for item in items {
        let same_line = (line_y - item.y).abs() <= LINE_TOLERANCE;
        match lines.last_mut() {
            Some(line) if same_line => line.push(item),
            _ => {
                line_y = item.y;
                lines.push(vec![item]);
            }
        }
    }
    for line in &mut lines {
        line.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.seq.cmp(&b.seq)));
    }
    lines
}

fn emit_lines(lines: Vec<Vec<Item>>, out: &mut SampleBuilder) -> Result<(), Malformed> {
    for line in lines {
        let mut prev_end: Option<(f64, f64)> = None;
        for item in line {
            match item.kind {
                ItemKind::Text { text, end_x, size } => {
                    if let Some((pe, psize)) = prev_end {
                        let gap = item.x - pe;
                        if gap > 0.15 * psize.max(size) && !text.starts_with(' ') {
                            out.space();
                        }
                    }
                    out.push_text(&text);
                    prev_end = Some((end_x, size));
                }
                ItemKind::Image(asset) => {
                    out.attach(ModalityKind::Image, asset.ext, &asset.bytes)?;
                    out.space();
                    prev_end = None;
                }
            }
        }
        out.newline();
    }
    Ok(())
}

#[derive(Debug, Default, Clone, Copy)]
pub struct PdfExtractor;

impl Extractor for PdfExtractor {
    fn extract(&self, cx: &ExtractContext<'_>, out: &mut SampleBuilder) -> Result<(), Malformed> {
        let doc = Document::load_mem(cx.bytes).map_err(|e| Malformed::new(format!("pdf: {e}")))?;
        let pages = doc.get_pages();
        out.set_meta("pages", pages.len().to_string());
        let mut textless: Vec<u32> = Vec::new();
        let mut ocr_used = false;
        let mut interp = Interpreter { doc: &doc, fonts: HashMap::new(), items: Vec::new(), seq: 0 };

        for (&page_no, &page_id) in &pages {
            interp.fonts.clear();
            interp.items.clear();
            let content = doc.get_page_content(page_id);
            let frame = Frame { ctm: IDENTITY, res: Resources::for_page(&doc, page_id) };
            interp.run(&content, frame, 0).map_err(|Malformed(m)| Malformed(format!("page {page_no}: {m}")))?;
            let items = std::mem::take(&mut interp.items);
            let has_text = items.iter().any(|i| matches!(i.kind, ItemKind::Text { .. }));
            if !has_text {
                textless.push(page_no);
            }

            out.blank_line();
            match (has_text, cx.mode, cx.ocr) {
                (false, ExtractionMode::Default, Some(ocr)) => {
                    for line in layout(items) {
                        for item in line {
                            if let ItemKind::Image(asset) = item.kind {
                                match ocr.ocr(&asset.bytes) {
                                    Ok(text) => {
                                        out.push_text(text.trim());
                                        out.newline();
                                        ocr_used = true;
                                    }
                                    Err(e) => out.set_meta("ocr_error", e),
                                }
                                out.attach(ModalityKind::Image, asset.ext, &asset.bytes)?;
                                out.newline();
                            }
                        }
                    }
                }
                _ => emit_lines(layout(items), out)?,
            }
        }

        if !textless.is_empty() {
            out.set_meta("no_text_layer", "true");
            let list: Vec<String> = textless.iter().map(u32::to_string).collect();
            out.set_meta("no_text_layer_pages", list.join(","));
            if cx.mode == ExtractionMode::Default {
                match (cx.ocr, ocr_used) {
                    (None, _) => out.set_meta("ocr", "unavailable"),
                    (Some(o), true) => out.set_meta("ocr", o.identity()),
                    (Some(_), false) => {}
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_composition() {
        let m = mul(&translate(10.0, 5.0), &[2.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert_eq!(m, [2.0, 0.0, 0.0, 2.0, 20.0, 10.0]);
    }

    #[test]
    fn layout_merges_nearby_baselines() {
        let t = |x: f64, y: f64, s: &str, seq| Item {
            x,
            y,
            seq,
            kind: ItemKind::Text { text: s.into(), end_x: x + 10.0, size: 10.0 },
        };
        let lines = layout(vec![t(100.0, 700.0, "b", 0), t(50.0, 701.5, "a", 1), t(50.0, 680.0, "c", 2)]);
        let texts: Vec<Vec<String>> = lines
            .iter()
            .map(|l| {
                l.iter()
                    .map(|i| match &i.kind {
                        ItemKind::Text { text, .. } => text.clone(),
                        ItemKind::Image(_) => String::new(),
                    })
                    .collect()
            })
            .collect();
        assert_eq!(texts, vec![vec!["a".to_string(), "b".to_string()], vec!["c".to_string()]]);
    }

    #[test]
    fn png_roundtrip_header() {
        let png = encode_png(2, 2, 1, &[0, 64, 128, 255]).unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    }
}
