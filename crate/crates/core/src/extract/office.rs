//! DOCX, PPTX and XLSX extraction (OOXML zip packages).

use std::collections::HashMap;
use std::io::{Cursor, Read};

use roxmltree::{Document as Xml, Node};

use super::{extension_of, resolve_part, ExtractContext, Extractor, Malformed, SampleBuilder};
use crate::sample::ModalityKind;

const R_NS: &str = "http://schemas.openxmlformats.org/officeDocument/2006/relationships";

type Archive<'a> = zip::ZipArchive<Cursor<&'a [u8]>>;

fn open(bytes: &[u8]) -> Result<Archive<'_>, Malformed> {
    zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| Malformed::new(format!("not a zip package: {e}")))
}

fn read_bytes(zip: &mut Archive<'_>, name: &str) -> Result<Vec<u8>, Malformed> {
    let mut f = zip.by_name(name).map_err(|e| Malformed::new(format!("{name}: {e}")))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Malformed::new(format!("{name}: {e}")))?;
    Ok(buf)
}

fn read_string(zip: &mut Archive<'_>, name: &str) -> Result<String, Malformed> {
    let bytes = read_bytes(zip, name)?;
    String::from_utf8(bytes).map_err(|_| Malformed::new(format!("{name}: not UTF-8")))
}

fn parse<'t>(text: &'t str, name: &str) -> Result<Xml<'t>, Malformed> {
    Xml::parse(text).map_err(|e| Malformed::new(format!("{name}: {e}")))
}

fn rels_path(part: &str) -> String {
    match part.rsplit_once('/') {
        Some((dir, file)) => format!("{dir}/_rels/{file}.rels"),
        None => format!("_rels/{part}.rels"),
    }
}

/// Internal relationship targets of `part`, keyed by id. A part without a
/// rels file has no relationships.
fn relationships(zip: &mut Archive<'_>, part: &str) -> Result<HashMap<String, String>, Malformed> {
    let path = rels_path(part);
    if zip.index_for_name(&path).is_none() {
        return Ok(HashMap::new());
    }
    let text = read_string(zip, &path)?;
    let xml = parse(&text, &path)?;
    Ok(xml
        .descendants()
        .filter(|n| n.tag_name().name() == "Relationship")
        .filter(|n| n.attribute("TargetMode") != Some("External"))
        .filter_map(|n| Some((n.attribute("Id")?.to_string(), resolve_part(part, n.attribute("Target")?))))
        .collect())
}

fn children<'a, 'i>(node: Node<'a, 'i>, name: &'static str) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(move |c| c.is_element() && c.tag_name().name() == name)
}

/// Document-order walker shared by the three formats.
struct Walker<'z, 'b> {
    zip: &'z mut Archive<'b>,
    rels: HashMap<String, String>,
    missing_assets: usize,
}

impl Walker<'_, '_> {
    fn embed(&mut self, id: Option<&str>, out: &mut SampleBuilder) -> Result<(), Malformed> {
        let Some(target) = id.and_then(|id| self.rels.get(id)).cloned() else {
            self.missing_assets += 1;
            return Ok(());
        };
        match read_bytes(self.zip, &target) {
            Ok(bytes) => {
                out.attach(ModalityKind::Image, extension_of(&target), &bytes)?;
                Ok(())
            }
            Err(_) => {
                self.missing_assets += 1;
                Ok(())
            }
        }
    }

    fn walk(&mut self, node: Node<'_, '_>, out: &mut SampleBuilder, inline: bool) -> Result<(), Malformed> {
        if !node.is_element() {
            return Ok(());
        }
        match node.tag_name().name() {
            "AlternateContent" => {
                let branch = children(node, "Choice").next().or_else(|| children(node, "Fallback").next());
                if let Some(b) = branch {
                    self.walk_children(b, out, inline)?;
                }
            }
            "p" => {
                self.walk_children(node, out, inline)?;
                if inline {
                    out.space();
                } else {
                    out.newline();
                }
            }
            "t" => {
                if let Some(t) = node.text() {
                    out.push_text(t);
                }
            }
            "tab" => out.push_char('\t'),
            "br" | "cr" => {
                if inline {
                    out.space();
                } else {
                    out.newline();
                }
            }
            "delText" | "instrText" | "sectPr" | "rPr" | "pPr" => {}
            "blip" => self.embed(node.attribute((R_NS, "embed")), out)?,
            "imagedata" => self.embed(node.attribute((R_NS, "id")), out)?,
            "tbl" => {
                out.newline();
                for row in children(node, "tr") {
                    for (i, cell) in children(row, "tc").enumerate() {
                        if i > 0 {
                            out.push_text(" | ");
                        }
                        self.walk_children(cell, out, true)?;
                        out.trim_end_spaces();
                    }
                    out.newline();
                }
            }
            _ => self.walk_children(node, out, inline)?,
        }
        Ok(())
    }

    fn walk_children(&mut self, node: Node<'_, '_>, out: &mut SampleBuilder, inline: bool) -> Result<(), Malformed> {
        for c in node.children() {
            self.walk(c, out, inline)?;
        }
        Ok(())
    }

    fn walk_part(&mut self, part: &str, out: &mut SampleBuilder) -> Result<(), Malformed> {
        let text = read_string(self.zip, part)?;
        let xml = parse(&text, part)?;
        self.rels = relationships(self.zip, part)?;
        self.walk(xml.root_element(), out, false)
    }

    fn report(&self, out: &mut SampleBuilder) {
        if self.missing_assets > 0 {
            out.set_meta("missing_assets", self.missing_assets.to_string());
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct DocxExtractor;

impl Extractor for DocxExtractor {
    fn extract(&self, cx: &ExtractContext<'_>, out: &mut SampleBuilder) -> Result<(), Malformed> {
        let mut zip = open(cx.bytes)?;
        let mut w = Walker { zip: &mut zip, rels: HashMap::new(), missing_assets: 0 };
        let result = w.walk_part("word/document.xml", out);
        w.report(out);
        result
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct PptxExtractor;

impl Extractor for PptxExtractor {
    fn extract(&self, cx: &ExtractContext<'_>, out: &mut SampleBuilder) -> Result<(), Malformed> {
        let mut zip = open(cx.bytes)?;
        let pres_part = "ppt/presentation.xml";
        let pres_text = read_string(&mut zip, pres_part)?;
        let pres = parse(&pres_text, pres_part)?;
        let pres_rels = relationships(&mut zip, pres_part)?;
        let slides: Vec<String> = pres
            .descendants()
            .filter(|n| n.tag_name().name() == "sldId")
            .filter_map(|n| pres_rels.get(n.attribute((R_NS, "id"))?).cloned())
            .collect();
        out.set_meta("slides", slides.len().to_string());

        let mut w = Walker { zip: &mut zip, rels: HashMap::new(), missing_assets: 0 };
        let mut result = Ok(());
        for (i, slide) in slides.iter().enumerate() {
            out.blank_line();
            out.push_text(&format!("## Slide {}", i + 1));
            out.newline();
            if let Err(e) = w.walk_part(slide, out) {
                result = Err(e);
                break;
            }
        }
        w.report(out);
        result
    }
}

/// Column index from a cell reference such as `AB12`.
fn column_of(reference: &str) -> Option<usize> {
    let letters: String = reference.chars().take_while(char::is_ascii_alphabetic).collect();
    if letters.is_empty() {
        return None;
    }
    let mut col = 0usize;
    for c in letters.chars() {
        col = col * 26 + (c.to_ascii_uppercase() as usize - 'A' as usize + 1);
    }
    Some(col - 1)
}

fn rich_text(node: Node<'_, '_>) -> String {
    node.descendants()
        .filter(|n| n.is_element() && n.tag_name().name() == "t")
        .filter(|n| !n.ancestors().any(|a| a.tag_name().name() == "rPh"))
        .filter_map(|n| n.text())
        .collect()
}

fn cell_value(cell: Node<'_, '_>, shared: &[String]) -> String {
    let v = children(cell, "v").next().and_then(|v| v.text()).unwrap_or("");
    match cell.attribute("t") {
        Some("s") => v.trim().parse::<usize>().ok().and_then(|i| shared.get(i)).cloned().unwrap_or_default(),
        Some("inlineStr") => children(cell, "is").next().map(rich_text).unwrap_or_default(),
        Some("b") => (if v.trim() == "1" { "TRUE" } else { "FALSE" }).to_string(),
        _ => v.to_string(),
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct XlsxExtractor;

impl Extractor for XlsxExtractor {
    fn extract(&self, cx: &ExtractContext<'_>, out: &mut SampleBuilder) -> Result<(), Malformed> {
        let mut zip = open(cx.bytes)?;
        let wb_part = "xl/workbook.xml";
        let wb_text = read_string(&mut zip, wb_part)?;
        let wb = parse(&wb_text, wb_part)?;
        let wb_rels = relationships(&mut zip, wb_part)?;

        let shared: Vec<String> = match wb_rels.values().find(|t| t.ends_with("sharedStrings.xml")).cloned() {
            Some(part) => {
                let text = read_string(&mut zip, &part)?;
                let xml = parse(&text, &part)?;
                xml.root_element().children().filter(|n| n.tag_name().name() == "si").map(rich_text).collect()
            }
            None => Vec::new(),
        };

        let sheets: Vec<(String, String)> = wb
            .descendants()
            .filter(|n| n.tag_name().name() == "sheet")
            .filter_map(|n| Some((n.attribute("name")?.to_string(), wb_rels.get(n.attribute((R_NS, "id"))?)?.clone())))
            .collect();
        out.set_meta("sheets", sheets.len().to_string());

        let mut missing = 0;
        for (name, part) in &sheets {
            out.blank_line();
            out.push_text(&format!("## Sheet: {name}"));
            out.newline();
            let text = read_string(&mut zip, part)?;
            let xml = parse(&text, part)?;
            for row in xml.descendants().filter(|n| n.tag_name().name() == "row") {
                let mut cells: Vec<String> = Vec::new();
                for cell in children(row, "c") {
                    let col = cell.attribute("r").and_then(column_of).unwrap_or(cells.len());
                    if col >= cells.len() {
                        cells.resize(col, String::new());
                        cells.push(cell_value(cell, &shared));
                    }
                }
                while cells.last().is_some_and(String::is_empty) {
                    cells.pop();
                }
                if !cells.is_empty() {
                    out.push_text(&cells.join(" | "));
                    out.newline();
                }
            }

            let drawings: Vec<String> = xml
                .descendants()
                .filter(|n| n.tag_name().name() == "drawing")
                .filter_map(|n| n.attribute((R_NS, "id")).map(str::to_string))
                .collect();
            if !drawings.is_empty() {
                let sheet_rels = relationships(&mut zip, part)?;
                let mut w = Walker { zip: &mut zip, rels: HashMap::new(), missing_assets: 0 };
                for id in drawings {
                    match sheet_rels.get(&id) {
                        Some(drawing) => w.walk_part(drawing, out)?,
                        None => w.missing_assets += 1,
                    }
                }
                missing += w.missing_assets;
            }
        }
        if missing > 0 {
            out.set_meta("missing_assets", missing.to_string());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_letters() {
        assert_eq!(column_of("A1"), Some(0));
        assert_eq!(column_of("Z9"), Some(25));
        assert_eq!(column_of("AA3"), Some(26));
        assert_eq!(column_of("12"), None);
    }

    #[test]
    fn rels_location() {
        assert_eq!(rels_path("word/document.xml"), "word/_rels/document.xml.rels");
        assert_eq!(rels_path("xl/worksheets/sheet1.xml"), "xl/worksheets/_rels/sheet1.xml.rels");
    }
}
