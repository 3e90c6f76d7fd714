//! Synthetic documents with known content, for tests and demos.
//!
//! Every generator is deterministic: the same arguments give the same bytes.

use std::fs;
use std::io::{self, Cursor, Write};
use std::path::{Path, PathBuf};

use base64::Engine;
use lopdf::content::{Content, Operation};
use lopdf::{dictionary, Document, Object, Stream};
use zip::write::SimpleFileOptions;

use crate::extract::FileKind;

const W_NS: &str = "http://schemas.openxmlformats.org/wordprocessingml/2006/main";
const R_NS: &str = "http://schemas.openxmlformats.org/officeDocument/2006/relationships";
const A_NS: &str = "http://schemas.openxmlformats.org/drawingml/2006/main";
const P_NS: &str = "http://schemas.openxmlformats.org/presentationml/2006/main";
const PIC_NS: &str = "http://schemas.openxmlformats.org/drawingml/2006/picture";
const S_NS: &str = "http://schemas.openxmlformats.org/spreadsheetml/2006/main";
const XDR_NS: &str = "http://schemas.openxmlformats.org/drawingml/2006/spreadsheetDrawing";
const PKG_RELS: &str = "http://schemas.openxmlformats.org/package/2006/relationships";
const REL_IMAGE: &str = "http://schemas.openxmlformats.org/officeDocument/2006/relationships/image";

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// A 4x4 grayscale PNG.
pub fn tiny_png() -> Vec<u8> {
    let pixels: Vec<u8> = (0..16u8).map(|i| i * 16).collect();
    crate::extract::encode_png(4, 4, 1, &pixels).expect("valid raster")
}

/// A short silent mono WAV file.
pub fn tiny_wav() -> Vec<u8> {
    let samples = 800u32;
    let data_len = samples * 2;
    let mut v = Vec::new();
    v.extend_from_slice(b"RIFF");
    v.extend_from_slice(&(36 + data_len).to_le_bytes());
    v.extend_from_slice(b"WAVEfmt ");
    v.extend_from_slice(&16u32.to_le_bytes());
    v.extend_from_slice(&1u16.to_le_bytes());
    v.extend_from_slice(&1u16.to_le_bytes());
    v.extend_from_slice(&8000u32.to_le_bytes());
    v.extend_from_slice(&16000u32.to_le_bytes());
    v.extend_from_slice(&2u16.to_le_bytes());
    v.extend_from_slice(&16u16.to_le_bytes());
    v.extend_from_slice(b"data");
    v.extend_from_slice(&data_len.to_le_bytes());
    v.resize(v.len() + data_len as usize, 0);
    v
}

/// One item placed on a PDF page, top to bottom.
#[derive(Debug, Clone)]
pub enum PdfBlock {
    Line(String),
    /// Grayscale raster of the given side length.
    Image(u32),
}

/// Builds a PDF whose pages contain the given blocks. Text uses Helvetica
/// at 11pt on a 14pt line pitch; content streams are Flate-compressed.
pub fn pdf(pages: &[Vec<PdfBlock>]) -> Vec<u8> {
    let mut doc = Document::with_version("1.5");
    let pages_id = doc.new_object_id();
    let font_id = doc.add_object(dictionary! {
        "Type" => "Font",
        "Subtype" => "Type1",
        "BaseFont" => "Helvetica",
        "Encoding" => "WinAnsiEncoding",
    });

    let mut kids = Vec::new();
    for blocks in pages {
        let mut ops = Vec::new();
        let mut xobjects = lopdf::Dictionary::new();
        let mut y = 760.0f32;
        for (i, block) in blocks.iter().enumerate() {
            match block {
                PdfBlock::Line(text) => {
                    ops.push(Operation::new("BT", vec![]));
                    ops.push(Operation::new("Tf", vec!["F1".into(), 11.into()]));
                    ops.push(Operation::new("Td", vec![72.into(), y.into()]));
                    ops.push(Operation::new("Tj", vec![Object::string_literal(text.as_bytes().to_vec())]));
                    ops.push(Operation::new("ET", vec![]));
                    y -= 14.0;
                }
                PdfBlock::Image(side) => {
                    let pixels: Vec<u8> = (0..side * side).map(|p| (p * 7 % 251) as u8).collect();
                    let mut img = Stream::new(
                        dictionary! {
                            "Type" => "XObject",
                            "Subtype" => "Image",
                            "Width" => i64::from(*side),
                            "Height" => i64::from(*side),
                            "ColorSpace" => "DeviceGray",
                            "BitsPerComponent" => 8,
                        },
                        pixels,
                    );
                    let _ = img.compress();
                    let name = format!("Im{i}");
                    xobjects.set(name.as_bytes().to_vec(), doc.add_object(img));
                    let h = 120.0f32;
                    y -= h;
                    ops.push(Operation::new("q", vec![]));
                    ops.push(Operation::new(
                        "cm",
                        vec![160.into(), 0.into(), 0.into(), h.into(), 72.into(), y.into()],
                    ));
                    ops.push(Operation::new("Do", vec![Object::Name(name.into_bytes())]));
                    ops.push(Operation::new("Q", vec![]));
                    y -= 14.0;
                }
            }
        }
        let mut stream = Stream::new(dictionary! {}, Content { operations: ops }.encode().expect("encodable"));
        let _ = stream.compress();
        let content_id = doc.add_object(stream);
        let resources = dictionary! {
            "Font" => dictionary! { "F1" => font_id },
            "XObject" => xobjects,
        };
        let page_id = doc.add_object(dictionary! {
            "Type" => "Page",
            "Parent" => pages_id,
            "Contents" => content_id,
            "Resources" => resources,
        });
        kids.push(Object::from(page_id));
    }
    let count = kids.len() as i64;
    doc.objects.insert(
        pages_id,
        Object::Dictionary(dictionary! {
            "Type" => "Pages",
            "Kids" => kids,
            "Count" => count,
            "MediaBox" => vec![0.into(), 0.into(), 612.into(), 792.into()],
        }),
    );
    let catalog_id = doc.add_object(dictionary! { "Type" => "Catalog", "Pages" => pages_id });
    doc.trailer.set("Root", catalog_id);
    let mut buf = Vec::new();
    doc.save_to(&mut buf).expect("in-memory save");
    buf
}

/// Pages of text lines; ground truth is the lines joined by newlines, pages
/// separated by a blank line.
pub fn text_pdf(pages: &[Vec<String>]) -> Vec<u8> {
    let blocks: Vec<Vec<PdfBlock>> =
        pages.iter().map(|p| p.iter().map(|l| PdfBlock::Line(l.clone())).collect()).collect();
    pdf(&blocks)
}

/// Scanned-looking PDF: each page is one full-width raster, no text layer.
pub fn image_only_pdf(pages: usize) -> Vec<u8> {
    let blocks: Vec<Vec<PdfBlock>> = (0..pages).map(|_| vec![PdfBlock::Image(32)]).collect();
    pdf(&blocks)
}

const PROSE: &[&str] = &[
    "The harbor town woke early on market days.",
    "Fishermen sorted the night catch by lantern light,",
    "while bakers pulled long loaves from brick ovens.",
    "By seven the square was crowded with carts and voices.",
    "A clockmaker opened his shutters and set out small brass gears.",
    "Children traded marbles near the fountain steps.",
    "The ferry from the northern islands arrived at half past eight,",
    "carrying wool, cheese and letters sealed with blue wax.",
    "Merchants argued about the price of salt and rope.",
    "An old sailor repaired nets in the shade of the customs house.",
    "Gulls circled over the fish stalls and waited for scraps.",
    "At noon the bell of the chapel rang twelve times.",
    "Most traders paused to eat bread, olives and dried figs.",
    "In the afternoon the wind turned and the sky grew pale.",
    "Boats returned before the tide began to fall.",
    "The lamplighter started his round just after sunset.",
    "Shops closed one by one along the narrow lanes.",
    "Only the tavern stayed open, bright and noisy until late.",
    "Travelers wrote in the ledger kept behind the counter.",
    "Each entry listed a name, a ship and a destination.",
    "Some were bound for the southern ports and warm rain,",
    "others for cold cities where rivers froze each winter.",
    "The innkeeper kept a map of every route on the wall.",
    "Pins of different colors marked storms and safe harbors.",
    "Near midnight the last guests climbed the creaking stairs.",
    "Outside, the sea kept its slow and steady rhythm.",
];

/// A multi-page text-layer PDF together with its exact ground truth text.
pub fn digital_pdf_with_ground_truth() -> (Vec<u8>, String) {
    let pages: Vec<Vec<String>> = PROSE.chunks(13).map(|c| c.iter().map(|s| s.to_string()).collect()).collect();
    let truth = pages.iter().map(|p| p.join("\n")).collect::<Vec<_>>().join("\n\n");
    (text_pdf(&pages), truth)
}

fn zip_package(entries: &[(String, Vec<u8>)]) -> Vec<u8> {
    let mut w = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let opts = SimpleFileOptions::default();
    for (name, bytes) in entries {
        w.start_file(name.as_str(), opts).expect("zip entry");
        w.write_all(bytes).expect("zip write");
    }
    w.finish().expect("zip finish").into_inner()
}

fn rels_xml(rels: &[(String, &str, String)]) -> Vec<u8> {
    let mut s = format!("<?xml version=\"1.0\" encoding=\"UTF-8\"?><Relationships xmlns=\"{PKG_RELS}\">");
    for (id, ty, target) in rels {
        s.push_str(&format!("<Relationship Id=\"{id}\" Type=\"{ty}\" Target=\"{}\"/>", xml_escape(target)));
    }
    s.push_str("</Relationships>");
    s.into_bytes()
}

fn content_types(overrides: &[(&str, &str)]) -> Vec<u8> {
    let mut s = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?><Types xmlns=\"http://schemas.openxmlformats.org/package/2006/content-types\">\
         <Default Extension=\"rels\" ContentType=\"application/vnd.openxmlformats-package.relationships+xml\"/>\
         <Default Extension=\"xml\" ContentType=\"application/xml\"/><Default Extension=\"png\" ContentType=\"image/png\"/>",
    );
    for (part, ct) in overrides {
        s.push_str(&format!("<Override PartName=\"/{part}\" ContentType=\"{ct}\"/>"));
    }
    s.push_str("</Types>");
    s.into_bytes()
}

fn blip(rid: &str) -> String {
    format!("<pic:pic><pic:blipFill><a:blip r:embed=\"{rid}\"/></pic:blipFill></pic:pic>")
}

#[derive(Debug, Clone)]
pub enum DocBlock {
    Para(String),
    /// Inline PNG image in its own paragraph.
    Image(Vec<u8>),
}

pub fn docx(blocks: &[DocBlock]) -> Vec<u8> {
    let mut body = String::new();
    let mut rels = Vec::new();
    let mut media = Vec::new();
    for block in blocks {
        match block {
            DocBlock::Para(t) => {
                body.push_str(&format!("<w:p><w:r><w:t xml:space=\"preserve\">{}</w:t></w:r></w:p>", xml_escape(t)))
            }
            DocBlock::Image(bytes) => {
                let n = media.len() + 1;
                let rid = format!("rIdImg{n}");
                body.push_str(&format!(
                    "<w:p><w:r><w:drawing><wp:inline><a:graphic><a:graphicData>{}</a:graphicData></a:graphic></wp:inline></w:drawing></w:r></w:p>",
                    blip(&rid)
                ));
                rels.push((rid, REL_IMAGE, format!("media/image{n}.png")));
                media.push((format!("word/media/image{n}.png"), bytes.clone()));
            }
        }
    }
    let document = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?><w:document xmlns:w=\"{W_NS}\" xmlns:r=\"{R_NS}\" xmlns:a=\"{A_NS}\" xmlns:pic=\"{PIC_NS}\" \
         xmlns:wp=\"http://schemas.openxmlformats.org/drawingml/2006/wordprocessingDrawing\"><w:body>{body}<w:sectPr/></w:body></w:document>"
    );
    let mut entries = vec![
        (
            "[Content_Types].xml".to_string(),
            content_types(&[(
                "word/document.xml",
                "application/vnd.openxmlformats-officedocument.wordprocessingml.document.main+xml",
            )]),
        ),
        (
            "_rels/.rels".to_string(),
            rels_xml(&[(
                "rId1".into(),
                "http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument",
                "word/document.xml".into(),
            )]),
        ),
        ("word/document.xml".to_string(), document.into_bytes()),
        ("word/_rels/document.xml.rels".to_string(), rels_xml(&rels)),
    ];
    entries.extend(media);
    zip_package(&entries)
}

/// Slides of text paragraphs; `image_on` puts one picture on that slide
/// (zero-based) after its text.
pub fn pptx(slides: &[Vec<String>], image_on: Option<usize>, image: &[u8]) -> Vec<u8> {
    let mut entries = vec![(
        "[Content_Types].xml".to_string(),
        content_types(&[(
            "ppt/presentation.xml",
            "application/vnd.openxmlformats-officedocument.presentationml.presentation.main+xml",
        )]),
    )];
    entries.push((
        "_rels/.rels".to_string(),
        rels_xml(&[(
            "rId1".into(),
            "http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument",
            "ppt/presentation.xml".into(),
        )]),
    ));
    let mut ids = String::new();
    let mut pres_rels = Vec::new();
    for (i, paras) in slides.iter().enumerate() {
        let n = i + 1;
        ids.push_str(&format!("<p:sldId id=\"{}\" r:id=\"rIdS{n}\"/>", 255 + n));
        pres_rels.push((
            format!("rIdS{n}"),
            "http://schemas.openxmlformats.org/officeDocument/2006/relationships/slide",
            format!("slides/slide{n}.xml"),
        ));
        let text: String = paras
            .iter()
            .map(|p| format!("<a:p><a:r><a:t>{}</a:t></a:r></a:p>", xml_escape(p)))
            .collect();
        let mut tree = format!("<p:sp><p:txBody>{text}</p:txBody></p:sp>");
        let mut slide_rels = Vec::new();
        if image_on == Some(i) {
            tree.push_str(&format!("<p:pic><p:blipFill><a:blip r:embed=\"rIdP1\"/></p:blipFill></p:pic>"));
            slide_rels.push(("rIdP1".to_string(), REL_IMAGE, format!("../media/image{n}.png")));
            entries.push((format!("ppt/media/image{n}.png"), image.to_vec()));
        }
        let slide = format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?><p:sld xmlns:p=\"{P_NS}\" xmlns:a=\"{A_NS}\" xmlns:r=\"{R_NS}\"><p:cSld><p:spTree>{tree}</p:spTree></p:cSld></p:sld>"
        );
        entries.push((format!("ppt/slides/slide{n}.xml"), slide.into_bytes()));
        entries.push((format!("ppt/slides/_rels/slide{n}.xml.rels"), rels_xml(&slide_rels)));
    }
    let pres = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?><p:presentation xmlns:p=\"{P_NS}\" xmlns:r=\"{R_NS}\"><p:sldIdLst>{ids}</p:sldIdLst></p:presentation>"
    );
    entries.push(("ppt/presentation.xml".to_string(), pres.into_bytes()));
    entries.push(("ppt/_rels/presentation.xml.rels".to_string(), rels_xml(&pres_rels)));
    zip_package(&entries)
}

/// Sheets of string cells (stored as shared strings); `image_on` anchors one
/// picture on that sheet.
pub fn xlsx(sheets: &[(&str, Vec<Vec<String>>)], image_on: Option<usize>, image: &[u8]) -> Vec<u8> {
    let mut shared: Vec<String> = Vec::new();
    let mut entries = vec![(
        "[Content_Types].xml".to_string(),
        content_types(&[("xl/workbook.xml", "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml")]),
    )];
    entries.push((
        "_rels/.rels".to_string(),
        rels_xml(&[(
            "rId1".into(),
            "http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument",
            "xl/workbook.xml".into(),
        )]),
    ));
    let mut sheet_tags = String::new();
    let mut wb_rels = Vec::new();
    for (i, (name, rows)) in sheets.iter().enumerate() {
        let n = i + 1;
        sheet_tags.push_str(&format!("<sheet name=\"{}\" sheetId=\"{n}\" r:id=\"rIdW{n}\"/>", xml_escape(name)));
        wb_rels.push((
            format!("rIdW{n}"),
            "http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet",
            format!("worksheets/sheet{n}.xml"),
        ));
        let mut data = String::new();
        for (r, row) in rows.iter().enumerate() {
            data.push_str(&format!("<row r=\"{}\">", r + 1));
            for (c, value) in row.iter().enumerate() {
                let col = (b'A' + c as u8) as char;
                let idx = shared.iter().position(|s| s == value).unwrap_or_else(|| {
                    shared.push(value.clone());
                    shared.len() - 1
                });
                data.push_str(&format!("<c r=\"{col}{}\" t=\"s\"><v>{idx}</v></c>", r + 1));
            }
            data.push_str("</row>");
        }
        let mut drawing = String::new();
        if image_on == Some(i) {
            drawing = "<drawing r:id=\"rIdD1\"/>".into();
            entries.push((
                format!("xl/worksheets/_rels/sheet{n}.xml.rels"),
                rels_xml(&[(
                    "rIdD1".into(),
                    "http://schemas.openxmlformats.org/officeDocument/2006/relationships/drawing",
                    format!("../drawings/drawing{n}.xml"),
                )]),
            ));
            let d = format!(
                "<?xml version=\"1.0\" encoding=\"UTF-8\"?><xdr:wsDr xmlns:xdr=\"{XDR_NS}\" xmlns:a=\"{A_NS}\" xmlns:r=\"{R_NS}\"><xdr:oneCellAnchor><xdr:pic><xdr:blipFill><a:blip r:embed=\"rIdI1\"/></xdr:blipFill></xdr:pic></xdr:oneCellAnchor></xdr:wsDr>"
            );
            entries.push((format!("xl/drawings/drawing{n}.xml"), d.into_bytes()));
            entries.push((
                format!("xl/drawings/_rels/drawing{n}.xml.rels"),
                rels_xml(&[("rIdI1".into(), REL_IMAGE, format!("../media/image{n}.png"))]),
            ));
            entries.push((format!("xl/media/image{n}.png"), image.to_vec()));
        }
        let sheet = format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?><worksheet xmlns=\"{S_NS}\" xmlns:r=\"{R_NS}\"><sheetData>{data}</sheetData>{drawing}</worksheet>"
        );
        entries.push((format!("xl/worksheets/sheet{n}.xml"), sheet.into_bytes()));
    }
    wb_rels.push((
        "rIdSS".into(),
        "http://schemas.openxmlformats.org/officeDocument/2006/relationships/sharedStrings",
        "sharedStrings.xml".into(),
    ));
    let sst: String = shared.iter().map(|s| format!("<si><t>{}</t></si>", xml_escape(s))).collect();
    entries.push((
        "xl/sharedStrings.xml".to_string(),
        format!("<?xml version=\"1.0\" encoding=\"UTF-8\"?><sst xmlns=\"{S_NS}\" count=\"{0}\" uniqueCount=\"{0}\">{sst}</sst>", shared.len())
            .into_bytes(),
    ));
    let wb = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?><workbook xmlns=\"{S_NS}\" xmlns:r=\"{R_NS}\"><sheets>{sheet_tags}</sheets></workbook>"
    );
    entries.push(("xl/workbook.xml".to_string(), wb.into_bytes()));
    entries.push(("xl/_rels/workbook.xml.rels".to_string(), rels_xml(&wb_rels)));
    zip_package(&entries)
}

pub struct EmlAttachment<'a> {
    pub filename: &'a str,
    pub content_type: &'a str,
    pub bytes: &'a [u8],
}

/// RFC 5322 message; multipart/mixed when there are attachments.
pub fn eml(subject: &str, from: &str, to: &str, body: &str, attachments: &[EmlAttachment<'_>]) -> Vec<u8> {
    let mut s = format!(
        "From: {from}\r\nTo: {to}\r\nSubject: {subject}\r\nDate: Mon, 6 Jan 2025 09:30:00 +0000\r\nMIME-Version: 1.0\r\n"
    );
    if attachments.is_empty() {
        s.push_str("Content-Type: text/plain; charset=utf-8\r\n\r\n");
        s.push_str(&body.replace('\n', "\r\n"));
        s.push_str("\r\n");
        return s.into_bytes();
    }
    let boundary = "----=_boundary_7f3a";
    s.push_str(&format!("Content-Type: multipart/mixed; boundary=\"{boundary}\"\r\n\r\n"));
    s.push_str(&format!("--{boundary}\r\nContent-Type: text/plain; charset=utf-8\r\n\r\n{}\r\n", body.replace('\n', "\r\n")));
    for a in attachments {
        let b64 = base64::engine::general_purpose::STANDARD.encode(a.bytes);
        s.push_str(&format!(
            "--{boundary}\r\nContent-Type: {}; name=\"{1}\"\r\nContent-Disposition: attachment; filename=\"{1}\"\r\nContent-Transfer-Encoding: base64\r\n\r\n",
            a.content_type, a.filename
        ));
        for line in b64.as_bytes().chunks(76) {
            s.push_str(std::str::from_utf8(line).expect("ascii"));
            s.push_str("\r\n");
        }
    }
    s.push_str(&format!("--{boundary}--\r\n"));
    s.into_bytes()
}

/// Writes one document of every supported kind (plus a scanned PDF and an
/// audio clip) into `dir`. Returns the paths with their kinds.
pub fn write_corpus(dir: &Path) -> io::Result<Vec<(PathBuf, FileKind)>> {
    fs::create_dir_all(dir)?;
    let png = tiny_png();
    let lines = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let files: Vec<(&str, Vec<u8>, FileKind)> = vec![
        (
            "report.pdf",
            pdf(&[vec![
                PdfBlock::Line("Quarterly report on coastal shipping.".into()),
                PdfBlock::Image(16),
                PdfBlock::Line("Tonnage rose in every northern port.".into()),
            ]]),
            FileKind::Pdf,
        ),
        ("scan.pdf", image_only_pdf(2), FileKind::Pdf),
        (
            "letter.docx",
            docx(&[
                DocBlock::Para("Dear committee, the survey is attached.".into()),
                DocBlock::Image(png.clone()),
                DocBlock::Para("Kind regards.".into()),
            ]),
            FileKind::Docx,
        ),
        (
            "deck.pptx",
            pptx(&[lines(&["Harbor upgrades", "Phase one"]), lines(&["Budget overview"])], Some(1), &png),
            FileKind::Pptx,
        ),
        (
            "ledger.xlsx",
            xlsx(
                &[("Cargo", vec![lines(&["item", "tons"]), lines(&["salt", "40"]), lines(&["rope", "12"])])],
                Some(0),
                &png,
            ),
            FileKind::Xlsx,
        ),
        ("routes.csv", b"port,days\nNorthgate,3\nSouthmere,5\n".to_vec(), FileKind::Csv),
        ("notes.txt", b"Tide tables are updated weekly.\nCheck the pier before departure.\n".to_vec(), FileKind::Txt),
        (
            "guide.md",
            b"# Harbor guide\n\nBoats must register at the customs house.\n\n- Pier A\n- Pier B\n".to_vec(),
            FileKind::Md,
        ),
        (
            "page.html",
            b"<html><head><title>Ferry times</title><style>p{}</style></head><body><h1>Ferry times</h1><p>The ferry leaves at <b>eight</b>.</p><script>x()</script></body></html>".to_vec(),
            FileKind::Html,
        ),
        (
            "memo.eml",
            eml(
                "Dock schedule",
                "harbor@example.org",
                "crew@example.org",
                "The dock closes early on Friday.",
                &[EmlAttachment { filename: "map.png", content_type: "image/png", bytes: &png }],
            ),
            FileKind::Eml,
        ),
        ("bell.wav", tiny_wav(), FileKind::Media),
    ];
    let mut out = Vec::new();
    for (name, bytes, kind) in files {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        out.push((path, kind));
    }
    Ok(out)
}

/// A retrievable fact with one correct answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedFact {
    pub passage: String,
    pub question: String,
    pub answer: String,
}

const ATTRIBUTES: &[&str] =
    &["vault code", "harbor number", "gate token", "locker digit", "signal key", "archive shelf", "berth tag"];
const FILLER: &[&str] = &[
    "The morning fog lifted slowly over the bay.",
    "Several carts waited by the old stone bridge.",
    "A quiet wind moved through the tall grass.",
    "The lanterns of the pier flickered at dusk.",
    "Traders counted coins beside the fountain.",
];

/// `n` passages, each hiding one fact about a unique made-up entity between
/// filler sentences. The answer is a number that appears nowhere else.
pub fn planted_facts(n: usize) -> Vec<PlantedFact> {
    (0..n)
        .map(|i| {
            let entity = format!("quorvel{i}");
            let attr = ATTRIBUTES[i % ATTRIBUTES.len()];
            let answer = (1000 + (i * 7919) % 9000).to_string();
            let fact = format!("The {attr} of {entity} is {answer}.");
            let before = FILLER[i % FILLER.len()];
            let after = FILLER[(i + 2) % FILLER.len()];
            PlantedFact {
                passage: format!("{before} {fact} {after}"),
                question: format!("What is the {attr} of {entity}?"),
                answer,
            }
        })
        .collect()
}
