//! Test fixtures plus readers for PDF and XLSX output that share no code
//! with the writers under test.

pub mod stub;

use std::io::{Cursor, Read};

use calamine::{open_workbook_from_rs, Data, Reader, Xlsx};
use lopdf::content::Content;
use lopdf::{Document, Object};

/// A searchset Bundle with one Patient (id 32298144) and one
/// DocumentReference for that patient.
pub const SAMPLE_BUNDLE: &str = include_str!("../fixtures/sample_bundle.json");

/// One `BT ... ET` block: the concatenation of its `Tj` strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub text: String,
    pub font: String,
    pub size: f64,
    /// Baselines of every line in the block.
    pub baselines: Vec<f64>,
}

#[derive(Debug)]
pub struct ParsedPdf {
    pub pages: Vec<Vec<Block>>,
    pub xref_entries: usize,
}

impl ParsedPdf {
    pub fn all_blocks(&self) -> impl Iterator<Item = &Block> {
        self.pages.iter().flatten()
    }

    pub fn block_texts(&self) -> Vec<String> {
        self.all_blocks().map(|b| b.text.clone()).collect()
    }
}

fn number(o: &Object) -> f64 {
    match o {
        Object::Integer(i) => *i as f64,
        Object::Real(r) => f64::from(*r),
        _ => f64::NAN,
    }
}

/// Reads the classic xref table at `startxref` and checks that every
/// in-use entry points at the matching `N 0 obj` header.
pub fn check_xref(bytes: &[u8]) -> Result<usize, String> {
    if !bytes.starts_with(b"%PDF-1.4") {
        return Err("missing %PDF-1.4 header".into());
    }
    if !bytes.ends_with(b"%%EOF") {
        return Err("missing trailing %%EOF".into());
    }
    let find_last = |needle: &[u8]| bytes.windows(needle.len()).rposition(|w| w == needle);
    let sx = find_last(b"startxref").ok_or("no startxref")?;
    let tail = std::str::from_utf8(&bytes[sx + 9..]).map_err(|e| e.to_string())?;
    let offset: usize = tail
        .split_whitespace()
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or("bad startxref value")?;
    if !bytes.get(offset..).is_some_and(|t| t.starts_with(b"xref")) {
        return Err(format!("startxref {offset} does not point at xref"));
    }
    // The xref section is ASCII up to the trailer.
    let section = std::str::from_utf8(&bytes[offset..sx]).map_err(|e| e.to_string())?;
    let mut lines = section.split('\n');
    lines.next();
    let header = lines.next().ok_or("truncated xref")?;
    let mut parts = header.split_whitespace();
    let first: usize = parts.next().and_then(|s| s.parse().ok()).ok_or("bad subsection")?;
    let count: usize = parts.next().and_then(|s| s.parse().ok()).ok_or("bad subsection")?;
    let body_start = offset + "xref\n".len() + header.len() + 1;
    for i in 0..count {
        let at = body_start + i * 20;
        let entry = bytes.get(at..at + 20).ok_or("xref entry out of range")?;
        let entry = std::str::from_utf8(entry).map_err(|e| e.to_string())?;
        if !entry.ends_with(" \n") && !entry.ends_with("\r\n") {
            return Err(format!("xref entry {i} is not 20 bytes: {entry:?}"));
        }
        let off: usize = entry[..10].parse().map_err(|_| format!("entry {i}: {entry:?}"))?;
        let kind = &entry[17..18];
        let obj = first + i;
        if kind == "n" {
            let expect = format!("{obj} 0 obj");
            if !bytes.get(off..).is_some_and(|b| b.starts_with(expect.as_bytes())) {
                return Err(format!("object {obj} not at offset {off}"));
            }
        } else if obj != 0 {
            return Err(format!("unexpected free entry {obj}"));
        }
    }
    Ok(count)
}

/// Checks the xref table, then decodes every page with lopdf.
pub fn parse_pdf(bytes: &[u8]) -> Result<ParsedPdf, String> {
    let xref_entries = check_xref(bytes)?;
    let doc = Document::load_mem(bytes).map_err(|e| e.to_string())?;
    let mut pages = Vec::new();
    for (_, id) in doc.get_pages() {
        let raw = doc.get_page_content(id).map_err(|e| e.to_string())?;
        let content = Content::decode(&raw).map_err(|e| e.to_string())?;
        let mut blocks = Vec::new();
        let mut current: Option<Block> = None;
        let (mut y, mut font, mut size) = (0.0, String::new(), 0.0);
        for op in content.operations {
            match op.operator.as_str() {
                "BT" => {
                    y = 0.0;
                    current = Some(Block { text: String::new(), font: font.clone(), size, baselines: vec![] });
                }
                "ET" => blocks.extend(current.take()),
                "Tf" => {
                    if let [Object::Name(n), s] = op.operands.as_slice() {
                        font = String::from_utf8_lossy(n).into_owned();
                        size = number(s);
                        if let Some(b) = current.as_mut() {
                            b.font = font.clone();
                            b.size = size;
                        }
                    }
                }
                "Td" => {
                    if let [_, dy] = op.operands.as_slice() {
                        y += number(dy);
                    }
                }
                "Tj" => {
                    if let (Some(b), [Object::String(s, _)]) = (current.as_mut(), op.operands.as_slice()) {
                        let (decoded, _, _) = encoding_rs::WINDOWS_1252.decode(s);
                        b.text.push_str(&decoded);
                        b.baselines.push(y);
                    }
                }
                _ => {}
            }
        }
        pages.push(blocks);
    }
    Ok(ParsedPdf { pages, xref_entries })
}

/// What a cell's text should look like after a WinAnsi round trip:
/// control characters become spaces, anything windows-1252 cannot encode
/// becomes `?`.
pub fn expected_pdf_text(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_control() {
                return ' ';
            }
            let mut buf = [0u8; 4];
            let (_, _, unmappable) = encoding_rs::WINDOWS_1252.encode(c.encode_utf8(&mut buf));
            if unmappable { '?' } else { c }
        })
        .collect()
}

/// Number of positions where `row` occurs as a contiguous run of blocks.
pub fn count_runs(blocks: &[String], row: &[String]) -> usize {
    if row.is_empty() || blocks.len() < row.len() {
        return 0;
    }
    blocks.windows(row.len()).filter(|w| *w == row).count()
}

/// A cell as read back from a workbook.
#[derive(Debug, Clone, PartialEq)]
pub enum ReadCell {
    Text(String),
    Number(f64),
    Empty,
}

impl ReadCell {
    /// True when this read-back cell represents the written one.
    pub fn matches(&self, kind: &str, text: &str) -> bool {
        match (self, kind) {
            (ReadCell::Empty, "empty") => true,
            (ReadCell::Text(s), "text") => s == text,
            (ReadCell::Number(n), "number") => text.parse::<f64>().is_ok_and(|t| t == *n),
            _ => false,
        }
    }
}

#[derive(Debug)]
pub struct ReadSheet {
    pub name: String,
    /// Absolute rows starting at A1, padded to the widest row.
    pub rows: Vec<Vec<ReadCell>>,
}

/// Opens an xlsx with calamine and returns every sheet from A1.
pub fn read_xlsx(bytes: &[u8]) -> Result<Vec<ReadSheet>, String> {
    let mut wb: Xlsx<_> = open_workbook_from_rs(Cursor::new(bytes.to_vec())).map_err(|e: calamine::XlsxError| e.to_string())?;
    let mut out = Vec::new();
    for name in wb.sheet_names() {
        let range = wb.worksheet_range(&name).map_err(|e| e.to_string())?;
        let (h, w) = match range.end() {
            Some((r, c)) => (r as usize + 1, c as usize + 1),
            None => (0, 0),
        };
        let rows = (0..h)
            .map(|r| {
                (0..w)
                    .map(|c| match range.get_value((r as u32, c as u32)) {
                        Some(Data::String(s)) => ReadCell::Text(s.clone()),
                        Some(Data::Float(f)) => ReadCell::Number(*f),
                        Some(Data::Int(i)) => ReadCell::Number(*i as f64),
                        Some(Data::Empty) | None => ReadCell::Empty,
                        Some(other) => ReadCell::Text(other.to_string()),
                    })
                    .collect()
            })
            .collect();
        out.push(ReadSheet { name, rows });
    }
    Ok(out)
}

/// Entry names of a ZIP archive, after reading every entry in full so the
/// reader verifies sizes and CRC-32.
pub fn zip_entries(bytes: &[u8]) -> Result<Vec<String>, String> {
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| e.to_string())?;
    let mut names = Vec::new();
    for i in 0..archive.len() {
        let mut f = archive.by_index(i).map_err(|e| e.to_string())?;
        let mut data = Vec::new();
        f.read_to_end(&mut data).map_err(|e| format!("{}: {e}", f.name()))?;
        if data.len() as u64 != f.size() {
            return Err(format!("{}: size mismatch", f.name()));
        }
        names.push(f.name().to_owned());
    }
    Ok(names)
}

/// Reads one entry of a ZIP archive as text.
pub fn zip_entry_text(bytes: &[u8], name: &str) -> Result<String, String> {
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes)).map_err(|e| e.to_string())?;
    let mut f = archive.by_name(name).map_err(|e| e.to_string())?;
    let mut s = String::new();
    f.read_to_string(&mut s).map_err(|e| e.to_string())?;
    Ok(s)
}

/// Checks that every row of every table appears in the PDF as a run of
/// consecutive cell blocks, exactly as often as it occurs in its table.
/// `tables` holds the rows of each table as plain strings.
pub fn check_pdf_tables(pdf: &ParsedPdf, tables: &[Vec<Vec<String>>]) -> Result<(), String> {
    let blocks = pdf.block_texts();
    let mut by_first: std::collections::HashMap<&str, Vec<usize>> = std::collections::HashMap::new();
    for (i, b) in blocks.iter().enumerate() {
        by_first.entry(b.as_str()).or_default().push(i);
    }
    for (t, rows) in tables.iter().enumerate() {
        let mut wanted: std::collections::HashMap<Vec<String>, usize> = std::collections::HashMap::new();
        for row in rows {
            let expected: Vec<String> = row.iter().map(|c| expected_pdf_text(c)).collect();
            *wanted.entry(expected).or_default() += 1;
        }
        for (row, n) in wanted {
            let found = by_first
                .get(row[0].as_str())
                .map_or(0, |starts| {
                    starts
                        .iter()
                        .filter(|&&s| blocks.get(s..s + row.len()).is_some_and(|w| w == row.as_slice()))
                        .count()
                });
            if found != n {
                return Err(format!("table {t}: row {row:?} found {found} times, expected {n}"));
            }
        }
    }
    Ok(())
}
