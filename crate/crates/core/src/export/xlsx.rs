//! OOXML workbook with inline strings, one worksheet per table.

use std::collections::HashSet;
use std::fmt::Write as _;

use chrono::{DateTime, Utc};

use super::report::{rate_text, section_heading};
use super::zip::ZipWriter;
use crate::normalize::{Dataset, TableKind};
use crate::table::{Cell, Table};

pub const MAX_SHEET_NAME: usize = 31;
pub const REPORT_SHEET: &str = "TransformReport";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum XlsxError {
    #[error("sheet name {0:?} is used twice after sanitizing")]
    SheetNameCollision(String),
    #[error("a workbook needs at least one sheet")]
    NoSheets,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sheet {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Sheet {
    pub fn from_table(name: &str, table: Table) -> Self {
        Self {
            name: sanitize_sheet_name(name),
            columns: table.columns,
            rows: table.rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WorkbookModel {
    pub sheets: Vec<Sheet>,
}

impl WorkbookModel {
    pub fn validate(&self) -> Result<(), XlsxError> {
        if self.sheets.is_empty() {
            return Err(XlsxError::NoSheets);
        }
        let mut seen = HashSet::new();
        for s in &self.sheets {
            let name = sanitize_sheet_name(&s.name);
            if !seen.insert(name.to_lowercase()) {
                return Err(XlsxError::SheetNameCollision(name));
            }
        }
        Ok(())
    }
}

/// Replaces characters Excel forbids in sheet names and truncates to 31
/// characters.
pub fn sanitize_sheet_name(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| match c {
            '[' | ']' | ':' | '*' | '?' | '/' | '\\' => '_',
            c if c.is_control() => '_',
            c => c,
        })
        .take(MAX_SHEET_NAME)
        .collect();
    let cleaned = cleaned.trim_matches('\'').to_owned();
    if cleaned.is_empty() {
        "Sheet".to_owned()
    } else {
        cleaned
    }
}

/// Worksheet name for a kind's table.
pub fn sheet_name(kind: TableKind) -> &'static str {
    match kind {
        TableKind::DocumentReference => section_heading(kind),
        other => other.name(),
    }
}

pub const REPORT_COLUMNS: [&str; 8] = [
    "kind",
    "attempted",
    "succeeded",
    "success_rate",
    "resource_index",
    "category",
    "path",
    "message",
];

/// One summary row per kind, each followed by that kind's failures.
pub fn report_sheet(dataset: &Dataset) -> Sheet {
    let mut rows = Vec::new();
    for (kind, r) in &dataset.report.per_kind {
        rows.push(vec![
            Cell::text(kind.name()),
            Cell::number(r.attempted),
            Cell::number(r.succeeded),
            Cell::Number(rate_text(r.success_rate())),
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
            Cell::Empty,
        ]);
        for f in &r.failures {
            rows.push(vec![
                Cell::text(kind.name()),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::number(f.resource_index),
                Cell::text(f.category.name()),
                Cell::text(&f.path),
                Cell::text(&f.message),
            ]);
        }
    }
    Sheet {
        name: REPORT_SHEET.into(),
        columns: REPORT_COLUMNS.map(String::from).to_vec(),
        rows,
    }
}

pub fn build_workbook(dataset: &Dataset) -> WorkbookModel {
    let mut sheets: Vec<Sheet> = TableKind::ALL
        .into_iter()
        .filter(|k| dataset.tables.row_count(*k) > 0)
        .map(|k| Sheet::from_table(sheet_name(k), dataset.tables.table(k)))
        .collect();
    sheets.push(report_sheet(dataset));
    WorkbookModel { sheets }
}

/// `0 -> A`, `25 -> Z`, `26 -> AA`.
pub fn column_letters(mut index: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (index % 26) as u8);
        if index < 26 {
            break;
        }
        index = index / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ASCII")
}

fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..)
}

/// Escapes text for a `<t>` element. Characters XML cannot carry use the
/// OOXML `_xHHHH_` form, and a literal `_xHHHH_` gets its underscore escaped.
pub fn escape_text(s: &str, out: &mut String) {
    let bytes = s.as_bytes();
    for (i, c) in s.char_indices() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#13;"),
            '_' if looks_like_escape(&bytes[i..]) => out.push_str("_x005F_"),
            c if !is_xml_char(c) => {
                let _ = write!(out, "_x{:04X}_", c as u32);
            }
            c => out.push(c),
        }
    }
}

fn looks_like_escape(b: &[u8]) -> bool {
    b.len() >= 7 && b[1] == b'x' && b[2..6].iter().all(u8::is_ascii_hexdigit) && b[6] == b'_'
}

fn escape_attr(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const XML_HEADER: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n";
const MAIN_NS: &str = "http://schemas.openxmlformats.org/spreadsheetml/2006/main";
const REL_NS: &str = "http://schemas.openxmlformats.org/officeDocument/2006/relationships";
const PKG_REL_NS: &str = "http://schemas.openxmlformats.org/package/2006/relationships";

fn cell_xml(out: &mut String, r: &str, cell: &Cell) {
    match cell {
        Cell::Empty => {}
        Cell::Number(n) => {
            let _ = write!(out, "<c r=\"{r}\"><v>{n}</v></c>");
        }
        Cell::Text(t) => {
            let _ = write!(out, "<c r=\"{r}\" t=\"inlineStr\"><is><t xml:space=\"preserve\">");
            escape_text(t, out);
            out.push_str("</t></is></c>");
        }
    }
}

fn sheet_xml(sheet: &Sheet) -> String {
    let mut out = String::with_capacity(64 * (sheet.rows.len() + 1) * sheet.columns.len().max(1));
    out.push_str(XML_HEADER);
    let _ = write!(out, "<worksheet xmlns=\"{MAIN_NS}\"><sheetData>");
    let letters: Vec<String> = (0..sheet.columns.len().max(
        sheet.rows.iter().map(Vec::len).max().unwrap_or(0),
    ))
    .map(column_letters)
    .collect();
    let header: Vec<Cell> = sheet.columns.iter().map(|c| Cell::text(c.as_str())).collect();
    for (ri, row) in std::iter::once(&header).chain(sheet.rows.iter()).enumerate() {
        let n = ri + 1;
        let _ = write!(out, "<row r=\"{n}\">");
        for (ci, cell) in row.iter().enumerate() {
            cell_xml(&mut out, &format!("{}{n}", letters[ci]), cell);
        }
        out.push_str("</row>");
    }
    out.push_str("</sheetData></worksheet>");
    out
}

/// Packs `model` as an `.xlsx`. Entry timestamps come from `modified`.
pub fn render_xlsx(model: &WorkbookModel, modified: DateTime<Utc>, deflate: bool) -> Result<Vec<u8>, XlsxError> {
    model.validate()?;
    let n = model.sheets.len();
    let mut zip = ZipWriter::new(modified, deflate);

    let mut types = format!(
        "{XML_HEADER}<Types xmlns=\"http://schemas.openxmlformats.org/package/2006/content-types\">\
<Default Extension=\"rels\" ContentType=\"application/vnd.openxmlformats-package.relationships+xml\"/>\
<Default Extension=\"xml\" ContentType=\"application/xml\"/>\
<Override PartName=\"/xl/workbook.xml\" ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml\"/>"
    );
    for i in 1..=n {
        let _ = write!(
            types,
            "<Override PartName=\"/xl/worksheets/sheet{i}.xml\" ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml\"/>"
        );
    }
    types.push_str("</Types>");
    zip.add("[Content_Types].xml", types.as_bytes());

    zip.add(
        "_rels/.rels",
        format!(
            "{XML_HEADER}<Relationships xmlns=\"{PKG_REL_NS}\">\
<Relationship Id=\"rId1\" Type=\"{REL_NS}/officeDocument\" Target=\"xl/workbook.xml\"/></Relationships>"
        )
        .as_bytes(),
    );

    let mut workbook = format!("{XML_HEADER}<workbook xmlns=\"{MAIN_NS}\" xmlns:r=\"{REL_NS}\"><sheets>");
    let mut rels = format!("{XML_HEADER}<Relationships xmlns=\"{PKG_REL_NS}\">");
    for (i, s) in model.sheets.iter().enumerate() {
        let id = i + 1;
        let _ = write!(
            workbook,
            "<sheet name=\"{}\" sheetId=\"{id}\" r:id=\"rId{id}\"/>",
            escape_attr(&sanitize_sheet_name(&s.name))
        );
        let _ = write!(
            rels,
            "<Relationship Id=\"rId{id}\" Type=\"{REL_NS}/worksheet\" Target=\"worksheets/sheet{id}.xml\"/>"
        );
    }
    workbook.push_str("</sheets></workbook>");
    rels.push_str("</Relationships>");
    zip.add("xl/workbook.xml", workbook.as_bytes());
    zip.add("xl/_rels/workbook.xml.rels", rels.as_bytes());

    for (i, s) in model.sheets.iter().enumerate() {
        zip.add(&format!("xl/worksheets/sheet{}.xml", i + 1), sheet_xml(s).as_bytes());
    }
    Ok(zip.finish())
}
