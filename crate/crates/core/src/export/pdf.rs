//! Minimal PDF 1.4 writer: text and rectangle strokes, Helvetica only.
//!
//! Every table cell is drawn as one `BT ... ET` block whose `Tj` strings,
//! concatenated, give back the cell text. Wrapped lines keep their trailing
//! spaces so nothing is lost between lines.

use std::fmt::Write as _;

use super::report::{ReportDocument, Section, SectionBody};
use super::winansi::{encode, map_char, text_width, Mapped};
use crate::table::Table;
use crate::VERSION;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageMetrics {
    pub width: f64,
    pub height: f64,
    pub margin: f64,
    pub base_font_size: f64,
    pub header_font_size: f64,
    pub cell_padding: f64,
    pub leading: f64,
    pub footer_font_size: f64,
}

impl Default for PageMetrics {
    /// A4 portrait.
    fn default() -> Self {
        Self {
            width: 595.0,
            height: 842.0,
            margin: 36.0,
            base_font_size: 10.0,
            header_font_size: 14.0,
            cell_padding: 4.0,
            leading: 12.0,
            footer_font_size: 8.0,
        }
    }
}

impl PageMetrics {
    pub fn content_left(&self) -> f64 {
        self.margin
    }

    pub fn content_width(&self) -> f64 {
        self.width - 2.0 * self.margin
    }

    pub fn content_top(&self) -> f64 {
        self.height - self.margin
    }

    /// Bottom of the content box; the footer sits below it.
    pub fn content_bottom(&self) -> f64 {
        self.margin + self.footer_font_size + 6.0
    }

    fn row_height(&self, lines: usize) -> f64 {
        lines as f64 * self.leading + 2.0 * self.cell_padding
    }

    fn validate(&self) -> Result<(), PdfError> {
        let values = [
            self.width,
            self.height,
            self.margin,
            self.base_font_size,
            self.header_font_size,
            self.cell_padding,
            self.leading,
            self.footer_font_size,
        ];
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(PdfError::InvalidMetrics("negative or non-finite value".into()));
        }
        if self.base_font_size <= 0.0 || self.leading < self.base_font_size {
            return Err(PdfError::InvalidMetrics("leading must be at least the font size".into()));
        }
        let min_box = self.row_height(1) + self.header_font_size * 2.0 + 20.0;
        if self.content_width() < 40.0 || self.content_top() - self.content_bottom() < min_box {
            return Err(PdfError::InvalidMetrics("content box too small".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PdfError {
    #[error("heading {heading:?} has no characters representable in WinAnsi")]
    TextEncodingError { heading: String },
    #[error("invalid page metrics: {0}")]
    InvalidMetrics(String),
}

struct TextBlock {
    bold: bool,
    size: f64,
    x: f64,
    /// Baseline of the first line.
    y: f64,
    lines: Vec<Vec<u8>>,
}

enum Op {
    Text(TextBlock),
    Rect { x: f64, y: f64, w: f64, h: f64 },
}

/// Splits `text` into lines no wider than `max_width`, at spaces where
/// possible. Concatenating the lines yields `text` again.
pub(crate) fn wrap(text: &[u8], max_width: f64, bold: bool, size: f64) -> Vec<Vec<u8>> {
    let mut lines = Vec::new();
    let mut cur: Vec<u8> = Vec::new();
    let mut cur_w = 0.0;
    let mut i = 0;
    while i < text.len() {
        let word_end = text[i..].iter().position(|&b| b == b' ').map_or(text.len(), |p| i + p);
        let space_end = text[word_end..].iter().position(|&b| b != b' ').map_or(text.len(), |p| word_end + p);
        let word = &text[i..word_end];
        let word_w = text_width(word, bold, size);

        if !cur.is_empty() && cur_w + word_w > max_width {
            lines.push(std::mem::take(&mut cur));
            cur_w = 0.0;
        }
        if cur.is_empty() && word_w > max_width {
            // Hard break, at least one byte per line.
            for &b in word {
                let w = text_width(&[b], bold, size);
                if !cur.is_empty() && cur_w + w > max_width {
                    lines.push(std::mem::take(&mut cur));
                    cur_w = 0.0;
                }
                cur.push(b);
                cur_w += w;
            }
        } else {
            cur.extend_from_slice(word);
            cur_w += word_w;
        }
        let spaces = &text[word_end..space_end];
        cur.extend_from_slice(spaces);
        cur_w += text_width(spaces, bold, size);
        i = space_end;
    }
    if !cur.is_empty() || lines.is_empty() {
        lines.push(cur);
    }
    lines
}

/// Column widths summing to `total`: columns narrower than the fair share
/// keep their natural width, the rest split what remains evenly.
pub(crate) fn column_widths(natural: &[f64], total: f64) -> Vec<f64> {
    let n = natural.len();
    if n == 0 {
        return Vec::new();
    }
    let sum: f64 = natural.iter().sum();
    if sum <= total {
        let extra = (total - sum) / n as f64;
        return natural.iter().map(|w| w + extra).collect();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| natural[a].total_cmp(&natural[b]).then(a.cmp(&b)));
    let mut widths = vec![0.0; n];
    let mut remaining = total;
    for (done, &idx) in order.iter().enumerate() {
        let share = remaining / (n - done) as f64;
        if natural[idx] <= share {
            widths[idx] = natural[idx];
            remaining -= natural[idx];
        } else {
            for &rest in &order[done..] {
                widths[rest] = share;
            }
            break;
        }
    }
    widths
}

struct Layout {
    m: PageMetrics,
    pages: Vec<Vec<Op>>,
    y: f64,
}

impl Layout {
    fn new(m: PageMetrics) -> Self {
        Self {
            m,
            pages: vec![Vec::new()],
            y: m.content_top(),
        }
    }

    fn new_page(&mut self) {
        self.pages.push(Vec::new());
        self.y = self.m.content_top();
    }

    fn at_page_top(&self) -> bool {
        self.y >= self.m.content_top()
    }

    fn available(&self) -> f64 {
        self.y - self.m.content_bottom()
    }

    /// Starts a new page unless `h` fits or the page is still empty.
    fn reserve(&mut self, h: f64) {
        if h > self.available() && !self.at_page_top() {
            self.new_page();
        }
    }

    fn push(&mut self, op: Op) {
        self.pages.last_mut().expect("at least one page").push(op);
    }

    fn text_line(&mut self, bytes: Vec<u8>, bold: bool, size: f64, gap_after: f64) {
        self.reserve(size + gap_after);
        let x = self.m.content_left();
        let y = self.y - size;
        self.push(Op::Text(TextBlock { bold, size, x, y, lines: vec![bytes] }));
        self.y -= size + gap_after;
    }

    fn paragraph(&mut self, bytes: &[u8]) {
        let m = self.m;
        let lines = wrap(bytes, m.content_width(), false, m.base_font_size);
        let mut rest = &lines[..];
        while !rest.is_empty() {
            self.reserve(m.leading);
            let fit = ((self.available() / m.leading).floor() as usize).clamp(1, rest.len());
            let (now, later) = rest.split_at(fit);
            self.push(Op::Text(TextBlock {
                bold: false,
                size: m.base_font_size,
                x: m.content_left(),
                y: self.y - m.base_font_size,
                lines: now.to_vec(),
            }));
            self.y -= fit as f64 * m.leading;
            rest = later;
            if !rest.is_empty() {
                self.new_page();
            }
        }
        self.y -= m.leading / 2.0;
    }

    /// Draws a row of pre-wrapped cells, splitting it across pages only if
    /// it is taller than a whole page.
    fn row(&mut self, cells: &[Vec<Vec<u8>>], widths: &[f64], bold: &[bool], header: Option<&HeaderRow>) {
        let m = self.m;
        let max_lines = cells.iter().map(Vec::len).max().unwrap_or(1).max(1);
        let mut start = 0;
        while start < max_lines {
            let needed = m.row_height(max_lines - start);
            if needed > self.available() && !self.at_page_top() {
                self.new_page();
                if let Some(h) = header {
                    self.row(&h.cells, widths, &h.bold, None);
                }
            }
            let fit = (((self.available() - 2.0 * m.cell_padding) / m.leading).floor() as usize)
                .clamp(1, max_lines - start);
            let row_h = m.row_height(fit);
            let mut x = m.content_left();
            for (i, cell) in cells.iter().enumerate() {
                let end = (start + fit).min(cell.len());
                let lines: Vec<Vec<u8>> = if start < cell.len() {
                    cell[start..end].to_vec()
                } else {
                    Vec::new()
                };
                self.push(Op::Rect { x, y: self.y - row_h, w: widths[i], h: row_h });
                if !lines.is_empty() {
                    self.push(Op::Text(TextBlock {
                        bold: bold[i],
                        size: m.base_font_size,
                        x: x + m.cell_padding,
                        y: self.y - m.cell_padding - m.base_font_size,
                        lines,
                    }));
                }
                x += widths[i];
            }
            self.y -= row_h;
            start += fit;
            if start < max_lines {
                self.new_page();
                if let Some(h) = header {
                    self.row(&h.cells, widths, &h.bold, None);
                }
            }
        }
    }

    fn table(&mut self, header: Option<Vec<Vec<u8>>>, rows: &[Vec<Vec<u8>>], first_col_bold: bool) {
        let m = self.m;
        let ncols = header
            .as_ref()
            .map(Vec::len)
            .or_else(|| rows.first().map(Vec::len))
            .unwrap_or(0);
        if ncols == 0 {
            return;
        }
        let pad2 = 2.0 * m.cell_padding;
        let min_col = pad2 + text_width(b"W", true, m.base_font_size);
        let mut natural = vec![min_col; ncols];
        if let Some(h) = &header {
            for (i, c) in h.iter().enumerate() {
                natural[i] = natural[i].max(text_width(trim_end(c), true, m.base_font_size) + pad2);
            }
        }
        for row in rows {
            for (i, c) in row.iter().enumerate().take(ncols) {
                let bold = first_col_bold && i == 0;
                natural[i] = natural[i].max(text_width(trim_end(c), bold, m.base_font_size) + pad2);
            }
        }
        let widths = column_widths(&natural, m.content_width());
        let wrap_cells = |cells: &[Vec<u8>], bold: &[bool]| -> Vec<Vec<Vec<u8>>> {
            (0..ncols)
                .map(|i| {
                    let text = cells.get(i).map_or(&[][..], Vec::as_slice);
                    wrap(text, (widths[i] - pad2).max(1.0), bold[i], m.base_font_size)
                })
                .collect()
        };

        let header_row = header.map(|h| {
            let bold = vec![true; ncols];
            HeaderRow { cells: wrap_cells(&h, &bold), bold }
        });
        let body_bold: Vec<bool> = (0..ncols).map(|i| first_col_bold && i == 0).collect();
        if let Some(h) = &header_row {
            let first_h = rows.first().map_or(0.0, |r| {
                let lines = wrap_cells(r, &body_bold).iter().map(Vec::len).max().unwrap_or(1);
                m.row_height(lines)
            });
            let head_h = m.row_height(h.cells.iter().map(Vec::len).max().unwrap_or(1));
            self.reserve(head_h + first_h);
            self.row(&h.cells, &widths, &h.bold, None);
        }
        for r in rows {
            let cells = wrap_cells(r, &body_bold);
            self.row(&cells, &widths, &body_bold, header_row.as_ref());
        }
        self.y -= m.leading / 2.0;
    }
}

struct HeaderRow {
    cells: Vec<Vec<Vec<u8>>>,
    bold: Vec<bool>,
}

fn trim_end(b: &[u8]) -> &[u8] {
    let end = b.iter().rposition(|&c| c != b' ').map_or(0, |p| p + 1);
    &b[..end]
}

fn fully_unmappable(text: &str) -> bool {
    let mut visible = text.chars().filter(|c| !c.is_whitespace()).peekable();
    visible.peek().is_some() && visible.all(|c| map_char(c) == Mapped::Replaced)
}

fn count_replacements(doc: &ReportDocument) -> usize {
    let mut n = encode(&doc.title).1;
    for s in &doc.sections {
        n += encode(&s.heading).1;
        n += match &s.body {
            SectionBody::Table(t) => table_replacements(t),
            SectionBody::KeyValues(kv) => kv.iter().map(|(k, v)| encode(k).1 + encode(v).1).sum(),
            SectionBody::Paragraph(p) => encode(p).1,
        };
    }
    n
}

fn table_replacements(t: &Table) -> usize {
    t.columns.iter().map(|c| encode(c).1).sum::<usize>()
        + t.rows
            .iter()
            .flat_map(|r| r.iter())
            .map(|c| encode(c.as_str()).1)
            .sum::<usize>()
}

fn lay_out(doc: &ReportDocument, m: PageMetrics) -> Layout {
    let mut layout = Layout::new(m);
    layout.text_line(encode(&doc.title).0, true, m.header_font_size + 4.0, 10.0);

    let replaced = count_replacements(doc);
    let note = (replaced > 0).then(|| Section {
        heading: "Note".into(),
        body: SectionBody::Paragraph(format!(
            "{replaced} character(s) outside the WinAnsi character set were replaced with '?'."
        )),
    });

    for section in doc.sections.iter().chain(note.as_ref()) {
        let heading_h = m.header_font_size + 6.0;
        layout.reserve(heading_h + m.row_height(2));
        layout.text_line(encode(&section.heading).0, true, m.header_font_size, 6.0);
        match &section.body {
            SectionBody::Table(t) => {
                let header = t.columns.iter().map(|c| encode(c).0).collect();
                let rows: Vec<Vec<Vec<u8>>> = t
                    .rows
                    .iter()
                    .map(|r| r.iter().map(|c| encode(c.as_str()).0).collect())
                    .collect();
                layout.table(Some(header), &rows, false);
            }
            SectionBody::KeyValues(kv) => {
                let rows: Vec<Vec<Vec<u8>>> = kv
                    .iter()
                    .map(|(k, v)| vec![encode(k).0, encode(v).0])
                    .collect();
                layout.table(None, &rows, true);
            }
            SectionBody::Paragraph(p) => layout.paragraph(&encode(p).0),
        }
    }
    layout
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_owned() } else { s.to_owned() }
}

fn pdf_string(bytes: &[u8], out: &mut String) {
    out.push('(');
    for &b in bytes {
        match b {
            b'(' | b')' | b'\\' => {
                out.push('\\');
                out.push(b as char);
            }
            0x20..=0x7E => out.push(b as char),
            _ => {
                let _ = write!(out, "\\{b:03o}");
            }
        }
    }
    out.push(')');
}

fn content_stream(ops: &[Op], footer: &[u8], page: usize, pages: usize, m: &PageMetrics) -> String {
    let mut s = String::from("0.5 w\n");
    for op in ops {
        match op {
            Op::Rect { x, y, w, h } => {
                let _ = writeln!(s, "{} {} {} {} re S", num(*x), num(*y), num(*w), num(*h));
            }
            Op::Text(t) => text_block(&mut s, t, m.leading),
        }
    }
    let mut text = footer.to_vec();
    text.extend_from_slice(format!(" | Page {page} of {pages}").as_bytes());
    let max = m.content_width();
    if text_width(&text, false, m.footer_font_size) > max {
        let suffix = format!("... | Page {page} of {pages}").into_bytes();
        let mut keep = footer.to_vec();
        while !keep.is_empty() {
            keep.pop();
            let mut t = keep.clone();
            t.extend_from_slice(&suffix);
            if text_width(&t, false, m.footer_font_size) <= max {
                break;
            }
        }
        keep.extend_from_slice(&suffix);
        text = keep;
    }
    text_block(
        &mut s,
        &TextBlock {
            bold: false,
            size: m.footer_font_size,
            x: m.content_left(),
            y: m.margin,
            lines: vec![text],
        },
        m.leading,
    );
    s
}

fn text_block(s: &mut String, t: &TextBlock, leading: f64) {
    let font = if t.bold { "F2" } else { "F1" };
    let _ = writeln!(s, "BT\n/{font} {} Tf\n{} {} Td", num(t.size), num(t.x), num(t.y));
    for (i, line) in t.lines.iter().enumerate() {
        if i > 0 {
            let _ = writeln!(s, "0 {} Td", num(-leading));
        }
        pdf_string(line, s);
        s.push_str(" Tj\n");
    }
    s.push_str("ET\n");
}

/// Renders `doc` to PDF bytes. Output depends only on `doc` and `metrics`.
pub fn render_pdf(doc: &ReportDocument, metrics: &PageMetrics) -> Result<Vec<u8>, PdfError> {
    metrics.validate()?;
    for heading in std::iter::once(&doc.title).chain(doc.sections.iter().map(|s| &s.heading)) {
        if fully_unmappable(heading) {
            return Err(PdfError::TextEncodingError { heading: heading.clone() });
        }
    }

    let layout = lay_out(doc, *metrics);
    let n_pages = layout.pages.len();
    let footer = encode(&doc.footer).0;

    let mut out: Vec<u8> = Vec::new();
    let mut offsets: Vec<usize> = Vec::new();
    out.extend_from_slice(b"%PDF-1.4\n%\xE2\xE3\xCF\xD3\n");
    let mut object = |out: &mut Vec<u8>, body: &[u8]| {
        offsets.push(out.len());
        out.extend_from_slice(format!("{} 0 obj\n", offsets.len()).as_bytes());
        out.extend_from_slice(body);
        out.extend_from_slice(b"\nendobj\n");
    };

    let page_ids: Vec<usize> = (0..n_pages).map(|i| 6 + 2 * i).collect();
    let kids: Vec<String> = page_ids.iter().map(|id| format!("{id} 0 R")).collect();
    object(&mut out, b"<< /Type /Catalog /Pages 2 0 R >>");
    object(
        &mut out,
        format!(
            "<< /Type /Pages /Kids [{}] /Count {n_pages} /MediaBox [0 0 {} {}] >>",
            kids.join(" "),
            num(metrics.width),
            num(metrics.height)
        )
        .as_bytes(),
    );
    object(&mut out, b"<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica /Encoding /WinAnsiEncoding >>");
    object(&mut out, b"<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica-Bold /Encoding /WinAnsiEncoding >>");
    let mut info = String::from("<< /Title ");
    pdf_string(&encode(&doc.title).0, &mut info);
    info.push_str(" /Producer ");
    pdf_string(format!("fhirlens {VERSION}").as_bytes(), &mut info);
    let _ = write!(info, " /CreationDate (D:{}Z) >>", doc.generated_at.format("%Y%m%d%H%M%S"));
    object(&mut out, info.as_bytes());

    for (i, ops) in layout.pages.iter().enumerate() {
        object(
            &mut out,
            format!(
                "<< /Type /Page /Parent 2 0 R /Resources << /Font << /F1 3 0 R /F2 4 0 R >> >> /Contents {} 0 R >>",
                page_ids[i] + 1
            )
            .as_bytes(),
        );
        let stream = content_stream(ops, &footer, i + 1, n_pages, metrics);
        let mut body = format!("<< /Length {} >>\nstream\n", stream.len()).into_bytes();
        body.extend_from_slice(stream.as_bytes());
        body.extend_from_slice(b"\nendstream");
        object(&mut out, &body);
    }

    let xref_at = out.len();
    let count = offsets.len() + 1;
    let mut xref = format!("xref\n0 {count}\n0000000000 65535 f \n");
    for off in &offsets {
        let _ = writeln!(xref, "{off:010} 00000 n ");
    }
    let _ = write!(
        xref,
        "trailer\n<< /Size {count} /Root 1 0 R /Info 5 0 R >>\nstartxref\n{xref_at}\n%%EOF"
    );
    out.extend_from_slice(xref.as_bytes());
    Ok(out)
}
