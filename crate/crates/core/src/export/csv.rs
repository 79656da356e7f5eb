use crate::table::Table;

fn field(out: &mut Vec<u8>, s: &str) {
    if s.contains([',', '"', '\r', '\n']) {
        out.push(b'"');
        out.extend_from_slice(s.replace('"', "\"\"").as_bytes());
        out.push(b'"');
    } else {
        out.extend_from_slice(s.as_bytes());
    }
}

fn record<'a>(out: &mut Vec<u8>, fields: impl Iterator<Item = &'a str>) {
    for (i, f) in fields.enumerate() {
        if i > 0 {
            out.push(b',');
        }
        field(out, f);
    }
    out.extend_from_slice(b"\r\n");
}

/// RFC 4180 CSV: header first, CRLF line ends, UTF-8 without BOM.
pub fn render_csv(table: &Table) -> Vec<u8> {
    let mut out = Vec::new();
    record(&mut out, table.columns.iter().map(String::as_str));
    for row in &table.rows {
        record(&mut out, row.iter().map(|c| c.as_str()));
    }
    out
}
