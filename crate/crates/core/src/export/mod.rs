//! PDF, XLSX and CSV renderings of a [`Dataset`].

mod csv;
mod pdf;
mod report;
mod winansi;
mod xlsx;
mod zip;

use chrono::{DateTime, Utc};

pub use self::csv::render_csv;
pub use self::pdf::{render_pdf, PageMetrics, PdfError};
pub use self::report::{
    build_report, iso_timestamp, rate_text, report_summary_table, section_heading, ReportDocument,
    Section, SectionBody, REPORT_TITLE,
};
pub use self::winansi::{encode as encode_winansi, map_char as map_winansi, Mapped};
pub use self::xlsx::{
    build_workbook, column_letters, render_xlsx, report_sheet, sanitize_sheet_name, sheet_name,
    Sheet, WorkbookModel, XlsxError, REPORT_COLUMNS, REPORT_SHEET,
};
pub use self::zip::{crc32, ZipWriter};

use crate::normalize::{Dataset, TableKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Pdf,
    Xlsx,
    Csv,
}

impl ExportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pdf" => Some(Self::Pdf),
            "xlsx" => Some(Self::Xlsx),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Pdf => "pdf",
            Self::Xlsx => "xlsx",
            Self::Csv => "csv",
        }
    }

    pub fn media_type(self) -> &'static str {
        match self {
            Self::Pdf => "application/pdf",
            Self::Xlsx => "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet",
            Self::Csv => "text/csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub generated_at: DateTime<Utc>,
    pub deflate: bool,
    pub metrics: PageMetrics,
}

impl RenderOptions {
    pub fn now() -> Self {
        Self::at(Utc::now())
    }

    /// Timestamp frozen at the Unix epoch, for reproducible bytes.
    pub fn fixed() -> Self {
        Self::at(DateTime::UNIX_EPOCH)
    }

    pub fn at(generated_at: DateTime<Utc>) -> Self {
        Self {
            generated_at,
            deflate: false,
            metrics: PageMetrics::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExportError {
    #[error(transparent)]
    Pdf(#[from] PdfError),
    #[error(transparent)]
    Xlsx(#[from] XlsxError),
}

/// Table exported as CSV when no kind is requested: the first non-empty
/// one, in Patient, Observation, Encounter, DocumentReference order.
pub fn default_csv_kind(dataset: &Dataset) -> TableKind {
    TableKind::ALL
        .into_iter()
        .find(|k| dataset.tables.row_count(*k) > 0)
        .unwrap_or(TableKind::Patient)
}

/// The single entry point shared by the CLI and the HTTP service, so both
/// produce the same bytes for the same dataset and options.
pub fn export_dataset(
    dataset: &Dataset,
    format: ExportFormat,
    kind: Option<TableKind>,
    opts: &RenderOptions,
) -> Result<Vec<u8>, ExportError> {
    match format {
        ExportFormat::Pdf => Ok(render_pdf(&build_report(dataset, opts.generated_at), &opts.metrics)?),
        ExportFormat::Xlsx => Ok(render_xlsx(&build_workbook(dataset), opts.generated_at, opts.deflate)?),
        ExportFormat::Csv => {
            let kind = kind.unwrap_or_else(|| default_csv_kind(dataset));
            Ok(render_csv(&dataset.tables.table(kind)))
        }
    }
}
