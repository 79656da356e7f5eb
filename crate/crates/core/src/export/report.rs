use chrono::{DateTime, Utc};

use crate::normalize::{Dataset, TableKind};
use crate::series::{extract_series, summarize};
use crate::table::{Cell, Table};

pub const REPORT_TITLE: &str = "FHIR Data Report";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportDocument {
    pub title: String,
    pub sections: Vec<Section>,
    /// Generation timestamp plus source label, printed on every page.
    pub footer: String,
    pub generated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub heading: String,
    pub body: SectionBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SectionBody {
    Table(Table),
    KeyValues(Vec<(String, String)>),
    Paragraph(String),
}

/// Heading used for each kind's table section.
pub fn section_heading(kind: TableKind) -> &'static str {
    match kind {
        TableKind::Patient => "Patients",
        TableKind::Observation => "Observations",
        TableKind::Encounter => "Encounters",
        TableKind::DocumentReference => "Documents",
    }
}

/// Lays out a dataset as report sections: demographics of the first
/// patient, one table per non-empty kind, series summaries, then the
/// transform report.
pub fn build_report(dataset: &Dataset, generated_at: DateTime<Utc>) -> ReportDocument {
    let mut sections = Vec::new();

    if let Some(p) = dataset.tables.patients.first() {
        let birth = p.birth_date.as_ref().map(|t| t.iso_text().to_owned()).unwrap_or_default();
        sections.push(Section {
            heading: "Patient Demographics".into(),
            body: SectionBody::KeyValues(vec![
                ("Resource Type".into(), "Patient".into()),
                ("Patient ID".into(), p.resource_id.clone()),
                ("Name".into(), p.name.clone()),
                ("Gender".into(), p.gender.clone()),
                ("Date of Birth".into(), birth),
            ]),
        });
    }

    for kind in TableKind::ALL {
        let table = dataset.tables.table(kind);
        if !table.is_empty() {
            sections.push(Section {
                heading: section_heading(kind).into(),
                body: SectionBody::Table(table),
            });
        }
    }

    let set = extract_series(dataset);
    let summaries = summarize(&set);
    if !summaries.is_empty() {
        let rows = summaries
            .iter()
            .map(|(key, s)| {
                let series = &set.series[key];
                vec![
                    Cell::text(&series.label),
                    Cell::text(&series.unit),
                    Cell::number(s.count),
                    Cell::Number(s.min.text().to_owned()),
                    Cell::Number(s.max.text().to_owned()),
                    Cell::Number(s.mean_display()),
                    Cell::text(s.first_t.iso_text()),
                    Cell::text(s.last_t.iso_text()),
                ]
            })
            .collect();
        sections.push(Section {
            heading: "Series Summaries".into(),
            body: SectionBody::Table(Table {
                columns: ["series", "unit", "count", "min", "max", "mean", "first", "last"]
                    .map(String::from)
                    .to_vec(),
                rows,
            }),
        });
    }

    sections.push(Section {
        heading: "Transform Report".into(),
        body: SectionBody::Table(report_summary_table(dataset)),
    });
    let counts = dataset.report.category_counts();
    if !counts.is_empty() {
        sections.push(Section {
            heading: "Failures by Category".into(),
            body: SectionBody::Table(Table {
                columns: vec!["category".into(), "count".into()],
                rows: counts
                    .iter()
                    .map(|(c, n)| vec![Cell::text(c.name()), Cell::number(n)])
                    .collect(),
            }),
        });
    }
    if dataset.report.skipped_entries > 0 {
        sections.push(Section {
            heading: "Skipped Entries".into(),
            body: SectionBody::Paragraph(format!(
                "{} bundle entries carried no usable resource and were skipped.",
                dataset.report.skipped_entries
            )),
        });
    }

    ReportDocument {
        title: REPORT_TITLE.into(),
        sections,
        footer: format!(
            "Generated {} | Source: {}",
            iso_timestamp(generated_at),
            dataset.source_label
        ),
        generated_at,
    }
}

/// Success rate as a fixed four-decimal fraction.
pub fn rate_text(rate: f64) -> String {
    format!("{rate:.4}")
}

/// One row per attempted kind: kind, attempted, succeeded, success_rate.
pub fn report_summary_table(dataset: &Dataset) -> Table {
    Table {
        columns: ["kind", "attempted", "succeeded", "success_rate"]
            .map(String::from)
            .to_vec(),
        rows: dataset
            .report
            .per_kind
            .iter()
            .map(|(kind, r)| {
                vec![
                    Cell::text(kind.name()),
                    Cell::number(r.attempted),
                    Cell::number(r.succeeded),
                    Cell::Number(rate_text(r.success_rate())),
                ]
            })
            .collect(),
    }
}

/// `YYYY-MM-DDTHH:MM:SSZ`
pub fn iso_timestamp(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}
