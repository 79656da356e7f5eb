use fhirlens_core::export::{export_dataset, ExportFormat, RenderOptions};
use fhirlens_core::normalize::TableKind;
use fhirlens_core::{load_local, normalize_batch, Dataset, ResourceKind};
use fhirlens_testkit::{parse_pdf, read_xlsx, ReadCell, SAMPLE_BUNDLE};

fn dataset() -> Dataset {
    let batch = load_local(SAMPLE_BUNDLE.as_bytes(), "sample_bundle.json").unwrap();
    normalize_batch(&batch).unwrap()
}

#[test]
fn patient_row_matches_sample_bundle() {
    let ds = dataset();
    assert!(ds.report.all_succeeded());
    let p = &ds.tables.patients[0];
    assert_eq!(p.resource_id, "32298144");
    assert_eq!(p.name, "F_Name L_Name");
    assert_eq!(p.given_names, "F_Name Renee");
    assert_eq!(p.gender, "Female");
    assert_eq!(p.birth_date.as_ref().unwrap().iso_text(), "1810-03-21");
}

#[test]
fn document_row_matches_sample_bundle() {
    let ds = dataset();
    let d = &ds.tables.documents[0];
    assert_eq!(d.doc_type, "Progress Note");
    assert_eq!(d.status_combined, "Current / Final");
    assert_eq!(d.date.as_ref().unwrap().iso_text(), "2024-01-09");
    assert!(d.author_ref.starts_with("Practitioner/"));
    assert!(d.content_excluded);
    assert_eq!(ds.report.success_rate(&ResourceKind::DocumentReference), Some(1.0));
}

#[test]
fn pdf_carries_demographics_and_document() {
    let pdf = export_dataset(&dataset(), ExportFormat::Pdf, None, &RenderOptions::fixed()).unwrap();
    let parsed = parse_pdf(&pdf).unwrap();
    let texts = parsed.block_texts();
    for want in ["32298144", "F_Name L_Name", "Female", "1810-03-21", "Progress Note", "Current / Final", "2024-01-09"] {
        assert!(texts.iter().any(|t| t == want), "missing {want}");
    }
    let demo = ["Resource Type", "Patient", "Patient ID", "32298144", "Name", "F_Name L_Name", "Gender", "Female", "Date of Birth", "1810-03-21"];
    let demo: Vec<String> = demo.iter().map(|s| (*s).to_owned()).collect();
    assert_eq!(fhirlens_testkit::count_runs(&texts, &demo), 1);
    assert!(!texts.iter().any(|t| t.contains("UHJvZ3Jlc3M")), "attachment data leaked");
}

#[test]
fn xlsx_patient_sheet() {
    let xlsx = export_dataset(&dataset(), ExportFormat::Xlsx, None, &RenderOptions::fixed()).unwrap();
    let sheets = read_xlsx(&xlsx).unwrap();
    let names: Vec<&str> = sheets.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["Patient", "Documents", "TransformReport"]);
    let patient = &sheets[0];
    assert_eq!(patient.rows[1][0], ReadCell::Text("32298144".into()));
    assert_eq!(patient.rows[1][1], ReadCell::Text("F_Name L_Name".into()));
    assert_eq!(patient.rows[1][3], ReadCell::Text("Female".into()));
    assert_eq!(patient.rows[1][4], ReadCell::Text("1810-03-21".into()));
}

#[test]
fn csv_patient_table() {
    let csv = export_dataset(&dataset(), ExportFormat::Csv, Some(TableKind::Patient), &RenderOptions::fixed()).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.split_terminator("\r\n").collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("32298144,F_Name L_Name,"));
}
