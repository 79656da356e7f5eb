//! Validation and flattening of resources into per-kind tables.

mod report;
mod rows;
mod validate;

use chrono::{DateTime, Utc};

pub use report::{ErrorCategory, Failure, Finding, KindReport, TransformReport, Warning};
pub use rows::{
    capitalize, normalize_document_reference, normalize_encounter, normalize_observation,
    normalize_patient, value_cell, DocumentRow, EncounterRow, MissingRequiredField,
    ObservationRow, PatientRow,
};
pub use validate::validate_resource;

use crate::ingest::IngestBatch;
use crate::model::{classify_resource, ResourceKind, ResourceTree};
use crate::table::Table;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NormalizeError {
    #[error("ingest batch contains no resources")]
    EmptyBatch,
}

/// The four kinds that produce tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TableKind {
    Patient,
    Observation,
    Encounter,
    DocumentReference,
}

impl TableKind {
    pub const ALL: [TableKind; 4] = [
        TableKind::Patient,
        TableKind::Observation,
        TableKind::Encounter,
        TableKind::DocumentReference,
    ];

    pub fn resource_kind(self) -> ResourceKind {
        match self {
            TableKind::Patient => ResourceKind::Patient,
            TableKind::Observation => ResourceKind::Observation,
            TableKind::Encounter => ResourceKind::Encounter,
            TableKind::DocumentReference => ResourceKind::DocumentReference,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TableKind::Patient => "Patient",
            TableKind::Observation => "Observation",
            TableKind::Encounter => "Encounter",
            TableKind::DocumentReference => "DocumentReference",
        }
    }

    /// Accepts the resource type name, case-insensitively.
    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tables {
    pub patients: Vec<PatientRow>,
    pub observations: Vec<ObservationRow>,
    pub encounters: Vec<EncounterRow>,
    pub documents: Vec<DocumentRow>,
}

impl Tables {
    pub fn table(&self, kind: TableKind) -> Table {
        match kind {
            TableKind::Patient => Table::from_rows(&self.patients),
            TableKind::Observation => Table::from_rows(&self.observations),
            TableKind::Encounter => Table::from_rows(&self.encounters),
            TableKind::DocumentReference => Table::from_rows(&self.documents),
        }
    }

    pub fn row_count(&self, kind: TableKind) -> usize {
        match kind {
            TableKind::Patient => self.patients.len(),
            TableKind::Observation => self.observations.len(),
            TableKind::Encounter => self.encounters.len(),
            TableKind::DocumentReference => self.documents.len(),
        }
    }
}

/// Normalized output of one ingest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: String,
    pub tables: Tables,
    pub report: TransformReport,
    pub created_at: DateTime<Utc>,
    pub source_label: String,
}

impl Dataset {
    /// Tables and report equal; id and timestamps ignored.
    pub fn same_content(&self, other: &Dataset) -> bool {
        self.tables == other.tables && self.report == other.report
    }
}

/// Normalizes every resource of `batch`, labelling the dataset with the
/// batch's source.
pub fn normalize_batch(batch: &IngestBatch) -> Result<Dataset, NormalizeError> {
    normalize_resources(&batch.resources, batch.source.label(), batch.skipped_entries())
}

pub fn normalize_resources(
    resources: &[ResourceTree],
    source_label: String,
    skipped_entries: usize,
) -> Result<Dataset, NormalizeError> {
    if resources.is_empty() {
        return Err(NormalizeError::EmptyBatch);
    }
    let mut tables = Tables::default();
    let mut report = TransformReport {
        skipped_entries,
        ..TransformReport::default()
    };

    for (index, tree) in resources.iter().enumerate() {
        let kind = classify_resource(tree);
        let fail = |category, path: &str, message: String| Failure {
            resource_index: index,
            category,
            path: path.to_owned(),
            message,
        };

        match &kind {
            ResourceKind::Bundle => {
                report.record_failure(
                    &kind,
                    fail(ErrorCategory::UnsupportedNesting, "", "Bundle nested inside a Bundle".into()),
                    Vec::new(),
                );
                continue;
            }
            ResourceKind::Unsupported(name) => {
                report.record_failure(
                    &kind,
                    fail(
                        ErrorCategory::UnsupportedResourceType,
                        "resourceType",
                        format!("resource type {name} is not supported"),
                    ),
                    Vec::new(),
                );
                continue;
            }
            _ => {}
        }

        let findings = validate_resource(tree);
        let warnings: Vec<Warning> = findings
            .iter()
            .filter(|f| !f.fatal)
            .map(|f| Warning {
                resource_index: index,
                category: f.category.clone(),
                path: f.path.clone(),
                message: f.message.clone(),
            })
            .collect();
        if let Some(first) = findings.iter().find(|f| f.fatal) {
            report.record_failure(&kind, fail(first.category.clone(), &first.path, first.message.clone()), warnings);
            continue;
        }

        let outcome = match kind {
            ResourceKind::Patient => normalize_patient(tree).map(|r| tables.patients.push(r)),
            ResourceKind::Observation => {
                normalize_observation(tree).map(|rows| tables.observations.extend(rows))
            }
            ResourceKind::Encounter => normalize_encounter(tree).map(|r| tables.encounters.push(r)),
            ResourceKind::DocumentReference => {
                normalize_document_reference(tree).map(|r| tables.documents.push(r))
            }
            ResourceKind::Bundle | ResourceKind::Unsupported(_) => unreachable!("handled above"),
        };
        match outcome {
            Ok(()) => report.record_success(&kind, warnings),
            Err(MissingRequiredField(field)) => report.record_failure(
                &kind,
                fail(ErrorCategory::MissingRequiredField, field, format!("`{field}` is missing")),
                warnings,
            ),
        }
    }

    Ok(Dataset {
        id: uuid::Uuid::new_v4().simple().to_string(),
        tables,
        report,
        created_at: Utc::now(),
        source_label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_resource_tree;

    fn trees(jsons: &[&str]) -> Vec<ResourceTree> {
        jsons
            .iter()
            .map(|j| parse_resource_tree(j.as_bytes()).unwrap())
            .collect()
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert_eq!(
            normalize_resources(&[], "x".into(), 0).unwrap_err(),
            NormalizeError::EmptyBatch
        );
    }

    #[test]
    fn unsupported_kind_is_a_failure() {
        let ds = normalize_resources(&trees(&[r#"{"resourceType":"Medication"}"#]), "x".into(), 0)
            .unwrap();
        let kind = ResourceKind::Unsupported("Medication".into());
        let r = ds.report.kind(&kind).unwrap();
        assert_eq!((r.attempted, r.succeeded), (1, 0));
        assert_eq!(r.failures[0].category, ErrorCategory::UnsupportedResourceType);
        assert!(TableKind::ALL.iter().all(|k| ds.tables.row_count(*k) == 0));
    }

    #[test]
    fn nested_bundle_is_unsupported_nesting() {
        let ds = normalize_resources(
            &trees(&[r#"{"resourceType":"Bundle","type":"collection"}"#]),
            "x".into(),
            0,
        )
        .unwrap();
        let r = ds.report.kind(&ResourceKind::Bundle).unwrap();
        assert_eq!(r.failures[0].category, ErrorCategory::UnsupportedNesting);
    }

    #[test]
    fn report_reconciles_and_ids_are_fresh() {
        let input = trees(&[
            r#"{"resourceType":"Patient","id":"p"}"#,
            r#"{"resourceType":"Patient"}"#,
            r#"{"resourceType":"Observation","id":"o","code":{"text":"x"},"valueInteger":3}"#,
            r#"{"resourceType":"Observation","id":"o2","code":{"text":"x"}}"#,
            r#"{"resourceType":"Encounter","status":"finished"}"#,
        ]);
        let a = normalize_resources(&input, "x".into(), 0).unwrap();
        let b = normalize_resources(&input, "x".into(), 0).unwrap();
        assert_ne!(a.id, b.id);
        assert_eq!(a.id.len(), 32);
        assert!(a.same_content(&b));
        assert_eq!(a.report.total_attempted(), 5);
        for r in a.report.per_kind.values() {
            assert_eq!(r.attempted, r.succeeded + r.failures.len());
        }
        let obs = a.report.kind(&ResourceKind::Observation).unwrap();
        assert_eq!(obs.succeeded, 2);
        assert_eq!(obs.warnings.len(), 1);
        assert_eq!(a.report.failures()[0].1.resource_index, 1);
    }

    #[test]
    fn table_kind_parse() {
        assert_eq!(TableKind::parse("patient"), Some(TableKind::Patient));
        assert_eq!(TableKind::parse("DocumentReference"), Some(TableKind::DocumentReference));
        assert_eq!(TableKind::parse("Medication"), None);
    }
}
