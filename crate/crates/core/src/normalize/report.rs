use std::collections::BTreeMap;
use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::model::ResourceKind;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorCategory {
    MalformedExtension,
    IncompleteCoding,
    MissingRequiredField,
    InvalidDate,
    AmbiguousChoice,
    UnsupportedResourceType,
    UnsupportedNesting,
    Other(String),
}

impl ErrorCategory {
    pub fn name(&self) -> &str {
        match self {
            ErrorCategory::MalformedExtension => "MalformedExtension",
            ErrorCategory::IncompleteCoding => "IncompleteCoding",
            ErrorCategory::MissingRequiredField => "MissingRequiredField",
            ErrorCategory::InvalidDate => "InvalidDate",
            ErrorCategory::AmbiguousChoice => "AmbiguousChoice",
            ErrorCategory::UnsupportedResourceType => "UnsupportedResourceType",
            ErrorCategory::UnsupportedNesting => "UnsupportedNesting",
            ErrorCategory::Other(name) => name,
        }
    }

    pub fn from_name(name: &str) -> Self {
        match name {
            "MalformedExtension" => ErrorCategory::MalformedExtension,
            "IncompleteCoding" => ErrorCategory::IncompleteCoding,
            "MissingRequiredField" => ErrorCategory::MissingRequiredField,
            "InvalidDate" => ErrorCategory::InvalidDate,
            "AmbiguousChoice" => ErrorCategory::AmbiguousChoice,
            "UnsupportedResourceType" => ErrorCategory::UnsupportedResourceType,
            "UnsupportedNesting" => ErrorCategory::UnsupportedNesting,
            other => ErrorCategory::Other(other.to_owned()),
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for ErrorCategory {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

/// One validation result. Fatal findings abort normalization of the resource.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub category: ErrorCategory,
    pub path: String,
    pub fatal: bool,
    pub message: String,
}

impl Finding {
    pub fn fatal(category: ErrorCategory, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            category,
            path: path.into(),
            fatal: true,
            message: message.into(),
        }
    }

    pub fn warning(category: ErrorCategory, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            category,
            path: path.into(),
            fatal: false,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    /// Position of the resource in the ingest batch.
    pub resource_index: usize,
    pub category: ErrorCategory,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Warning {
    pub resource_index: usize,
    pub category: ErrorCategory,
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KindReport {
    pub attempted: usize,
    pub succeeded: usize,
    pub failures: Vec<Failure>,
    pub warnings: Vec<Warning>,
}

impl KindReport {
    pub fn success_rate(&self) -> f64 {
        if self.attempted == 0 {
            1.0
        } else {
            self.succeeded as f64 / self.attempted as f64
        }
    }
}

/// Per resource kind accounting of normalization outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransformReport {
    pub per_kind: BTreeMap<ResourceKind, KindReport>,
    /// Bundle entries that carried no usable resource.
    pub skipped_entries: usize,
}

impl TransformReport {
    pub(crate) fn record_success(&mut self, kind: &ResourceKind, warnings: Vec<Warning>) {
        let entry = self.per_kind.entry(kind.clone()).or_default();
        entry.attempted += 1;
        entry.succeeded += 1;
        entry.warnings.extend(warnings);
    }

    pub(crate) fn record_failure(&mut self, kind: &ResourceKind, failure: Failure, warnings: Vec<Warning>) {
        let entry = self.per_kind.entry(kind.clone()).or_default();
        entry.attempted += 1;
        entry.failures.push(failure);
        entry.warnings.extend(warnings);
    }

    pub fn kind(&self, kind: &ResourceKind) -> Option<&KindReport> {
        self.per_kind.get(kind)
    }

    /// `succeeded / attempted` for `kind`; `None` if nothing was attempted.
    pub fn success_rate(&self, kind: &ResourceKind) -> Option<f64> {
        self.per_kind.get(kind).map(KindReport::success_rate)
    }

    pub fn total_attempted(&self) -> usize {
        self.per_kind.values().map(|k| k.attempted).sum()
    }

    pub fn total_failures(&self) -> usize {
        self.per_kind.values().map(|k| k.failures.len()).sum()
    }

    pub fn all_succeeded(&self) -> bool {
        self.total_failures() == 0
    }

    /// All failures across kinds, ordered by resource index.
    pub fn failures(&self) -> Vec<(&ResourceKind, &Failure)> {
        let mut all: Vec<_> = self
            .per_kind
            .iter()
            .flat_map(|(kind, r)| r.failures.iter().map(move |f| (kind, f)))
            .collect();
        all.sort_by_key(|(_, f)| f.resource_index);
        all
    }

    /// Failure counts per category, in category order.
    pub fn category_counts(&self) -> BTreeMap<ErrorCategory, usize> {
        let mut counts = BTreeMap::new();
        for (_, f) in self.failures() {
            *counts.entry(f.category.clone()).or_insert(0) += 1;
        }
        counts
    }
}

impl Serialize for TransformReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct KindOut<'a> {
            kind: &'a ResourceKind,
            attempted: usize,
            succeeded: usize,
            success_rate: f64,
            failures: &'a [Failure],
            warnings: &'a [Warning],
        }
        let kinds: Vec<KindOut<'_>> = self
            .per_kind
            .iter()
            .map(|(kind, r)| KindOut {
                kind,
                attempted: r.attempted,
                succeeded: r.succeeded,
                success_rate: r.success_rate(),
                failures: &r.failures,
                warnings: &r.warnings,
            })
            .collect();
        let mut s = serializer.serialize_struct("TransformReport", 4)?;
        s.serialize_field("kinds", &kinds)?;
        s.serialize_field("total_attempted", &self.total_attempted())?;
        s.serialize_field("total_failures", &self.total_failures())?;
        s.serialize_field("skipped_entries", &self.skipped_entries)?;
        s.end()
    }
}
