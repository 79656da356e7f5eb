//! Acquisition of FHIR JSON from local bytes or live endpoints.

mod fetch;

use std::time::Instant;

use serde_json::{json, Value};

pub use fetch::{fetch_endpoint, next_page_url, FetchOptions, ACCEPT_FHIR_JSON, TIMEOUT_ENV};

use crate::model::{
    classify_resource, extract_bundle_entries, parse_resource_tree, BundleMeta, ModelError,
    ResourceKind, ResourceTree,
};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("input is empty")]
    EmptyInput,
    #[error("invalid endpoint URL {url:?}: {reason}")]
    InvalidUrl { url: String, reason: String },
    #[error("request to {url} failed: {cause}")]
    NetworkError { url: String, cause: String },
    #[error("server answered HTTP {code}: {body_excerpt}")]
    HttpStatusError { code: u16, body_excerpt: String },
    #[error("response from {url} is not FHIR JSON: {reason}")]
    NotFhirJson { url: String, reason: String },
    #[error("request to {url} timed out")]
    Timeout { url: String },
}

impl IngestError {
    /// Stable machine-readable name, used by the HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::Model(ModelError::MalformedJson { .. }) => "MalformedJson",
            IngestError::Model(ModelError::MissingResourceType) => "MissingResourceType",
            IngestError::Model(ModelError::InputTooLarge { .. }) => "InputTooLarge",
            IngestError::Model(ModelError::NotABundle(_)) => "NotABundle",
            IngestError::EmptyInput => "EmptyInput",
            IngestError::InvalidUrl { .. } => "InvalidUrl",
            IngestError::NetworkError { .. } => "NetworkError",
            IngestError::HttpStatusError { .. } => "HttpStatusError",
            IngestError::NotFhirJson { .. } => "NotFhirJson",
            IngestError::Timeout { .. } => "Timeout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestSource {
    File { name: String },
    Endpoint { base_url: String, query: String },
}

impl IngestSource {
    pub fn label(&self) -> String {
        match self {
            IngestSource::File { name } => name.clone(),
            IngestSource::Endpoint { base_url, query } if query.is_empty() => base_url.clone(),
            IngestSource::Endpoint { base_url, query } => format!("{base_url}?{query}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestBatch {
    pub source: IngestSource,
    pub resources: Vec<ResourceTree>,
    pub bundle_meta: Option<BundleMeta>,
    /// Pages requested; 0 for local input.
    pub fetched_pages: usize,
    /// A `next` link was still present when the page cap was reached.
    pub truncated: bool,
    pub ingest_duration_ms: f64,
}

impl IngestBatch {
    pub fn skipped_entries(&self) -> usize {
        self.bundle_meta.as_ref().map_or(0, |m| m.skipped_entries)
    }

    /// Re-serializes the batch as one Bundle. Loading the result with
    /// [`load_local`] yields the same resources.
    pub fn to_bundle_json(&self) -> Vec<u8> {
        let bundle_type = self
            .bundle_meta
            .as_ref()
            .map(|m| m.bundle_type.as_str())
            .filter(|t| !t.is_empty())
            .unwrap_or("collection");
        let entries: Vec<Value> = self
            .resources
            .iter()
            .map(|r| json!({ "resource": r.root() }))
            .collect();
        let bundle = json!({
            "resourceType": "Bundle",
            "type": bundle_type,
            "total": entries.len(),
            "entry": entries,
        });
        serde_json::to_vec_pretty(&bundle).expect("JSON values always serialize")
    }
}

/// Builds a batch from raw bytes: a Bundle contributes its entries, any
/// other resource is the single member of the batch.
pub fn load_local(input: &[u8], name: &str) -> Result<IngestBatch, IngestError> {
    let started = Instant::now();
    if input.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let tree = parse_resource_tree(input)?;
    let (resources, bundle_meta) = split(tree)?;
    Ok(IngestBatch {
        source: IngestSource::File { name: name.to_owned() },
        resources,
        bundle_meta,
        fetched_pages: 0,
        truncated: false,
        ingest_duration_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

pub(crate) fn split(tree: ResourceTree) -> Result<(Vec<ResourceTree>, Option<BundleMeta>), ModelError> {
    if classify_resource(&tree) == ResourceKind::Bundle {
        let (meta, entries) = extract_bundle_entries(&tree)?;
        Ok((entries, Some(meta)))
    } else {
        Ok((vec![tree], None))
    }
}
