//! Generic FHIR resource trees, resource classification and Bundle handling.

mod time;
mod value;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;

pub use time::{InvalidTimePoint, Precision, TimePoint};
pub use value::{
    canonical_json, find_choice, resolve_choice_value, typed_value, AmbiguousChoice, Codeable,
    Coding, Decimal, Quantity, TypedValue, CHOICE_SUFFIX_PRIORITY,
};

use crate::MAX_INPUT_BYTES;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("malformed JSON at byte {offset}: {message}")]
    MalformedJson { offset: usize, message: String },
    #[error("JSON document has no string `resourceType` at its root")]
    MissingResourceType,
    #[error("input of {size} bytes exceeds the {limit} byte limit")]
    InputTooLarge { size: usize, limit: usize },
    #[error("resource is a {0}, not a Bundle")]
    NotABundle(String),
}

/// One parsed FHIR resource. Cheap to clone; the JSON tree is shared.
#[derive(Debug, Clone)]
pub struct ResourceTree {
    root: Arc<Value>,
    source_offset: usize,
    raw_size_bytes: usize,
    /// Byte spans of `entry[i].resource`, relative to this resource's start.
    entry_spans: Arc<[Option<(usize, usize)>]>,
}

impl ResourceTree {
    /// Wraps an already parsed value. Fails unless `root` is an object with a
    /// string `resourceType`.
    pub fn from_value(root: Value) -> Result<Self, ModelError> {
        let size = serde_json::to_vec(&root).map(|v| v.len()).unwrap_or(0);
        Self::with_origin(root, 0, size)
    }

    fn with_origin(root: Value, source_offset: usize, raw_size_bytes: usize) -> Result<Self, ModelError> {
        match root.get("resourceType") {
            Some(Value::String(_)) => Ok(Self {
                root: Arc::new(root),
                source_offset,
                raw_size_bytes,
                entry_spans: Arc::from(Vec::new()),
            }),
            _ => Err(ModelError::MissingResourceType),
        }
    }

    pub fn root(&self) -> &Value {
        &self.root
    }

    pub fn resource_type(&self) -> &str {
        self.root["resourceType"].as_str().unwrap_or_default()
    }

    pub fn id(&self) -> Option<&str> {
        self.root.get("id").and_then(Value::as_str)
    }

    /// Byte index of this resource within the ingested input.
    pub fn source_offset(&self) -> usize {
        self.source_offset
    }

    pub fn raw_size_bytes(&self) -> usize {
        self.raw_size_bytes
    }

    /// Looks up a dotted path such as `code.coding`.
    pub fn get(&self, path: &str) -> Option<&Value> {
        path.split('.')
            .try_fold(self.root.as_ref(), |node, key| node.get(key))
    }
}

impl PartialEq for ResourceTree {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ResourceKind {
    Patient,
    Observation,
    Encounter,
    DocumentReference,
    Bundle,
    Unsupported(String),
}

impl ResourceKind {
    pub fn name(&self) -> &str {
        match self {
            ResourceKind::Patient => "Patient",
            ResourceKind::Observation => "Observation",
            ResourceKind::Encounter => "Encounter",
            ResourceKind::DocumentReference => "DocumentReference",
            ResourceKind::Bundle => "Bundle",
            ResourceKind::Unsupported(name) => name,
        }
    }

    pub fn from_name(name: &str) -> Self {
        match name {
            "Patient" => ResourceKind::Patient,
            "Observation" => ResourceKind::Observation,
            "Encounter" => ResourceKind::Encounter,
            "DocumentReference" => ResourceKind::DocumentReference,
            "Bundle" => ResourceKind::Bundle,
            other => ResourceKind::Unsupported(other.to_owned()),
        }
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for ResourceKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct BundleLink {
    pub relation: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct BundleMeta {
    pub bundle_type: String,
    pub total: Option<u64>,
    pub links: Vec<BundleLink>,
    /// Entries without a usable `resource` object.
    pub skipped_entries: usize,
}

/// Parses one FHIR JSON document.
pub fn parse_resource_tree(input: &[u8]) -> Result<ResourceTree, ModelError> {
    if input.len() > MAX_INPUT_BYTES {
        return Err(ModelError::InputTooLarge {
            size: input.len(),
            limit: MAX_INPUT_BYTES,
        });
    }
    let text = std::str::from_utf8(input).map_err(|e| ModelError::MalformedJson {
        offset: e.valid_up_to(),
        message: "input is not valid UTF-8".into(),
    })?;
    let root: Value = serde_json::from_str(text).map_err(|e| malformed(text, &e))?;
    let is_bundle = root.get("resourceType").and_then(Value::as_str) == Some("Bundle");
    let mut tree = ResourceTree::with_origin(root, 0, input.len())?;
    if is_bundle {
        tree.entry_spans = Arc::from(entry_spans(text));
    }
    Ok(tree)
}

fn malformed(text: &str, err: &serde_json::Error) -> ModelError {
    // serde_json reports 1-based line and column; the column counts bytes.
    let line_start: usize = text
        .split_inclusive('\n')
        .take(err.line().saturating_sub(1))
        .map(str::len)
        .sum();
    ModelError::MalformedJson {
        offset: (line_start + err.column().saturating_sub(1)).min(text.len()),
        message: err.to_string(),
    }
}

#[derive(Deserialize)]
struct RawBundle<'a> {
    #[serde(borrow, default)]
    entry: Vec<RawEntry<'a>>,
}

#[derive(Deserialize)]
struct RawEntry<'a> {
    #[serde(borrow, default)]
    resource: Option<&'a RawValue>,
}

/// Byte spans of each entry's resource. Empty when the entry list does not
/// have the conventional shape; offsets then fall back to the Bundle's own.
fn entry_spans(text: &str) -> Vec<Option<(usize, usize)>> {
    let Ok(raw) = serde_json::from_str::<RawBundle<'_>>(text) else {
        return Vec::new();
    };
    let base = text.as_ptr() as usize;
    raw.entry
        .iter()
        .map(|e| {
            e.resource.map(|r| {
                let s = r.get();
                (s.as_ptr() as usize - base, s.len())
            })
        })
        .collect()
}

pub fn classify_resource(tree: &ResourceTree) -> ResourceKind {
    ResourceKind::from_name(tree.resource_type())
}

/// Splits a Bundle into its entry resources, in input order.
///
/// Entries without a `resource` object carrying a string `resourceType` are
/// skipped and counted in [`BundleMeta::skipped_entries`]. Nested Bundles are
/// returned as-is; normalization rejects them.
pub fn extract_bundle_entries(
    tree: &ResourceTree,
) -> Result<(BundleMeta, Vec<ResourceTree>), ModelError> {
    if classify_resource(tree) != ResourceKind::Bundle {
        return Err(ModelError::NotABundle(tree.resource_type().to_owned()));
    }
    let root = tree.root();
    let str_field = |v: &Value, k: &str| v.get(k).and_then(Value::as_str).map(str::to_owned);

    let links = root
        .get("link")
        .and_then(Value::as_array)
        .map(|links| {
            links
                .iter()
                .filter_map(|l| {
                    Some(BundleLink {
                        relation: str_field(l, "relation")?,
                        url: str_field(l, "url")?,
                    })
                })
                .collect()
        })
        .unwrap_or_default();

    let mut meta = BundleMeta {
        bundle_type: str_field(root, "type").unwrap_or_default(),
        total: root.get("total").and_then(Value::as_u64),
        links,
        skipped_entries: 0,
    };

    let mut resources = Vec::new();
    let entries = root.get("entry").and_then(Value::as_array);
    for (i, entry) in entries.into_iter().flatten().enumerate() {
        let Some(resource) = entry.get("resource") else {
            meta.skipped_entries += 1;
            continue;
        };
        let (offset, size) = match tree.entry_spans.get(i).copied().flatten() {
            Some((start, len)) => (tree.source_offset + start, len),
            None => (tree.source_offset, 0),
        };
        match ResourceTree::with_origin(resource.clone(), offset, size) {
            Ok(child) => resources.push(child),
            Err(_) => meta.skipped_entries += 1,
        }
    }
    Ok((meta, resources))
}
