//! Local-first FHIR R4 toolkit.
//!
//! Raw FHIR JSON (a file or a paged searchset from a live server) is parsed
//! into [`ResourceTree`]s, flattened into fixed tabular schemas per resource
//! kind, and turned into chart series and PDF, XLSX or CSV exports. Every
//! stage is a pure function of its input, apart from network access in
//! [`ingest::fetch_endpoint`].

pub mod corpus;
pub mod export;
pub mod ingest;
pub mod model;
pub mod normalize;
pub mod series;
pub mod table;

pub use ingest::{load_local, IngestBatch, IngestError, IngestSource};
pub use model::{
    classify_resource, extract_bundle_entries, parse_resource_tree, resolve_choice_value,
    BundleMeta, Coding, Decimal, ModelError, Precision, ResourceKind, ResourceTree, TimePoint,
    TypedValue,
};
pub use normalize::{normalize_batch, Dataset, ErrorCategory, TransformReport};
pub use series::{extract_series, summarize, SeriesKey, SeriesSet, SeriesSummary};

/// Upper bound on the size of a single ingest, in bytes.
pub const MAX_INPUT_BYTES: usize = 256 * 1024 * 1024;

/// Version string used in the HTTP `User-Agent` and PDF producer field.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
