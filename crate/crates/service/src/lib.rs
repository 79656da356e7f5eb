//! Loopback HTTP API used by the browser UI: upload or fetch FHIR data,
//! page through tables, read chart series and download exports.

mod error;
mod store;

use std::future::Future;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fhirlens_core::export::{export_dataset, iso_timestamp, ExportFormat, RenderOptions};
use fhirlens_core::ingest::{fetch_endpoint, FetchOptions};
use fhirlens_core::normalize::{normalize_batch, NormalizeError, TableKind};
use fhirlens_core::{extract_series, load_local, Dataset, IngestBatch, MAX_INPUT_BYTES};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use store::{DatasetStore, STORE_CAPACITY};

pub const DEFAULT_PORT: u16 = 7423;
pub const PORT_ENV: &str = "FHIRLENS_PORT";
pub const DEFAULT_PAGE_LIMIT: usize = 100;
pub const MAX_PAGE_LIMIT: usize = 1000;

/// `FHIRLENS_PORT` if set to a valid port, else 7423.
pub fn port_from_env() -> u16 {
    std::env::var(PORT_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_PORT)
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Directory holding the built UI; a placeholder page is served if unset.
    pub ui_dir: Option<PathBuf>,
    pub fetch: FetchOptions,
}

pub struct AppState {
    pub store: DatasetStore,
    pub config: ServiceConfig,
}

type Shared = Arc<AppState>;

const PLACEHOLDER: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>fhirlens</title></head>\
<body><h1>fhirlens</h1><p>The API is running under <code>/api</code>. Start the service with \
<code>--ui-dir</code> pointing at a built UI to use the browser interface.</p></body></html>\n";

pub fn router(config: ServiceConfig) -> Router {
    let ui_dir = config.ui_dir.clone();
    let state = Arc::new(AppState { store: DatasetStore::default(), config });
    let api = Router::new()
        .route("/api/health", get(|| async { Json(json!({ "status": "ok", "version": fhirlens_core::VERSION })) }))
        .route("/api/ingest", post(ingest))
        .route("/api/fetch", post(fetch))
        .route("/api/datasets/{id}", get(summary))
        .route("/api/datasets/{id}/tables/{kind}", get(table_page))
        .route("/api/datasets/{id}/series", get(series))
        .route("/api/datasets/{id}/export", get(export))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

/// Binds the loopback interface. Port 0 picks a free port.
pub async fn bind(port: u16) -> std::io::Result<TcpListener> {
    TcpListener::bind(SocketAddr::from((Ipv4Addr::LOCALHOST, port))).await
}

/// Serves until `shutdown` resolves, then drains open connections.
pub async fn run(
    listener: TcpListener,
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(config)).with_graceful_shutdown(shutdown).await
}

fn dataset_summary(ds: &Dataset, batch: Option<&IngestBatch>) -> Value {
    let tables: serde_json::Map<String, Value> = TableKind::ALL
        .iter()
        .map(|k| (k.name().to_owned(), json!(ds.tables.row_count(*k))))
        .collect();
    let mut out = json!({
        "dataset_id": ds.id,
        "source_label": ds.source_label,
        "created_at": iso_timestamp(ds.created_at),
        "tables": tables,
        "report": ds.report,
    });
    if let Some(b) = batch {
        out["fetched_pages"] = json!(b.fetched_pages);
        out["truncated"] = json!(b.truncated);
    }
    out
}

fn normalize_or_400(batch: &IngestBatch) -> Result<Dataset, ApiError> {
    normalize_batch(batch).map_err(|e| match e {
        NormalizeError::EmptyBatch => ApiError::bad_request("EmptyBatch", e.to_string()),
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

#[derive(Deserialize)]
struct IngestQuery {
    name: Option<String>,
}

async fn ingest(
    State(app): State<Shared>,
    query: Result<Query<IngestQuery>, QueryRejection>,
    body: Body,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request("BadQuery", e.body_text()))?;
    let bytes = axum::body::to_bytes(body, MAX_INPUT_BYTES).await.map_err(|e| {
        ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "InputTooLarge",
            format!("request body exceeds {MAX_INPUT_BYTES} bytes: {e}"),
        )
    })?;
    let name = q.name.unwrap_or_else(|| "upload.json".to_owned());
    let app2 = Arc::clone(&app);
    let summary = blocking(move || {
        let batch = load_local(&bytes, &name).map_err(ApiError::from_upload)?;
        let ds = app2.store.insert(normalize_or_400(&batch)?);
        Ok(dataset_summary(&ds, None))
    })
    .await?;
    Ok((StatusCode::OK, Json(summary)))
}

#[derive(Deserialize)]
struct FetchRequest {
    base_url: String,
    resource_type: String,
    #[serde(default)]
    query: String,
    max_pages: Option<usize>,
    page_size_hint: Option<u32>,
}

async fn fetch(
    State(app): State<Shared>,
    req: Result<Json<FetchRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Json(req) = req.map_err(|e| ApiError::bad_request("BadRequestBody", e.body_text()))?;
    let mut opts = app.config.fetch.clone();
    if let Some(n) = req.max_pages {
        opts.max_pages = n;
    }
    if req.page_size_hint.is_some() {
        opts.page_size_hint = req.page_size_hint;
    }
    let batch = fetch_endpoint(&req.base_url, &req.resource_type, &req.query, &opts)
        .await
        .map_err(ApiError::from_fetch)?;
    let app2 = Arc::clone(&app);
    let summary = blocking(move || {
        let ds = app2.store.insert(normalize_or_400(&batch)?);
        Ok(dataset_summary(&ds, Some(&batch)))
    })
    .await?;
    Ok((StatusCode::OK, Json(summary)))
}

fn lookup(app: &AppState, id: &str) -> Result<Arc<Dataset>, ApiError> {
    app.store.get(id).ok_or_else(|| ApiError::not_found(id))
}

/// A kind in the path is a missing resource (404); in a query it is a bad
/// parameter (400).
fn parse_kind(kind: &str, status: StatusCode) -> Result<TableKind, ApiError> {
    TableKind::parse(kind).ok_or_else(|| {
        let mut e = ApiError::new(status, "UnknownKind", format!("no table for resource kind {kind:?}"));
        e.detail_path = Some("kind".into());
        e
    })
}

async fn summary(State(app): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let ds = lookup(&app, &id)?;
    Ok(Json(dataset_summary(&ds, None)))
}

#[derive(Deserialize)]
struct PageQuery {
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn table_page(
    State(app): State<Shared>,
    Path((id, kind)): Path<(String, String)>,
    query: Result<Query<PageQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request("BadQuery", e.body_text()))?;
    let ds = lookup(&app, &id)?;
    let kind = parse_kind(&kind, StatusCode::NOT_FOUND)?;
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(DEFAULT_PAGE_LIMIT);
    if limit == 0 || limit > MAX_PAGE_LIMIT {
        let mut e = ApiError::bad_request("BadLimit", format!("limit must be between 1 and {MAX_PAGE_LIMIT}"));
        e.detail_path = Some("limit".into());
        return Err(e);
    }
    let table = ds.tables.table(kind);
    let total = table.rows.len();
    let rows: Vec<_> = table.rows.iter().skip(offset).take(limit).collect();
    Ok(Json(json!({
        "kind": kind.name(),
        "columns": table.columns,
        "rows": rows,
        "total": total,
        "offset": offset,
        "limit": limit,
    })))
}

async fn series(State(app): State<Shared>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let ds = lookup(&app, &id)?;
    Ok(Json(extract_series(&ds).to_json()))
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
    kind: Option<String>,
    fixed_timestamp: Option<String>,
}

fn truthy(v: &Option<String>) -> bool {
    v.as_deref().is_some_and(|s| matches!(s, "" | "1" | "true" | "yes"))
}

async fn export(
    State(app): State<Shared>,
    Path(id): Path<String>,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request("BadQuery", e.body_text()))?;
    let ds = lookup(&app, &id)?;
    let format_text = q.format.as_deref().unwrap_or_default();
    let format = ExportFormat::parse(format_text).ok_or_else(|| {
        let mut e = ApiError::bad_request("UnknownFormat", format!("format must be pdf, xlsx or csv, got {format_text:?}"));
        e.detail_path = Some("format".into());
        e
    })?;
    let kind = q
        .kind
        .as_deref()
        .map(|k| parse_kind(k, StatusCode::BAD_REQUEST))
        .transpose()?;
    if format == ExportFormat::Csv && kind.is_none() {
        let mut e = ApiError::bad_request("MissingKind", "CSV export needs a kind");
        e.detail_path = Some("kind".into());
        return Err(e);
    }
    let opts = if truthy(&q.fixed_timestamp) { RenderOptions::fixed() } else { RenderOptions::now() };
    let bytes = blocking(move || export_dataset(&ds, format, kind, &opts).map_err(ApiError::from_export)).await?;
    let filename = format!("fhirlens-{id}.{}", format.extension());
    Ok((
        [
            (header::CONTENT_TYPE, format.media_type().to_owned()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{filename}\"")),
        ],
        bytes,
    )
        .into_response())
}
