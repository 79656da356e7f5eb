//! A tiny FHIR server for fetch tests, bound to an ephemeral loopback port.
//!
//! Routes under `/fhir`:
//! - `Patient`: two searchset pages of five patients each; `_id=32298144`
//!   returns only the sample patient
//! - `Observation`: two pages where page two repeats one id from page one
//! - `Endless`: every page links to another
//! - `Example`: the sample Bundle
//! - `Html`: an HTML page with status 200
//! - `Slow`: answers after two seconds
//! - `Patient/32298144`: a read of the sample patient
//! - anything else: 404 with an OperationOutcome

use std::collections::HashMap;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde_json::{json, Value};

use crate::SAMPLE_BUNDLE;

#[derive(Clone)]
struct Stub {
    base: String,
}

fn fhir_json(body: Value) -> Response {
    (
        [(header::CONTENT_TYPE, "application/fhir+json")],
        serde_json::to_vec(&body).expect("serializable"),
    )
        .into_response()
}

fn patient(id: &str) -> Value {
    json!({
        "resourceType": "Patient",
        "id": id,
        "gender": "unknown",
        "name": [{ "family": format!("Family{id}"), "given": ["Given"] }],
    })
}

fn observation(id: &str) -> Value {
    json!({
        "resourceType": "Observation",
        "id": id,
        "status": "final",
        "code": { "coding": [{ "system": "http://loinc.org", "code": "8867-4", "display": "Heart rate" }] },
        "subject": { "reference": "Patient/p1" },
        "effectiveDateTime": format!("2024-01-0{}T08:00:00Z", id.len() % 9 + 1),
        "valueQuantity": { "value": 72, "unit": "/min", "system": "http://unitsofmeasure.org", "code": "/min" },
    })
}

fn searchset(resources: Vec<Value>, next: Option<String>) -> Value {
    let mut links = vec![json!({ "relation": "self", "url": "http://stub/self" })];
    if let Some(n) = next {
        links.push(json!({ "relation": "next", "url": n }));
    }
    json!({
        "resourceType": "Bundle",
        "type": "searchset",
        "total": resources.len(),
        "link": links,
        "entry": resources.into_iter().map(|r| json!({ "resource": r })).collect::<Vec<_>>(),
    })
}

async fn handle(
    State(stub): State<Stub>,
    Path(kind): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    let accepts = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("application/fhir+json"));
    if !accepts {
        return (StatusCode::NOT_ACCEPTABLE, "send Accept: application/fhir+json").into_response();
    }
    let page: usize = q.get("page").and_then(|p| p.parse().ok()).unwrap_or(1);
    match kind.as_str() {
        "Patient" if q.get("_id").is_some_and(|id| id == "32298144") => {
            let example: Value = serde_json::from_str(SAMPLE_BUNDLE).expect("fixture is JSON");
            let p = example["entry"][0]["resource"].clone();
            fhir_json(searchset(vec![p], None))
        }
        "Patient" => {
            let ids = (1..=5).map(|i| patient(&format!("p{}", (page - 1) * 5 + i))).collect();
            let next = (page == 1).then(|| format!("{}/Patient?page=2", stub.base));
            fhir_json(searchset(ids, next))
        }
        "Observation" => {
            let range = if page == 1 { 1..=4 } else { 4..=6 };
            let obs = range.map(|i| observation(&format!("o{i}"))).collect();
            // Relative next link, resolved against the request URL.
            let next = (page == 1).then(|| "Observation?page=2".to_owned());
            fhir_json(searchset(obs, next))
        }
        "Endless" => {
            let next = Some(format!("{}/Endless?page={}", stub.base, page + 1));
            fhir_json(searchset(vec![patient(&format!("e{page}"))], next))
        }
        "Example" => fhir_json(serde_json::from_str(SAMPLE_BUNDLE).expect("fixture is JSON")),
        "Html" => (
            [(header::CONTENT_TYPE, "text/html")],
            "<html><body>login required</body></html>",
        )
            .into_response(),
        "Slow" => {
            tokio::time::sleep(Duration::from_secs(2)).await;
            fhir_json(searchset(vec![], None))
        }
        other => (
            StatusCode::NOT_FOUND,
            [(header::CONTENT_TYPE, "application/fhir+json")],
            json!({
                "resourceType": "OperationOutcome",
                "issue": [{ "severity": "error", "code": "not-found", "diagnostics": format!("Unknown resource type {other}") }],
            })
            .to_string(),
        )
            .into_response(),
    }
}

async fn read(Path((kind, id)): Path<(String, String)>) -> Response {
    if kind == "Patient" && id == "32298144" {
        let example: Value = serde_json::from_str(SAMPLE_BUNDLE).expect("fixture is JSON");
        return fhir_json(example["entry"][0]["resource"].clone());
    }
    (StatusCode::NOT_FOUND, [(header::CONTENT_TYPE, "application/fhir+json")], "{}").into_response()
}

/// Starts the stub on the current Tokio runtime; returns its base URL
/// (`http://127.0.0.1:PORT/fhir`).
pub async fn spawn() -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind loopback");
    let base = format!("http://{}/fhir", listener.local_addr().expect("local addr"));
    let app = Router::new()
        .route("/fhir/{kind}", get(handle))
        .route("/fhir/{kind}/{id}", get(read))
        .with_state(Stub { base: base.clone() });
    tokio::spawn(async move {
        axum::serve(listener, app).await.expect("stub server");
    });
    base
}

/// Starts the stub on a background thread with its own runtime, for
/// callers that are not async.
pub fn spawn_blocking() -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().expect("runtime");
        rt.block_on(async move {
            tx.send(spawn().await).expect("send base url");
            std::future::pending::<()>().await;
        });
    });
    rx.recv().expect("stub started")
}
