use std::collections::HashSet;
use std::time::{Duration, Instant};

use reqwest::redirect;
use url::Url;

use super::{split, IngestBatch, IngestError, IngestSource};
use crate::model::{parse_resource_tree, BundleMeta, ModelError, ResourceTree};
use crate::{MAX_INPUT_BYTES, VERSION};

pub const ACCEPT_FHIR_JSON: &str = "application/fhir+json";

/// Environment variable overriding the default request timeout.
pub const TIMEOUT_ENV: &str = "FHIRLENS_TIMEOUT_MS";

const MAX_REDIRECTS: usize = 3;
const BODY_EXCERPT_BYTES: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchOptions {
    pub timeout_ms: u64,
    pub max_pages: usize,
    /// Appended as `_count` when the query does not set one.
    pub page_size_hint: Option<u32>,
}

impl FetchOptions {
    pub fn accept_header(&self) -> &'static str {
        ACCEPT_FHIR_JSON
    }
}

impl Default for FetchOptions {
    fn default() -> Self {
        let timeout_ms = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<u64>().ok())
            .filter(|&ms| ms >= 1)
            .unwrap_or(30_000);
        Self {
            timeout_ms,
            max_pages: 10,
            page_size_hint: None,
        }
    }
}

/// URL of the first link whose relation is exactly `next`.
pub fn next_page_url(meta: &BundleMeta) -> Option<&str> {
    meta.links
        .iter()
        .find(|l| l.relation == "next")
        .map(|l| l.url.as_str())
}

fn search_url(base_url: &str, resource_type: &str, query: &str, hint: Option<u32>) -> Result<Url, IngestError> {
    let invalid = |reason: &str| IngestError::InvalidUrl {
        url: base_url.to_owned(),
        reason: reason.to_owned(),
    };
    let base = Url::parse(base_url).map_err(|e| invalid(&e.to_string()))?;
    if !matches!(base.scheme(), "http" | "https") {
        return Err(invalid("only http and https endpoints are supported"));
    }
    if base.cannot_be_a_base() || base.host_str().is_none() {
        return Err(invalid("URL has no host"));
    }
    let resource_type = resource_type.trim_matches('/');
    if resource_type.is_empty() {
        return Err(invalid("resource type is empty"));
    }
    let mut query = query.trim_start_matches('?').to_owned();
    if let Some(count) = hint {
        if !query.split('&').any(|p| p.starts_with("_count=")) {
            if !query.is_empty() {
                query.push('&');
            }
            query.push_str(&format!("_count={count}"));
        }
    }
    let mut text = format!("{}/{}", base.as_str().trim_end_matches('/'), resource_type);
    if !query.is_empty() {
        text.push('?');
        text.push_str(&query);
    }
    Url::parse(&text).map_err(|e| invalid(&e.to_string()))
}

fn client(opts: &FetchOptions) -> Result<reqwest::Client, IngestError> {
    let policy = redirect::Policy::custom(|attempt| {
        if attempt.previous().len() > MAX_REDIRECTS {
            attempt.error("too many redirects")
        } else if !matches!(attempt.url().scheme(), "http" | "https") {
            attempt.error("redirect to a non-http(s) URL")
        } else {
            attempt.follow()
        }
    });
    reqwest::Client::builder()
        .user_agent(format!("fhirlens/{VERSION}"))
        .timeout(Duration::from_millis(opts.timeout_ms.max(1)))
        .redirect(policy)
        .build()
        .map_err(|e| IngestError::NetworkError {
            url: String::new(),
            cause: e.to_string(),
        })
}

fn transport_error(url: &Url, err: reqwest::Error) -> IngestError {
    if err.is_timeout() {
        return IngestError::Timeout { url: url.to_string() };
    }
    let mut cause = err.to_string();
    let mut source = std::error::Error::source(&err);
    while let Some(inner) = source {
        cause.push_str(": ");
        cause.push_str(&inner.to_string());
        source = inner.source();
    }
    IngestError::NetworkError {
        url: url.to_string(),
        cause,
    }
}

fn excerpt(body: &[u8]) -> String {
    let text = String::from_utf8_lossy(body);
    let mut end = text.len().min(BODY_EXCERPT_BYTES);
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    text[..end].to_owned()
}

async fn get_page(client: &reqwest::Client, url: &Url) -> Result<ResourceTree, IngestError> {
    let response = client
        .get(url.clone())
        .header(reqwest::header::ACCEPT, ACCEPT_FHIR_JSON)
        .send()
        .await
        .map_err(|e| transport_error(url, e))?;

    let status = response.status();
    if response
        .content_length()
        .is_some_and(|len| len > MAX_INPUT_BYTES as u64)
    {
        return Err(ModelError::InputTooLarge {
            size: response.content_length().unwrap_or_default() as usize,
            limit: MAX_INPUT_BYTES,
        }
        .into());
    }
    let content_type = response
        .headers()
        .get(reqwest::header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_ascii_lowercase();
    let body = response.bytes().await.map_err(|e| transport_error(url, e))?;

    if !status.is_success() {
        return Err(IngestError::HttpStatusError {
            code: status.as_u16(),
            body_excerpt: excerpt(&body),
        });
    }
    let not_fhir = |reason: String| IngestError::NotFhirJson {
        url: url.to_string(),
        reason,
    };
    if content_type.contains("html") || content_type.contains("xml") {
        return Err(not_fhir(format!("content type {content_type}")));
    }
    parse_resource_tree(&body).map_err(|e| match e {
        ModelError::InputTooLarge { .. } => IngestError::Model(e),
        other => not_fhir(other.to_string()),
    })
}

/// Runs a search (or a read, when `resource_type` is `Type/id`) against a
/// FHIR server and follows `next` links until none remain or
/// `opts.max_pages` requests have been made.
///
/// Pages are fetched sequentially. A resource repeated on a later page
/// (same type and id) is kept only once.
pub async fn fetch_endpoint(
    base_url: &str,
    resource_type: &str,
    query: &str,
    opts: &FetchOptions,
) -> Result<IngestBatch, IngestError> {
    let started = Instant::now();
    let mut url = search_url(base_url, resource_type, query, opts.page_size_hint)?;
    let client = client(opts)?;
    let max_pages = opts.max_pages.max(1);

    let mut resources = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut first_meta: Option<BundleMeta> = None;
    let mut skipped = 0;
    let mut pages = 0;
    let mut truncated = false;

    loop {
        let page = get_page(&client, &url).await?;
        pages += 1;
        let (entries, meta) = split(page)?;
        for tree in entries {
            if let Some(id) = tree.id() {
                if !seen.insert((tree.resource_type().to_owned(), id.to_owned())) {
                    continue;
                }
            }
            resources.push(tree);
        }
        let Some(meta) = meta else { break };
        skipped += meta.skipped_entries;
        let next = next_page_url(&meta).map(str::to_owned);
        first_meta.get_or_insert(meta);
        let Some(next) = next else { break };
        if pages >= max_pages {
            truncated = true;
            break;
        }
        url = url.join(&next).map_err(|e| IngestError::InvalidUrl {
            url: next.clone(),
            reason: e.to_string(),
        })?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(IngestError::InvalidUrl {
                url: next,
                reason: "next link is not http(s)".into(),
            });
        }
    }

    if let Some(meta) = first_meta.as_mut() {
        meta.skipped_entries = skipped;
    }
    Ok(IngestBatch {
        source: IngestSource::Endpoint {
            base_url: base_url.to_owned(),
            query: search_url(base_url, resource_type, query, opts.page_size_hint)?
                .query()
                .unwrap_or_default()
                .to_owned(),
        },
        resources,
        bundle_meta: first_meta,
        fetched_pages: pages,
        truncated,
        ingest_duration_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
