use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use fhirlens_core::export::ExportError;
use fhirlens_core::{IngestError, ModelError};
use serde::Serialize;

/// JSON error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    pub http_status: u16,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail_path: Option<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            http_status: status.as_u16(),
            code: code.to_owned(),
            message: message.into(),
            detail_path: None,
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "DatasetNotFound", format!("no dataset with id {id}"))
    }

    /// Status for an error raised while reading an uploaded body.
    pub fn from_upload(err: IngestError) -> Self {
        let status = match &err {
            IngestError::Model(ModelError::InputTooLarge { .. }) => StatusCode::PAYLOAD_TOO_LARGE,
            _ => StatusCode::BAD_REQUEST,
        };
        let mut e = Self::new(status, err.code(), err.to_string());
        if let IngestError::Model(ModelError::MalformedJson { offset, .. }) = &err {
            e.detail_path = Some(format!("byte {offset}"));
        }
        e
    }

    /// Status for an error raised while talking to a FHIR server.
    pub fn from_fetch(err: IngestError) -> Self {
        let status = match &err {
            IngestError::InvalidUrl { .. } | IngestError::EmptyInput => StatusCode::BAD_REQUEST,
            IngestError::Timeout { .. } => StatusCode::GATEWAY_TIMEOUT,
            _ => StatusCode::BAD_GATEWAY,
        };
        Self::new(status, err.code(), err.to_string())
    }

    pub fn from_export(err: ExportError) -> Self {
        let code = match &err {
            ExportError::Pdf(_) => "PdfError",
            ExportError::Xlsx(_) => "XlsxError",
        };
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, code, err.to_string())
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}
