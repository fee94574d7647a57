use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use log::info;
use serde::Deserialize;
use serde_json::{json, Value};
use vistacast_core::model::{parse_ts, FrameKey, VisibilityClass};

use crate::service::{ApiError, LabelSubmission, LabelingService, QueueFilter, UndoRequest, SCHEMA_VERSION};

type Shared = Arc<LabelingService>;
type Params = Query<HashMap<String, String>>;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = json!({ "schema_version": SCHEMA_VERSION, "code": self.code, "message": self.message });
        (status, Json(body)).into_response()
    }
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/api/frames/next", get(next_frame))
        .route("/api/labels", post(submit_label))
        .route("/api/labels/undo", post(undo_label))
        .route("/api/labels/history", get(history))
        .route("/api/predict", get(predict))
        .route("/api/stats/classes", get(class_stats))
        .route("/api/cameras", get(cameras))
        .route("/api/reports/{*name}", get(report))
        .route("/images/{*path}", get(image))
        .fallback(|| async { ApiError::not_found("no_route", "no such endpoint") })
        .with_state(service)
}

/// Binds `addr` and serves until Ctrl-C or SIGTERM.
pub async fn serve(service: Shared, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(service)).with_graceful_shutdown(shutdown_signal()).await
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn param_bool(params: &HashMap<String, String>, name: &str) -> Result<Option<bool>, ApiError> {
    params
        .get(name)
        .map(|v| match v.as_str() {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            _ => Err(ApiError::invalid("invalid_query", format!("{name}: expected true or false, got `{v}`"))),
        })
        .transpose()
}

fn param_date(params: &HashMap<String, String>, name: &str) -> Result<Option<NaiveDate>, ApiError> {
    params
        .get(name)
        .map(|v| v.parse().map_err(|_| ApiError::invalid("invalid_query", format!("{name}: `{v}` is not YYYY-MM-DD"))))
        .transpose()
}

fn required<'a>(params: &'a HashMap<String, String>, name: &str) -> Result<&'a str, ApiError> {
    params.get(name).map(String::as_str).ok_or_else(|| ApiError::invalid("invalid_query", format!("missing `{name}`")))
}

async fn next_frame(State(s): State<Shared>, Query(p): Params) -> Result<Response, ApiError> {
    let filter = QueueFilter {
        camera: p.get("camera").cloned(),
        date: param_date(&p, "date")?,
        needs_review: param_bool(&p, "needs_review")?,
    };
    let next = s.next_unlabeled(required(&p, "annotator")?, &filter)?;
    Ok(Json(next).into_response())
}

#[derive(Deserialize)]
struct LabelBody {
    camera_id: String,
    captured_at: String,
    label: Option<String>,
    annotator: String,
}

fn parse_body(body: &Bytes) -> Result<(FrameKey, Option<String>, String), ApiError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| ApiError::new(400, "malformed_json", e.to_string()))?;
    let b: LabelBody = serde_json::from_value(value).map_err(|e| ApiError::invalid("invalid_body", e.to_string()))?;
    let ts = parse_ts(&b.captured_at)
        .map_err(|e| ApiError::invalid("invalid_body", format!("captured_at `{}`: {e}", b.captured_at)))?;
    Ok((FrameKey::new(b.camera_id, ts), b.label, b.annotator))
}

async fn submit_label(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let (key, label, annotator) = parse_body(&body)?;
    let raw = label.ok_or_else(|| ApiError::invalid("invalid_label", "missing `label`"))?;
    let label: VisibilityClass = raw.parse().map_err(|_| {
        ApiError::invalid("invalid_label", format!("`{raw}` is not one of PERFECT, CLEAR, CLOUDY, OBSCURED, BAD"))
    })?;
    let ack = s.submit(LabelSubmission { key, label, annotator })?;
    Ok((StatusCode::CREATED, Json(ack)).into_response())
}

async fn undo_label(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let (key, _, annotator) = parse_body(&body)?;
    Ok(Json(s.undo(UndoRequest { key, annotator })?).into_response())
}

async fn history(State(s): State<Shared>, Query(p): Params) -> Response {
    let events = s.history(p.get("annotator").map(String::as_str));
    Json(json!({ "schema_version": SCHEMA_VERSION, "count": events.len(), "events": events })).into_response()
}

async fn predict(State(s): State<Shared>, Query(p): Params) -> Result<Response, ApiError> {
    let camera = required(&p, "camera")?;
    let raw = required(&p, "horizon")?;
    let horizon: i64 =
        raw.parse().map_err(|_| ApiError::invalid("invalid_horizon", format!("horizon `{raw}` is not an integer")))?;
    Ok(Json(s.predict(camera, horizon, param_date(&p, "date")?)?).into_response())
}

async fn class_stats(State(s): State<Shared>) -> Response {
    Json(s.class_stats()).into_response()
}

async fn cameras(State(s): State<Shared>) -> Response {
    Json(json!({ "schema_version": SCHEMA_VERSION, "cameras": s.cameras() })).into_response()
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("csv") => "text/csv; charset=utf-8",
        Some("txt") => "text/plain; charset=utf-8",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}

async fn send_file(path: std::path::PathBuf, missing: ApiError) -> Result<Response, ApiError> {
    match tokio::fs::read(&path).await {
        Ok(bytes) => Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(missing),
        Err(e) => Err(ApiError::new(500, "internal", e.to_string())),
    }
}

async fn image(State(s): State<Shared>, Path(rel): Path<String>) -> Result<Response, ApiError> {
    let path = s.image_path(&rel)?;
    send_file(path, ApiError::not_found("unknown_image", format!("no image `{rel}`"))).await
}

async fn report(State(s): State<Shared>, Path(rel): Path<String>) -> Result<Response, ApiError> {
    let path = s.report_path(&rel)?;
    send_file(path, ApiError::not_found("unknown_report", format!("no report `{rel}`"))).await
}
