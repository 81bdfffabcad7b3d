//! REST routes.
//!
//! Callers identify themselves with `X-Actor-Id` and `X-Actor-Role` headers;
//! the webhook route instead authenticates by signature. Errors come back as
//! `{"error": CODE, "message": ...}`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use lostwage_connector::{DELIVERY_ID_HEADER, SIGNATURE_HEADER};
use lostwage_core::{Platform, PolicyParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ErrorCode, ServiceError, ServiceResult};
use crate::ingestion::{IngestResult, Ingestor};
use crate::model::{Actor, ConsentScope, Role};
use crate::service::{CaseService, CreateCase, ReportFormat, ReportOptions};

pub const ACTOR_ID_HEADER: &str = "X-Actor-Id";
pub const ACTOR_ROLE_HEADER: &str = "X-Actor-Role";

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<CaseService>,
    pub ingestor: Arc<Ingestor>,
}

#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

pub fn status_for(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::NotFound => StatusCode::NOT_FOUND,
        ErrorCode::Conflict | ErrorCode::SyncIncomplete => StatusCode::CONFLICT,
        ErrorCode::Forbidden | ErrorCode::ConsentRequired => StatusCode::FORBIDDEN,
        ErrorCode::Unauthenticated => StatusCode::UNAUTHORIZED,
        ErrorCode::Validation => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::OtpInvalid => StatusCode::BAD_REQUEST,
        ErrorCode::OtpLocked => StatusCode::LOCKED,
        ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: ErrorCode,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    attempts_remaining: Option<u32>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = self.0.code();
        if code == ErrorCode::Internal {
            tracing::error!(error = %self.0, "request failed");
        }
        let attempts_remaining = match self.0 {
            ServiceError::OtpInvalid { remaining } => Some(remaining),
            _ => None,
        };
        let body = ErrorBody { error: code, message: self.0.to_string(), attempts_remaining };
        (status_for(code), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[axum::async_trait]
impl<S: Send + Sync> FromRequestParts<S> for Actor {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        let header = |name: &str| {
            let mut values = parts.headers.get_all(name).iter();
            match (values.next(), values.next()) {
                (Some(v), None) => v.to_str().ok().map(str::trim).filter(|s| !s.is_empty()),
                _ => None,
            }
        };
        let id = header(ACTOR_ID_HEADER).ok_or(ServiceError::Unauthenticated)?;
        let role: Role = header(ACTOR_ROLE_HEADER).ok_or(ServiceError::Unauthenticated)?.parse()?;
        Ok(Actor::new(id, role))
    }
}

/// Runs a blocking service call off the async executor.
async fn run<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ServiceResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker: {e}")))?
        .map_err(ApiError)
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError(ServiceError::Validation(format!("request body: {e}"))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnrollBody {
    #[serde(alias = "phone_or_email")]
    contact: String,
    display_name: String,
    #[serde(default)]
    preferred_language: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyBody {
    code: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConsentBody {
    scope: ConsentScope,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkBody {
    platform: Platform,
    credential: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CasePatch {
    use_fallback: bool,
}

#[derive(Deserialize)]
struct SyncedQuery {
    synced: Option<bool>,
}

#[derive(Deserialize)]
struct PlatformQuery {
    platform: Option<Platform>,
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok", "engine_version": lostwage_core::ENGINE_VERSION}))
}

async fn enroll(State(s): State<AppState>, actor: Actor, body: Bytes) -> ApiResult<impl IntoResponse> {
    let b: EnrollBody = parse(&body)?;
    let out = run(move || {
        s.service.enroll_driver(&actor, &b.contact, &b.display_name, b.preferred_language.as_deref())
    })
    .await?;
    Ok((StatusCode::CREATED, Json(out)))
}

async fn list_drivers(
    State(s): State<AppState>,
    actor: Actor,
    Query(q): Query<SyncedQuery>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.list_drivers(&actor, q.synced)).await?))
}

async fn get_driver(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.get_driver(&actor, &id)).await?))
}

async fn verify(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let b: VerifyBody = parse(&body)?;
    Ok(Json(run(move || s.service.verify_driver(&actor, &id, &b.code)).await?))
}

async fn grant(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let b: ConsentBody = parse(&body)?;
    Ok(Json(run(move || s.service.grant_consent(&actor, &id, b.scope)).await?))
}

async fn consents(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.consents(&actor, &id)).await?))
}

async fn revoke(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.revoke_consent(&actor, &id)).await?))
}

async fn link(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let b: LinkBody = parse(&body)?;
    let out = run(move || s.service.link_account(&actor, &id, b.platform, &b.credential)).await?;
    Ok((StatusCode::ACCEPTED, Json(out)))
}

async fn trips(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
    Query(q): Query<PlatformQuery>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.driver_trips(&actor, &id, q.platform)).await?))
}

async fn take_rate(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
    Query(q): Query<PlatformQuery>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.driver_take_rate(&actor, &id, q.platform)).await?))
}

async fn webhook(State(s): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let sig = headers
        .get(SIGNATURE_HEADER)
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_string();
    let delivery = headers.get(DELIVERY_ID_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string);
    let result = run(move || s.ingestor.handle_webhook(&body, &sig)).await?;
    tracing::debug!(?delivery, ?result, "webhook");
    let status = match result {
        IngestResult::RejectedSignature => StatusCode::UNAUTHORIZED,
        IngestResult::RejectedMalformed { .. } => StatusCode::BAD_REQUEST,
        IngestResult::Quarantined { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::OK,
    };
    Ok((status, Json(result)).into_response())
}

async fn account_status(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.account_status(&actor, &id)).await?))
}

async fn finalize(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    if actor.role != Role::Admin {
        return Err(ServiceError::Forbidden("admin only".into()).into());
    }
    Ok(Json(run(move || s.ingestor.finalize_account(&id)).await?))
}

async fn refresh(State(s): State<AppState>, actor: Actor) -> ApiResult<impl IntoResponse> {
    let n = run(move || s.service.refresh_connector(&actor)).await?;
    Ok(Json(serde_json::json!({"deliveries": n})))
}

async fn create_case(State(s): State<AppState>, actor: Actor, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateCase = parse(&body)?;
    let out = run(move || s.service.create_case(&actor, req)).await?;
    Ok((StatusCode::CREATED, Json(out)))
}

async fn list_cases(State(s): State<AppState>, actor: Actor) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.list_cases(&actor)).await?))
}

async fn get_case(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.get_case(&actor, &id)).await?))
}

async fn patch_case(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let p: CasePatch = parse(&body)?;
    Ok(Json(run(move || s.service.set_case_fallback(&actor, &id, p.use_fallback)).await?))
}

async fn case_reports(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.case_reports(&actor, &id)).await?))
}

async fn oracle(
    State(s): State<AppState>,
    actor: Actor,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.verify_case(&actor, &id)).await?))
}

async fn report(
    s: AppState,
    actor: Actor,
    id: String,
    format: ReportFormat,
    opts: ReportOptions,
) -> ApiResult<Response> {
    let out = run(move || s.service.get_report(&actor, &id, format, &opts)).await?;
    let mut resp = out.bytes.into_response();
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static(format.content_type()));
    if format != ReportFormat::JsonPreview {
        if let Ok(v) = HeaderValue::from_str(&format!("attachment; filename=\"{}\"", out.filename)) {
            h.insert(header::CONTENT_DISPOSITION, v);
        }
    }
    if let Ok(v) = HeaderValue::from_str(&out.record.report_id.to_string()) {
        h.insert("X-Report-Id", v);
    }
    Ok(resp)
}

macro_rules! report_route {
    ($name:ident, $fmt:expr) => {
        async fn $name(
            State(s): State<AppState>,
            actor: Actor,
            Path(id): Path<String>,
            Query(opts): Query<ReportOptions>,
        ) -> ApiResult<Response> {
            report(s, actor, id, $fmt, opts).await
        }
    };
}

report_route!(report_pdf, ReportFormat::Pdf);
report_route!(report_csv, ReportFormat::Csv);
report_route!(report_zip, ReportFormat::Zip);
report_route!(report_preview, ReportFormat::JsonPreview);

async fn audit(State(s): State<AppState>, actor: Actor) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.audit_log(&actor)).await?))
}

async fn dead_letters(State(s): State<AppState>, actor: Actor) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.dead_letters(&actor)).await?))
}

async fn stats(State(s): State<AppState>, actor: Actor) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.stats(&actor)).await?))
}

async fn get_defaults(State(s): State<AppState>, actor: Actor) -> ApiResult<impl IntoResponse> {
    Ok(Json(run(move || s.service.policy_defaults(&actor)).await?))
}

async fn put_defaults(State(s): State<AppState>, actor: Actor, body: Bytes) -> ApiResult<impl IntoResponse> {
    let p: PolicyParams = parse(&body)?;
    Ok(Json(run(move || s.service.set_policy_defaults(&actor, p)).await?))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/drivers", post(enroll).get(list_drivers))
        .route("/drivers/:id", get(get_driver))
        .route("/drivers/:id/verify", post(verify))
        .route("/drivers/:id/consent", post(grant))
        .route("/drivers/:id/consents", get(consents))
        .route("/drivers/:id/accounts", post(link))
        .route("/drivers/:id/trips", get(trips))
        .route("/drivers/:id/take-rate", get(take_rate))
        .route("/consents/:id", delete(revoke))
        .route("/webhooks/connector", post(webhook))
        .route("/accounts/:id/status", get(account_status))
        .route("/accounts/:id/finalize", post(finalize))
        .route("/connector/refresh", post(refresh))
        .route("/cases", post(create_case).get(list_cases))
        .route("/cases/:id", get(get_case).patch(patch_case))
        .route("/cases/:id/reports", get(case_reports))
        .route("/cases/:id/oracle", get(oracle))
        .route("/cases/:id/report.pdf", get(report_pdf))
        .route("/cases/:id/report.csv", get(report_csv))
        .route("/cases/:id/report.zip", get(report_zip))
        .route("/cases/:id/preview", get(report_preview))
        .route("/audit", get(audit))
        .route("/dead-letters", get(dead_letters))
        .route("/stats", get(stats))
        .route("/policy/defaults", get(get_defaults).put(put_defaults))
        .with_state(state)
}

/// The API plus, when configured, the web client's static files at `/`.
pub fn app(state: AppState) -> Router {
    let static_dir = state.service.config().static_dir.clone();
    let api = router(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(state: AppState, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
