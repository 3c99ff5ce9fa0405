//! HTTP routes over [`Service`].
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/methods` | | `MethodList` |
//! | POST | `/workspace/reload` | | `MethodList` |
//! | GET | `/sessions` | | `SessionList` |
//! | POST | `/session` | `CreateSessionRequest` | `SessionView` |
//! | GET | `/session/{id}` | | `SessionView` |
//! | POST | `/session/{id}/step` | `StepRequest` | `SessionView` |
//! | POST | `/session/{id}/undo` | `UndoRequest` | `SessionView` |
//! | GET | `/session/{id}/rules/{hole}` | | `RulesResponse` |
//! | GET | `/session/{id}/export` | | `ExportResponse` |
//! | GET | `/session/{id}/verify` | | `VerifyResponse` |
//! | POST | `/check` | `CheckRequest` | `CheckResponse` |

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::{CheckRequest, CreateSessionRequest, ErrorCode, StepRequest, UndoRequest};
use super::{Service, ServiceConfig, ServiceError};

type Shared = Arc<Service>;

fn json<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let mut text = serde_json::to_string(body).expect("protocol messages serialize");
    text.push('\n');
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

fn status_of(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::NotFound => StatusCode::NOT_FOUND,
        ErrorCode::Conflict => StatusCode::CONFLICT,
        ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
        ErrorCode::Forbidden => StatusCode::FORBIDDEN,
        ErrorCode::Rejected => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorCode::CorruptWorkspace | ErrorCode::Io => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn reply<T: Serialize>(r: Result<T, ServiceError>) -> Response {
    match r {
        Ok(body) => json(StatusCode::OK, &body),
        Err(e) => json(status_of(e.code()), &e.to_response()),
    }
}

fn parse<T: DeserializeOwned>(body: &str) -> Result<T, ServiceError> {
    serde_json::from_str(body).map_err(|e| ServiceError::BadRequest(format!("malformed request body: {e}")))
}

async fn methods(State(svc): State<Shared>) -> Response {
    reply(Ok(svc.list_methods()))
}

async fn reload(State(svc): State<Shared>) -> Response {
    reply(svc.reload())
}

async fn sessions(State(svc): State<Shared>) -> Response {
    reply(Ok(svc.list_sessions()))
}

async fn create(State(svc): State<Shared>, body: String) -> Response {
    reply(parse::<CreateSessionRequest>(&body).and_then(|r| svc.create_session(&r)))
}

async fn get_session(State(svc): State<Shared>, Path(id): Path<String>) -> Response {
    reply(svc.get_session(&id))
}

async fn step(State(svc): State<Shared>, Path(id): Path<String>, body: String) -> Response {
    reply(parse::<StepRequest>(&body).and_then(|r| svc.apply_step(&id, &r)))
}

async fn undo(State(svc): State<Shared>, Path(id): Path<String>, body: String) -> Response {
    reply(parse::<UndoRequest>(&body).and_then(|r| svc.undo(&id, &r)))
}

async fn rules(State(svc): State<Shared>, Path((id, hole)): Path<(String, String)>) -> Response {
    reply(svc.applicable_rules(&id, &hole))
}

async fn export(State(svc): State<Shared>, Path(id): Path<String>) -> Response {
    reply(svc.export(&id))
}

async fn verify(State(svc): State<Shared>, Path(id): Path<String>) -> Response {
    reply(svc.verify(&id))
}

async fn check(State(svc): State<Shared>, body: String) -> Response {
    let req = if body.trim().is_empty() {
        Ok(CheckRequest::default())
    } else {
        parse::<CheckRequest>(&body)
    };
    reply(req.map(|r| svc.check(&r)))
}

async fn fallback() -> Response {
    reply::<()>(Err(ServiceError::NotFound("no such endpoint".into())))
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/methods", get(methods))
        .route("/workspace/reload", post(reload))
        .route("/sessions", get(sessions))
        .route("/session", post(create))
        .route("/session/{id}", get(get_session))
        .route("/session/{id}/step", post(step))
        .route("/session/{id}/undo", post(undo))
        .route("/session/{id}/rules/{hole}", get(rules))
        .route("/session/{id}/export", get(export))
        .route("/session/{id}/verify", get(verify))
        .route("/check", post(check))
        .fallback(fallback)
        .with_state(service)
}

/// A bound, not yet running server.
pub struct Server {
    listener: tokio::net::TcpListener,
    service: Shared,
}

impl Server {
    /// Loads the workspace and binds the listener.
    pub async fn bind(bind: &str, workspace: impl Into<PathBuf>, config: ServiceConfig) -> Result<Server, ServiceError> {
        let service = Arc::new(Service::open(workspace, config)?);
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| ServiceError::Bind(format!("{bind}: {e}")))?;
        Ok(Server { listener, service })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `shutdown` resolves.
    pub async fn run(self, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        axum::serve(self.listener, router(self.service))
            .with_graceful_shutdown(shutdown)
            .await
    }
}

/// Loads the workspace, binds and serves until interrupted.
pub async fn serve(bind: &str, workspace: impl Into<PathBuf>, config: ServiceConfig) -> Result<(), ServiceError> {
    let server = Server::bind(bind, workspace, config).await?;
    server
        .run(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Io(e.to_string()))
}
