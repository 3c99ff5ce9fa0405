//! JSON messages exchanged with the session host. Every response body is a
//! single JSON document followed by a newline.

use serde::{Deserialize, Serialize};

use crate::lattice::SecurityLevel;
use crate::program::{Diagnostic, SourceFile};
use crate::refiner::{RefinementStep, Session, SessionStatus};
use crate::syntax::{ClassName, Expr, HoleId, HoleSpec, Modifier, SifoType};
use crate::pretty;

/// `POST /session`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub class: String,
    pub method: String,
    /// Defaults to the server setting; cannot enable declassification on a
    /// server started without it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_declassify: Option<bool>,
    #[serde(default)]
    pub pre: String,
    #[serde(default)]
    pub post: String,
}

/// `POST /session/{id}/step`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRequest {
    pub step: RefinementStep,
    /// Revision the client last saw.
    pub revision: u64,
}

/// `POST /session/{id}/undo`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndoRequest {
    pub revision: u64,
}

/// `POST /check`. Absent fields default to the workspace contents.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<SourceFile>>,
}

/// One typing-context entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub name: String,
    pub level: SecurityLevel,
    pub modifier: Modifier,
    pub class: ClassName,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoleView {
    pub id: HoleId,
    pub context: Vec<Binding>,
    pub required: SifoType,
    #[serde(default)]
    pub pre: String,
    #[serde(default)]
    pub post: String,
}

impl From<&HoleSpec> for HoleView {
    fn from(h: &HoleSpec) -> Self {
        HoleView {
            id: h.id.clone(),
            context: h
                .context
                .iter()
                .map(|(name, t)| Binding {
                    name: name.to_string(),
                    level: t.level.clone(),
                    modifier: t.modifier,
                    class: t.class.clone(),
                })
                .collect(),
            required: h.required.clone(),
            pre: h.pre.clone(),
            post: h.post.clone(),
        }
    }
}

/// A session as seen by clients: the current tree, its open holes in
/// source order, and the applied steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub revision: u64,
    pub class: String,
    pub method: String,
    pub status: SessionStatus,
    pub allow_declassify: bool,
    /// Method text with `?id` placeholders for open holes.
    pub text: String,
    pub tree: Expr,
    pub holes: Vec<HoleView>,
    pub log: Vec<RefinementStep>,
}

impl SessionView {
    pub fn new(id: &str, revision: u64, s: &Session) -> Self {
        SessionView {
            id: id.to_string(),
            revision,
            class: s.class().to_string(),
            method: s.header().name.clone(),
            status: s.status(),
            allow_declassify: s.options().allow_declassify,
            text: pretty::method(&s.method_def(), 0),
            tree: s.root().clone(),
            holes: s.open_holes().into_iter().map(HoleView::from).collect(),
            log: s.log().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub class: String,
    pub method: String,
    pub revision: u64,
    pub status: SessionStatus,
}

/// `GET /sessions`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionList {
    pub sessions: Vec<SessionSummary>,
}

/// `GET /session/{id}/rules/{holeId}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RulesResponse {
    pub session: String,
    pub hole: HoleId,
    pub candidates: Vec<RefinementStep>,
}

/// `GET /session/{id}/export`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportResponse {
    pub session: String,
    pub method: String,
}

/// `GET /session/{id}/verify`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub session: String,
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// `POST /check`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResponse {
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodRef {
    pub class: String,
    pub method: String,
    pub header: String,
    pub has_body: bool,
}

/// `GET /methods`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodList {
    pub methods: Vec<MethodRef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    NotFound,
    Conflict,
    BadRequest,
    Forbidden,
    /// A refinement step or undo was refused; see the diagnostics.
    Rejected,
    CorruptWorkspace,
    Io,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: ErrorCode,
    pub message: String,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    /// Current revision, on conflicts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
}
