//! Session host over a workspace directory. Sessions are rebuilt from their
//! step logs on load; every mutating request appends to the log before the
//! in-memory session changes.

pub mod http;
pub mod protocol;
pub mod store;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;

use crate::pretty;
use crate::program::{self, Diagnostic, Program, SourceFile};
use crate::refiner::{RefinementError, Session, SessionOptions, SoundnessError};
use crate::syntax::{DeclKind, HoleId};
use protocol::*;
use store::{LogEntry, SessionLog, WorkspaceSnapshot};

#[derive(Debug, Clone, Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),
    #[error("session `{session}` is at revision {current}, request was based on {given}")]
    Conflict { session: String, current: u64, given: u64 },
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Forbidden(String),
    #[error("{error}")]
    Rejected { session: String, error: RefinementError },
    #[error("corrupt workspace: {message}")]
    CorruptWorkspace { message: String, diagnostics: Vec<Diagnostic> },
    #[error("I/O error: {0}")]
    Io(String),
    #[error("cannot bind {0}")]
    Bind(String),
}

impl ServiceError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        ServiceError::Io(format!("{}: {e}", path.display()))
    }

    pub fn code(&self) -> ErrorCode {
        match self {
            ServiceError::NotFound(_) => ErrorCode::NotFound,
            ServiceError::Conflict { .. } => ErrorCode::Conflict,
            ServiceError::BadRequest(_) => ErrorCode::BadRequest,
            ServiceError::Forbidden(_) => ErrorCode::Forbidden,
            ServiceError::Rejected { .. } => ErrorCode::Rejected,
            ServiceError::CorruptWorkspace { .. } => ErrorCode::CorruptWorkspace,
            ServiceError::Io(_) | ServiceError::Bind(_) => ErrorCode::Io,
        }
    }

    pub fn to_response(&self) -> ErrorResponse {
        let diagnostics = match self {
            ServiceError::Rejected { session, error } => vec![refinement_diagnostic(session, error)],
            ServiceError::CorruptWorkspace { diagnostics, .. } => diagnostics.clone(),
            _ => Vec::new(),
        };
        ErrorResponse {
            error: self.code(),
            message: self.to_string(),
            diagnostics,
            revision: match self {
                ServiceError::Conflict { current, .. } => Some(*current),
                _ => None,
            },
        }
    }
}

fn refinement_diagnostic(session: &str, e: &RefinementError) -> Diagnostic {
    let file = format!("session:{session}");
    match e {
        RefinementError::SideCondition { premise, error, .. } => Diagnostic {
            premise: Some(premise.clone()),
            ..Diagnostic::from_type_error(error, &file)
        },
        other => Diagnostic {
            file,
            span: Default::default(),
            code: match other {
                RefinementError::UnknownHole(_) => "UnknownHole",
                RefinementError::EmptyLog => "EmptyLog",
                RefinementError::Incomplete(_) => "Incomplete",
                _ => "UnknownMethod",
            }
            .to_string(),
            rule: None,
            message: other.to_string(),
            premise: None,
        },
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ServiceConfig {
    /// Whether sessions may use declassification.
    pub allow_declassify: bool,
}

struct Entry {
    id: String,
    session: Session,
    revision: u64,
    path: PathBuf,
}

impl Entry {
    fn view(&self) -> SessionView {
        SessionView::new(&self.id, self.revision, &self.session)
    }
}

struct Loaded {
    program: Program,
    lattice: SourceFile,
    sources: Vec<SourceFile>,
    sessions: BTreeMap<String, Arc<Mutex<Entry>>>,
    next_id: u64,
}

pub struct Service {
    dir: PathBuf,
    config: ServiceConfig,
    state: RwLock<Loaded>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn corrupt(message: String) -> ServiceError {
    ServiceError::CorruptWorkspace {
        message,
        diagnostics: Vec::new(),
    }
}

fn load_dir(dir: &Path) -> Result<Loaded, ServiceError> {
    let snap = WorkspaceSnapshot::load(dir).map_err(|e| match e {
        store::LoadError::Io(p, e) => ServiceError::io(&p, e),
        store::LoadError::Corrupt(..) => corrupt(e.to_string()),
    })?;
    let lattice = SourceFile::new("lattice.lat", snap.lattice);
    let sources: Vec<SourceFile> = snap
        .sources
        .into_iter()
        .map(|(name, text)| SourceFile::new(format!("src/{name}"), text))
        .collect();
    let program = program::load(&lattice, &sources).map_err(|diagnostics| ServiceError::CorruptWorkspace {
        message: format!(
            "workspace program does not load: {}",
            diagnostics.first().map(|d| d.to_string()).unwrap_or_default()
        ),
        diagnostics,
    })?;
    let mut sessions = BTreeMap::new();
    let mut next_id = 1;
    for (id, log) in snap.sessions {
        let path = store::log_path(dir, &id);
        if let Some(n) = id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
            next_id = next_id.max(n + 1);
        }
        let session = replay(&program, &log).map_err(|(line, msg)| {
            corrupt(format!("{}:{line}: {msg}", path.display()))
        })?;
        sessions.insert(
            id.clone(),
            Arc::new(Mutex::new(Entry {
                id,
                session,
                revision: log.entries.len() as u64,
                path,
            })),
        );
    }
    Ok(Loaded {
        program,
        lattice,
        sources,
        sessions,
        next_id,
    })
}

/// Rebuilds a session from its log. Errors carry the 1-based log line.
fn replay(program: &Program, log: &SessionLog) -> Result<Session, (usize, String)> {
    let header_lines = if log.allow_declassify { 3 } else { 2 };
    let mut session = Session::start(
        program.table.clone(),
        program.lattice.clone(),
        &log.class,
        &log.method,
        SessionOptions {
            allow_declassify: log.allow_declassify,
            ..Default::default()
        },
    )
    .map_err(|e| (2, e.to_string()))?;
    for (i, entry) in log.entries.iter().enumerate() {
        let line = header_lines + i + 1;
        session = match entry {
            LogEntry::Step(step) => session.apply(step),
            LogEntry::Undo => session.undo(),
        }
        .map_err(|e| (line, e.to_string()))?;
    }
    Ok(session)
}

impl Service {
    /// Loads the workspace at `dir`, replaying every session log.
    pub fn open(dir: impl Into<PathBuf>, config: ServiceConfig) -> Result<Service, ServiceError> {
        let dir = dir.into();
        let loaded = load_dir(&dir)?;
        Ok(Service {
            dir,
            config,
            state: RwLock::new(loaded),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Loaded> {
        self.state.read().unwrap_or_else(|p| p.into_inner())
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ServiceError> {
        self.read()
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no session `{id}`")))
    }

    /// Re-reads the workspace from disk.
    pub fn reload(&self) -> Result<MethodList, ServiceError> {
        let loaded = load_dir(&self.dir)?;
        *self.state.write().unwrap_or_else(|p| p.into_inner()) = loaded;
        Ok(self.list_methods())
    }

    pub fn list_methods(&self) -> MethodList {
        let state = self.read();
        let methods = state
            .program
            .table
            .user_decls()
            .filter(|d| d.kind == DeclKind::Class)
            .flat_map(|d| {
                d.methods.iter().map(move |m| MethodRef {
                    class: d.name.to_string(),
                    method: m.header.name.clone(),
                    header: pretty::header(&m.header),
                    has_body: m.body.is_some(),
                })
            })
            .collect();
        MethodList { methods }
    }

    pub fn list_sessions(&self) -> SessionList {
        let sessions = self
            .read()
            .sessions
            .values()
            .map(|e| {
                let e = lock(e);
                SessionSummary {
                    id: e.id.clone(),
                    class: e.session.class().to_string(),
                    method: e.session.header().name.clone(),
                    revision: e.revision,
                    status: e.session.status(),
                }
            })
            .collect();
        SessionList { sessions }
    }

    pub fn create_session(&self, req: &CreateSessionRequest) -> Result<SessionView, ServiceError> {
        let allow_declassify = req.allow_declassify.unwrap_or(self.config.allow_declassify);
        if allow_declassify && !self.config.allow_declassify {
            return Err(ServiceError::Forbidden(
                "declassification is disabled on this server; start it with --allow-declassify".into(),
            ));
        }
        let mut state = self.state.write().unwrap_or_else(|p| p.into_inner());
        let session = Session::start(
            state.program.table.clone(),
            state.program.lattice.clone(),
            &req.class,
            &req.method,
            SessionOptions {
                allow_declassify,
                pre: req.pre.clone(),
                post: req.post.clone(),
                fault: None,
            },
        )
        .map_err(|e| ServiceError::NotFound(e.to_string()))?;
        let id = format!("s{}", state.next_id);
        let path = store::log_path(&self.dir, &id);
        let log = SessionLog::new(&req.class, &req.method, allow_declassify);
        let sessions_dir = store::sessions_dir(&self.dir);
        fs::create_dir_all(&sessions_dir).map_err(|e| ServiceError::io(&sessions_dir, e))?;
        store::write_synced(&path, log.header_text().as_bytes()).map_err(|e| ServiceError::io(&path, e))?;
        state.next_id += 1;
        let entry = Entry {
            id: id.clone(),
            session,
            revision: 0,
            path,
        };
        let view = entry.view();
        state.sessions.insert(id, Arc::new(Mutex::new(entry)));
        Ok(view)
    }

    pub fn get_session(&self, id: &str) -> Result<SessionView, ServiceError> {
        let entry = self.entry(id)?;
        let e = lock(&entry);
        Ok(e.view())
    }

    fn mutate(
        &self,
        id: &str,
        revision: u64,
        f: impl FnOnce(&Session) -> Result<(Session, LogEntry), RefinementError>,
    ) -> Result<SessionView, ServiceError> {
        let entry = self.entry(id)?;
        let mut e = lock(&entry);
        if e.revision != revision {
            return Err(ServiceError::Conflict {
                session: id.to_string(),
                current: e.revision,
                given: revision,
            });
        }
        let (next, log_entry) = f(&e.session).map_err(|error| ServiceError::Rejected {
            session: id.to_string(),
            error,
        })?;
        store::append_synced(&e.path, &log_entry.to_line()).map_err(|err| ServiceError::io(&e.path, err))?;
        e.session = next;
        e.revision += 1;
        Ok(e.view())
    }

    pub fn apply_step(&self, id: &str, req: &StepRequest) -> Result<SessionView, ServiceError> {
        self.mutate(id, req.revision, |s| Ok((s.apply(&req.step)?, LogEntry::Step(req.step.clone()))))
    }

    pub fn undo(&self, id: &str, req: &UndoRequest) -> Result<SessionView, ServiceError> {
        self.mutate(id, req.revision, |s| Ok((s.undo()?, LogEntry::Undo)))
    }

    pub fn applicable_rules(&self, id: &str, hole: &str) -> Result<RulesResponse, ServiceError> {
        let entry = self.entry(id)?;
        let session = lock(&entry).session.clone();
        let hole = HoleId::new(hole);
        let candidates = session.applicable_rules(&hole).map_err(|_| {
            ServiceError::NotFound(format!("session `{id}` has no open hole `{hole}`"))
        })?;
        Ok(RulesResponse {
            session: id.to_string(),
            hole,
            candidates,
        })
    }

    pub fn export(&self, id: &str) -> Result<ExportResponse, ServiceError> {
        let entry = self.entry(id)?;
        let e = lock(&entry);
        let method = e.session.export_method().map_err(|error| ServiceError::Rejected {
            session: id.to_string(),
            error,
        })?;
        Ok(ExportResponse {
            session: id.to_string(),
            method,
        })
    }

    pub fn verify(&self, id: &str) -> Result<VerifyResponse, ServiceError> {
        let entry = self.entry(id)?;
        let session = lock(&entry).session.clone();
        let file = format!("session:{id}");
        let diagnostics = match session.verify_soundness() {
            Ok(()) => Vec::new(),
            Err(SoundnessError::Incomplete(error)) => {
                return Err(ServiceError::Rejected {
                    session: id.to_string(),
                    error,
                })
            }
            Err(SoundnessError::Rejected(es)) => es.iter().map(|e| Diagnostic::from_type_error(e, &file)).collect(),
            Err(SoundnessError::Roundtrip(msg)) => vec![Diagnostic {
                file,
                span: Default::default(),
                code: "Roundtrip".into(),
                rule: None,
                message: msg,
                premise: None,
            }],
        };
        Ok(VerifyResponse {
            session: id.to_string(),
            ok: diagnostics.is_empty(),
            diagnostics,
        })
    }

    /// Checks the given program, or the workspace program for absent parts.
    pub fn check(&self, req: &CheckRequest) -> CheckResponse {
        let (lattice, sources) = {
            let state = self.read();
            (
                req.lattice
                    .as_ref()
                    .map(|t| SourceFile::new("lattice.lat", t.clone()))
                    .unwrap_or_else(|| state.lattice.clone()),
                req.sources.clone().unwrap_or_else(|| state.sources.clone()),
            )
        };
        let diagnostics = program::load_and_check(&lattice, &sources);
        CheckResponse {
            ok: diagnostics.is_empty(),
            diagnostics,
        }
    }
}
