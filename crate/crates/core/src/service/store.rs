//! On-disk workspace: `lattice.lat`, `src/*.sifo` and one step log per
//! session in `sessions/<id>.ifbc.log`.
//!
//! A log starts with a version line and the method, followed by one entry
//! per mutating request:
//!
//! ```text
//! # sifo-session v1
//! method Card.setNumber
//! option allow-declassify
//! FieldAssignment @ eA low mut Card number
//! Variable @ eA1 this
//! undo
//! ```
//!
//! Logs are append-only and every append is flushed to disk before the
//! request completes. A final line without its newline is the remains of an
//! interrupted append and is ignored.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::parser::{self, strip_comment};
use crate::refiner::RefinementStep;

pub const FORMAT_VERSION: u32 = 1;
pub const LOG_SUFFIX: &str = ".ifbc.log";
const VERSION_PREFIX: &str = "# sifo-session v";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptLog {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogEntry {
    Step(RefinementStep),
    Undo,
}

impl LogEntry {
    pub fn to_line(&self) -> String {
        match self {
            LogEntry::Step(s) => s.to_string(),
            LogEntry::Undo => "undo".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLog {
    pub class: String,
    pub method: String,
    pub allow_declassify: bool,
    pub entries: Vec<LogEntry>,
}

impl SessionLog {
    pub fn new(class: &str, method: &str, allow_declassify: bool) -> Self {
        SessionLog {
            class: class.to_string(),
            method: method.to_string(),
            allow_declassify,
            entries: Vec::new(),
        }
    }

    /// Version, method and option lines.
    pub fn header_text(&self) -> String {
        let mut out = format!("{VERSION_PREFIX}{FORMAT_VERSION}\nmethod {}.{}\n", self.class, self.method);
        if self.allow_declassify {
            out.push_str("option allow-declassify\n");
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header_text();
        for e in &self.entries {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    /// Parses a log. Returns `Ok(None)` for a file whose header was never
    /// completely written.
    pub fn parse(text: &str) -> Result<Option<SessionLog>, CorruptLog> {
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        let mut lines = complete.lines().enumerate().map(|(i, l)| (i + 1, l));
        let Some((_, version_line)) = lines.next() else { return Ok(None) };
        let version = version_line
            .strip_prefix(VERSION_PREFIX)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| CorruptLog {
                line: 1,
                message: format!("expected `{VERSION_PREFIX}{FORMAT_VERSION}`"),
            })?;
        if version != FORMAT_VERSION {
            return Err(CorruptLog {
                line: 1,
                message: format!("format version {version} is not supported (expected {FORMAT_VERSION})"),
            });
        }
        let Some((n, method_line)) = lines.next() else { return Ok(None) };
        let (class, method) = method_line
            .strip_prefix("method ")
            .and_then(|m| m.trim().split_once('.'))
            .ok_or_else(|| CorruptLog {
                line: n,
                message: "expected `method <Class>.<method>`".into(),
            })?;
        let mut log = SessionLog::new(class, method, false);
        let mut body_started = false;
        for (n, raw) in lines {
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if line == "option allow-declassify" && !body_started {
                log.allow_declassify = true;
                continue;
            }
            body_started = true;
            if line == "undo" {
                log.entries.push(LogEntry::Undo);
                continue;
            }
            let step = parser::parse_step(line).map_err(|e| CorruptLog {
                line: n,
                message: e.message,
            })?;
            log.entries.push(LogEntry::Step(step));
        }
        Ok(Some(log))
    }

    /// Steps in effect after applying every undo.
    pub fn effective_steps(&self) -> Option<Vec<RefinementStep>> {
        let mut steps = Vec::new();
        for e in &self.entries {
            match e {
                LogEntry::Step(s) => steps.push(s.clone()),
                LogEntry::Undo => {
                    steps.pop()?;
                }
            }
        }
        Some(steps)
    }
}

/// The full contents of a workspace directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkspaceSnapshot {
    pub format_version: u32,
    pub lattice: String,
    /// File name (relative to `src/`) to text.
    pub sources: BTreeMap<String, String>,
    /// Session id to log.
    pub sessions: BTreeMap<String, SessionLog>,
}

#[derive(Debug)]
pub enum LoadError {
    Io(PathBuf, io::Error),
    Corrupt(PathBuf, CorruptLog),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            LoadError::Corrupt(p, c) => write!(f, "{}:{}: {}", p.display(), c.line, c.message),
        }
    }
}

pub fn lattice_path(dir: &Path) -> PathBuf {
    dir.join("lattice.lat")
}

pub fn src_dir(dir: &Path) -> PathBuf {
    dir.join("src")
}

pub fn sessions_dir(dir: &Path) -> PathBuf {
    dir.join("sessions")
}

pub fn log_path(dir: &Path, id: &str) -> PathBuf {
    sessions_dir(dir).join(format!("{id}{LOG_SUFFIX}"))
}

fn sorted_entries(dir: &Path, suffix: &str) -> Result<Vec<(String, PathBuf)>, LoadError> {
    let mut out = Vec::new();
    let rd = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(LoadError::Io(dir.to_path_buf(), e)),
    };
    for entry in rd {
        let entry = entry.map_err(|e| LoadError::Io(dir.to_path_buf(), e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(suffix) {
            if !stem.is_empty() {
                out.push((stem.to_string(), entry.path()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn read(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|e| LoadError::Io(path.to_path_buf(), e))
}

impl WorkspaceSnapshot {
    pub fn load(dir: &Path) -> Result<Self, LoadError> {
        let lattice = read(&lattice_path(dir))?;
        let mut sources = BTreeMap::new();
        for (stem, path) in sorted_entries(&src_dir(dir), ".sifo")? {
            sources.insert(format!("{stem}.sifo"), read(&path)?);
        }
        let mut sessions = BTreeMap::new();
        for (id, path) in sorted_entries(&sessions_dir(dir), LOG_SUFFIX)? {
            let text = read(&path)?;
            match SessionLog::parse(&text) {
                Ok(Some(log)) => {
                    sessions.insert(id, log);
                }
                Ok(None) => {}
                Err(c) => return Err(LoadError::Corrupt(path, c)),
            }
        }
        Ok(WorkspaceSnapshot {
            format_version: FORMAT_VERSION,
            lattice,
            sources,
            sessions,
        })
    }

    pub fn save(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(src_dir(dir))?;
        fs::create_dir_all(sessions_dir(dir))?;
        write_synced(&lattice_path(dir), self.lattice.as_bytes())?;
        for (name, text) in &self.sources {
            write_synced(&src_dir(dir).join(name), text.as_bytes())?;
        }
        for (id, log) in &self.sessions {
            write_synced(&log_path(dir, id), log.to_text().as_bytes())?;
        }
        Ok(())
    }
}

/// Creates or replaces `path` with `bytes` and flushes it to disk.
pub fn write_synced(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    if let Some(parent) = path.parent() {
        // make the directory entry durable too; not all platforms allow it
        if let Ok(d) = File::open(parent) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

/// Appends one line to a log and flushes it to disk.
pub fn append_synced(path: &Path, line: &str) -> io::Result<()> {
    let mut f = OpenOptions::new().append(true).open(path)?;
    f.write_all(format!("{line}\n").as_bytes())?;
    f.sync_all()
}
