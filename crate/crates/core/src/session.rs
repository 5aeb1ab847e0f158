//! Sessions: a program plus a live state and its trace, with fork lineage and
//! JSON persistence.
//!
//! On disk a store directory holds `sessions/<id>.json`,
//! `sessions/<id>.trace.json` and `programs/<id>.dpcl`.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use rand::distr::Alphanumeric;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interpreter::{Engine, EngineError, StateDelta, Step, Trace, TraceStep};
use crate::model::{pretty_print, InstitutionalState, Program};
use crate::parser::{self, Diagnostics};

pub const SCHEMA_VERSION: u64 = 1;
const ID_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown program `{0}`")]
    UnknownProgram(String),
    #[error("unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    VersionMismatch { found: u64 },
    #[error("corrupt payload: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("program does not check:\n{0}")]
    Program(Diagnostics),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::UnknownSession(_) => "unknown-session",
            StoreError::UnknownProgram(_) => "unknown-program",
            StoreError::VersionMismatch { .. } => "version-mismatch",
            StoreError::Corrupt(_) => "corrupt-payload",
            StoreError::Io(_) => "io",
            StoreError::Program(_) => "invalid-program",
            StoreError::Engine(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub parent: Option<String>,
    pub created_at: DateTime<Utc>,
    pub last_step_at: Option<DateTime<Utc>>,
    pub engine: Engine,
    pub state: InstitutionalState,
    pub trace: Trace,
}

impl Session {
    pub fn new(id: String, engine: Engine) -> Result<Session, EngineError> {
        let state = engine.init_state(0)?;
        Ok(Session {
            id,
            parent: None,
            created_at: Utc::now(),
            last_step_at: None,
            engine,
            trace: Trace::new(state.clone()),
            state,
        })
    }

    pub fn program(&self) -> &Program {
        self.engine.program()
    }

    /// Applies one step and records it in the trace. A failed step changes
    /// nothing.
    pub fn step(&mut self, step: &Step) -> Result<StateDelta, EngineError> {
        let delta = self.engine.apply_step(&mut self.state, step)?;
        self.trace.steps.push(TraceStep {
            step: step.clone(),
            delta: delta.clone(),
            clock: self.state.clock,
        });
        self.last_step_at = Some(Utc::now());
        Ok(delta)
    }

    /// An independent copy whose history starts at this session's current
    /// state. The parent's steps stay in the parent's trace.
    pub fn fork(&self, id: String) -> Session {
        Session {
            id,
            parent: Some(self.id.clone()),
            created_at: Utc::now(),
            last_step_at: None,
            engine: self.engine.clone(),
            state: self.state.clone(),
            trace: Trace::new(self.state.clone()),
        }
    }

    pub fn document(&self) -> SessionDocument {
        SessionDocument {
            dpcl_schema: SCHEMA_VERSION,
            id: self.id.clone(),
            parent: self.parent.clone(),
            created_at: self.created_at,
            last_step_at: self.last_step_at,
            source_name: self.program().source_name.clone(),
            program: pretty_print(self.program()),
            state: self.state.clone(),
            trace: None,
        }
    }

    /// Writes the session, including its trace, as one JSON document.
    pub fn save<W: Write>(&self, sink: W) -> Result<(), StoreError> {
        let mut doc = self.document();
        doc.trace = Some(self.trace.clone());
        serde_json::to_writer_pretty(sink, &doc).map_err(|e| StoreError::Io(e.into()))
    }

    pub fn load<R: Read>(mut source: R) -> Result<Session, StoreError> {
        let mut text = String::new();
        source.read_to_string(&mut text)?;
        let doc = SessionDocument::from_json(&text)?;
        doc.into_session(None)
    }
}

/// Persistent form of a session. The trace is stored alongside in its own
/// file, or inline when a session is exported.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionDocument {
    pub dpcl_schema: u64,
    pub id: String,
    pub parent: Option<String>,
    pub created_at: DateTime<Utc>,
    pub last_step_at: Option<DateTime<Utc>>,
    pub source_name: String,
    /// Program source, pretty-printed.
    pub program: String,
    pub state: InstitutionalState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TraceDocument {
    dpcl_schema: u64,
    id: String,
    trace: Trace,
}

fn check_version(text: &str) -> Result<(), StoreError> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| StoreError::Corrupt(e.to_string()))?;
    match raw.get("dpcl_schema").and_then(serde_json::Value::as_u64) {
        Some(SCHEMA_VERSION) => Ok(()),
        Some(found) => Err(StoreError::VersionMismatch { found }),
        None => Err(StoreError::Corrupt("missing `dpcl_schema`".into())),
    }
}

impl SessionDocument {
    pub fn from_json(text: &str) -> Result<SessionDocument, StoreError> {
        check_version(text)?;
        serde_json::from_str(text).map_err(|e| StoreError::Corrupt(e.to_string()))
    }

    fn into_session(self, trace: Option<Trace>) -> Result<Session, StoreError> {
        let program = parser::parse_named(&self.source_name, &self.program)
            .map_err(|d| StoreError::Corrupt(format!("stored program does not parse: {d}")))?;
        let trace = self.trace.or(trace).unwrap_or_else(|| Trace::new(self.state.clone()));
        Ok(Session {
            id: self.id,
            parent: self.parent,
            created_at: self.created_at,
            last_step_at: self.last_step_at,
            engine: Engine::new(program),
            state: self.state,
            trace,
        })
    }
}

pub fn new_id() -> String {
    rand::rng()
        .sample_iter(&Alphanumeric)
        .take(ID_LEN)
        .map(char::from)
        .collect()
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric())
}

/// Shared, thread-safe collection of programs and sessions. Each session has
/// its own lock, so operations on different sessions run in parallel.
#[derive(Debug, Default)]
pub struct SessionStore {
    dir: Option<PathBuf>,
    programs: Mutex<HashMap<String, Arc<Program>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    pub fn in_memory() -> SessionStore {
        SessionStore::default()
    }

    /// A store that persists under `dir`, picking up whatever is already
    /// there.
    pub fn open(dir: impl AsRef<Path>) -> Result<SessionStore, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("sessions"))?;
        fs::create_dir_all(dir.join("programs"))?;
        Ok(SessionStore {
            dir: Some(dir),
            ..Default::default()
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn fresh_id(&self, taken: impl Fn(&str) -> bool) -> String {
        loop {
            let id = new_id();
            if !taken(&id) {
                return id;
            }
        }
    }

    // ---- programs ----

    /// Parses and validates `source`. Returns the program id and any warnings.
    pub fn add_program(&self, name: &str, source: &str) -> Result<(String, Diagnostics), StoreError> {
        let (program, warnings) = parser::check(name, source).map_err(StoreError::Program)?;
        Ok((self.add_program_ast(program)?, warnings))
    }

    pub fn add_program_ast(&self, program: Program) -> Result<String, StoreError> {
        let id = {
            let programs = self.programs.lock().unwrap();
            self.fresh_id(|id| programs.contains_key(id) || self.program_path(id).is_some_and(|p| p.exists()))
        };
        if let Some(path) = self.program_path(&id) {
            fs::write(path, pretty_print(&program))?;
        }
        self.programs.lock().unwrap().insert(id.clone(), Arc::new(program));
        Ok(id)
    }

    fn program_path(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("programs").join(format!("{id}.dpcl")))
    }

    pub fn program(&self, id: &str) -> Result<Arc<Program>, StoreError> {
        if let Some(p) = self.programs.lock().unwrap().get(id) {
            return Ok(p.clone());
        }
        let path = self
            .program_path(id)
            .filter(|p| valid_id(id) && p.exists())
            .ok_or_else(|| StoreError::UnknownProgram(id.to_string()))?;
        let source = fs::read_to_string(&path)?;
        let program = parser::parse_named(&format!("{id}.dpcl"), &source)
            .map_err(|d| StoreError::Corrupt(format!("stored program does not parse: {d}")))?;
        let program = Arc::new(program);
        self.programs.lock().unwrap().insert(id.to_string(), program.clone());
        Ok(program)
    }

    // ---- sessions ----

    fn session_paths(&self, id: &str) -> Option<(PathBuf, PathBuf)> {
        self.dir.as_ref().map(|d| {
            let s = d.join("sessions");
            (s.join(format!("{id}.json")), s.join(format!("{id}.trace.json")))
        })
    }

    fn insert(&self, session: Session) -> Result<Arc<Mutex<Session>>, StoreError> {
        self.persist(&session)?;
        let id = session.id.clone();
        let handle = Arc::new(Mutex::new(session));
        self.sessions.lock().unwrap().insert(id, handle.clone());
        Ok(handle)
    }

    fn new_session_id(&self) -> String {
        let sessions = self.sessions.lock().unwrap();
        self.fresh_id(|id| sessions.contains_key(id) || self.session_paths(id).is_some_and(|(p, _)| p.exists()))
    }

    pub fn create_session(&self, program_id: &str) -> Result<String, StoreError> {
        let program = self.program(program_id)?;
        self.create_session_for((*program).clone())
    }

    pub fn create_session_for(&self, program: Program) -> Result<String, StoreError> {
        let session = Session::new(self.new_session_id(), Engine::new(program))?;
        let id = session.id.clone();
        self.insert(session)?;
        Ok(id)
    }

    fn handle(&self, id: &str) -> Result<Arc<Mutex<Session>>, StoreError> {
        if let Some(h) = self.sessions.lock().unwrap().get(id) {
            return Ok(h.clone());
        }
        let (doc_path, trace_path) = self
            .session_paths(id)
            .filter(|(p, _)| valid_id(id) && p.exists())
            .ok_or_else(|| StoreError::UnknownSession(id.to_string()))?;
        let doc = SessionDocument::from_json(&fs::read_to_string(doc_path)?)?;
        let trace = match fs::read_to_string(trace_path) {
            Ok(text) => {
                check_version(&text)?;
                let t: TraceDocument = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt(e.to_string()))?;
                Some(t.trace)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        let session = doc.into_session(trace)?;
        let handle = Arc::new(Mutex::new(session));
        self.sessions.lock().unwrap().insert(id.to_string(), handle.clone());
        Ok(handle)
    }

    /// Runs `f` with exclusive access to the session.
    pub fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> T) -> Result<T, StoreError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock().unwrap();
        Ok(f(&mut session))
    }

    /// Applies one step; on success the session is persisted.
    pub fn step(&self, id: &str, step: &Step) -> Result<(StateDelta, InstitutionalState), StoreError> {
        let handle = self.handle(id)?;
        let mut session = handle.lock().unwrap();
        let delta = session.step(step)?;
        self.persist(&session)?;
        Ok((delta, session.state.clone()))
    }

    pub fn state(&self, id: &str) -> Result<InstitutionalState, StoreError> {
        self.with_session(id, |s| s.state.clone())
    }

    pub fn trace(&self, id: &str) -> Result<Trace, StoreError> {
        self.with_session(id, |s| s.trace.clone())
    }

    pub fn fork(&self, id: &str) -> Result<String, StoreError> {
        let child_id = self.new_session_id();
        let child = self.with_session(id, |s| s.fork(child_id.clone()))?;
        self.insert(child)?;
        Ok(child_id)
    }

    /// Ancestors of a session, nearest first.
    pub fn lineage(&self, id: &str) -> Result<Vec<String>, StoreError> {
        let mut chain = Vec::new();
        let mut current = self.with_session(id, |s| s.parent.clone())?;
        while let Some(parent) = current {
            if chain.contains(&parent) {
                return Err(StoreError::Corrupt(format!("fork lineage of `{id}` has a cycle")));
            }
            current = self.with_session(&parent, |s| s.parent.clone())?;
            chain.push(parent);
        }
        Ok(chain)
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.lock().unwrap().keys().cloned().collect();
        if let Some(dir) = &self.dir {
            if let Ok(entries) = fs::read_dir(dir.join("sessions")) {
                for e in entries.flatten() {
                    let name = e.file_name().to_string_lossy().to_string();
                    if let Some(id) = name.strip_suffix(".json").filter(|n| !n.ends_with(".trace")) {
                        if !ids.iter().any(|i| i == id) {
                            ids.push(id.to_string());
                        }
                    }
                }
            }
        }
        ids.sort();
        ids
    }

    pub fn save_session<W: Write>(&self, id: &str, sink: W) -> Result<(), StoreError> {
        let handle = self.handle(id)?;
        let session = handle.lock().unwrap();
        session.save(sink)
    }

    /// Loads an exported session into the store, replacing any session with
    /// the same id. Returns the id.
    pub fn load_session<R: Read>(&self, source: R) -> Result<String, StoreError> {
        let session = Session::load(source)?;
        let id = session.id.clone();
        if !valid_id(&id) {
            return Err(StoreError::Corrupt(format!("invalid session id `{id}`")));
        }
        self.insert(session)?;
        Ok(id)
    }

    fn persist(&self, session: &Session) -> Result<(), StoreError> {
        let Some((doc_path, trace_path)) = self.session_paths(&session.id) else {
            return Ok(());
        };
        let doc = serde_json::to_string_pretty(&session.document()).map_err(|e| StoreError::Io(e.into()))?;
        write_atomic(&doc_path, doc.as_bytes())?;
        let trace = TraceDocument {
            dpcl_schema: SCHEMA_VERSION,
            id: session.id.clone(),
            trace: session.trace.clone(),
        };
        let trace = serde_json::to_string_pretty(&trace).map_err(|e| StoreError::Io(e.into()))?;
        write_atomic(&trace_path, trace.as_bytes())?;
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}
