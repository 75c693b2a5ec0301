//! Live sessions, their per-session guard and on-disk persistence.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use cforge_core::{Session, SessionConfig, TraceRow};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::error::{Error, Result};
use crate::io::{read_json, write_json, Registry};

/// Stored alongside the trace log of each session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub domain: String,
    pub config: SessionConfig,
}

pub struct LiveSession {
    pub meta: SessionMeta,
    pub session: Session,
    /// Responses to choice requests by idempotency key.
    pub idempotent: HashMap<String, serde_json::Value>,
}

#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<LiveSession>>>>,
    dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        SessionStore::default()
    }

    /// A store persisting to `dir/<id>/`, reloading any sessions found there.
    pub fn open(dir: &Path, registry: &Registry, solver: &crate::config::SolverConfig) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let meta_path = entry.path().join("session.json");
            if !meta_path.is_file() {
                continue;
            }
            let meta: SessionMeta = read_json(&meta_path)?;
            let Some(spec) = registry.get(&meta.domain) else {
                tracing::warn!(session = %meta.id, domain = %meta.domain, "skipping session of unknown domain");
                continue;
            };
            let trace_path = entry.path().join("trace.jsonl");
            let rows = if trace_path.is_file() {
                crate::trace::read_jsonl(&trace_path)?
            } else {
                Vec::new()
            };
            let session = Session::restore(spec.clone(), meta.config.clone(), solver.build(spec)?, rows)?;
            let id = meta.id.clone();
            sessions.insert(
                id,
                Arc::new(Mutex::new(LiveSession {
                    meta,
                    session,
                    idempotent: HashMap::new(),
                })),
            );
        }
        Ok(SessionStore {
            sessions: RwLock::new(sessions),
            dir: Some(dir.to_path_buf()),
        })
    }

    pub fn get(&self, id: &str) -> Option<Arc<Mutex<LiveSession>>> {
        self.sessions.read().expect("store lock").get(id).cloned()
    }

    pub fn insert(&self, live: LiveSession) -> Result<Arc<Mutex<LiveSession>>> {
        if let Some(dir) = &self.dir {
            write_json(&dir.join(&live.meta.id).join("session.json"), &live.meta)?;
        }
        let id = live.meta.id.clone();
        let handle = Arc::new(Mutex::new(live));
        self.sessions.write().expect("store lock").insert(id, handle.clone());
        Ok(handle)
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends a trace row to the session's log, if persistent.
    pub fn record(&self, id: &str, row: &TraceRow) -> Result<()> {
        match &self.dir {
            Some(dir) => crate::trace::append_row(&dir.join(id).join("trace.jsonl"), row),
            None => Ok(()),
        }
    }
}
