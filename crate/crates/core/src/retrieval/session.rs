use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::record::DeviceId;

use super::RetrievalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub timestamp: DateTime<Utc>,
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        session_id: String,
        at: DateTime<Utc>,
    },
    Turn {
        role: Role,
        text: String,
        at: DateTime<Utc>,
    },
    Recommended {
        ids: Vec<DeviceId>,
        at: DateTime<Utc>,
    },
    Error {
        message: String,
        retryable: bool,
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationSession {
    pub id: String,
    pub turns: Vec<Turn>,
    /// Device ids in first-recommended order, without duplicates.
    pub recommended_log: Vec<DeviceId>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl ConversationSession {
    pub fn new(id: impl Into<String>) -> Self {
        let now = Utc::now();
        Self {
            id: id.into(),
            turns: Vec::new(),
            recommended_log: Vec::new(),
            created_at: now,
            updated_at: now,
        }
    }

    pub fn user_turns(&self) -> impl Iterator<Item = &str> {
        self.turns
            .iter()
            .filter(|t| t.role == Role::User)
            .map(|t| t.text.as_str())
    }

    pub fn count(&self, role: Role) -> usize {
        self.turns.iter().filter(|t| t.role == role).count()
    }

    pub fn apply(&mut self, event: &SessionEvent) {
        match event {
            SessionEvent::Created { at, .. } => {
                self.created_at = *at;
                self.updated_at = *at;
            }
            SessionEvent::Turn { role, text, at } => {
                self.turns.push(Turn {
                    role: *role,
                    text: text.clone(),
                    timestamp: *at,
                });
                self.updated_at = *at;
            }
            SessionEvent::Recommended { ids, at } => {
                for id in ids {
                    if !self.recommended_log.contains(id) {
                        self.recommended_log.push(*id);
                    }
                }
                self.updated_at = *at;
            }
            SessionEvent::Error { at, .. } => self.updated_at = *at,
        }
    }
}

pub type SharedSession = Arc<Mutex<ConversationSession>>;

/// Sessions keyed by id, each persisted as an append-only JSON-lines log.
/// Callers lock a session for the duration of a turn, which serializes
/// turns per session while distinct sessions proceed independently.
#[derive(Debug, Default)]
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: Mutex<HashMap<String, SharedSession>>,
    counter: AtomicU64,
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, RetrievalError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| RetrievalError::Session(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: Some(dir),
            ..Self::default()
        })
    }

    fn log_path(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    pub fn create(&self) -> Result<String, RetrievalError> {
        let nanos = Utc::now().timestamp_nanos_opt().unwrap_or_default() as u64;
        loop {
            let n = self.counter.fetch_add(1, Ordering::Relaxed);
            let id = format!("s{nanos:x}{n:04x}");
            if self.sessions.lock().contains_key(&id)
                || self.log_path(&id).is_some_and(|p| p.exists())
            {
                continue;
            }
            self.create_with_id(&id)?;
            return Ok(id);
        }
    }

    /// Creates a session under a caller-chosen id.
    pub fn create_with_id(&self, id: &str) -> Result<SharedSession, RetrievalError> {
        if !valid_session_id(id) {
            return Err(RetrievalError::InvalidSessionId(id.to_string()));
        }
        let mut session = ConversationSession::new(id);
        let event = SessionEvent::Created {
            session_id: id.to_string(),
            at: session.created_at,
        };
        self.append(id, &[event.clone()])?;
        session.apply(&event);
        let shared = Arc::new(Mutex::new(session));
        self.sessions.lock().insert(id.to_string(), shared.clone());
        Ok(shared)
    }

    /// Looks a session up, replaying its log from disk on first access.
    pub fn get(&self, id: &str) -> Result<Option<SharedSession>, RetrievalError> {
        if !valid_session_id(id) {
            return Ok(None);
        }
        if let Some(s) = self.sessions.lock().get(id) {
            return Ok(Some(s.clone()));
        }
        let Some(path) = self.log_path(id).filter(|p| p.exists()) else {
            return Ok(None);
        };
        let text = fs::read_to_string(&path)
            .map_err(|e| RetrievalError::Session(format!("{}: {e}", path.display())))?;
        let mut session = ConversationSession::new(id);
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let event: SessionEvent = serde_json::from_str(line).map_err(|e| {
                RetrievalError::Session(format!("{} line {}: {e}", path.display(), n + 1))
            })?;
            session.apply(&event);
        }
        let shared = Arc::new(Mutex::new(session));
        Ok(Some(
            self.sessions
                .lock()
                .entry(id.to_string())
                .or_insert(shared)
                .clone(),
        ))
    }

    /// Records a completed turn: both messages and the recommendation ids are
    /// written in one append, then applied to the in-memory session.
    pub fn record_turn(
        &self,
        session: &mut ConversationSession,
        user_text: &str,
        agent_text: &str,
        recommended: &[DeviceId],
    ) -> Result<(), RetrievalError> {
        let at = Utc::now();
        let events = [
            SessionEvent::Turn {
                role: Role::User,
                text: user_text.to_string(),
                at,
            },
            SessionEvent::Turn {
                role: Role::Agent,
                text: agent_text.to_string(),
                at,
            },
            SessionEvent::Recommended {
                ids: recommended.to_vec(),
                at,
            },
        ];
        self.append(&session.id, &events)?;
        for e in &events {
            session.apply(e);
        }
        Ok(())
    }

    pub fn record_error(
        &self,
        session: &mut ConversationSession,
        message: &str,
        retryable: bool,
    ) -> Result<(), RetrievalError> {
        let event = SessionEvent::Error {
            message: message.to_string(),
            retryable,
            at: Utc::now(),
        };
        self.append(&session.id, std::slice::from_ref(&event))?;
        session.apply(&event);
        Ok(())
    }

    fn append(&self, id: &str, events: &[SessionEvent]) -> Result<(), RetrievalError> {
        let Some(path) = self.log_path(id) else {
            return Ok(());
        };
        let mut out = String::new();
        for e in events {
            out.push_str(&serde_json::to_string(e).expect("session event serializes"));
            out.push('\n');
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| RetrievalError::Session(format!("{}: {e}", path.display())))?;
        file.write_all(out.as_bytes())
            .map_err(|e| RetrievalError::Session(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_replays_to_same_session() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        let id = store.create().unwrap();
        let shared = store.get(&id).unwrap().unwrap();
        {
            let mut s = shared.lock();
            store.record_turn(&mut s, "hi", "hello", &[3, 1]).unwrap();
            store.record_error(&mut s, "provider down", true).unwrap();
            store.record_turn(&mut s, "more", "sure", &[1, 7]).unwrap();
        }
        let expected = shared.lock().clone();
        assert_eq!(expected.recommended_log, vec![3, 1, 7]);
        assert_eq!(expected.count(Role::User), 2);

        let fresh = SessionStore::open(dir.path()).unwrap();
        let replayed = fresh.get(&id).unwrap().unwrap().lock().clone();
        assert_eq!(replayed, expected);
    }

    #[test]
    fn unknown_and_malicious_ids_are_absent() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        assert!(store.get("nope").unwrap().is_none());
        assert!(store.get("../etc/passwd").unwrap().is_none());
        assert!(store.create_with_id("a/b").is_err());
    }

    #[test]
    fn created_ids_are_unique() {
        let store = SessionStore::in_memory();
        let a = store.create().unwrap();
        let b = store.create().unwrap();
        assert_ne!(a, b);
        assert!(store.get(&a).unwrap().is_some());
    }
}
